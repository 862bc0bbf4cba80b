"""Experiment orchestration: dataset generation, SHAP ranking, training, sweeps, phase diagrams.

Every command takes an :class:`ExperimentConfig` and writes its outputs
under ``out_dir``.  Outputs are a pure function of the config: wall-clock
times go to ``*.time.json`` sidecars so the main files stay byte-identical
between runs.
"""
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import ml, model, qsim, qsvm, shapley, vqc

log = logging.getLogger(__name__)

ALGORITHMS = ("svc", "qsvm", "vqc")


@dataclass
class Seeds:
    split: int = 0
    shap: int = 0
    vqc: int = 0


@dataclass
class ExperimentConfig:
    n_sites: int = 8
    algorithm: str = "qsvm"
    k_features: int = 5
    seeds: Seeds = field(default_factory=Seeds)
    test_fraction: float = 0.3
    C: float = 1.0
    gamma: object = "scale"
    shots: int = 600
    iterations: int = 100
    reps: int = 3
    layers: int = 5
    shap_background: int = 100
    shap_explain: int = 200
    shap_coalitions: int = 50000
    shap_exhaustive: object = None  # None: exhaustive when M <= 14
    k_range: tuple = (2, 8)
    grid_step: float = 0.01
    workers: int = 1
    data_dir: str = "artifacts"
    out_dir: str = "artifacts/runs"
    dataset_path: str = None
    report_path: str = None

    def __post_init__(self):
        if isinstance(self.seeds, dict):
            self.seeds = Seeds(**self.seeds)
        self.k_range = tuple(int(k) for k in self.k_range)
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        model.ChainConfig(self.n_sites, 0.0, 0.0)  # validates n_sites
        if self.k_features < 1:
            raise ValueError("k_features must be >= 1")
        if len(self.k_range) != 2 or self.k_range[0] > self.k_range[1] or self.k_range[0] < 1:
            raise ValueError("k_range must be [lo, hi] with 1 <= lo <= hi")

    @property
    def n_features(self):
        return 3 * (self.n_sites // 2)

    @property
    def dataset(self):
        return self.dataset_path or os.path.join(self.data_dir, f"annni_n{self.n_sites}.csv")

    @property
    def report(self):
        return self.report_path or os.path.join(self.data_dir, f"shap_n{self.n_sites}.json")

    def run_stem(self, algorithm=None, k=None):
        algorithm = algorithm or self.algorithm
        k = self.k_features if k is None else k
        return os.path.join(self.out_dir, f"{algorithm}_n{self.n_sites}_k{k}")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["k_range"] = list(self.k_range)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


@dataclass
class RunResult:
    config: dict
    algorithm: str
    k_features: int
    selected_features: list
    accuracy: float
    confusion: list  # rows: true class, columns: predicted
    n_test: int
    artifacts: dict

    def pair_counts(self):
        """{(true, predicted): count} for every nonzero cell."""
        return {(i, j): c for i, row in enumerate(self.confusion) for j, c in enumerate(row) if c}

    def to_dict(self):
        return dataclasses.asdict(self)


def _dump_json(obj, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_time(path, seconds):
    _dump_json({"wall_time_s": round(seconds, 3)}, path + ".time.json")


# ------------------------------------------------------------------ shared steps

def load_dataset(cfg):
    if not os.path.exists(cfg.dataset):
        raise FileNotFoundError(f"dataset {cfg.dataset} not found; run `generate` first")
    ds = model.Dataset.from_csv(cfg.dataset)
    if ds.n_sites != cfg.n_sites or ds.n_features != cfg.n_features:
        raise ValueError(f"{cfg.dataset} holds N={ds.n_sites} data, config asks for N={cfg.n_sites}")
    return ds


def split_and_scale(ds, cfg, columns=None):
    """Scaled (X_train, y_train, X_test, y_test, scaler) on the chosen columns."""
    train, test = ml.train_test_split(ds, ml.SplitSpec(cfg.test_fraction, cfg.seeds.split))
    cols = np.arange(ds.n_features) if columns is None else np.asarray(columns)
    scaler = ml.fit_scaler(train.features[:, cols])
    return (
        ml.apply_scaler(scaler, train.features[:, cols]), train.labels,
        ml.apply_scaler(scaler, test.features[:, cols]), test.labels, scaler,
    )


def selected_columns(cfg, k=None):
    k = cfg.k_features if k is None else k
    if k > cfg.n_features:
        raise ValueError(f"k={k} exceeds the {cfg.n_features} available features")
    if k == cfg.n_features:
        return list(range(k))
    if not os.path.exists(cfg.report):
        raise FileNotFoundError(f"SHAP report {cfg.report} not found; run `rank` first (needed for k < M)")
    return [int(i) for i in shapley.select_top_k(shapley.ShapReport.load(cfg.report), k)]


# ------------------------------------------------------------------ commands

def cmd_generate(cfg):
    path = cfg.dataset
    if os.path.exists(path):
        log.warning("overwriting %s", path)
    t0 = time.perf_counter()
    ds = model.generate_dataset(cfg.n_sites, cfg.grid_step, workers=cfg.workers)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    ds.to_csv(path)
    _write_time(path, time.perf_counter() - t0)
    log.info("wrote %s (%d rows, %d features)", path, len(ds), ds.n_features)
    return path


def cmd_rank(cfg):
    t0 = time.perf_counter()
    ds = load_dataset(cfg)
    X_train, y_train, _, _, _ = split_and_scale(ds, cfg)
    gamma = cfg.gamma if cfg.gamma == "scale" else float(cfg.gamma)
    svm = ml.svm_train(X_train, y_train, C=cfg.C, gamma=gamma)
    order = np.random.default_rng(cfg.seeds.shap).permutation(X_train.shape[0])
    nb, ne = cfg.shap_background, cfg.shap_explain
    if nb + ne > order.size:
        raise ValueError("background plus explain rows exceed the training split")
    background, explain = X_train[order[:nb]], X_train[order[nb:nb + ne]]
    report = shapley.global_importance(
        shapley.SvmMaskingModel(svm, background), explain,
        n_coalitions=cfg.shap_coalitions, seed=cfg.seeds.shap,
        exhaustive=cfg.shap_exhaustive, feature_names=ds.feature_names,
    )
    report.meta = {"config": cfg.to_dict(), "n_background": nb, "n_support_vectors": int(svm.n_train)}
    path = cfg.report
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    report.save(path)
    report.write_plot_csv(os.path.splitext(path)[0] + ".csv")
    _write_time(path, time.perf_counter() - t0)
    log.info("top features: %s", ", ".join(ds.feature_names[i] for i in report.ranking[:5]))
    return report


def _fit(cfg, algorithm, X_train, y_train, columns):
    gamma = cfg.gamma if cfg.gamma == "scale" else float(cfg.gamma)
    if algorithm == "svc":
        fitted = ml.svm_train(X_train, y_train, C=cfg.C, gamma=gamma)
        return fitted, lambda X: fitted.predict(X), ml.model_to_dict(fitted)
    k = X_train.shape[1]
    if algorithm == "qsvm":
        fitted = qsvm.qsvm_train(X_train, y_train, qsim.FeatureMapSpec(k, cfg.reps), C=cfg.C,
                                 selected_features=columns)
        return fitted, lambda X: qsvm.qsvm_predict(fitted, X), qsvm.model_to_dict(fitted)
    fitted = vqc.vqc_train(
        X_train, y_train, qsim.FeatureMapSpec(k, cfg.reps), qsim.AnsatzSpec(k, cfg.layers),
        vqc.SpsaConfig(iterations=cfg.iterations, seed=cfg.seeds.vqc),
        class_count=3, shots=cfg.shots, seed=cfg.seeds.vqc,
    )
    return fitted, lambda X: vqc.vqc_predict(fitted, X), vqc.model_to_dict(fitted)


def _predictor_from_bundle(bundle):
    algorithm = bundle["algorithm"]
    if algorithm == "svc":
        m = ml.model_from_dict(bundle["model"])
        return m.predict
    if algorithm == "qsvm":
        m = qsvm.model_from_dict(bundle["model"])
        return lambda X: qsvm.qsvm_predict(m, X)
    m = vqc.model_from_dict(bundle["model"])
    return lambda X: vqc.vqc_predict(m, X)


def cmd_train(cfg, algorithm=None, k=None, ds=None):
    algorithm = algorithm or cfg.algorithm
    k = cfg.k_features if k is None else k
    t0 = time.perf_counter()
    ds = load_dataset(cfg) if ds is None else ds
    columns = selected_columns(cfg, k)
    X_train, y_train, X_test, y_test, scaler = split_and_scale(ds, cfg, columns)
    fitted, predict, model_dict = _fit(cfg, algorithm, X_train, y_train, columns)
    pred = predict(X_test)
    conf = ml.confusion_counts(pred, y_test, len(model.Phase))
    stem = cfg.run_stem(algorithm, k)
    artifacts = {"result": stem + ".json", "model": stem + ".model.json"}
    bundle = {
        "algorithm": algorithm,
        "selected_features": columns,
        "scaler": {"min": scaler.min.tolist(), "max": scaler.max.tolist()},
        "model": model_dict,
    }
    _dump_json(bundle, artifacts["model"])
    if algorithm == "vqc":
        artifacts["loss_history"] = stem + ".loss.csv"
        vqc.write_loss_history(fitted, artifacts["loss_history"])
    result = RunResult(
        config=cfg.replace(algorithm=algorithm, k_features=k).to_dict(),
        algorithm=algorithm, k_features=k,
        selected_features=[ds.feature_names[i] for i in columns],
        accuracy=ml.accuracy(pred, y_test), confusion=conf.tolist(),
        n_test=int(y_test.size), artifacts=artifacts,
    )
    _dump_json(result.to_dict(), artifacts["result"])
    _write_time(artifacts["result"], time.perf_counter() - t0)
    log.info("%s N=%d k=%d: accuracy %.4f", algorithm, cfg.n_sites, k, result.accuracy)
    return result


def cmd_sweep(cfg, algorithms=("qsvm", "vqc")):
    t0 = time.perf_counter()
    ds = load_dataset(cfg)
    rows = []
    for algorithm in algorithms:
        for k in range(cfg.k_range[0], cfg.k_range[1] + 1):
            res = cmd_train(cfg, algorithm, k, ds)
            rows.append((algorithm, k, res.accuracy))
    path = os.path.join(cfg.out_dir, f"sweep_n{cfg.n_sites}.csv")
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("algorithm,k,accuracy\n")
        for algorithm, k, acc in rows:
            fh.write(f"{algorithm},{k},{acc:.6f}\n")
    _write_time(path, time.perf_counter() - t0)
    return rows


def boundary_rows(step=0.01):
    """(kappa, g_ising or None, g_bkt or None) on the kappa grid."""
    out = []
    for kappa in model.grid_values(step):
        gi = model.g_ising(kappa) if kappa <= 0.5 else None
        gb = model.g_bkt(kappa) if kappa > 0.5 else None
        out.append((float(kappa), gi, gb))
    return out


def cmd_diagram(cfg):
    """Predict every grid point with the model saved by ``train``."""
    t0 = time.perf_counter()
    model_path = cfg.run_stem() + ".model.json"
    if not os.path.exists(model_path):
        raise FileNotFoundError(f"trained model {model_path} not found; run `train` first")
    with open(model_path, encoding="utf-8") as fh:
        bundle = json.load(fh)
    ds = load_dataset(cfg)
    cols = bundle["selected_features"]
    scaler = ml.ScalerParams(np.asarray(bundle["scaler"]["min"]), np.asarray(bundle["scaler"]["max"]))
    pred = _predictor_from_bundle(bundle)(ml.apply_scaler(scaler, ds.features[:, cols]))
    stem = cfg.run_stem()
    path = stem + ".diagram.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("kappa,g,predicted,true\n")
        for kappa, g, p, t in zip(ds.kappa, ds.g, pred, ds.labels):
            fh.write(f"{model.fmt_float(kappa)},{model.fmt_float(g)},"
                     f"{model.Phase(int(p)).label},{model.Phase(int(t)).label}\n")
    bpath = stem + ".boundaries.csv"
    with open(bpath, "w", encoding="utf-8") as fh:
        fh.write("kappa,g_ising,g_bkt\n")
        for kappa, gi, gb in boundary_rows(cfg.grid_step):
            fh.write(f"{model.fmt_float(kappa)},{'' if gi is None else model.fmt_float(gi)},"
                     f"{'' if gb is None else model.fmt_float(gb)}\n")
    _write_time(path, time.perf_counter() - t0)
    error_rate = float(np.mean(pred != ds.labels))
    log.info("diagram misclassification rate %.4f", error_rate)
    return path, bpath, error_rate
