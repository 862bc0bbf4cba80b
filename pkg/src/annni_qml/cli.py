"""Command-line entry point: ``annni-qml {generate,rank,train,sweep,diagram}``.

Failures exit with status 1 (2 for bad arguments) and a one-line JSON
error object on stderr.
"""
import argparse
import json
import logging
import sys

from . import pipeline


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, 2)


def _fail(kind, message, code=1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    sys.exit(code)


def build_parser():
    parser = _Parser(prog="annni-qml", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("generate", "compute the correlation dataset for one chain length"),
        ("rank", "SHAP feature ranking with the classical SVC"),
        ("train", "train and evaluate one algorithm on the top-k features"),
        ("sweep", "accuracy against k for QSVM and VQC"),
        ("diagram", "phase-diagram predictions from a trained model"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file; flags below override it")
        p.add_argument("--n-sites", type=int)
        p.add_argument("--algorithm", choices=pipeline.ALGORITHMS)
        p.add_argument("--k", type=int, dest="k_features")
        p.add_argument("--seed-split", type=int)
        p.add_argument("--seed-shap", type=int)
        p.add_argument("--seed-vqc", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--data-dir")
        if name == "generate":
            p.add_argument("--workers", type=int)
    return parser


def resolve_config(args):
    cfg = pipeline.ExperimentConfig.load(args.config) if args.config else pipeline.ExperimentConfig()
    changes = {}
    for key in ("n_sites", "algorithm", "k_features", "out_dir", "data_dir", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    seeds = dict(cfg.seeds.__dict__)
    for key in ("split", "shap", "vqc"):
        value = getattr(args, f"seed_{key}")
        if value is not None:
            seeds[key] = value
    changes["seeds"] = seeds
    return cfg.replace(**changes)


def run(args):
    cfg = resolve_config(args)
    if args.command == "generate":
        print(pipeline.cmd_generate(cfg))
    elif args.command == "rank":
        report = pipeline.cmd_rank(cfg)
        print(json.dumps({"report": cfg.report, "ranking": report.to_dict()["ranked_names"]},
                         ensure_ascii=False))
    elif args.command == "train":
        res = pipeline.cmd_train(cfg)
        print(json.dumps({"accuracy": res.accuracy, "result": res.artifacts["result"]}))
    elif args.command == "sweep":
        for algorithm, k, acc in pipeline.cmd_sweep(cfg):
            print(f"{algorithm},{k},{acc:.6f}")
    elif args.command == "diagram":
        path, bpath, err = pipeline.cmd_diagram(cfg)
        print(json.dumps({"diagram": path, "boundaries": bpath, "misclassified": err}))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (OSError, ValueError, RuntimeError) as exc:
        _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
