"""Hot inner loops, each in a numba and a numpy flavour.

The public modules never call the ``*_nb`` / ``*_np`` functions directly;
they go through the names bound at the bottom of this file, which follow
``ANNNI_QML_NUMBA``.  Both flavours are kept importable so tests and the
benchmark can compare them.
"""
import numpy as np

from ._accel import njit, select

TAU = 1e-12


# --------------------------------------------------------------------------
# ANNNI Hamiltonian: H X = diag * X - g * sum_j X[s ^ (1 << j)]
# --------------------------------------------------------------------------

@njit(cache=True)
def hamiltonian_matvec_nb(diag, g, n_sites, X, out):
    n, b = X.shape
    for s in range(n):
        d = diag[s]
        for c in range(b):
            out[s, c] = d * X[s, c]
        for j in range(n_sites):
            t = s ^ (1 << j)
            for c in range(b):
                out[s, c] -= g * X[t, c]
    return out


def hamiltonian_matvec_np(diag, g, n_sites, X, out):
    np.multiply(diag[:, None], X, out=out)
    if g != 0.0:
        idx = np.arange(X.shape[0])
        acc = np.zeros_like(X)
        for j in range(n_sites):
            acc += X[idx ^ (1 << j)]
        out -= g * acc
    return out


# --------------------------------------------------------------------------
# Statevector gates on a batch of states, shape (batch, 2**n)
# --------------------------------------------------------------------------

@njit(cache=True)
def apply_1q_nb(states, qubit, u):
    batch, dim = states.shape
    step = 1 << qubit
    u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
    for r in range(batch):
        for base in range(0, dim, 2 * step):
            for k in range(base, base + step):
                a0 = states[r, k]
                a1 = states[r, k + step]
                states[r, k] = u00 * a0 + u01 * a1
                states[r, k + step] = u10 * a0 + u11 * a1
    return states


def apply_1q_np(states, qubit, u):
    batch, dim = states.shape
    view = states.reshape(batch, dim >> (qubit + 1), 2, 1 << qubit)
    a0 = view[:, :, 0, :].copy()
    a1 = view[:, :, 1, :]
    view[:, :, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    view[:, :, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    return states


@njit(cache=True)
def apply_cnot_nb(states, control, target):
    batch, dim = states.shape
    cmask = 1 << control
    tmask = 1 << target
    for r in range(batch):
        for s in range(dim):
            if (s & cmask) and not (s & tmask):
                t = s | tmask
                tmp = states[r, s]
                states[r, s] = states[r, t]
                states[r, t] = tmp
    return states


def apply_cnot_np(states, control, target):
    dim = states.shape[1]
    s = np.arange(dim)
    src = np.where(s & (1 << control), s ^ (1 << target), s)
    states[:] = states[:, src]
    return states


# --------------------------------------------------------------------------
# SMO for the binary C-SVC dual, second-order working-set selection.
#   min 0.5 a^T Q a - e^T a,  0 <= a <= C,  y^T a = 0,  Q_ij = y_i y_j K_ij
# Returns (alpha, G, iterations, converged, dual objective history).
# --------------------------------------------------------------------------

@njit(cache=True)
def smo_nb(K, y, C, eps, max_iter, record):
    n = K.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.empty(n)
    for t in range(n):
        QD[t] = K[t, t]
    hist = np.zeros(max_iter + 1 if record else 0)
    it = 0
    converged = False
    while True:
        Gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] > Gmax:
                    Gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] > Gmax:
                    Gmax = G[t]
                    i = t
        Gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        if i >= 0:
            for t in range(n):
                if y[t] > 0:
                    if not alpha[t] > 0:
                        continue
                else:
                    if not alpha[t] < C:
                        continue
                yG = y[t] * G[t]
                if yG > Gmax2:
                    Gmax2 = yG
                grad_diff = Gmax + yG
                if grad_diff > 0:
                    quad = QD[i] + QD[t] - 2.0 * K[i, t]
                    if quad <= 0:
                        quad = TAU
                    val = -(grad_diff * grad_diff) / quad
                    if val < obj_min:
                        obj_min = val
                        j = t
        if i < 0 or j < 0 or Gmax + Gmax2 < eps:
            converged = True
            break
        if it >= max_iter:
            break

        yi = y[i]
        yj = y[j]
        Kij = K[i, j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        ai = old_ai
        aj = old_aj
        if yi != yj:
            quad = QD[i] + QD[j] + 2.0 * (yi * yj * Kij)
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * (yi * yj * Kij)
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = (ai - old_ai) * yi
        daj = (aj - old_aj) * yj
        for t in range(n):
            G[t] += y[t] * (dai * K[i, t] + daj * K[j, t])
        it += 1
        if record:
            acc = 0.0
            for t in range(n):
                acc += alpha[t] * (G[t] - 1.0)
            hist[it] = -0.5 * acc
    if record:
        hist = hist[: it + 1]
    return alpha, G, it, converged, hist


def smo_np(K, y, C, eps, max_iter, record):
    n = K.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.diag(K).copy()
    hist = [0.0] if record else None
    it = 0
    converged = False
    pos = y > 0
    while True:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        yG = y * G
        i = -1
        j = -1
        Gmax = -np.inf
        Gmax2 = -np.inf
        if up.any():
            i = int(np.argmax(np.where(up, -yG, -np.inf)))
            Gmax = -yG[i]
        if i >= 0 and low.any():
            Gmax2 = yG[low].max()
            grad_diff = Gmax + yG
            cand = low & (grad_diff > 0)
            if cand.any():
                quad = QD[i] + QD - 2.0 * K[i]
                quad[quad <= 0] = TAU
                val = np.where(cand, -(grad_diff * grad_diff) / quad, np.inf)
                j = int(np.argmin(val))
        if i < 0 or j < 0 or Gmax + Gmax2 < eps:
            converged = True
            break
        if it >= max_iter:
            break

        yi, yj = y[i], y[j]
        old_ai, old_aj = alpha[i], alpha[j]
        ai, aj = old_ai, old_aj
        if yi != yj:
            quad = QD[i] + QD[j] + 2.0 * (yi * yj * K[i, j])
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
                if ai > C:
                    ai, aj = C, C - diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
                if aj > C:
                    aj, ai = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * (yi * yj * K[i, j])
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                if aj > C:
                    aj, ai = C, total - C
            else:
                if aj < 0:
                    aj, ai = 0.0, total
                if ai < 0:
                    ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        dai = (ai - old_ai) * yi
        daj = (aj - old_aj) * yj
        G += y * (dai * K[i] + daj * K[j])
        it += 1
        if record:
            hist.append(-0.5 * float(np.sum(alpha * (G - 1.0))))
    hist = np.asarray(hist) if record else np.zeros(0)
    return alpha, G, it, converged, hist


hamiltonian_matvec = select(hamiltonian_matvec_nb, hamiltonian_matvec_np)
apply_1q = select(apply_1q_nb, apply_1q_np)
apply_cnot = select(apply_cnot_nb, apply_cnot_np)
smo = select(smo_nb, smo_np)
