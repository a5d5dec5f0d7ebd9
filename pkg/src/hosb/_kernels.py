"""Compiled SB time evolution.

Mirrors the numpy path in ``sb`` operation by operation (same product
order, same scatter order, sequential reductions), so both backends give
bit-identical trajectories. Nothing is reduced across runs, so every run is
independent of batch composition.
"""
from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def flat_tables(problem):
    """Term table in internal group order plus the CSR incidence arrays."""
    starts = [0]
    members = []
    coefs = []
    for cols, coef in problem._groups:
        d = len(cols)
        for j in range(len(coef)):
            members.extend(int(c[j]) for c in cols)
            starts.append(starts[-1] + d)
            coefs.append(float(coef[j, 0]))
    inc = problem._incidence
    return (np.array(starts, dtype=np.int64), np.array(members, dtype=np.int64),
            np.array(coefs, dtype=float), inc.indptr.astype(np.int64), inc.indices.astype(np.int64))


BLOCK = 16


def _evolve_py(x, y, starts, members, coefs, indptr, terms_of, n_steps, a0, dt, c1,
               eps, discrete, once, c_cap, ms_floor):
    r_count, n = x.shape
    m = coefs.shape[0]
    fail = np.zeros(r_count, dtype=np.int64)
    # runs are processed in blocks laid out variable-major so the inner
    # loops vectorise; nothing is reduced across runs
    for r0 in range(0, r_count, BLOCK):
        nb = min(BLOCK, r_count - r0)
        xb = np.ascontiguousarray(x[r0:r0 + nb].T)
        yb = np.ascontiguousarray(y[r0:r0 + nb].T)
        v = np.empty((n, nb))
        f = np.empty((n, nb))
        prod = np.empty((m, nb))
        c = np.zeros(nb)
        ms = np.empty(nb)
        done = np.zeros(nb, dtype=np.int64)
        for k in range(1, n_steps + 1):
            a = a0 * k / n_steps
            if discrete:
                for i in range(n):
                    for b in range(nb):
                        v[i, b] = 1.0 if xb[i, b] >= 0 else -1.0
            else:
                v[:, :] = xb
            for t in range(m):
                j = members[starts[t]]
                for b in range(nb):
                    prod[t, b] = v[j, b]
                for q in range(starts[t] + 1, starts[t + 1]):
                    j = members[q]
                    for b in range(nb):
                        prod[t, b] *= v[j, b]
                ct = coefs[t]
                for b in range(nb):
                    prod[t, b] *= ct
            for i in range(n):
                for b in range(nb):
                    f[i, b] = 0.0
                for q in range(indptr[i], indptr[i + 1]):
                    t = terms_of[q]
                    for b in range(nb):
                        f[i, b] += prod[t, b]
                if discrete:
                    for b in range(nb):
                        f[i, b] *= v[i, b]
                else:
                    for b in range(nb):
                        f[i, b] /= xb[i, b] + eps
            if k == 1 or not once:
                ms[:] = 0.0
                for i in range(n):
                    for b in range(nb):
                        ms[b] += f[i, b] * f[i, b]
                for b in range(nb):
                    mb = ms[b] / n
                    c[b] = c1 * c_cap if mb < ms_floor else c1 / np.sqrt(mb)
            detune = a0 - a
            for i in range(n):
                for b in range(nb):
                    g = f[i, b] * c[b]
                    g -= detune * xb[i, b]
                    g *= dt
                    yi = yb[i, b] + g
                    xi = xb[i, b] + (a0 * dt) * yi
                    if xi > 1.0:
                        xi = 1.0
                        yi = 0.0
                    elif xi < -1.0:
                        xi = -1.0
                        yi = 0.0
                    xb[i, b] = xi
                    yb[i, b] = yi
                    if done[b] == 0 and not np.isfinite(yi):
                        done[b] = k
        x[r0:r0 + nb] = xb.T
        y[r0:r0 + nb] = yb.T
        fail[r0:r0 + nb] = done
    return fail


if numba is not None:
    evolve_runs = numba.njit(cache=True, nogil=True)(_evolve_py)
else:  # pragma: no cover
    evolve_runs = None
