"""Third- to second-order reduction with one ancilla per cubic term."""
from __future__ import annotations

import numpy as np

from .model import PolyProblem

# Gadget energy for a cubic term -(-1)**b s1 s2 s3, written as
#   h (s1+s2+s3) + ht sa + J (s1 s2 + s2 s3 + s3 s1) + Jt (s1+s2+s3) sa
# with minimum -1 on triples satisfying the parity and -1/2 otherwise.
GADGET_J = 0.25
GADGET_H_ANCILLA = -0.5


def gadget_coefficients(b: int) -> dict[str, float]:
    sign = 1.0 - 2.0 * b
    return {"h": -sign / 4, "h_ancilla": GADGET_H_ANCILLA, "J": GADGET_J, "J_ancilla": sign / 2}


def gadget_energy(s1, s2, s3, sa, b: int):
    """Direct evaluation of the gadget expression (broadcasts over arrays)."""
    g = gadget_coefficients(b)
    lin = s1 + s2 + s3
    return g["h"] * lin + g["h_ancilla"] * sa + g["J"] * (s1 * s2 + s2 * s3 + s3 * s1) + g["J_ancilla"] * lin * sa


class ReductionError(ValueError):
    pass


def gadgetize(problem: PolyProblem) -> PolyProblem:
    """Replace every cubic term by quadratic and linear terms plus an ancilla.

    Cubic coefficients must be +1 or -1. Ancilla ``k`` gets index
    ``N + k`` where ``k`` counts cubic terms in term order. Degree-1 and
    degree-2 terms pass through; coincident index sets are summed.
    """
    n = problem.num_vars
    raw: list[tuple[float, tuple[int, ...]]] = []
    ancilla = n
    for t in problem.terms:
        if t.degree > 3:
            raise ReductionError(f"term {t.indices} has degree {t.degree} > 3")
        if t.degree < 3:
            raw.append((t.coefficient, t.indices))
            continue
        if t.coefficient == 1.0:
            b = 0
        elif t.coefficient == -1.0:
            b = 1
        else:
            raise ReductionError(f"cubic coefficient {t.coefficient} on {t.indices} is not +-1")
        g = gadget_coefficients(b)
        i, j, k = t.indices
        a = ancilla
        ancilla += 1
        # Model energy is -sum(coeff * monomial), so every gadget weight enters negated.
        for v in (i, j, k):
            raw.append((-g["h"], (v,)))
            raw.append((-g["J_ancilla"], (v, a)))
        raw.append((-g["h_ancilla"], (a,)))
        for pair in ((i, j), (j, k), (i, k)):
            raw.append((-g["J"], pair))
    return PolyProblem.from_terms(ancilla, raw)


def optimal_ancillas(problem: PolyProblem, s) -> np.ndarray:
    """Ancilla values minimizing the gadget energy for fixed original spins.

    Each ancilla appears in its own gadget only, so it is set independently
    to whichever sign gives the lower local field energy; ties go to +1.
    """
    s = np.asarray(s, dtype=float)
    out = []
    for t in problem.terms:
        if t.degree != 3:
            continue
        b = 0 if t.coefficient == 1.0 else 1
        s1, s2, s3 = s[list(t.indices)]
        plus = gadget_energy(s1, s2, s3, 1.0, b)
        minus = gadget_energy(s1, s2, s3, -1.0, b)
        out.append(1 if plus <= minus else -1)
    return np.array(out, dtype=np.int8)


def project_solution(gadget_solution, n_original: int) -> np.ndarray:
    """Drop the ancillas: the first ``n_original`` spins."""
    s = np.asarray(gadget_solution)
    if s.ndim < 1 or s.shape[-1] < n_original or n_original < 0:
        raise ValueError(f"solution of length {s.shape[-1] if s.ndim else 0} shorter than {n_original}")
    return s[..., :n_original].copy()
