import numpy as np
import pytest

from hosb.model import PolyProblem, Term


def random_problem(rng, n, n_terms, max_degree=3, unit=False):
    raw = []
    for _ in range(n_terms):
        k = int(rng.integers(1, max_degree + 1))
        k = min(k, n)
        idx = rng.choice(n, size=k, replace=False)
        coeff = float(rng.choice([-1.0, 1.0])) if unit else float(rng.normal())
        raw.append((coeff, idx))
    return PolyProblem.from_terms(n, raw)


def random_cubic(rng, n, n_terms, unit=False):
    if n_terms > n * (n - 1) * (n - 2) // 6:
        raise ValueError("not enough distinct triples")
    seen = set()
    terms = []
    while len(terms) < n_terms:
        idx = tuple(sorted(rng.choice(n, size=3, replace=False).tolist()))
        if idx in seen:
            continue
        seen.add(idx)
        coeff = float(rng.choice([-1.0, 1.0])) if unit else float(rng.normal())
        terms.append(Term(coeff, idx))
    return PolyProblem(n, terms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def single_cubic():
    return PolyProblem(3, [Term(1.0, (0, 1, 2))])


# criterion verdicts collected by test_acceptance and echoed in the summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
