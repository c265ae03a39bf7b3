"""Acceptance criteria, one test per criterion.

Each test prints a ``PASS``/``FAIL criterion N`` line; the lines are also
collected into ``LINES`` and echoed in the terminal summary.  Run this file
directly to see them without pytest.
"""

import time

import pytest

from relaxmulti.suites import (
    algebra_suite,
    expansion_suite,
    hopf_suite,
    multicategory_suite,
    ord_suite,
    tree_suite,
)

SEED = 0
LINES: list[str] = []

CRITERIA = [
    (1, "tree combinatorics", 1.0, lambda: [tree_suite(SEED, pairs=1000, triples=500)]),
    (2, "Hopf laws", 5.0, lambda: [hopf_suite(max_degree=6)]),
    (3, "expansion", 5.0, lambda: [expansion_suite(SEED, cases=200)]),
    (4, "multicategory laws", 30.0, lambda: [multicategory_suite(SEED, triples=100, nullary=100, max_leaves=4)]),
    (5, "algebra Q[u]", 60.0, lambda: [algebra_suite(max_leaves=4, degree=4)]),
    (6, "Ord fidelity", 5.0, lambda: [ord_suite()]),
]


def evaluate(number, name, limit, run):
    start = time.perf_counter()
    results = run()
    elapsed = time.perf_counter() - start
    exact = all(r.passed for r in results)
    ok = exact and elapsed < limit
    checks = sum(r.checks for r in results)
    witness = next((r.witness for r in results if r.witness), None)
    line = (f"{'PASS' if ok else 'FAIL'} criterion {number} {name}: {checks} checks, "
            f"{elapsed:.2f}s (limit {limit:.0f}s)")
    if not exact:
        line += f", witness: {witness}"
    elif not ok:
        line += ", over time"
    LINES.append(line)
    print(line)
    return ok, line


@pytest.mark.parametrize("number,name,limit,run", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, name, limit, run):
    ok, line = evaluate(number, name, limit, run)
    assert ok, line


if __name__ == "__main__":
    raise SystemExit(0 if all(evaluate(*c)[0] for c in CRITERIA) else 1)
