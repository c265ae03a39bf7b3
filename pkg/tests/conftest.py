import pytest
from hypothesis import settings
from hypothesis import strategies as st

from relaxmulti.algebra import CommDiffAlgebra, make_holomorphic_algebra
from relaxmulti.trees import LEAF, Tree

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def trees(max_leaves: int = 6, reduced: bool = True):
    """Planar trees; ``reduced`` excludes unary and empty vertices."""
    leaf = st.just(LEAF)
    low = 2 if reduced else 0

    def extend(children):
        return st.lists(children, min_size=low, max_size=3).map(lambda cs: Tree(tuple(cs)))

    return st.recursive(leaf, extend, max_leaves=max_leaves).filter(lambda t: t.leaf_count <= max_leaves)


@pytest.fixture(scope="session")
def qu():
    return make_holomorphic_algebra(CommDiffAlgebra.polynomial())


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
