"""Exact computation with relaxed multicategories of singular multimaps.

The layers build on one another: leafed trees, the divided-power Hopf
algebra and its dual, truncated singular series, tree-indexed multimaps,
and algebras generated from a binary map.
"""

from .algebra import (
    AlgebraReport,
    AlgebraStructure,
    CommDiffAlgebra,
    check_algebra,
    drop_mixed_terms,
    f_for_tree,
    make_holomorphic_algebra,
    ope_extract,
)
from .hopf import HElem, KElem, act_on_k, hopf_axiom_report, parse_h, parse_k
from .multimap import (
    HModule,
    LabelledTree,
    MembershipError,
    MultiMap,
    associativity_check,
    compose,
    full_invariance_filter,
    identity,
    labelled,
    make_multimap,
    make_ord_shape,
    ord_shapes,
    refine,
    symmetry_action,
    unit_map,
)
from .series import SingularSeries, agree_after_expansion, expand, substitute_linear
from .trees import Tree, corolla, graft, morphism, parse_tree, render_tree

__all__ = [
    "AlgebraReport", "AlgebraStructure", "CommDiffAlgebra", "HElem", "HModule", "KElem",
    "LabelledTree", "MembershipError", "MultiMap", "SingularSeries", "Tree",
    "act_on_k", "agree_after_expansion", "associativity_check", "check_algebra", "compose",
    "corolla", "drop_mixed_terms", "expand", "f_for_tree", "full_invariance_filter", "graft",
    "hopf_axiom_report", "identity", "labelled", "make_holomorphic_algebra", "make_multimap",
    "make_ord_shape", "morphism", "ope_extract", "ord_shapes", "parse_h", "parse_k", "parse_tree",
    "refine", "render_tree", "substitute_linear", "symmetry_action", "unit_map",
]
