"""JSON documents for modules, multimaps and algebras.

Series are stored in their display form, which :func:`parse_series` reads
back exactly.  Basis vectors are keyed by label.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from .algebra import AlgebraStructure, CommDiffAlgebra, algebra_from_f2, make_holomorphic_algebra
from .multimap import HModule, LabelledTree, MultiMap, make_multimap
from .series import SERIES_CEILING, parse_series
from .trees import parse_tree, render_tree

__all__ = ["algebra_from_json", "dump", "load", "module_from_json", "module_to_json",
           "multimap_from_json", "multimap_to_json"]


def load(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dump(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


# ------------------------------------------------------------------ modules


def module_to_json(m: HModule) -> dict:
    if m.doc is None:
        raise ValueError(f"module {m.name} was built from code and has no JSON description")
    return dict(m.doc)


def module_from_json(doc: Mapping) -> HModule:
    """``{"name", "basis", "action": {"i": matrix}}``, ``{"polynomial": {...}}`` or ``{"trivial": true}``."""
    name = doc.get("name", "B")
    if doc.get("trivial"):
        return HModule.trivial(name)
    if "polynomial" in doc:
        poly = doc["polynomial"]
        return HModule.polynomial(name, poly.get("var", "u"), int(poly.get("degree", 4)))
    if "basis" not in doc:
        raise ValueError("module description needs 'basis', 'polynomial' or 'trivial'")
    return HModule.from_matrices(name, doc["basis"], {int(i): m for i, m in doc.get("action", {}).items()})


def _vector(module: HModule, doc: Mapping[str, Any]) -> dict[int, Fraction]:
    return {module.index(label): Fraction(str(c)) for label, c in doc.items()}


# ---------------------------------------------------------------- multimaps


def multimap_to_json(m: MultiMap) -> dict:
    shape = m.shape
    rows = []
    for b in shape.input_tuples():
        s = m(b)
        if s.terms:
            rows.append({"inputs": list(shape.labels_of(b)), "series": str(s)})
    return {
        "tree": render_tree(shape.tree),
        "leaves": [module_to_json(x) for x in shape.leaves],
        "root": module_to_json(shape.root),
        "leaf_invariant": list(shape.leaf_invariant),
        "ceiling": m.ceiling,
        "table": rows,
    }


def multimap_from_json(doc: Mapping, check: bool = True) -> MultiMap:
    """Rows hold ``series`` text or a ``representatives`` object of texts, one per expansion order."""
    tree = parse_tree(doc["tree"])
    leaves = [module_from_json(x) for x in doc.get("leaves", [])]
    root = module_from_json(doc["root"])
    if len(leaves) == 1 and tree.leaf_count > 1:
        leaves = leaves * tree.leaf_count
    flags = doc.get("leaf_invariant")
    shape = LabelledTree(tree, tuple(leaves), root, tuple(flags) if flags is not None else None)
    ceiling = int(doc.get("ceiling", SERIES_CEILING))
    names = shape.variable_names
    table: dict = {}
    for row in doc.get("table", []):
        key = tuple(row["inputs"])
        if "representatives" in row:
            table[key] = {k: parse_series(v, names, ceiling) for k, v in row["representatives"].items()}
        else:
            table[key] = parse_series(row["series"], names, ceiling)
    return make_multimap(shape, table, check=check, ceiling=ceiling)


# ------------------------------------------------------------------ algebras


def algebra_from_json(doc: Mapping, check: bool = True) -> AlgebraStructure:
    """An algebra description.

    ``{"example": "q-u", "degree": 4}`` or ``{"example": "rationals"}`` name a
    built-in.  Otherwise ``module``, ``unit`` and either ``products`` (a
    commutative table, giving the holomorphic algebra) or ``f2`` (rows as for
    multimaps, for a user-supplied generator).
    """
    ceiling = int(doc.get("ceiling", SERIES_CEILING))
    example = doc.get("example")
    if example == "q-u":
        return make_holomorphic_algebra(CommDiffAlgebra.polynomial(int(doc.get("degree", 4))), ceiling)
    if example == "rationals":
        return make_holomorphic_algebra(CommDiffAlgebra.rationals(), ceiling)
    if example is not None:
        raise ValueError(f"unknown example {example!r}; expected 'q-u' or 'rationals'")
    module = module_from_json(doc["module"])
    unit = _vector(module, doc.get("unit", {module.label(0): 1}))
    if "f2" in doc:
        f2 = multimap_from_json({"tree": "(**)", "leaves": [doc["module"]] * 2, "root": doc["module"],
                                 "ceiling": ceiling, "table": doc["f2"]}, check=False)
        table = {b: f2(b) for b in f2.shape.input_tuples()}
        return algebra_from_f2(module, unit, table, ceiling, check=check)
    products = {}
    for row in doc.get("products", []):
        products[(module.index(row["a"]), module.index(row["b"]))] = _vector(module, row["value"])
    return make_holomorphic_algebra(CommDiffAlgebra.from_table(module, products, unit), ceiling, check=check)
