"""Datum files and report files: strict JSON parsing and deterministic output.

A datum file holds the quiver, dimensions, one of an integral weight or a
rational exponent tuple, and one row-major matrix per arrow:

    {
      "quiver": {"sources": ["v"], "sinks": ["w"],
                 "arrows": [{"id": "a", "tail": "v", "head": "w"}]},
      "dims": {"v": 1, "w": 1},
      "weight": {"v": 1, "w": -1},          # or "exponents": {"w": "1/1"}
      "matrices": {"a": [[2.0]]}
    }

Unknown keys are rejected.  Exponents are kept as "num/den" strings so no
float ever touches the exact rational arithmetic.  Serialisation is
deterministic: sorted keys, fixed indentation, shortest round-trip float
representation (at most 17 significant digits).
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Union

import numpy as np

from .bl import BLDatum
from .model import (
    Arrow,
    BipartiteQuiver,
    ExponentTuple,
    QuiverDatum,
    validate_datum,
)

Datum = Union[QuiverDatum, BLDatum]

DATUM_KEYS = {"quiver", "dims", "weight", "exponents", "matrices"}
QUIVER_KEYS = {"sources", "sinks", "arrows"}
ARROW_KEYS = {"id", "tail", "head"}


class DatumFileError(ValueError):
    """Malformed or invalid datum file, with key context in the message."""


def _require_keys(obj: dict, allowed: set, required: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise DatumFileError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise DatumFileError(f"{where}: missing keys {sorted(missing)}")


def datum_from_dict(doc: dict) -> Datum:
    if not isinstance(doc, dict):
        raise DatumFileError("top level: expected a JSON object")
    _require_keys(doc, DATUM_KEYS, {"quiver", "dims", "matrices"}, "top level")
    if ("weight" in doc) == ("exponents" in doc):
        raise DatumFileError("top level: need exactly one of 'weight' or 'exponents'")

    qdoc = doc["quiver"]
    if not isinstance(qdoc, dict):
        raise DatumFileError("'quiver': expected an object")
    _require_keys(qdoc, QUIVER_KEYS, QUIVER_KEYS, "'quiver'")
    arrows = []
    for k, adoc in enumerate(qdoc["arrows"]):
        if not isinstance(adoc, dict):
            raise DatumFileError(f"'quiver.arrows[{k}]': expected an object")
        _require_keys(adoc, ARROW_KEYS, ARROW_KEYS, f"'quiver.arrows[{k}]'")
        arrows.append(Arrow(str(adoc["id"]), str(adoc["tail"]), str(adoc["head"])))
    quiver = BipartiteQuiver(
        [str(s) for s in qdoc["sources"]], [str(s) for s in qdoc["sinks"]], arrows
    )

    dims = {}
    for x, d in doc["dims"].items():
        if not isinstance(d, int) or isinstance(d, bool):
            raise DatumFileError(f"'dims.{x}': expected an integer")
        dims[str(x)] = d

    matrices = {}
    for name, rows in doc["matrices"].items():
        if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
            raise DatumFileError(f"'matrices.{name}': expected a non-empty 2D array")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise DatumFileError(f"'matrices.{name}': ragged rows")
        try:
            matrices[str(name)] = np.array(rows, dtype=float)
        except (TypeError, ValueError) as exc:
            raise DatumFileError(f"'matrices.{name}': {exc}") from exc
    for a in quiver.arrows:
        if a.name not in matrices:
            raise DatumFileError(f"'matrices': missing entry for arrow {a.name!r}")
        want = (dims.get(a.head), dims.get(a.tail))
        if None not in want and matrices[a.name].shape != want:
            raise DatumFileError(
                f"'matrices.{a.name}': shape {matrices[a.name].shape}, expected"
                f" {want} for arrow {a.name!r}"
            )

    if "weight" in doc:
        weight = {}
        for x, s in doc["weight"].items():
            if not isinstance(s, int) or isinstance(s, bool):
                raise DatumFileError(f"'weight.{x}': expected an integer")
            weight[str(x)] = s
        datum = QuiverDatum(quiver, dims, weight, matrices)
        problems = validate_datum(datum)
        if problems:
            raise DatumFileError("invalid datum: " + "; ".join(problems))
        return datum

    edoc = doc["exponents"]
    if set(edoc) != set(quiver.sinks):
        raise DatumFileError("'exponents': keys must be exactly the sink ids")
    values = []
    for w in quiver.sinks:
        raw = edoc[w]
        if not isinstance(raw, str):
            raise DatumFileError(f"'exponents.{w}': expected a 'num/den' string")
        try:
            values.append(Fraction(raw))
        except (ValueError, ZeroDivisionError) as exc:
            raise DatumFileError(f"'exponents.{w}': {exc}") from exc
    try:
        bldatum = BLDatum(quiver, dims, matrices, ExponentTuple(values))
        weighted = bldatum.weighted()
    except ValueError as exc:
        raise DatumFileError(str(exc)) from exc
    problems = validate_datum(weighted)
    if problems:
        raise DatumFileError("invalid datum: " + "; ".join(problems))
    return bldatum


def parse_datum(path: str) -> Datum:
    """Load and validate a datum file; exponent form yields a BLDatum."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DatumFileError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return datum_from_dict(doc)


def matrix_to_lists(m: np.ndarray) -> list:
    return [[float(x) for x in row] for row in np.asarray(m, dtype=float)]


def datum_to_dict(datum: Datum) -> dict:
    quiver = datum.quiver
    doc = {
        "quiver": {
            "sources": list(quiver.sources),
            "sinks": list(quiver.sinks),
            "arrows": [{"id": a.name, "tail": a.tail, "head": a.head} for a in quiver.arrows],
        },
        "dims": {x: int(d) for x, d in datum.dims.items()},
        "matrices": {name: matrix_to_lists(m) for name, m in datum.rep.items()},
    }
    if isinstance(datum, BLDatum):
        doc["exponents"] = {
            w: f"{p.numerator}/{p.denominator}"
            for w, p in zip(quiver.sinks, datum.exponents)
        }
    else:
        doc["weight"] = {x: int(s) for x, s in datum.weight.items()}
    return doc


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, native floats
    rendered with their shortest exact representation."""
    return json.dumps(_pythonify(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def serialize_datum(datum: Datum) -> str:
    return canonical_json(datum_to_dict(datum))


def _pythonify(obj):
    if isinstance(obj, np.ndarray):
        return matrix_to_lists(obj) if obj.ndim == 2 else [float(x) for x in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float):
        if obj != obj:  # NaN is not representable
            return None
        if obj == float("inf"):  # extended reals go out as strings, never floats
            return "inf"
        if obj == float("-inf"):
            return "-inf"
    if isinstance(obj, dict):
        return {str(k): _pythonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pythonify(v) for v in obj]
    return obj
