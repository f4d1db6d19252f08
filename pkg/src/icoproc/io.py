"""JSON and CSV file formats.

Operator documents::

    {"labels": [{"party": 1, "role": "A", "dim": 2}, ...],
     "matrix": [[[re, im], ...], ...]}

with the matrix row-major over the listed factor order.  A label may carry
an optional integer ``"tag"`` to tell apart factors of equal party and role.

Classical channel documents::

    {"out_sizes": [...], "in_sizes": [...], "table": nested array}

where ``table`` nests output letters first, then input letters.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .channels import ClassicalChannel, InvalidChannelError
from .tensor_core import LabeledOperator, Role, SystemLabel, TensorSpace


class FormatError(ValueError):
    pass


def label_to_dict(lab: SystemLabel) -> dict:
    out = {"party": lab.party, "role": lab.role.name, "dim": lab.dim}
    if lab.tag:
        out["tag"] = lab.tag
    return out


def label_from_dict(doc) -> SystemLabel:
    try:
        party, role, dim = doc["party"], doc["role"], doc["dim"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed label {doc!r}") from exc
    if not isinstance(party, int) or not isinstance(dim, int) or isinstance(dim, bool):
        raise FormatError(f"label party/dim must be integers: {doc!r}")
    if role not in Role.__members__:
        raise FormatError(f"unknown role {role!r}")
    tag = doc.get("tag", 0)
    if not isinstance(tag, int):
        raise FormatError(f"label tag must be an integer: {doc!r}")
    try:
        return SystemLabel(party, Role[role], dim, tag)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def operator_to_dict(op: LabeledOperator) -> dict:
    m = op.matrix
    return {
        "labels": [label_to_dict(l) for l in op.labels],
        "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in m],
    }


def operator_from_dict(doc) -> LabeledOperator:
    if not isinstance(doc, dict) or "labels" not in doc or "matrix" not in doc:
        raise FormatError("operator document needs 'labels' and 'matrix'")
    labels = [label_from_dict(d) for d in doc["labels"]]
    try:
        space = TensorSpace(tuple(labels))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    n = space.dim
    rows = doc["matrix"]
    if not isinstance(rows, list) or len(rows) != n:
        raise FormatError(f"matrix must have {n} rows")
    arr = np.empty((n, n), dtype=complex)
    for r, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise FormatError(f"matrix row {r} must have {n} entries")
        for c, entry in enumerate(row):
            if (not isinstance(entry, list) or len(entry) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in entry)):
                raise FormatError(f"matrix entry ({r},{c}) must be a [re, im] pair")
            if not all(math.isfinite(v) for v in entry):
                raise FormatError(f"matrix entry ({r},{c}) is not finite")
            arr[r, c] = complex(entry[0], entry[1])
    return LabeledOperator(space, arr)


def classical_to_dict(ch: ClassicalChannel) -> dict:
    return {"out_sizes": list(ch.out_sizes), "in_sizes": list(ch.in_sizes),
            "table": ch.table.tolist()}


def classical_from_dict(doc, tol: float = 1e-9) -> ClassicalChannel:
    if not isinstance(doc, dict) or not {"out_sizes", "in_sizes", "table"} <= set(doc):
        raise FormatError("classical channel document needs 'out_sizes', 'in_sizes' and 'table'")
    try:
        table = np.array(doc["table"], dtype=float)
        ch = ClassicalChannel(tuple(doc["out_sizes"]), tuple(doc["in_sizes"]), table)
        ch.check(tol)
    except (InvalidChannelError, ValueError, TypeError) as exc:
        raise FormatError(f"invalid classical channel: {exc}") from exc
    return ch


def load_json(path) -> object:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_operator(path) -> LabeledOperator:
    return operator_from_dict(load_json(path))


def write_operator(op: LabeledOperator, path) -> None:
    dump_json(operator_to_dict(op), path)


def read_classical(path, tol: float = 1e-9) -> ClassicalChannel:
    return classical_from_dict(load_json(path), tol)


def write_classical(ch: ClassicalChannel, path) -> None:
    dump_json(classical_to_dict(ch), path)


def read_local_operation(path) -> list[LabeledOperator]:
    """Channel document, or ``{"instrument": [operator, ...]}``; always a list of elements."""
    doc = load_json(path)
    if isinstance(doc, dict) and "instrument" in doc:
        elements = doc["instrument"]
        if not isinstance(elements, list) or not elements:
            raise FormatError("'instrument' must be a nonempty list of operators")
        return [operator_from_dict(e) for e in elements]
    return [operator_from_dict(doc)]


def write_instrument(elements, path) -> None:
    dump_json({"instrument": [operator_to_dict(e) for e in elements]}, path)


def decomposition_to_dict(dec) -> dict:
    def enc(obj):
        return classical_to_dict(obj) if isinstance(obj, ClassicalChannel) else operator_to_dict(obj)
    return {"party": dec.party, "memory_dim": dec.memory.dim, "residual": dec.residual,
            "E": enc(dec.E), "D": enc(dec.D)}


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_csv(header, rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
