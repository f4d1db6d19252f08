"""Golden fixture files shared across implementations.

``build_fixtures`` recreates every file shipped in this directory; the test
suite checks the shipped copies against it.
"""
from __future__ import annotations

import io as _io
from pathlib import Path

import numpy as np

from ..channels import ClassicalChannel
from ..explorer import channel_rows, deterministic_parity_erasure_census
from ..io import classical_to_dict, dump_json, operator_to_dict, write_csv
from ..process_matrix import PartySignature, uniform_process
from ..tensor_core import LabeledOperator, choi_identity, link, tensor

FIXTURE_DIR = Path(__file__).parent
SIG = PartySignature.qubits(2)


def fixture_path(name: str) -> Path:
    return FIXTURE_DIR / name


def comb_operator() -> LabeledOperator:
    """Qubit comb ``|0><0|_{A1} (x) Choi(id)_{X1 A2} (x) I_{X2}``."""
    rho = LabeledOperator([SIG.a(1)], np.diag([1.0, 0.0]))
    wire = choi_identity(SIG.x(1), SIG.a(2))
    return tensor(tensor(rho, wire), LabeledOperator.identity([SIG.x(2)])).canonical()


def swap_operator() -> LabeledOperator:
    """Qubit SWAP channel ``X1 X2 -> A1 A2`` with ``A1 <- X2`` and ``A2 <- X1``."""
    return tensor(choi_identity(SIG.x(1), SIG.a(2)), choi_identity(SIG.x(2), SIG.a(1))).canonical()


def classical_swap() -> ClassicalChannel:
    return ClassicalChannel.from_function((2, 2), (2, 2), lambda x: (x[1], x[0]))


def classical_comb() -> ClassicalChannel:
    return ClassicalChannel.from_function((2, 2), (2, 2), lambda x: (0, x[0]))


def identity_local(i: int) -> LabeledOperator:
    return choi_identity(SIG.a(i), SIG.x(i))


def measure_prepare_instrument(i: int) -> list[LabeledOperator]:
    """Computational-basis measurement re-preparing the observed state."""
    out = []
    for k in range(2):
        proj = np.zeros((2, 2))
        proj[k, k] = 1
        out.append(LabeledOperator.from_factors([(SIG.a(i), proj), (SIG.x(i), proj)]))
    return out


def census_csv() -> str:
    header, rows = channel_rows([d.to_channel() for d in deterministic_parity_erasure_census()])
    buf = _io.StringIO(newline="")
    write_csv(header, rows, buf)
    return buf.getvalue()


def build_fixtures() -> dict[str, object]:
    docs: dict[str, object] = {
        "uniform_noise.json": operator_to_dict(uniform_process(SIG).W),
        "comb.json": operator_to_dict(comb_operator()),
        "swap.json": operator_to_dict(swap_operator()),
        "swap_classical.json": classical_to_dict(classical_swap()),
        "comb_classical.json": classical_to_dict(classical_comb()),
        "census.csv": census_csv(),
    }
    for i in (1, 2):
        docs[f"identity_{i}.json"] = operator_to_dict(identity_local(i))
        docs[f"measure_z_{i}.json"] = {"instrument": [operator_to_dict(e) for e in measure_prepare_instrument(i)]}
    return docs


def write_fixtures(directory=FIXTURE_DIR) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, doc in build_fixtures().items():
        path = directory / name
        if isinstance(doc, str):
            path.write_text(doc, newline="")
        else:
            dump_json(doc, path)
        written.append(path)
    return written
