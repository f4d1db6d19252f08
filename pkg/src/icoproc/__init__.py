"""Numerical toolkit for multipartite process matrices and parity-erasure channels."""
from .tensor_core import (
    LabeledOperator,
    Role,
    SystemLabel,
    TensorSpace,
    choi_from_kraus,
    choi_identity,
    link,
    partial_trace,
    tensor,
    trace_and_replace,
)
from .process_matrix import (
    PartySignature,
    ProcessMatrix,
    ValidationReport,
    pair,
    project_to_subspace,
    random_ordered_process,
    random_valid_process,
    uniform_process,
    validate,
)
from .channels import (
    ClassicalChannel,
    InvalidChannelError,
    ParityReport,
    QuantumChannel,
    local_io_relation,
    parity_erasure_classical,
    parity_erasure_quantum,
    parity_erasure_quantum_direct,
    weak_parity_check,
)
from .decomposition import (
    DecompositionError,
    DecompositionResult,
    ParityErasureViolation,
    apply_supermap,
    classical_oneway_decompose,
    insert_channel,
    quantum_oneway_decompose,
)
from .explorer import (
    ScaleCapError,
    causal_separability_lp,
    deterministic_parity_erasure_census,
    parity_polytope_vertices,
)

__version__ = "0.1.0"
