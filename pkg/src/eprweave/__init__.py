"""eprweave: a deterministic LOCC simulator that weaves GHZ states out of
pre-shared EPR pairs and grows group entanglement across hypergraphs."""

__version__ = "0.1.0"

from .errors import (
    ConditioningError,
    ConnectivityError,
    EntanglementError,
    EprWeaveError,
    LoccViolationError,
    NetworkSpecError,
    ProtocolError,
    SetupClosedError,
    ZeroProbabilityError,
)
from .locc import ALL, NetworkState, RecordingChooser, replay_transcript
from .protocols import (
    BranchRecord,
    CorrectionRule,
    ProtocolReport,
    disentangle_duplicate,
    extend_ghz,
    fusion_step,
    protocol_one,
    protocol_three,
    protocol_two,
    setup_epr_network,
    setup_group_network,
    teleport,
    verify_ghz,
)
from .statevec import CNOT, H, Gate, StateVector, X, Z, bell_pair, ghz_state
from .topology import (
    EntangledHypergraph,
    EprGraph,
    SpanningTree,
    hypergraph_is_connected,
    is_connected,
    merge_schedule,
    minimum_spanning_tree,
    spanning_tree,
)

__all__ = [
    "ALL",
    "BranchRecord",
    "CNOT",
    "ConditioningError",
    "ConnectivityError",
    "CorrectionRule",
    "EntangledHypergraph",
    "EntanglementError",
    "EprGraph",
    "EprWeaveError",
    "Gate",
    "H",
    "LoccViolationError",
    "NetworkSpecError",
    "NetworkState",
    "ProtocolError",
    "ProtocolReport",
    "RecordingChooser",
    "SetupClosedError",
    "SpanningTree",
    "StateVector",
    "X",
    "Z",
    "ZeroProbabilityError",
    "__version__",
    "bell_pair",
    "disentangle_duplicate",
    "extend_ghz",
    "fusion_step",
    "ghz_state",
    "hypergraph_is_connected",
    "is_connected",
    "merge_schedule",
    "minimum_spanning_tree",
    "protocol_one",
    "protocol_three",
    "protocol_two",
    "replay_transcript",
    "setup_epr_network",
    "setup_group_network",
    "spanning_tree",
    "teleport",
    "verify_ghz",
]
