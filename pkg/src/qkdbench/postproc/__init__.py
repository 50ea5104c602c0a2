"""Post-processing: sifting through privacy amplification."""
from .amplification import privacy_amplify
from .budget import SecurityBudget, epsilon_budget
from .estimation import (
    EstimationResult,
    binary_entropy,
    decoy_bounds,
    estimate,
    quantile,
    secret_length,
)
from .hashing import Q, VerificationOutcome, epsilon_collision, polyhash, verify
from .pipeline import BlockResult, ProtocolConfig, process_block
from .reconciliation import ReconciliationOutcome, reconcile
from .sifting import Block, BlockAssembler, DecoyStats, session_block, sift, sift_detailed

__all__ = [
    "Block", "BlockAssembler", "BlockResult", "DecoyStats", "EstimationResult", "ProtocolConfig", "Q",
    "ReconciliationOutcome", "SecurityBudget", "VerificationOutcome", "binary_entropy", "decoy_bounds",
    "epsilon_budget", "epsilon_collision", "estimate", "polyhash", "privacy_amplify", "process_block",
    "quantile", "reconcile", "secret_length", "session_block", "sift", "sift_detailed", "verify",
]
