"""MDI quantum secret sharing simulator and key-rate analytics."""

__version__ = "0.1.0"

from ._backend import BACKEND, available as available_backends  # noqa: E402
from .bsa import BsaOutcome, ClickPattern, DetectorParams  # noqa: E402
from .channel import AdversaryModel, LinkParams, Topology  # noqa: E402
from .protocol import (  # noqa: E402
    UNBIASED,
    RoundBatch,
    RoundRecord,
    SecurityReport,
    SharedKey,
    expected_outcome,
    reconstruct_secret,
    run_round,
    sift_and_check,
    simulate,
    verify_tables,
    virtual_ghz_equivalence,
)
from .qstate import BellLabel, EncodingKeys  # noqa: E402
from .rates import (  # noqa: E402
    SystemParams,
    key_rate,
    key_rate_with_dark_counts,
    max_distance,
    threshold_fidelity,
)

__all__ = [
    "__version__", "BACKEND", "available_backends",
    "BellLabel", "EncodingKeys", "BsaOutcome", "ClickPattern", "DetectorParams",
    "AdversaryModel", "LinkParams", "Topology",
    "UNBIASED", "RoundBatch", "RoundRecord", "SecurityReport", "SharedKey",
    "expected_outcome", "reconstruct_secret", "run_round", "sift_and_check", "simulate",
    "verify_tables", "virtual_ghz_equivalence",
    "SystemParams", "key_rate", "key_rate_with_dark_counts", "max_distance", "threshold_fidelity",
]
