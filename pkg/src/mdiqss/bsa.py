"""Untrusted Bell-state analyzer: ideal projection and a 4-detector click model.

Valid coincidence signatures (D1..D4 are bits 0..3 of a click mask)::

    psi+ : D1 & D2,  D3 & D4
    psi- : D1 & D3,  D2 & D4

Photon 1 is routed to D1 or D4 and photon 2 to D2 or D3, so every valid
signature needs one click from each photon path. Any other click set,
including three or more clicks, is inconclusive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _pykernels as _k
from .channel import Topology
from .qstate import BellLabel, bell_vector

__all__ = [
    "BsaOutcome",
    "ClickPattern",
    "DetectorParams",
    "IDEAL_DETECTORS",
    "SIGNATURES",
    "ideal_bsa",
    "bsa_probabilities",
    "click_bsa",
    "outcome_from_pattern",
    "coincidence_efficiency",
    "click_trials",
]


class BsaOutcome(enum.IntEnum):
    PSI_PLUS = _k.OUT_PSI_PLUS
    PSI_MINUS = _k.OUT_PSI_MINUS
    INCONCLUSIVE = _k.OUT_INCONCLUSIVE

    @property
    def symbol(self) -> str:
        return ("psi+", "psi-", "?")[self.value]


class ClickPattern(NamedTuple):
    d1: bool = False
    d2: bool = False
    d3: bool = False
    d4: bool = False

    @property
    def mask(self) -> int:
        return sum(1 << i for i, hit in enumerate(self) if hit)

    @classmethod
    def from_mask(cls, mask: int) -> "ClickPattern":
        return cls(*(bool(mask >> i & 1) for i in range(4)))


SIGNATURES = {
    BsaOutcome.PSI_PLUS: (_k.D1 | _k.D2, _k.D3 | _k.D4),
    BsaOutcome.PSI_MINUS: (_k.D1 | _k.D3, _k.D2 | _k.D4),
}


@dataclass(frozen=True)
class DetectorParams:
    """Detector efficiency, per-detector dark-count probability, analyzer efficiency."""

    eta_d: float = 0.93
    p_d: float = 1e-7
    eta_D: float = 0.863

    def __post_init__(self):
        if not 0.0 <= self.eta_d <= 1.0:
            raise ValueError(f"eta_d must lie in [0, 1], got {self.eta_d}")
        if not 0.0 <= self.eta_D <= 1.0:
            raise ValueError(f"eta_D must lie in [0, 1], got {self.eta_D}")
        if not 0.0 <= self.p_d < 1.0:
            raise ValueError(f"p_d must lie in [0, 1), got {self.p_d}")


IDEAL_DETECTORS = DetectorParams(eta_d=1.0, p_d=0.0, eta_D=1.0)


def outcome_from_pattern(pattern: ClickPattern | int) -> BsaOutcome:
    mask = pattern.mask if isinstance(pattern, ClickPattern) else int(pattern)
    for outcome, masks in SIGNATURES.items():
        if mask in masks:
            return outcome
    return BsaOutcome.INCONCLUSIVE


def bsa_probabilities(state: np.ndarray) -> tuple[float, float]:
    """Born probabilities of the psi+ and psi- projections."""
    state = np.asarray(state, dtype=complex)
    norm = float(np.vdot(state, state).real)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"state is not normalized (norm^2 = {norm:.12g})")
    p_plus = abs(np.vdot(bell_vector(BellLabel.PSI_PLUS), state)) ** 2
    p_minus = abs(np.vdot(bell_vector(BellLabel.PSI_MINUS), state)) ** 2
    return float(p_plus), float(p_minus)


def ideal_bsa(state: np.ndarray, rng: np.random.Generator) -> BsaOutcome:
    """Project a two-photon state onto psi+/psi-; anything else is inconclusive."""
    p_plus, p_minus = bsa_probabilities(state)
    u = rng.random()
    if u < p_plus:
        return BsaOutcome.PSI_PLUS
    if u < p_plus + p_minus:
        return BsaOutcome.PSI_MINUS
    return BsaOutcome.INCONCLUSIVE


def _resolve(arrive1: bool, arrive2: bool, projected: BsaOutcome | None,
             params: DetectorParams, u: np.ndarray) -> tuple[int, int]:
    """Scalar click resolution from uniforms (gate, signature, det1, det2, dark x4).

    Returns (click mask, number of signal clicks).
    """
    gate = u[0] < params.eta_D
    first = u[1] < 0.5
    det1 = _k.D1 if first else _k.D4
    swap = arrive1 and arrive2 and projected is BsaOutcome.PSI_MINUS
    det2 = _k.D2 if first != swap else _k.D3
    hit1 = arrive1 and gate and u[2] < params.eta_d
    hit2 = arrive2 and gate and u[3] < params.eta_d
    mask = (det1 if hit1 else 0) | (det2 if hit2 else 0)
    for d in range(4):
        if u[4 + d] < params.p_d:
            mask |= 1 << d
    return mask, int(hit1) + int(hit2)


def click_bsa(arrivals: tuple[bool, bool], projected: BsaOutcome | None,
              params: DetectorParams, rng: np.random.Generator) -> tuple[BsaOutcome, ClickPattern]:
    """Detector-level analyzer response for one round.

    ``projected`` is the ideal outcome when both photons arrive and is ignored
    otherwise. The analyzer efficiency acts once per round as a gate in front
    of all detectors; each signal photon then clicks its detector with
    probability ``eta_d`` and every detector may dark-count.
    """
    arrive1, arrive2 = bool(arrivals[0]), bool(arrivals[1])
    if arrive1 and arrive2 and projected not in (BsaOutcome.PSI_PLUS, BsaOutcome.PSI_MINUS):
        raise ValueError("both photons arrived but no projected outcome was given")
    mask, _ = _resolve(arrive1, arrive2, projected, params, rng.random(8))
    return outcome_from_pattern(mask), ClickPattern.from_mask(mask)


def coincidence_efficiency(params: DetectorParams, eta_t: float,
                           topology: Topology | str = Topology.SYMMETRIC) -> float:
    """Probability that a pair yields a signal coincidence (the key-bit efficiency).

    ``eta_t`` is the transmittance of one segment; a photon crosses two
    segments in the symmetric layout and one in the proximal layout.
    """
    if not 0.0 < eta_t <= 1.0:
        raise ValueError(f"eta_t must lie in (0, 1], got {eta_t}")
    topology = Topology(topology)
    per_photon = eta_t ** topology.segments_per_photon
    return per_photon**2 * params.eta_d**2 * params.eta_D


def click_trials(n_trials: int, params: DetectorParams, arrival: tuple[float, float] = (0.0, 0.0),
                 label: BellLabel = BellLabel.PSI_PLUS, seed: int = 0, start: int = 0,
                 backend: str | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch of analyzer-only trials through the round kernel.

    Each photon reaches the analyzer independently with probability
    ``arrival[i]``. Returns (outcome, click mask, signal clicks) arrays.
    """
    from . import _backend

    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    for p in arrival:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"arrival probability must lie in [0, 1], got {p}")
    kind = np.array([_k.EV_SEGMENT, _k.EV_SEGMENT], dtype=np.int32)
    photon = np.array([0, 1], dtype=np.int32)
    slots = np.array([0, 2], dtype=np.int32)
    zeros = np.zeros(2)
    _, outcome, pattern, nsig = _backend.get(backend).simulate_rounds(
        _k.seed_key(int(seed)), start, start + n_trials, 0, 4 + _k.BSA_SLOTS, int(label),
        kind, photon, np.zeros(2, dtype=np.int32), slots, np.array(arrival, dtype=float), zeros, zeros,
        np.zeros((2, 4, 4), dtype=np.int8), np.zeros(0, dtype=np.uint8),
        params.eta_d, params.eta_D, params.p_d, 4)
    return outcome, pattern, nsig
