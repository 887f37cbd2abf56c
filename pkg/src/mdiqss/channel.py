"""Fiber segments, label-level channel noise and simple adversaries."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .qstate import BellLabel

__all__ = [
    "Topology",
    "LinkParams",
    "AdversaryModel",
    "transmittance",
    "transmit",
    "end_to_end_error",
    "eve_intercept",
]


class Topology(str, enum.Enum):
    """Where the encoders sit relative to the analyzer.

    SYMMETRIC: four equal segments, each photon crosses 2L of fiber.
    PROXIMAL: encoders next to the analyzer, each photon crosses L.
    """

    SYMMETRIC = "symmetric"
    PROXIMAL = "proximal"

    @property
    def segments_per_photon(self) -> int:
        return 2 if self is Topology.SYMMETRIC else 1


class AdversaryModel(str, enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND_X = "intercept-x"
    INTERCEPT_RESEND_Y = "intercept-y"
    DISHONEST_BOB = "dishonest-bob"

    @property
    def intercept_basis(self) -> int | None:
        """Bell family measured by an intercept-resend attack, if any."""
        if self is AdversaryModel.INTERCEPT_RESEND_X:
            return 0
        if self is AdversaryModel.INTERCEPT_RESEND_Y:
            return 1
        return None


def transmittance(alpha: float, length_km: float) -> float:
    """Fiber transmittance 10**(-alpha*L/10)."""
    if alpha < 0 or length_km < 0:
        raise ValueError("loss rate and length must be non-negative")
    return 10.0 ** (-alpha * length_km / 10.0)


@dataclass(frozen=True)
class LinkParams:
    """One fiber segment.

    ``e_x``/``e_y`` are the probabilities that a pair label of the psi/phi
    family has its sign flipped while one of its photons crosses this segment.
    """

    alpha: float = 0.19
    length_km: float = 0.0
    e_x: float = 0.0
    e_y: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.length_km < 0:
            raise ValueError(f"length_km must be >= 0, got {self.length_km}")
        for name in ("e_x", "e_y"):
            value = getattr(self, name)
            if not 0.0 <= value <= 0.5:
                raise ValueError(f"{name} must lie in [0, 1/2], got {value}")

    @property
    def transmittance(self) -> float:
        return transmittance(self.alpha, self.length_km)

    def flip_probability(self, label: BellLabel | int) -> float:
        return self.e_y if int(label) & 1 else self.e_x


def transmit(label: BellLabel | int, link: LinkParams, rng: np.random.Generator) -> tuple[bool, BellLabel]:
    """Send one photon of the pair through ``link``.

    Returns whether the photon survived and the (possibly sign-flipped) label.
    """
    label = BellLabel(label)
    survived = bool(rng.random() < link.transmittance)
    if survived and rng.random() < link.flip_probability(label):
        label = BellLabel((label + 2) % 4)
    return survived, label


def end_to_end_error(e_x: float, e_y: float) -> float:
    """Sifted error rate after two noisy stages with per-basis flips e_x, e_y.

    e = e_x(1 - e_x) + e_y(1 - e_x)/2 + (1 - e_y)e_x/2, which reduces to
    2q(1 - q) when e_x = e_y = q.
    """
    for name, value in (("e_x", e_x), ("e_y", e_y)):
        if not 0.0 <= value <= 0.5:
            raise ValueError(f"{name} must lie in [0, 1/2], got {value}")
    return 1.5 * e_x + 0.5 * e_y - e_x * e_x - e_x * e_y


def eve_intercept(label: BellLabel | int, strategy: str | int, rng: np.random.Generator) -> BellLabel:
    """Measure-and-resend in the X (psi) or Y (phi) family.

    A label already in the measured family passes unchanged; otherwise it is
    replaced by a uniformly random label of that family.
    """
    label = BellLabel(label)
    if isinstance(strategy, str):
        try:
            family = {"X": 0, "Y": 1}[strategy.upper()]
        except KeyError:
            raise ValueError(f"strategy must be 'X' or 'Y', got {strategy!r}") from None
    else:
        family = int(strategy)
    if label.basis == family:
        return label
    return BellLabel.from_bits(family, int(rng.random() >= 0.5))
