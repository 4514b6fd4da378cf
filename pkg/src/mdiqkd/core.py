"""Domain types and small numerical primitives shared by every module."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BellOutcome",
    "EmissionProbabilities",
    "PolarizationState",
    "ProtocolParams",
    "PulseIntensities",
    "SystemParams",
    "binary_entropy",
    "km_to_loss",
    "loss_to_transmittance",
    "poisson_weight",
]

PROB_SUM_TOL = 1e-12
NORM_TOL = 1e-9


def binary_entropy(e: float) -> float:
    """Binary Shannon entropy in bits, with 0*log2(0) taken as 0."""
    if not 0.0 <= e <= 1.0 or math.isnan(e):
        raise ValueError(f"binary_entropy: argument {e!r} outside [0, 1]")
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def poisson_weight(mu: float, n: int) -> float:
    """P(n photons) for a phase-randomized coherent pulse of mean ``mu``."""
    if mu < 0 or n < 0:
        raise ValueError("poisson_weight needs mu >= 0 and n >= 0")
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def loss_to_transmittance(loss_db: float) -> float:
    if loss_db < 0:
        raise ValueError(f"negative loss {loss_db} dB")
    return 10.0 ** (-loss_db / 10.0)


def km_to_loss(distance: float, coeff: float = 0.2) -> float:
    if distance < 0 or coeff < 0:
        raise ValueError("distance and loss coefficient must be non-negative")
    return distance * coeff


@dataclass(frozen=True)
class PulseIntensities:
    """Mean photon numbers: signal ``s`` (Z basis) and decoys ``mu > nu > omega`` (X basis)."""

    s: float
    mu: float
    nu: float
    omega: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.s, self.mu, self.nu, self.omega)
        if not all(math.isfinite(v) and v < 10 for v in vals):
            raise ValueError(f"intensities must be finite and < 10: {vals}")
        if self.omega != 0.0:
            raise ValueError("omega is the vacuum intensity and must be exactly 0")
        if not self.s > self.mu > self.nu > self.omega:
            raise ValueError(f"need s > mu > nu > omega >= 0, got {vals}")


@dataclass(frozen=True)
class EmissionProbabilities:
    p_s: float
    p_mu: float
    p_nu: float
    p_omega: float

    def __post_init__(self) -> None:
        ps = (self.p_s, self.p_mu, self.p_nu, self.p_omega)
        if any(not 0.0 <= p <= 1.0 for p in ps):
            raise ValueError(f"probabilities must lie in [0, 1]: {ps}")
        if abs(sum(ps) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities must sum to 1, got {sum(ps)!r}")

    @classmethod
    def from_free(cls, p_s: float, p_mu: float, p_nu: float) -> EmissionProbabilities:
        """Build from the three free probabilities; the vacuum takes the rest."""
        p_omega = 1.0 - p_s - p_mu - p_nu
        if -PROB_SUM_TOL < p_omega < 0:
            p_omega = 0.0
        return cls(p_s, p_mu, p_nu, p_omega)


@dataclass(frozen=True)
class PartySettings:
    intensities: PulseIntensities
    probabilities: EmissionProbabilities

    def intensity(self, label: str) -> float:
        return {"s": self.intensities.s, "mu": self.intensities.mu,
                "nu": self.intensities.nu, "0": 0.0}[label]

    def probability(self, label: str) -> float:
        p = self.probabilities
        return {"s": p.p_s, "mu": p.p_mu, "nu": p.p_nu, "0": p.p_omega}[label]


@dataclass(frozen=True)
class ProtocolParams:
    alice: PartySettings
    bob: PartySettings
    symmetric: bool = False

    def __post_init__(self) -> None:
        if self.symmetric and self.alice != self.bob:
            raise ValueError("symmetric ProtocolParams need identical party settings")

    @classmethod
    def symmetric_from(cls, s: float, mu: float, nu: float,
                       p_s: float, p_mu: float, p_nu: float) -> ProtocolParams:
        """The six-number parameterization shared by both users."""
        party = PartySettings(PulseIntensities(s, mu, nu),
                              EmissionProbabilities.from_free(p_s, p_mu, p_nu))
        return cls(party, party, symmetric=True)

    def swapped(self) -> ProtocolParams:
        return ProtocolParams(self.bob, self.alice, self.symmetric)

    def as_vector(self) -> tuple[float, ...]:
        """``(s, mu, nu, P_s, P_mu, P_nu)`` for Alice."""
        i, p = self.alice.intensities, self.alice.probabilities
        return (i.s, i.mu, i.nu, p.p_s, p.p_mu, p.p_nu)


@dataclass(frozen=True)
class SystemParams:
    """Physical model of detectors, channel and relay.

    ``dark_count_rate`` is per detector; the per-window dark-click
    probability is ``dark_count_rate * coincidence_window``.
    """

    detector_efficiency: float = 0.53
    dark_count_rate: float = 50.0
    clock_rate: float = 1.25e9
    coincidence_window: float = 600e-12
    misalignment: float = 0.015
    fiber_loss_coeff: float = 0.2
    relay_insertion_loss: float = 0.0
    f_e: float = 1.16
    hom_mode_overlap: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must lie in [0, 1]")
        if self.dark_count_rate < 0:
            raise ValueError("dark_count_rate must be >= 0")
        if self.clock_rate <= 0 or self.coincidence_window < 0:
            raise ValueError("clock_rate must be > 0 and coincidence_window >= 0")
        if self.coincidence_window * self.clock_rate > 1.0:
            raise ValueError("coincidence window longer than a clock period")
        if not 0.0 <= self.misalignment <= 0.5:
            raise ValueError("misalignment must lie in [0, 0.5]")
        if self.fiber_loss_coeff < 0 or self.relay_insertion_loss < 0:
            raise ValueError("losses must be >= 0")
        if self.f_e < 1.0:
            raise ValueError("error-correction efficiency f_e must be >= 1")
        if not 0.0 <= self.hom_mode_overlap <= 1.0:
            raise ValueError("hom_mode_overlap must lie in [0, 1]")

    @property
    def dark_click_probability(self) -> float:
        return min(1.0, self.dark_count_rate * self.coincidence_window)


@dataclass(frozen=True)
class PolarizationState:
    """Jones vector on the {H, V} basis."""

    h: complex
    v: complex
    _vec: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        norm = abs(self.h) ** 2 + abs(self.v) ** 2
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"Jones vector not normalized (|psi|^2 = {norm})")
        object.__setattr__(self, "_vec", np.array([self.h, self.v], dtype=complex))

    @classmethod
    def from_phase(cls, theta: float) -> PolarizationState:
        """(|H> + e^{i theta}|V>)/sqrt(2), the family the transmitter prepares."""
        r = 1.0 / math.sqrt(2.0)
        return cls(complex(r), r * complex(math.cos(theta), math.sin(theta)))

    @property
    def vector(self) -> np.ndarray:
        return self._vec.copy()


# Protocol states. Z = {(H+V)/sqrt2, (H-V)/sqrt2}, X = {(H+iV)/sqrt2, (H-iV)/sqrt2}.
Z_STATES = (PolarizationState.from_phase(0.0), PolarizationState.from_phase(math.pi))
X_STATES = (PolarizationState.from_phase(math.pi / 2), PolarizationState.from_phase(3 * math.pi / 2))


class BellOutcome(enum.Enum):
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"
    NO_CLICK = "none"
    AMBIGUOUS = "ambiguous"


def classify_clicks(c0: bool, c1: bool, d0: bool, d1: bool) -> BellOutcome:
    """Map a four-detector click pattern to a Bell outcome.

    ``c``/``d`` are the two beam-splitter outputs, ``0``/``1`` the PBS ports.
    Same output with orthogonal polarizations is psi+, different outputs
    with orthogonal polarizations is psi-.
    """
    n = c0 + c1 + d0 + d1
    if n == 0:
        return BellOutcome.NO_CLICK
    if n != 2:
        return BellOutcome.AMBIGUOUS
    if (c0 and c1) or (d0 and d1):
        return BellOutcome.PSI_PLUS
    if (c0 and d1) or (c1 and d0):
        return BellOutcome.PSI_MINUS
    return BellOutcome.AMBIGUOUS
