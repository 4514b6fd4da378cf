"""Secret key rate of four-intensity decoy-state MDI-QKD."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ProtocolParams, SystemParams, binary_entropy
from .decoy import DecoyBounds, FluctuationConfig, ObservedStatistics, estimate_bounds


@dataclass(frozen=True)
class KeyRateResult:
    rate_per_pulse: float
    rate_bps: float
    q_ss: float
    e_ss: float
    bounds: DecoyBounds
    clamped: bool = False


def _check_prob(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise ValueError(f"{name}={x!r} is not a probability")


def secret_key_rate(params: ProtocolParams, bounds: DecoyBounds, q_ss: float, e_ss: float,
                    f_e: float, clock_rate: float = 1.25e9) -> KeyRateResult:
    """Key bits per pulse pair.

    ``q_ss`` and ``e_ss`` are the Z-basis gain and QBER conditioned on both
    users sending the signal intensity; the ``P_sA * P_sB`` prefactor accounts
    for how often that happens. Negative rates are reported as 0 with
    ``clamped`` set.
    """
    _check_prob("q_ss", q_ss)
    _check_prob("e_ss", e_ss)
    _check_prob("y11_lower", bounds.y11_lower)
    _check_prob("e11_upper", bounds.e11_upper)
    if f_e < 1.0:
        raise ValueError("f_e must be >= 1")
    s_a = params.alice.intensities.s
    s_b = params.bob.intensities.s
    p_sa = params.alice.probabilities.p_s
    p_sb = params.bob.probabilities.p_s
    # a phase-error bound at or above 1/2 leaves nothing to amplify
    privacy = 1.0 - binary_entropy(min(bounds.e11_upper, 0.5))
    single = (s_a * math.exp(-s_a)) * (s_b * math.exp(-s_b)) * bounds.y11_lower * privacy
    leak = f_e * q_ss * binary_entropy(e_ss)
    rate = p_sa * p_sb * (single - leak)
    clamped = rate <= 0.0
    if clamped:
        rate = 0.0
    return KeyRateResult(rate, rate * clock_rate, q_ss, e_ss, bounds, clamped)


def z_basis_observables(obs: ObservedStatistics, params: ProtocolParams) -> tuple[float, float]:
    """(q_ss, e_ss) from the signal-signal class counts."""
    trials = obs.n_pairs * params.alice.probabilities.p_s * params.bob.probabilities.p_s
    if trials <= 0:
        raise ValueError("signal intensity is never sent by both users")
    total = obs.total("ss")
    q_ss = total / trials
    e_ss = obs.errors("ss") / total if total > 0 else 0.0
    return q_ss, e_ss


def analyze(obs: ObservedStatistics, params: ProtocolParams, system: SystemParams,
            config: FluctuationConfig) -> KeyRateResult:
    """Decoy bounds followed by the key-rate formula."""
    bounds = estimate_bounds(obs, params, config)
    q_ss, e_ss = z_basis_observables(obs, params)
    return secret_key_rate(params, bounds, q_ss, e_ss, system.f_e, system.clock_rate)
