"""Forward model of the setup: expected gains, Monte Carlo counts, HOM dip.

Each user sends a phase-randomized weak coherent pulse through a lossy
channel to a 50/50 beam splitter whose outputs each hit a polarizing beam
splitter aligned to the Z basis and two threshold detectors. A Bell-state
event is exactly two clicks in a psi+ or psi- pattern. Misalignment flips
each user's emitted state to the orthogonal state of the same basis with
probability ``misalignment``; the 25 % X-basis floor is not inserted, it
follows from multi-photon terms of the coherent states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import X_STATES, Z_STATES, ProtocolParams, SystemParams, loss_to_transmittance
from .decoy import (
    CLASS_INTENSITIES,
    CLASS_LABELS,
    COMPLEX_CLASSES,
    ClassCounts,
    ObservedStatistics,
    class_probability,
)

_PBS_BASIS = np.array([Z_STATES[0].vector, Z_STATES[1].vector])
_Z = np.array([s.vector for s in Z_STATES])
_X = np.array([s.vector for s in X_STATES])


@dataclass(frozen=True)
class ChannelPair:
    loss_alice_db: float
    loss_bob_db: float

    def __post_init__(self) -> None:
        if self.loss_alice_db < 0 or self.loss_bob_db < 0:
            raise ValueError("channel losses must be >= 0 dB")

    @classmethod
    def symmetric(cls, total_loss_db: float) -> ChannelPair:
        return cls(total_loss_db / 2, total_loss_db / 2)

    @classmethod
    def from_km(cls, distance_alice: float, distance_bob: float, coeff: float) -> ChannelPair:
        return cls(distance_alice * coeff, distance_bob * coeff)

    @property
    def total_db(self) -> float:
        return self.loss_alice_db + self.loss_bob_db


@dataclass(frozen=True)
class ClassGain:
    gain: float
    error_gain: float

    @property
    def error_fraction(self) -> float:
        return self.error_gain / self.gain if self.gain > 0 else 0.0


@dataclass(frozen=True)
class GainTable:
    """Expected per-pulse gain and error gain per class.

    For the mirrored classes (mu0, nu0) the gain is the emission-weighted
    average of the two orderings, matching how their counts are pooled.
    """

    classes: dict

    def __getitem__(self, label: str) -> ClassGain:
        return self.classes[label]


def detected_transmittance(system: SystemParams, loss_db: float) -> float:
    """Channel, relay insertion loss and detector efficiency for one user."""
    return system.detector_efficiency * loss_to_transmittance(loss_db + system.relay_insertion_loss)


def _ensemble(basis_states: np.ndarray, intensity: float, transmittance: float, e_d: float):
    """(intended bit, weight, PBS-port amplitudes) for one user's state mixture."""
    amp = math.sqrt(intensity * transmittance)
    out = []
    for bit in (0, 1):
        for flip, w in ((0, 1.0 - e_d), (1, e_d)):
            if w == 0.0:
                continue
            vec = basis_states[bit ^ flip]
            out.append((bit, 0.5 * w, amp * (_PBS_BASIS.conj() @ vec)))
    return out


def _pair_rows(system: SystemParams, basis: str, mu_a: float, mu_b: float,
               t_a: float, t_b: float):
    states = _Z if basis == "Z" else _X
    ens_a = _ensemble(states, mu_a, t_a, system.misalignment)
    ens_b = _ensemble(states, mu_b, t_b, system.misalignment)
    for bit_a, w_a, amp_a in ens_a:
        for bit_b, w_b, amp_b in ens_b:
            yield amp_a, amp_b, w_a * w_b, bit_a == bit_b


def expected_gains(system: SystemParams, params: ProtocolParams, channel: ChannelPair) -> GainTable:
    t_a = detected_transmittance(system, channel.loss_alice_db)
    t_b = detected_transmittance(system, channel.loss_bob_db)
    pa, pb = params.alice, params.bob
    # (label, ordering weight) per intensity pair; mirrored classes get two pairs
    pairs = []
    for label in CLASS_LABELS:
        ia, ib = CLASS_INTENSITIES[label]
        basis = "Z" if label == "ss" else "X"
        orderings = [(ia, ib)] + ([(ib, ia)] if label in COMPLEX_CLASSES else [])
        weights = [pa.probability(x) * pb.probability(y) for x, y in orderings]
        if sum(weights) <= 0:
            weights = [1.0] * len(orderings)
        norm_w = sum(weights)
        for (x, y), w in zip(orderings, weights):
            pairs.append((label, basis, w / norm_w, pa.intensity(x), pb.intensity(y)))

    rows_a, rows_b, meta = [], [], []
    for label, basis, w_order, mu_a, mu_b in pairs:
        for amp_a, amp_b, w, same in _pair_rows(system, basis, mu_a, mu_b, t_a, t_b):
            rows_a.append(amp_a)
            rows_b.append(amp_b)
            meta.append((label, basis, w_order * w, same))
    probs = kernels.bsm_probabilities(np.array(rows_a), np.array(rows_b),
                                      system.hom_mode_overlap, 1.0 - system.dark_click_probability)
    gain = dict.fromkeys(CLASS_LABELS, 0.0)
    err = dict.fromkeys(CLASS_LABELS, 0.0)
    for (label, basis, w, same), (plus, minus) in zip(meta, probs):
        gain[label] += w * (plus + minus)
        if basis == "Z":
            # both psi+ and psi- announce anti-correlated Z bits
            if same:
                err[label] += w * (plus + minus)
        else:
            # X basis: psi+ announces equal bits, psi- opposite bits
            err[label] += w * (minus if same else plus)
    return GainTable({k: ClassGain(gain[k], err[k]) for k in CLASS_LABELS})


def expected_counts(system: SystemParams, params: ProtocolParams, channel: ChannelPair,
                    n_pairs: float, gains: GainTable | None = None) -> ObservedStatistics:
    """Noise-free expected counts (real-valued) for ``n_pairs`` pulse pairs."""
    gains = gains or expected_gains(system, params, channel)
    classes = {}
    for label in CLASS_LABELS:
        trials = n_pairs * class_probability(params, label)
        g = gains[label]
        classes[label] = ClassCounts(trials * g.gain, trials * g.error_gain)
    return ObservedStatistics(n_pairs, classes)


def simulate_counts(system: SystemParams, params: ProtocolParams, channel: ChannelPair,
                    n_pairs: int, seed: int, gains: GainTable | None = None) -> ObservedStatistics:
    """Binomial sample of the class counts; deterministic in ``seed``."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    gains = gains or expected_gains(system, params, channel)
    rng = np.random.default_rng(seed)
    classes = {}
    for label in CLASS_LABELS:
        g = gains[label]
        p_event = min(1.0, class_probability(params, label) * g.gain)
        total = int(rng.binomial(int(n_pairs), p_event))
        errors = int(rng.binomial(total, min(1.0, g.error_fraction)))
        classes[label] = ClassCounts(total, errors)
    return ObservedStatistics(int(n_pairs), classes)


def _i0_minus_one(x: float) -> float:
    if x == 0.0:
        return 0.0
    if x < 1.0:
        term, total, k = 1.0, 0.0, 0
        while True:
            k += 1
            term *= (x / 2) ** 2 / (k * k)
            total += term
            if term < 1e-17 * total:
                return total
    return float(np.i0(x)) - 1.0


def hom_visibility(system: SystemParams, mu_a: float, mu_b: float) -> float:
    """HOM dip visibility for two phase-randomized weak coherent pulses.

    Coincidences between the two beam-splitter outputs (threshold detectors,
    detector efficiency and dark counts included) are compared with the fully
    distinguishable reference. The low-intensity limit is
    ``2 * overlap * mu_a * mu_b / (mu_a + mu_b)**2``, at most 0.5.
    """
    if mu_a < 0 or mu_b < 0:
        raise ValueError("intensities must be >= 0")
    la = system.detector_efficiency * mu_a
    lb = system.detector_efficiency * mu_b
    q = 1.0 - system.dark_click_probability
    half = 0.5 * (la + lb)
    single = -math.expm1(math.log(q) - half) if q > 0 else 1.0
    c_dist = single * single
    if c_dist == 0.0:
        return 0.0
    dip = 2.0 * q * math.exp(-half) * _i0_minus_one(math.sqrt(system.hom_mode_overlap * la * lb))
    return dip / c_dist


def overlap_for_visibility(visibility: float) -> float:
    """Mode overlap giving ``visibility`` for equal, weak pulses."""
    if not 0.0 <= visibility <= 0.5:
        raise ValueError("weak coherent pulses cannot exceed visibility 0.5")
    return 2.0 * visibility
