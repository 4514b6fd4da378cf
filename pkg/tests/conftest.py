from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pytest

from mdiqkd.core import ProtocolParams, SystemParams
from mdiqkd.decoy import CLASS_INTENSITIES, CLASS_LABELS, COMPLEX_CLASSES, ClassCounts, ObservedStatistics
from mdiqkd.io import bundled, load_config, parse_counts

N_TRUNC = 40  # photon numbers kept when building exact gains from a yield matrix


@dataclass
class SyntheticSystem:
    """Photon-number yields with known truth and the statistics they produce."""

    params: ProtocolParams
    yields: np.ndarray
    error_yields: np.ndarray
    obs: ObservedStatistics

    @property
    def y11(self) -> float:
        return float(self.yields[1, 1])

    @property
    def e11(self) -> float:
        return float(self.error_yields[1, 1] / self.yields[1, 1])


def _poisson(x: float) -> np.ndarray:
    n = np.arange(N_TRUNC)
    return np.exp(-x + n * math.log(x) - np.array([math.lgamma(k + 1) for k in n])) if x > 0 \
        else (n == 0).astype(float)


def synthetic_system(rng: np.random.Generator, n_pairs: float = 1e14) -> SyntheticSystem:
    """Random but physically shaped yields: threshold-detector saturation in
    photon number, a dark-count floor and random per-entry factors."""
    eta_a, eta_b = 10 ** rng.uniform(-3, -0.5, 2)
    dark = 10 ** rng.uniform(-9, -6)
    n = np.arange(N_TRUNC)
    sat_a = 1 - (1 - eta_a) ** n
    sat_b = 1 - (1 - eta_b) ** n
    yields = 0.5 * np.outer(sat_a, sat_b) * rng.uniform(0.4, 1.0, (N_TRUNC, N_TRUNC))
    yields += dark * rng.uniform(0.5, 1.5, (N_TRUNC, N_TRUNC)) + 0.1 * dark * np.add.outer(n, n)
    yields = np.minimum(yields, 1.0)
    yields = 0.5 * (yields + yields.T)  # party-symmetric so mirrored classes agree
    err = rng.uniform(0.0, 0.5, (N_TRUNC, N_TRUNC))
    err[1, 1] = rng.uniform(0.0, 0.2)
    err = 0.5 * (err + err.T)
    error_yields = err * yields

    nu = rng.uniform(0.01, 0.15)
    mu = nu + rng.uniform(0.05, 0.4)
    s = mu + rng.uniform(0.01, 0.4)
    probs = rng.dirichlet(np.ones(4)) * 0.9 + 0.025
    params = ProtocolParams.symmetric_from(s, mu, nu, *probs[:3])
    inten = {"s": s, "mu": mu, "nu": nu, "0": 0.0}

    classes = {}
    for label in CLASS_LABELS:
        ia, ib = CLASS_INTENSITIES[label]
        w = np.outer(_poisson(inten[ia]), _poisson(inten[ib]))
        if label in COMPLEX_CLASSES:
            w = 0.5 * (w + w.T)
        p_class = params.alice.probability(ia) * params.bob.probability(ib)
        if label in COMPLEX_CLASSES:
            p_class *= 2
        trials = n_pairs * p_class
        classes[label] = ClassCounts(trials * float((w * yields).sum()),
                                     trials * float((w * error_yields).sum()))
    return SyntheticSystem(params, yields, error_yields, ObservedStatistics(n_pairs, classes))


@pytest.fixture
def table28():
    return parse_counts(bundled("table_s_28db.counts")), load_config(bundled("table_s_28db.toml"))


@pytest.fixture
def table36():
    return parse_counts(bundled("table_s_36db.counts")), load_config(bundled("table_s_36db.toml"))


@pytest.fixture
def lab_system():
    return SystemParams(misalignment=0.014, relay_insertion_loss=1.5, hom_mode_overlap=0.968)
