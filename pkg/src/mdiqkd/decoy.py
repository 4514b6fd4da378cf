"""Decoy-state estimation of the single-photon-pair yield and phase error.

Two independent routes are provided:

* :func:`estimate_bounds` -- closed-form four-intensity bounds built from
  linear combinations of the X-basis gains, and
* :func:`lp_bounds` -- a truncated linear program over the photon-number
  yields, used as a brute-force oracle for the closed form.

Gains are always *per pulse pair of that class*: a class count divided by
``n_pairs`` times the probability that the class was emitted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import linprog
from scipy.stats import norm

from .core import ProtocolParams, poisson_weight

CLASS_LABELS = ("ss", "mumu", "nunu", "mu0", "nu0", "00")
# (Alice intensity, Bob intensity); mu0/nu0 also include the mirrored pair.
CLASS_INTENSITIES = {
    "ss": ("s", "s"),
    "mumu": ("mu", "mu"),
    "nunu": ("nu", "nu"),
    "mu0": ("mu", "0"),
    "nu0": ("nu", "0"),
    "00": ("0", "0"),
}
COMPLEX_CLASSES = ("mu0", "nu0")


class InfeasibleStatistics(ValueError):
    """Observed gains are inconsistent with any set of non-negative yields."""


class FluctuationModel(enum.Enum):
    NONE = "none"
    GAUSSIAN_JOINT = "gaussian-joint"
    GAUSSIAN_INDEPENDENT = "gaussian-independent"


@dataclass(frozen=True)
class FluctuationConfig:
    epsilon: float = 1e-10
    model: FluctuationModel = FluctuationModel.GAUSSIAN_JOINT

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def n_std(self) -> float:
        """One-sided standard-normal quantile for the failure probability."""
        if self.model is FluctuationModel.NONE:
            return 0.0
        return float(norm.isf(self.epsilon))

    @classmethod
    def asymptotic(cls) -> FluctuationConfig:
        return cls(model=FluctuationModel.NONE)


@dataclass(frozen=True)
class ClassCounts:
    total: float
    errors: float | None = None


@dataclass(frozen=True)
class ObservedStatistics:
    """Coincidence and error counts per pair class.

    Counts read from files are integers. Expected counts built from a model
    (for optimization) may be real-valued.
    """

    n_pairs: float
    classes: Mapping[str, ClassCounts]

    def __post_init__(self) -> None:
        if self.n_pairs <= 0:
            raise ValueError("n_pairs must be positive")
        missing = set(CLASS_LABELS) - set(self.classes)
        if missing:
            raise ValueError(f"missing pair classes: {sorted(missing)}")
        extra = set(self.classes) - set(CLASS_LABELS)
        if extra:
            raise ValueError(f"unknown pair classes: {sorted(extra)}")
        for label, c in self.classes.items():
            if not 0 <= c.total <= self.n_pairs:
                raise ValueError(f"class {label}: total {c.total} outside [0, n_pairs]")
            if c.errors is not None and not 0 <= c.errors <= c.total:
                raise ValueError(f"class {label}: errors {c.errors} exceed total {c.total}")

    def total(self, label: str) -> float:
        return self.classes[label].total

    def errors(self, label: str) -> float:
        e = self.classes[label].errors
        if e is None:
            raise KeyError(f"error count for class {label} was not recorded")
        return e

    def scaled(self, factor: float) -> ObservedStatistics:
        """Same gains with ``factor`` times as many pulse pairs."""
        return ObservedStatistics(
            self.n_pairs * factor,
            {k: ClassCounts(c.total * factor, None if c.errors is None else c.errors * factor)
             for k, c in self.classes.items()},
        )


def class_probability(params: ProtocolParams, label: str) -> float:
    """Probability that a pulse pair falls in ``label`` (mirrored pairs summed)."""
    ia, ib = CLASS_INTENSITIES[label]
    pa, pb = params.alice, params.bob
    p = pa.probability(ia) * pb.probability(ib)
    if label in COMPLEX_CLASSES:
        p += pa.probability(ib) * pb.probability(ia)
    return p


def class_trials(obs: ObservedStatistics, params: ProtocolParams, label: str) -> float:
    return obs.n_pairs * class_probability(params, label)


def fluctuate_gain(count: float, n_trials: float, config: FluctuationConfig,
                   direction: str) -> float:
    """Per-trial gain bound ``(count -/+ n_std*sqrt(count)) / n_trials`` in [0, 1]."""
    if direction not in ("lower", "upper"):
        raise ValueError("direction must be 'lower' or 'upper'")
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    if count < 0 or count > n_trials:
        raise ValueError(f"count {count} outside [0, n_trials={n_trials}]")
    delta = config.n_std * math.sqrt(count)
    value = count - delta if direction == "lower" else count + delta
    return min(1.0, max(0.0, value / n_trials))


@dataclass(frozen=True)
class DecoyBounds:
    y11_lower: float
    e11_upper: float
    audit: dict = field(default_factory=dict, compare=False)
    clamped: bool = False


def _gain_intervals(obs: ObservedStatistics, params: ProtocolParams,
                    config: FluctuationConfig, with_errors: bool = True) -> dict:
    """Interval [lo, hi] of every X-basis observable, keyed ("Q"|"E", label)."""
    out = {}
    for label in CLASS_LABELS[1:]:
        trials = class_trials(obs, params, label)
        if trials <= 0:
            raise InfeasibleStatistics(f"class {label} is never emitted with these probabilities")
        c = obs.total(label)
        out["Q", label] = (fluctuate_gain(c, trials, config, "lower"),
                           fluctuate_gain(c, trials, config, "upper"))
        if with_errors and label in ("nunu", "nu0", "00"):
            e = obs.errors(label)
            out["E", label] = (fluctuate_gain(e, trials, config, "lower"),
                               fluctuate_gain(e, trials, config, "upper"))
    return out


def _extreme(form: dict, box: dict, sense: str) -> tuple[float, dict]:
    """Min or max of a linear form over the observable box, plus the point used."""
    total, used = 0.0, {}
    for key, coef in form.items():
        lo, hi = box[key]
        pick_lo = (coef > 0) == (sense == "min")
        v = lo if pick_lo else hi
        used[key] = v
        total += coef * v
    return total, used


def _decoy_intensities(params: ProtocolParams) -> tuple[float, float]:
    a, b = params.alice.intensities, params.bob.intensities
    if (a.mu, a.nu) != (b.mu, b.nu):
        raise ValueError("decoy analysis needs matching decoy intensities for both users")
    return a.mu, a.nu


def yield_forms(mu: float, nu: float) -> tuple[dict, dict, float]:
    """Linear forms K_nu and K_mu and the Y11 denominator.

    K_x = e^{2x} Q_xx - e^{x}(Q_x0 + Q_0x) + Q_00 = sum_{n,m>=1} x^{n+m}/(n! m!) Y_nm,
    and mu^3 K_nu - nu^3 K_mu <= mu^2 nu^2 (mu - nu) Y11 because every n+m >= 4
    term enters with a non-positive coefficient (n+m = 3 cancels exactly).
    """
    k_nu = {("Q", "nunu"): math.exp(2 * nu), ("Q", "nu0"): -2 * math.exp(nu), ("Q", "00"): 1.0}
    k_mu = {("Q", "mumu"): math.exp(2 * mu), ("Q", "mu0"): -2 * math.exp(mu), ("Q", "00"): 1.0}
    return k_nu, k_mu, mu * mu * nu * nu * (mu - nu)


def estimate_bounds(obs: ObservedStatistics, params: ProtocolParams,
                    config: FluctuationConfig) -> DecoyBounds:
    """Closed-form lower bound on Y11 and upper bound on e11 (X basis)."""
    mu, nu = _decoy_intensities(params)
    box = _gain_intervals(obs, params, config)
    k_nu, k_mu, denom = yield_forms(mu, nu)
    if not denom > 0:
        raise InfeasibleStatistics(f"decoy intensities mu={mu!r}, nu={nu!r} are numerically degenerate")
    ek_nu = {("E", "nunu"): math.exp(2 * nu), ("E", "nu0"): -2 * math.exp(nu), ("E", "00"): 1.0}

    if _extreme(k_nu, box, "max")[0] < 0 or _extreme(k_mu, box, "max")[0] < 0:
        raise InfeasibleStatistics("decoy gains imply a negative multi-photon yield sum")
    ek_max, e_used = _extreme(ek_nu, box, "max")
    if ek_max < 0:
        raise InfeasibleStatistics("error gains imply a negative error-yield sum")

    audit: dict = {"model": config.model.value, "n_std": config.n_std}
    if config.model is FluctuationModel.GAUSSIAN_INDEPENDENT:
        # each constraint takes its own worst case, even for shared observables
        lo_nu, used_nu = _extreme(k_nu, box, "min")
        hi_mu, used_mu = _extreme(k_mu, box, "max")
        numerator = mu ** 3 * lo_nu - nu ** 3 * hi_mu
        audit["K_nu"] = used_nu
        audit["K_mu"] = used_mu
    else:
        joint = {}
        for key, c in k_nu.items():
            joint[key] = joint.get(key, 0.0) + mu ** 3 * c
        for key, c in k_mu.items():
            joint[key] = joint.get(key, 0.0) - nu ** 3 * c
        numerator, used = _extreme(joint, box, "min")
        audit["Y11"] = used
    audit["e11"] = e_used

    y11 = numerator / denom
    clamped = False
    if y11 <= 0:
        y11, clamped = 0.0, True
    y11 = min(y11, 1.0)
    if y11 == 0.0:
        return DecoyBounds(0.0, 0.5, audit, clamped=True)
    e11 = ek_max / (nu * nu * y11)
    if e11 > 0.5:
        e11, clamped = 0.5, True
    return DecoyBounds(y11, e11, audit, clamped)


def _class_weights(a: float, b: float, mirrored: bool, n_cut: int) -> np.ndarray:
    pa = np.array([poisson_weight(a, n) for n in range(n_cut + 1)])
    pb = np.array([poisson_weight(b, n) for n in range(n_cut + 1)])
    w = np.outer(pa, pb)
    if mirrored:
        w = 0.5 * (w + w.T)
    return w


def _lp_extreme(constraints: list[tuple[np.ndarray, float, float, float]], n_cut: int,
                sense: str) -> float:
    """Optimize Y_11 over yields in [0,1] with interval constraints per class.

    Each constraint is (weights, lo, hi, tail): lo - tail <= w . Y <= hi,
    where ``tail`` is the Poisson mass beyond the cut (yield anywhere in [0,1]).
    """
    target = (n_cut + 1) + 1
    weights = np.array([w.ravel() for w, _, _, _ in constraints])
    his = np.array([hi for _, _, hi, _ in constraints])
    # every term is non-negative, so w_ij * Y_j <= hi_i caps each yield; the
    # solver works on Y_j / cap_j in [0, 1], keeping all coefficients <= 1
    # (HiGHS silently drops matrix entries below ~1e-9)
    with np.errstate(divide="ignore", invalid="ignore"):
        caps = np.where(weights > 0, his[:, None] / weights, np.inf).min(axis=0)
    caps = np.minimum(caps, 1.0)
    a_ub, b_ub = [], []
    for (w, lo, hi, tail), row in zip(constraints, weights):
        norm_ = hi if hi > 0 else 1.0
        scaled = row * caps / norm_
        a_ub += [scaled, -scaled]
        b_ub += [hi / norm_, -(lo - tail) / norm_]
    c = np.zeros(weights.shape[1])
    c[target] = 1.0 if sense == "min" else -1.0
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  bounds=[(0.0, 1.0)] * weights.shape[1], method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        raise InfeasibleStatistics("no non-negative yields reproduce the observed gains")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    return float(res.x[target] * caps[target])


def lp_bounds(obs: ObservedStatistics, params: ProtocolParams, config: FluctuationConfig,
              n_cut: int = 12) -> DecoyBounds:
    """Linear-program bounds over photon-number yields truncated at ``n_cut``."""
    if n_cut < 5:
        raise ValueError("n_cut must be >= 5")
    mu, nu = _decoy_intensities(params)
    box = _gain_intervals(obs, params, config)
    inten = {"mu": mu, "nu": nu, "0": 0.0}

    def weights(label):
        ia, ib = CLASS_INTENSITIES[label]
        w = _class_weights(inten[ia], inten[ib], label in COMPLEX_CLASSES, n_cut)
        return w, max(0.0, 1.0 - w.sum())

    q_cons = []
    for label in CLASS_LABELS[1:]:
        w, tail = weights(label)
        lo, hi = box["Q", label]
        q_cons.append((w, lo, hi, tail))
    y11 = max(0.0, _lp_extreme(q_cons, n_cut, "min"))

    e_cons = []
    for label in ("nunu", "nu0", "00"):
        w, tail = weights(label)
        lo, hi = box["E", label]
        e_cons.append((w, lo, hi, tail))
    ey11 = max(0.0, _lp_extreme(e_cons, n_cut, "max"))

    audit = {"model": config.model.value, "n_cut": n_cut, "ey11_upper": ey11}
    if y11 == 0.0:
        return DecoyBounds(0.0, 0.5, audit, clamped=True)
    e11 = ey11 / y11
    if e11 > 0.5:
        return DecoyBounds(y11, 0.5, audit, clamped=True)
    return DecoyBounds(y11, e11, audit)
