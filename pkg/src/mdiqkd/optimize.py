"""Full optimization of the six protocol parameters and rate-vs-loss curves.

The search runs in an unconstrained space: the intensities are encoded as
log-increments (nu, mu - nu, s - mu) so ``s > mu > nu > 0`` always holds,
and the four emission probabilities are a softmax with the vacuum logit
pinned to 0. Each start is a Nelder-Mead descent; starts come from a Latin
hypercube plus any warm starts supplied by the caller.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .core import ProtocolParams, SystemParams, binary_entropy
from .decoy import FluctuationConfig, InfeasibleStatistics, estimate_bounds
from .keyrate import KeyRateResult, analyze, z_basis_observables
from .system import ChannelPair, expected_counts

N_RESTARTS = 8
MAX_EVALS = 2000
REL_TOL = 1e-3

# Latin-hypercube box in the encoded space
_LOWER = np.array([math.log(0.005), math.log(0.005), math.log(0.01), -3.0, -3.0, -3.0])
_UPPER = np.array([math.log(0.3), math.log(0.6), math.log(1.0), 2.0, 2.0, 2.0])


class NoPositiveRate(RuntimeError):
    """Every start ended with zero key rate."""


@dataclass(frozen=True)
class OptimizationResult:
    best: ProtocolParams
    rate: KeyRateResult
    evaluations: int
    converged: bool


def decode(x: np.ndarray) -> ProtocolParams:
    nu = math.exp(x[0])
    mu = nu + math.exp(x[1])
    s = mu + math.exp(x[2])
    logits = np.array([x[3], x[4], x[5], 0.0])
    w = np.exp(logits - logits.max())
    p = w / w.sum()
    return ProtocolParams.symmetric_from(s, mu, nu, p[0], p[1], p[2])


def encode(params: ProtocolParams) -> np.ndarray:
    s, mu, nu, p_s, p_mu, p_nu = params.as_vector()
    p0 = params.alice.probabilities.p_omega
    return np.array([math.log(nu), math.log(mu - nu), math.log(s - mu),
                     math.log(p_s / p0), math.log(p_mu / p0), math.log(p_nu / p0)])


def _signed_rate(params: ProtocolParams, system: SystemParams, channel: ChannelPair,
                 n_pairs: float, config: FluctuationConfig) -> float:
    """Key rate per pulse before clamping at zero.

    Negative values keep a slope on the zero-rate plateau so the simplex can
    walk back towards the feasible region. Below zero the ``P_s**2`` prefactor
    is dropped: it would otherwise reward starving the signal class (rate
    tending to 0 from below) instead of fixing the decoy estimate. Both
    branches vanish together, so the objective stays continuous.
    """
    obs = expected_counts(system, params, channel, n_pairs)
    try:
        bounds = estimate_bounds(obs, params, config)
    except InfeasibleStatistics:
        return -1.0
    q_ss, e_ss = z_basis_observables(obs, params)
    a, b = params.alice, params.bob
    single = (a.intensities.s * math.exp(-a.intensities.s)
              * b.intensities.s * math.exp(-b.intensities.s)
              * bounds.y11_lower * (1.0 - binary_entropy(min(bounds.e11_upper, 0.5))))
    leak = system.f_e * q_ss * binary_entropy(min(e_ss, 1.0))
    margin = single - leak
    if margin <= 0:
        return margin
    return a.probabilities.p_s * b.probabilities.p_s * margin


class _Objective:
    def __init__(self, system, channel, n_pairs, config):
        self.system, self.channel = system, channel
        self.n_pairs, self.config = n_pairs, config
        self.evaluations = 0

    def rate(self, x: np.ndarray) -> float:
        self.evaluations += 1
        try:
            params = decode(x)
            return _signed_rate(params, self.system, self.channel, self.n_pairs, self.config)
        except ValueError:  # left the valid region (intensity >= 10, a probability underflowed)
            return -1.0


def _descend(obj: _Objective, x0: np.ndarray, max_evals: int) -> tuple[np.ndarray, float, bool]:
    """Repeated Nelder-Mead runs until one no longer improves by REL_TOL.

    The objective is rescaled by the current rate before each run so the
    simplex spread tolerance is relative.
    """
    x = np.asarray(x0, dtype=float)
    f = obj.rate(x)
    used = 1
    while used < max_evals:
        scale = max(abs(f), 1e-300)
        res = minimize(lambda z: -obj.rate(z) / scale, x, method="Nelder-Mead",
                       options={"maxfev": max_evals - used, "xatol": math.inf,
                                "fatol": REL_TOL, "adaptive": True})
        used += res.nfev
        new_f = -res.fun * scale
        gain = new_f - f
        if gain > 0:
            x, f = res.x, new_f
        if res.success and gain <= REL_TOL * abs(f):
            return x, f, True
    return x, f, False


def optimize(system: SystemParams, channel: ChannelPair, n_pairs: float,
             config: FluctuationConfig, seed: int = 0, n_restarts: int = N_RESTARTS,
             max_evals: int = MAX_EVALS,
             warm_starts: list[ProtocolParams] | None = None) -> OptimizationResult:
    """Maximize the key rate of the expected (noise-free) statistics."""
    if n_pairs < 1e9:
        raise ValueError("n_pairs must be >= 1e9")
    obj = _Objective(system, channel, n_pairs, config)
    sampler = qmc.LatinHypercube(d=6, seed=seed)
    starts = list(qmc.scale(sampler.random(n_restarts), _LOWER, _UPPER))
    for p in warm_starts or []:
        starts.append(encode(p))

    best_x, best_f, best_conv = None, -math.inf, False
    for x0 in starts:
        x, f, conv = _descend(obj, x0, max_evals)
        if f > best_f:
            best_x, best_f, best_conv = x, f, conv
    if best_f <= 0:
        raise NoPositiveRate(f"no positive key rate at {channel.total_db:g} dB "
                             f"after {obj.evaluations} evaluations")
    params = decode(best_x)
    obs = expected_counts(system, params, channel, n_pairs)
    result = analyze(obs, params, system, config)
    return OptimizationResult(params, result, obj.evaluations, best_conv)


@dataclass(frozen=True)
class CurvePoint:
    loss_db: float
    rate_bps: float
    rate_per_pulse: float
    params: ProtocolParams | None


def _curve_point(args) -> CurvePoint:
    system, loss, n_pairs, config, seed, n_restarts, warm = args
    try:
        res = optimize(system, ChannelPair.symmetric(loss), n_pairs, config, seed=seed,
                       n_restarts=n_restarts, warm_starts=warm)
    except NoPositiveRate:
        return CurvePoint(loss, 0.0, 0.0, None)
    return CurvePoint(loss, res.rate.rate_bps, res.rate.rate_per_pulse, res.best)


def rate_curve(system: SystemParams, loss_grid: list[float], n_pairs: float,
               config: FluctuationConfig, seed: int = 0, workers: int = 1,
               n_restarts: int = N_RESTARTS) -> list[CurvePoint]:
    """Optimized key rate at each total loss (split evenly between the users).

    Sequential runs warm-start each point from the previous optimum; with
    ``workers > 1`` the points are independent and merged in grid order.
    """
    grid = [float(x) for x in loss_grid]
    if not grid:
        raise ValueError("loss_grid must not be empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("loss_grid must be ascending")
    if workers > 1:
        jobs = [(system, loss, n_pairs, config, seed, n_restarts, None) for loss in grid]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_curve_point, jobs))
    points, warm = [], []
    for loss in grid:
        pt = _curve_point((system, loss, n_pairs, config, seed, n_restarts, warm))
        points.append(pt)
        warm = [pt.params] if pt.params is not None else []
    return points
