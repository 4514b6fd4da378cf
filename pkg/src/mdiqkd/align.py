"""Simulation of the three-step automatic polarization alignment at the relay.

Geometry: Alice's light passes her channel and EPC-A before the beam
splitter, Bob's light passes only his channel; each beam-splitter output then
goes through its own EPC (EPC-1, EPC-2) and a PBS aligned to the Z basis.
Every EPC is three concatenated wave-plate rotations (phase retarder,
rotator, phase retarder), which covers SU(2).

Each step runs coordinate descent with step halving on one actor's angles,
minimizing the simulated fraction of counts in the "wrong" detector for that
step's reference states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import X_STATES, Z_STATES, SystemParams

TWO_PI = 2.0 * math.pi
X_FLOOR = 0.25

_Z = np.array([s.vector for s in Z_STATES])
_X = np.array([s.vector for s in X_STATES])
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)


def _rot(sigma: np.ndarray, theta: float) -> np.ndarray:
    """exp(-i theta sigma) for a Pauli matrix."""
    return math.cos(theta) * np.eye(2) - 1j * math.sin(theta) * sigma


def epc_matrix(angles) -> np.ndarray:
    """Jones matrix of an EPC with angles (a, b, c): R_z(a) R_y(b) R_z(c).

    R_y(b) is a real rotator; ``b = pi/2`` swaps the two Z states.
    """
    a, b, c = angles
    return _rot(_SZ, a) @ _rot(_SY, b) @ _rot(_SZ, c)


def _wrap(angles) -> tuple[float, float, float]:
    return tuple(float(x) % TWO_PI for x in angles)


@dataclass(frozen=True)
class AlignmentState:
    epc_a: tuple[float, float, float] = (0.0, 0.0, 0.0)
    epc_1: tuple[float, float, float] = (0.0, 0.0, 0.0)
    epc_2: tuple[float, float, float] = (0.0, 0.0, 0.0)
    channel_a: tuple[float, float, float] = (0.0, 0.0, 0.0)
    channel_b: tuple[float, float, float] = (0.0, 0.0, 0.0)
    drift: float = 0.0
    qber_z: float = 0.0
    qber_x: float = 0.0

    def __post_init__(self) -> None:
        for name in ("epc_a", "epc_1", "epc_2", "channel_a", "channel_b"):
            object.__setattr__(self, name, _wrap(getattr(self, name)))
        if self.drift < 0:
            raise ValueError("drift must be >= 0")
        if not (0.0 <= self.qber_z <= 1.0 and 0.0 <= self.qber_x <= 1.0):
            raise ValueError("qber values must lie in [0, 1]")

    @classmethod
    def random(cls, rng: np.random.Generator, drift: float = 0.0) -> AlignmentState:
        """Uniformly random EPC settings and channel rotations."""
        draw = lambda: tuple(rng.uniform(0, TWO_PI, 3))  # noqa: E731
        return cls(draw(), draw(), draw(), draw(), draw(), drift)


def _wrong_port(m: np.ndarray, states: np.ndarray) -> float:
    """Mean probability that basis state j exits the PBS port of state 1-j."""
    out = m @ states.T                          # columns: transported states
    proj = _Z.conj() @ out                      # rows: PBS port amplitudes
    return 0.5 * (abs(proj[1, 0]) ** 2 + abs(proj[0, 1]) ** 2)


def _paths(state: AlignmentState):
    u_a = epc_matrix(state.channel_a)
    u_b = epc_matrix(state.channel_b)
    e_a = epc_matrix(state.epc_a)
    alice = e_a @ u_a
    arms = [epc_matrix(state.epc_1), epc_matrix(state.epc_2)]
    return alice, u_b, arms


def _flip_probabilities(state: AlignmentState) -> tuple[float, float, float]:
    """(Alice Z flip, Bob Z flip, Alice-vs-Bob X mismatch) averaged over arms."""
    alice, bob, arms = _paths(state)
    p_a = float(np.mean([_wrong_port(e @ alice, _Z) for e in arms]))
    p_b = float(np.mean([_wrong_port(e @ bob, _Z) for e in arms]))
    # X errors need Alice's and Bob's X states to arrive identical; arm EPCs cancel
    mism = 0.0
    for x in _X:
        overlap = np.vdot(alice @ x, bob @ x)
        mism += 0.5 * (1.0 - abs(overlap) ** 2)
    return p_a, p_b, float(mism)


def qber_of_state(state: AlignmentState, system: SystemParams) -> tuple[float, float]:
    """Z and X error fractions seen by the Bell measurement for this setting.

    A Z error needs exactly one user's bit flipped; residual misalignment
    ``e_d`` acts as a further flip. X errors sit on the 25 % multi-photon
    floor of weak coherent pulses.
    """
    e_d = system.misalignment
    p_a, p_b, mism = _flip_probabilities(state)
    flip_z = p_a * (1 - p_b) + p_b * (1 - p_a)
    qber_z = e_d + (1 - 2 * e_d) * flip_z
    flip_x = e_d + (1 - 2 * e_d) * mism
    qber_x = X_FLOOR + (1 - 2 * X_FLOOR) * flip_x
    return qber_z, qber_x


def _objective(step: int, state: AlignmentState) -> float:
    alice, bob, arms = _paths(state)
    if step == 1:
        # Bob's reference states against both PBSs
        return float(np.mean([_wrong_port(e @ bob, _Z) for e in arms]))
    if step == 2:
        # Alice's Z states at both PBSs plus her X-basis mismatch against Bob
        z_err = float(np.mean([_wrong_port(e @ alice, _Z) for e in arms]))
        return z_err + _flip_probabilities(state)[2]
    # step 3: PBS-2 against both users' Z states
    return 0.5 * (_wrong_port(arms[1] @ alice, _Z) + _wrong_port(arms[1] @ bob, _Z))


_STEP_FIELDS = {1: ("epc_1", "epc_2"), 2: ("epc_a",), 3: ("epc_2",)}


@dataclass
class AlignmentReport:
    iterations: dict
    qber_z: float
    qber_x: float
    converged: bool
    trace: list = field(default_factory=list)
    final_state: AlignmentState | None = None


def _drift(state: AlignmentState, rng: np.random.Generator) -> AlignmentState:
    if state.drift == 0.0:
        return state
    ca = np.array(state.channel_a) + rng.normal(0.0, state.drift, 3)
    cb = np.array(state.channel_b) + rng.normal(0.0, state.drift, 3)
    return replace(state, channel_a=tuple(ca), channel_b=tuple(cb))


def inject_drift(state: AlignmentState, step: float, iterations: int,
                 seed: int) -> AlignmentState:
    """Let the channels random-walk for ``iterations`` steps of size ``step``."""
    rng = np.random.default_rng(seed)
    drifting = replace(state, drift=step)
    for _ in range(iterations):
        drifting = _drift(drifting, rng)
    return replace(drifting, drift=state.drift)


def _descend_step(state: AlignmentState, step: int, budget: int, tol: float,
                  rng: np.random.Generator, trace: list) -> tuple[AlignmentState, int]:
    """Coordinate descent with step halving on the named EPC angles."""
    names = _STEP_FIELDS[step]
    delta = math.pi / 4
    min_delta = 1e-7
    best = _objective(step, state)
    used = 0
    while used < budget and best > tol and delta > min_delta:
        improved = False
        for name in names:
            for k in range(3):
                for sign in (1.0, -1.0):
                    angles = list(getattr(state, name))
                    angles[k] += sign * delta
                    trial = replace(state, **{name: tuple(angles)})
                    f = _objective(step, trial)
                    if f < best:
                        state, best, improved = trial, f, True
                        break
        used += 1
        state = _drift(state, rng)
        if state.drift:
            best = _objective(step, state)
        trace.append(best)
        if not improved:
            delta *= 0.5
    return state, used


def run_alignment(initial: AlignmentState, target_qber: float = 0.01, max_iter: int = 5000,
                  seed: int = 0, system: SystemParams | None = None) -> AlignmentReport:
    """Three sequential steps: Bob/relay reference, Alice, then PBS-2."""
    if not 0.0 < target_qber < 0.1:
        raise ValueError("target_qber must lie in (0, 0.1)")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    system = system or SystemParams(misalignment=0.0)
    rng = np.random.default_rng(seed)
    # each step's own objective must land well below the QBER target
    tol = 0.1 * max(0.0, target_qber - system.misalignment)
    state, trace, iterations = initial, [], {}
    remaining = max_iter
    for step in (1, 2, 3):
        state, used = _descend_step(state, step, remaining, tol, rng, trace)
        iterations[step] = used
        remaining -= used
    qz, qx = qber_of_state(state, system)
    state = replace(state, qber_z=qz, qber_x=qx)
    return AlignmentReport(iterations, qz, qx, qz <= target_qber, trace, state)
