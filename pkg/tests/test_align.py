import math
from dataclasses import replace

import numpy as np
import pytest

from mdiqkd.align import (
    AlignmentState,
    _objective,
    epc_matrix,
    inject_drift,
    qber_of_state,
    run_alignment,
)
from mdiqkd.core import SystemParams

E_D = 0.015
SYSTEM = SystemParams(misalignment=E_D)


def test_epc_is_unitary():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = epc_matrix(rng.uniform(0, 2 * np.pi, 3))
        np.testing.assert_allclose(m.conj().T @ m, np.eye(2), atol=1e-12)


def test_angles_wrapped_and_validated():
    st = AlignmentState(epc_a=(7.0, -1.0, 2 * math.pi))
    assert all(0 <= x < 2 * math.pi for x in st.epc_a)
    assert st.epc_a[0] == pytest.approx(7.0 - 2 * math.pi)
    with pytest.raises(ValueError):
        AlignmentState(drift=-1e-3)
    with pytest.raises(ValueError):
        AlignmentState(qber_z=1.5)


def test_identity_leaves_only_residual_misalignment():
    qz, qx = qber_of_state(AlignmentState(), SYSTEM)
    assert qz == pytest.approx(E_D, abs=1e-15)
    assert qx == pytest.approx(0.25 + 0.5 * E_D, abs=1e-15)


def test_rotator_on_epc_a_swaps_the_z_states():
    qz, _ = qber_of_state(AlignmentState(epc_a=(0.0, math.pi / 2, 0.0)), SYSTEM)
    assert qz == pytest.approx(1 - E_D, abs=1e-12)


def test_single_angle_sweep_is_the_jones_sinusoid():
    """Rotating Alice by b moves sin^2(b) of each Z state to the other port."""
    for b in np.linspace(0, math.pi, 13):
        qz, _ = qber_of_state(AlignmentState(epc_a=(0.0, b, 0.0)), SYSTEM)
        flip = math.sin(b) ** 2
        assert qz == pytest.approx(E_D + (1 - 2 * E_D) * flip, abs=1e-12)


def test_global_phase_invariance():
    """exp(-i a sigma_z) with a = pi is -identity: a global phase."""
    rng = np.random.default_rng(1)
    st = AlignmentState.random(rng)
    shifted = replace(st, channel_a=(st.channel_a[0] + math.pi, st.channel_a[1], st.channel_a[2]),
                      epc_1=(st.epc_1[0], st.epc_1[1], st.epc_1[2] + math.pi))
    np.testing.assert_allclose(qber_of_state(shifted, SYSTEM), qber_of_state(st, SYSTEM), atol=1e-12)


def test_already_aligned_needs_no_iterations():
    rep = run_alignment(AlignmentState(), target_qber=0.01, max_iter=5000, seed=0)
    assert rep.converged
    assert sum(rep.iterations.values()) <= 3
    assert rep.qber_z == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_trace_non_increasing_without_drift(seed):
    st = AlignmentState.random(np.random.default_rng(seed))
    rep = run_alignment(st, 0.01, 5000, seed)
    assert len(rep.trace) == sum(rep.iterations.values())
    start = 0
    for step in (1, 2, 3):
        seg = rep.trace[start:start + rep.iterations[step]]
        assert all(b <= a for a, b in zip(seg, seg[1:]))
        start += rep.iterations[step]


def test_step_two_matches_dense_grid_oracle():
    """Alice's EPC against a fixed, aligned relay: the three-angle objective's
    grid minimum is ~0 and coordinate descent reaches it too."""
    rng = np.random.default_rng(11)
    st = AlignmentState(channel_a=tuple(rng.uniform(0, 2 * np.pi, 3)))
    grid = np.linspace(0, 2 * np.pi, 41)[:-1]
    best = min(_objective(2, replace(st, epc_a=(a, b, c)))
               for a in grid for b in grid[:21] for c in grid)
    rep = run_alignment(st, 0.01, 5000, 0)
    assert best < 0.01
    assert _objective(2, rep.final_state) <= best + 1e-3


def test_budget_exhaustion_is_reported_not_raised():
    st = AlignmentState.random(np.random.default_rng(4))
    rep = run_alignment(st, 0.01, max_iter=1, seed=0)
    assert not rep.converged
    assert sum(rep.iterations.values()) == 1


def test_recovery_after_drift():
    st = AlignmentState.random(np.random.default_rng(9))
    aligned = run_alignment(st, 0.01, 5000, 9).final_state
    drifted = inject_drift(aligned, 1e-3, 10_000, seed=10)
    assert drifted.channel_a != aligned.channel_a
    rep = run_alignment(drifted, 0.01, 5000, 9)
    assert rep.converged


def test_invalid_arguments():
    with pytest.raises(ValueError):
        run_alignment(AlignmentState(), target_qber=0.2)
    with pytest.raises(ValueError):
        run_alignment(AlignmentState(), max_iter=0)
