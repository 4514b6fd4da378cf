"""Pure-Python/numpy implementation of the hot kernels.

``_kernels.pyx`` mirrors :func:`bsm_probabilities` one-to-one; ``mdiqkd.kernels``
picks whichever is importable.
"""

from __future__ import annotations

import numpy as np
from scipy.special import i0e

N_PHASE = 48


def bsm_probabilities(a: np.ndarray, b: np.ndarray, overlap: float, q: float,
                      n_phase: int = N_PHASE) -> np.ndarray:
    """Phase-averaged psi+/psi- probabilities for pairs of coherent pulses.

    The relative phase of the two phase-randomized pulses is integrated with
    the periodic trapezoid rule, which converges geometrically here. Click
    probabilities use ``expm1`` so dark-count-dominated patterns keep full
    relative precision.

    Parameters
    ----------
    a, b : complex arrays of shape (n, 2)
        Amplitudes of Alice's and Bob's pulses at the beam splitter, projected
        on the two PBS ports (``|a|**2`` is the detected mean photon number).
    overlap : float
        Intensity mode overlap of the two pulses, in [0, 1].
    q : float
        Per-detector probability of no dark click in the window.

    Returns
    -------
    (n, 2) float array with columns (psi+, psi-).
    """
    a = np.asarray(a, dtype=complex)[:, None, :]
    b = np.asarray(b, dtype=complex)[:, None, :]
    phi = 2 * np.pi * np.arange(n_phase) / n_phase
    rot = np.exp(1j * phi)[None, :, None]
    coh = np.sqrt(overlap) * b * rot
    inc = (1 - overlap) * np.abs(b) ** 2
    m = np.concatenate([(np.abs(a + coh) ** 2 + inc) / 2,
                        (np.abs(a - coh) ** 2 + inc) / 2], axis=2)   # c0 c1 d0 d1
    log_silent = np.log(q) - m
    p0 = np.exp(log_silent)
    p1 = -np.expm1(log_silent)
    c0, c1, d0, d1 = (p0[..., k] for k in range(4))
    k0, k1, e0, e1 = (p1[..., k] for k in range(4))
    plus = k0 * k1 * d0 * d1 + c0 * c1 * e0 * e1
    minus = k0 * e1 * c1 * d0 + k1 * e0 * c0 * d1
    return np.stack([plus.mean(axis=1), minus.mean(axis=1)], axis=1)


# Inclusion-exclusion over "silent" detector sets with the phase average done
# analytically (<exp(-Re(W e^{i phi}))> = I0(|W|)). Exact, but it cancels
# catastrophically when every click probability is tiny, so it is only used as
# a cross-check in the regime where it is well conditioned.

_PORT = np.array([0, 1, 0, 1])
_SIGN = np.array([1.0, 1.0, -1.0, -1.0])
_MEMBERS = np.array([[(u >> k) & 1 for k in range(4)] for u in range(16)], dtype=float)


def _pattern_coefficients() -> np.ndarray:
    coef = np.zeros((2, 16))
    for row, patterns in enumerate(((0b0011, 0b1100), (0b1001, 0b0110))):
        for s in patterns:
            comp = 0b1111 & ~s
            for u in range(16):
                if u & comp == comp:
                    coef[row, u] += (-1) ** (bin(u).count("1") - bin(comp).count("1"))
    return coef


_COEF = _pattern_coefficients()


def bsm_probabilities_bessel(a: np.ndarray, b: np.ndarray, overlap: float, q: float) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    base = 0.5 * (np.abs(a) ** 2 + np.abs(b) ** 2)
    w = np.sqrt(overlap) * np.conj(a) * b
    tot_base = base[:, _PORT] @ _MEMBERS.T
    absw = np.abs((w[:, _PORT] * _SIGN) @ _MEMBERS.T)
    silent = q ** _MEMBERS.sum(axis=1) * np.exp(absw - tot_base) * i0e(absw)
    return silent @ _COEF.T
