"""Dense linear algebra helpers for unitary operators."""

from __future__ import annotations

import numpy as np

from .errors import NumericalFailure

__all__ = ["unitary_eig", "max_unitarity_defect"]

# generic rotation keeping random spectra away from the Cayley pole
_CAYLEY_SHIFT = 0.7368421052631579


def max_unitarity_defect(u: np.ndarray) -> float:
    """max |U^dag U - 1| over all entries."""
    n = u.shape[0]
    return float(np.max(np.abs(u.conj().T @ u - np.eye(n))))


def unitary_eig(u: np.ndarray, residual_tol: float = 1e-8, probes: int = 6):
    """Eigenphases and an orthonormal eigenbasis of a unitary matrix.

    The Cayley transform H = i (1 - V)(1 + V)^{-1} of the rotated operator
    V = e^{i beta} U is Hermitian and shares eigenvectors with U, so a
    Hermitian eigensolver provides machine-precision orthonormality (a
    general eigensolver does not).  Phases follow from arctan of the
    Hermitian eigenvalues.

    Returns ``(phases, vectors)`` with ``u @ vectors = vectors * e^{i phases}``.
    Raises :class:`NumericalFailure` if a probe-vector residual exceeds
    ``residual_tol``.
    """
    n = u.shape[0]
    v = u * np.exp(1j * _CAYLEY_SHIFT)
    a = np.eye(n) - v
    b = np.eye(n) + v
    # right division A B^{-1} via a conjugate-transposed solve
    h = 1j * np.linalg.solve(b.conj().T, a.conj().T).conj().T
    h = 0.5 * (h + h.conj().T)
    evals, vectors = np.linalg.eigh(h)
    phases = 2.0 * np.arctan(evals) - _CAYLEY_SHIFT

    rng = np.random.default_rng(1234)
    probe = rng.standard_normal((n, probes)) + 1j * rng.standard_normal((n, probes))
    probe /= np.linalg.norm(probe, axis=0)
    resid = u @ probe - vectors @ (np.exp(1j * phases)[:, None] * (vectors.conj().T @ probe))
    worst = float(np.max(np.linalg.norm(resid, axis=0)))
    if worst > residual_tol:
        raise NumericalFailure(
            f"unitary eigendecomposition residual {worst:.2e} exceeds {residual_tol:.1e}"
        )
    return phases, vectors
