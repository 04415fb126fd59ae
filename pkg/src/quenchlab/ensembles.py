"""Random-matrix transition ensemble: subsystem unitaries plus diagonal coupling.

A realization consists of two independent circular-ensemble unitaries (COE or
CUE) and a diagonal entangling operator with phases exp(2 pi i eps xi_kl),
xi uniform in (-1/2, 1/2].  The interaction strength eps maps to the
universal transition parameter Lambda through the mean squared coupling
matrix element over the mean level spacing squared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .linalg import unitary_eig
from .rng import box_muller, substream
from .theory import EnsembleKind, as_ensemble

__all__ = [
    "DiagonalPhases",
    "TransitionSpec",
    "FloquetSystem",
    "sample_cue",
    "sample_coe",
    "interaction_phases",
    "lambda_from_epsilon",
    "epsilon_from_lambda",
    "lambda_max",
    "build_floquet",
    "assemble_full_operator",
]


def sample_cue(dim: int, stream) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix.

    The R-diagonal phases are divided out, which makes the distribution
    exactly Haar rather than merely unitary.
    """
    if dim < 2:
        raise DomainError(f"dimension must be >= 2, got {dim}")
    g = (box_muller(stream, (dim, dim)) + 1j * box_muller(stream, (dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_coe(dim: int, stream) -> np.ndarray:
    """Symmetric unitary with COE measure: W = U^T U, U Haar unitary."""
    u = sample_cue(dim, stream)
    return u.T @ u


def interaction_phases(n_a: int, n_b: int, epsilon: float, stream) -> "DiagonalPhases":
    """Draw the coupling exponents xi, iid uniform on (-1/2, 1/2]."""
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    xi = 0.5 - stream.random((n_a, n_b))
    return DiagonalPhases(dims=(n_a, n_b), epsilon=float(epsilon), xi=xi)


@dataclass(frozen=True)
class DiagonalPhases:
    """Diagonal entangling operator exp(2 pi i eps xi) on the product basis."""

    dims: tuple[int, int]
    epsilon: float
    xi: np.ndarray

    def operator_diagonal(self) -> np.ndarray:
        """Unit-modulus diagonal, flattened row-major to match kron ordering."""
        if self.epsilon == 0.0:
            return np.ones(self.dims[0] * self.dims[1], dtype=complex)
        return np.exp(2j * np.pi * self.epsilon * self.xi).ravel()


def lambda_max(n_a: int, n_b: int) -> float:
    """Largest transition parameter reachable by the coupling (at eps = 1)."""
    return n_a * n_b / (4.0 * math.pi**2)


def lambda_from_epsilon(epsilon: float, n_a: int, n_b: int) -> float:
    """Transition parameter Lambda(eps) = N_A N_B/(4 pi^2) [1 - sinc^2(eps)].

    Exact on the monotone branch eps in [0, 1]; the eps -> 0 limit is taken
    analytically (a series branch avoids the 1 - sinc^2 cancellation).
    """
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    x = math.pi * epsilon
    if x < 0.05:
        bracket = x * x / 3.0 - 2.0 * x**4 / 45.0 + x**6 / 315.0
    else:
        s = math.sin(x) / x
        bracket = 1.0 - s * s
    return n_a * n_b / (4.0 * math.pi**2) * bracket


def epsilon_from_lambda(lam: float, n_a: int, n_b: int) -> float:
    """Invert Lambda(eps) on [0, 1] by bisection to 1e-14 in eps."""
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    top = lambda_max(n_a, n_b)
    if lam > top * (1.0 + 1e-12):
        raise DomainError(
            f"lambda={lam:.6g} is unattainable: the coupling reaches at most "
            f"{top:.6g} for N_A={n_a}, N_B={n_b}"
        )
    if lam == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if lambda_from_epsilon(mid, n_a, n_b) < lam:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TransitionSpec:
    """Complete description of one transition-ensemble experiment."""

    ensemble: EnsembleKind
    n_a: int
    n_b: int
    lam: float
    master_seed: int
    realizations: int
    states_per_realization: int
    t_grid: tuple[float, ...]
    alpha_set: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)

    def __post_init__(self):
        object.__setattr__(self, "ensemble", as_ensemble(self.ensemble))
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        object.__setattr__(self, "alpha_set", tuple(float(a) for a in self.alpha_set))
        if self.n_a < 2 or self.n_b < 2:
            raise DomainError("subsystem dimensions must be >= 2")
        if self.lam < 0:
            raise DomainError("lambda must be nonnegative")
        top = lambda_max(self.n_a, self.n_b)
        if self.lam > top * (1.0 + 1e-12):
            raise DomainError(
                f"lambda={self.lam:.6g} exceeds the maximum {top:.6g} attainable "
                f"for N_A={self.n_a}, N_B={self.n_b}"
            )
        if self.realizations < 1:
            raise DomainError("realizations must be positive")
        if not 1 <= self.states_per_realization <= self.n_a * self.n_b:
            raise DomainError(
                "states_per_realization must lie in [1, N_A N_B] "
                f"= [1, {self.n_a * self.n_b}]"
            )
        if any(t2 <= t1 for t1, t2 in zip(self.t_grid, self.t_grid[1:])):
            raise DomainError("t_grid must be strictly increasing")
        if any(t < 0 for t in self.t_grid):
            raise DomainError("t_grid entries must be nonnegative")
        for a in self.alpha_set:
            if a != 1.0 and a <= 0.5:
                raise DomainError(f"alpha={a} unsupported (need alpha = 1 or > 1/2)")

    @property
    def dim(self) -> int:
        return self.n_a * self.n_b

    @property
    def epsilon(self) -> float:
        return epsilon_from_lambda(self.lam, self.n_a, self.n_b)

    @property
    def mean_spacing(self) -> float:
        return 2.0 * math.pi / self.dim


@dataclass(frozen=True)
class FloquetSystem:
    """One sampled realization with its subsystem eigenproblems solved."""

    spec: TransitionSpec
    realization_index: int
    u_a: np.ndarray
    u_b: np.ndarray
    coupling: DiagonalPhases
    eig_phases_a: np.ndarray
    eig_phases_b: np.ndarray
    eig_vectors_a: np.ndarray = field(repr=False, default=None)
    eig_vectors_b: np.ndarray = field(repr=False, default=None)


def build_floquet(spec: TransitionSpec, realization_index: int) -> FloquetSystem:
    """Sample one realization deterministically from its substreams."""
    sampler = sample_coe if spec.ensemble.time_reversal else sample_cue
    u_a = sampler(spec.n_a, substream(spec.master_seed, realization_index, "unitary_a"))
    u_b = sampler(spec.n_b, substream(spec.master_seed, realization_index, "unitary_b"))
    coupling = interaction_phases(
        spec.n_a, spec.n_b, spec.epsilon, substream(spec.master_seed, realization_index, "coupling")
    )
    ph_a, vec_a = unitary_eig(u_a)
    ph_b, vec_b = unitary_eig(u_b)
    return FloquetSystem(
        spec=spec,
        realization_index=realization_index,
        u_a=u_a,
        u_b=u_b,
        coupling=coupling,
        eig_phases_a=ph_a,
        eig_phases_b=ph_b,
        eig_vectors_a=vec_a,
        eig_vectors_b=vec_b,
    )


def assemble_full_operator(system: FloquetSystem) -> np.ndarray:
    """Dense one-step operator (U_A otimes U_B) diag(coupling)."""
    full = np.kron(system.u_a, system.u_b)
    full *= system.coupling.operator_diagonal()[None, :]
    return full
