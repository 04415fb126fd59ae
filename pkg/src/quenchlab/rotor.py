"""Coupled kicked rotors on the discretized torus.

Each subsystem is a kicked rotor with Floquet operator
exp[-i p^2/(2 hbar)] exp[-i K cos(2 pi q)/(4 pi^2 hbar)] on an N-dimensional
torus Hilbert space (hbar = 1/(2 pi N)); the pair couples through
exp[-i b cos(2 pi (q_A + q_B))/(4 pi^2 hbar)], diagonal in position.
Boundary phases shift the position and momentum grids, breaking time
reversal and parity so the subsystem statistics follow the broken-symmetry
circular ensemble.

One Floquet step costs two batched FFT passes per axis; trajectories evolve
incrementally with snapshots at the requested step counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft
from scipy import special as _sp

from .errors import DomainError
from .linalg import unitary_eig
from .parallel import run_ordered
from .quench import EntropyCurve, _entropies_batched, _merge_time_grid, schmidt_spectra_batched
from .rng import substream

__all__ = [
    "RotorParams",
    "RotorOperator",
    "kick_pair_schedule",
    "rotor_step",
    "rotor_lambda",
    "rotor_b_from_lambda",
    "rotor_quench",
    "subsystem_operator",
]

# first zero of J0: end of the monotone branch of the coupling map
_J0_FIRST_ZERO = 2.404825557695773

DEFAULT_BOUNDARY_PHASES = (0.25, 0.31, 0.25, 0.31)


@dataclass(frozen=True)
class RotorParams:
    """Kick strengths, coupling and grid phases of one rotor pair.

    Strong chaos (K well above the classical threshold) is the caller's
    responsibility; nothing here enforces it.
    """

    n: int
    k_a: float
    k_b: float
    b: float
    boundary_phases: tuple[float, float, float, float] = DEFAULT_BOUNDARY_PHASES

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("rotor dimension must be >= 2")
        if any(not 0.0 <= a < 1.0 for a in self.boundary_phases):
            raise DomainError("boundary phases must lie in [0, 1)")


def kick_pair_schedule(count: int, start: float = 10.0, gap: float = 4.0, stride: float = 8.0):
    """Kick-strength pairs (10, 14), (18, 22), ... for successive realizations."""
    return [(start + stride * i, start + gap + stride * i) for i in range(count)]


class RotorOperator:
    """Cached diagonal factors of the one-step rotor-pair operator."""

    def __init__(self, params: RotorParams, dtype=np.complex128):
        self.params = params
        n = params.n
        aq_a, ap_a, aq_b, ap_b = params.boundary_phases
        j = np.arange(n)

        q_a = (j + aq_a) / n
        q_b = (j + aq_b) / n
        p_a = (j + ap_a) / n
        p_b = (j + ap_b) / n

        # V/hbar with hbar = 1/(2 pi N): K cos(2 pi q)/(4 pi^2) -> K N cos(2 pi q)/(2 pi)
        self.kick_a = np.exp(-1j * params.k_a * n * np.cos(2 * np.pi * q_a) / (2 * np.pi))
        self.kick_b = np.exp(-1j * params.k_b * n * np.cos(2 * np.pi * q_b) / (2 * np.pi))
        # p^2/(2 hbar) = pi N p^2
        self.kinetic_a = np.exp(-1j * np.pi * n * p_a**2)
        self.kinetic_b = np.exp(-1j * np.pi * n * p_b**2)
        self.coupling = np.exp(
            -1j * params.b * n * np.cos(2 * np.pi * (q_a[:, None] + q_b[None, :])) / (2 * np.pi)
        )

        # boundary-phase twiddles of the shifted position<->momentum transform
        self._pre_a = np.exp(-2j * np.pi * ap_a * j / n)
        self._pre_b = np.exp(-2j * np.pi * ap_b * j / n)
        self._post_a = np.exp(-2j * np.pi * (j + ap_a) * aq_a / n)
        self._post_b = np.exp(-2j * np.pi * (j + ap_b) * aq_b / n)

        # the post-twiddles of the shifted transform commute with the kinetic
        # diagonal and cancel on the return trip, so only the pre-twiddles
        # (the momentum-grid offset) survive in the one-step round trip
        d = dtype
        self._pos_full = (
            self.coupling
            * (self.kick_a[:, None] * self.kick_b[None, :])
            * (self._pre_a[:, None] * self._pre_b[None, :])
        ).astype(d)
        self._kin_full = (self.kinetic_a[:, None] * self.kinetic_b[None, :]).astype(d)
        self._unpre = (np.conj(self._pre_a)[:, None] * np.conj(self._pre_b)[None, :]).astype(d)
        self.dtype = d

    def unit_modulus_defect(self) -> float:
        worst = 0.0
        for arr in (self.kick_a, self.kick_b, self.kinetic_a, self.kinetic_b, self.coupling):
            worst = max(worst, float(np.max(np.abs(np.abs(arr) - 1.0))))
        return worst


def rotor_step(state: np.ndarray, op: RotorOperator) -> np.ndarray:
    """One Floquet step in the position representation.

    Applies the coupling and kick phases in position, transforms both axes
    to momentum, applies the kinetic phases and transforms back.  Accepts a
    single (N, N) state or a batch (..., N, N); unitary to machine precision.
    """
    n = op.params.n
    if state.shape[-2:] != (n, n):
        raise DomainError(f"state shape {state.shape} does not match rotor dimension {n}")
    psi = state * op._pos_full
    psi = _fft.fft2(psi, axes=(-2, -1), overwrite_x=True)
    psi *= op._kin_full
    psi = _fft.ifft2(psi, axes=(-2, -1), overwrite_x=True)
    psi *= op._unpre
    return psi


def subsystem_operator(params: RotorParams, which: str = "a", dtype=np.complex128) -> np.ndarray:
    """Dense one-rotor Floquet matrix (position representation)."""
    n = params.n
    aq_a, ap_a, aq_b, ap_b = params.boundary_phases
    if which == "a":
        aq, ap, kick_strength = aq_a, ap_a, params.k_a
    elif which == "b":
        aq, ap, kick_strength = aq_b, ap_b, params.k_b
    else:
        raise DomainError("which must be 'a' or 'b'")
    j = np.arange(n)
    q = (j + aq) / n
    p = (j + ap) / n
    kick = np.exp(-1j * kick_strength * n * np.cos(2 * np.pi * q) / (2 * np.pi))
    kin = np.exp(-1j * np.pi * n * p**2)
    transform = np.exp(-2j * np.pi * np.outer(j + ap, j + aq) / n) / math.sqrt(n)
    u = transform.conj().T @ (kin[:, None] * transform) @ np.diag(kick)
    return u.astype(dtype)


def rotor_lambda(n: int, b: float) -> float:
    """Transition parameter of the rotor pair at coupling b.

    Exact Bessel form (N^2/4 pi^2)(1 - J0^2(N b/2 pi)); the small-coupling
    series N^4 b^2/(32 pi^4) replaces it only for |N b| < 1e-3, where the
    1 - J0^2 difference underflows.
    """
    if b < 0:
        raise DomainError("coupling b must be nonnegative")
    x = n * b / (2.0 * math.pi)
    if abs(n * b) < 1e-3:
        return n * n / (4.0 * math.pi**2) * (x * x / 2.0 - 3.0 * x**4 / 32.0)
    j0 = float(_sp.j0(x))
    return n * n / (4.0 * math.pi**2) * (1.0 - j0 * j0)


def rotor_lambda_small_b(n: int, b: float) -> float:
    """Leading small-coupling approximation N^4 b^2/(32 pi^4)."""
    return n**4 * b * b / (32.0 * math.pi**4)


def rotor_b_from_lambda(lam: float, n: int) -> float:
    """Invert the coupling map on its first monotone branch."""
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    if lam == 0.0:
        return 0.0
    b_top = 2.0 * math.pi * _J0_FIRST_ZERO / n
    lam_top = n * n / (4.0 * math.pi**2)
    if lam > lam_top * (1.0 + 1e-12):
        raise DomainError(
            f"lambda={lam:.6g} not attainable on the monotone branch; the "
            f"maximum before the first Bessel zero is {lam_top:.6g}"
        )
    lo, hi = 0.0, b_top
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rotor_lambda(n, mid) < lam:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * b_top:
            break
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# Quench driver
# ----------------------------------------------------------------------


def _rotor_realization(
    params: RotorParams,
    lam: float,
    t_grid: tuple,
    alpha_set: tuple,
    states_per_realization: int,
    master_seed: int,
    realization: int,
    dtype_name: str,
    cache_dir=None,
) -> dict:
    path = None
    if cache_dir is not None:
        from pathlib import Path

        from .quench import _load_moments, _save_moments, realization_cache_key

        fields = (
            params.n,
            float(params.k_a),
            float(params.k_b),
            float(params.b),
            tuple(float(x) for x in params.boundary_phases),
            float(lam),
            tuple(float(t) for t in t_grid),
            tuple(float(a) for a in alpha_set),
            states_per_realization,
            master_seed,
            dtype_name,
        )
        key = realization_cache_key("rotor", fields, realization)
        path = Path(cache_dir) / f"rotor_{key}.npz"
        if path.exists():
            return _load_moments(path)
    res = _rotor_realization_impl(
        params, lam, t_grid, alpha_set, states_per_realization, master_seed, realization,
        dtype_name,
    )
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        _save_moments(path, res)
    return res


def _rotor_realization_impl(
    params: RotorParams,
    lam: float,
    t_grid: tuple,
    alpha_set: tuple,
    states_per_realization: int,
    master_seed: int,
    realization: int,
    dtype_name: str,
) -> dict:
    dtype = np.complex64 if dtype_name == "complex64" else np.complex128
    n = params.n
    op = RotorOperator(params, dtype=dtype)

    u_a = subsystem_operator(params, "a")
    u_b = subsystem_operator(params, "b")
    _, vec_a = unitary_eig(u_a)
    _, vec_b = unitary_eig(u_b)

    dim = n * n
    m = min(states_per_realization, dim)
    if m >= dim:
        pair_idx = np.arange(dim, dtype=np.int64)
    else:
        stream = substream(master_seed, realization, "state_choice")
        pair_idx = np.sort(stream.choice(dim, size=m, replace=False).astype(np.int64))
    ja = pair_idx // n
    kb = pair_idx % n
    batch = (vec_a[:, ja].T[:, :, None] * vec_b[:, kb].T[:, None, :]).astype(dtype)

    d = 2.0 * math.pi / dim
    steps, _ = _merge_time_grid(lam, d, t_grid)
    n_t = len(steps)
    alphas = tuple(alpha_set)
    sums = np.zeros((n_t, len(alphas)))
    sq_sums = np.zeros((n_t, len(alphas)))
    top2 = np.zeros(n_t)
    current = 0
    for i, target in enumerate(steps):
        for _ in range(int(target) - current):
            batch = rotor_step(batch, op)
        current = int(target)
        lam_spec = schmidt_spectra_batched(batch.astype(np.complex128))
        ent = _entropies_batched(lam_spec, alphas)
        for a_i, alpha in enumerate(alphas):
            sums[i, a_i] = ent[alpha].sum()
            sq_sums[i, a_i] = (ent[alpha] ** 2).sum()
        top2[i] = lam_spec[:, :2].sum(axis=1).sum()
    return {
        "realization": realization,
        "count": m,
        "sums": sums,
        "sq_sums": sq_sums,
        "top2": top2,
    }


def rotor_quench(
    params_list,
    lam: float,
    t_grid,
    alpha_set=(1.0, 2.0, 3.0, 4.0),
    states_per_realization: int = 100,
    master_seed: int = 0,
    workers: int | None = None,
    step_budget: int = 10**7,
    dtype: str = "complex128",
    cache_dir=None,
) -> EntropyCurve:
    """Ensemble-averaged entropies for a list of rotor-pair realizations.

    Each entry of ``params_list`` is one realization (one kick pair); its
    coupling is replaced by the value reproducing the requested transition
    parameter.  Runs whose cumulative step count exceeds the budget are
    refused up front.
    """
    params_list = list(params_list)
    if not params_list:
        raise DomainError("params_list must not be empty")
    if lam <= 0:
        raise DomainError("lambda must be positive for a rescaled-time quench")
    n = params_list[0].n
    if any(p.n != n for p in params_list):
        raise DomainError("all realizations must share the rotor dimension")
    b = rotor_b_from_lambda(lam, n)
    params_list = [
        RotorParams(n=p.n, k_a=p.k_a, k_b=p.k_b, b=b, boundary_phases=p.boundary_phases)
        for p in params_list
    ]

    d = 2.0 * math.pi / (n * n)
    steps, labels = _merge_time_grid(lam, d, t_grid)
    total_steps = int(steps[-1]) * len(params_list)
    if total_steps > step_budget:
        raise DomainError(
            f"run needs {total_steps:.3g} rotor steps, above the budget "
            f"{step_budget:.3g}; increase lambda, shorten the grid, or raise the budget"
        )

    t_grid_t = tuple(float(t) for t in t_grid)
    alphas = tuple(float(a) for a in alpha_set)
    results = run_ordered(
        _rotor_realization,
        [
            (p, lam, t_grid_t, alphas, states_per_realization, master_seed, r, dtype, cache_dir)
            for r, p in enumerate(params_list)
        ],
        workers=workers,
    )

    n_t = len(steps)
    total = np.zeros((n_t, len(alphas)))
    total_sq = np.zeros((n_t, len(alphas)))
    top2 = np.zeros(n_t)
    count = 0
    for res in sorted(results, key=lambda r: r["realization"]):
        total += res["sums"]
        total_sq += res["sq_sums"]
        top2 += res["top2"]
        count += res["count"]
    mean = {}
    stderr = {}
    for a_i, alpha in enumerate(alphas):
        mu = total[:, a_i] / count
        var = np.maximum(total_sq[:, a_i] / count - mu * mu, 0.0)
        mean[alpha] = mu
        stderr[alpha] = np.sqrt(var / max(count - 1, 1))
    return EntropyCurve(
        t_grid=labels,
        steps=steps,
        achieved_t=steps * d * math.sqrt(lam),
        alphas=alphas,
        mean=mean,
        stderr=stderr,
        sample_count=count,
        top_two_mean=top2 / count,
        metadata={
            "kind": "rotor-quench",
            "n": n,
            "lambda": lam,
            "coupling_b": b,
            "kick_pairs": [(p.k_a, p.k_b) for p in params_list],
            "boundary_phases": params_list[0].boundary_phases,
            "master_seed": master_seed,
            "realizations": len(params_list),
            "states_per_realization": states_per_realization,
            "dtype": dtype,
        },
    )
