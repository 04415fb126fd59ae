"""Quench dynamics: propagate product eigenstates, extract entanglement.

The initial states are eigenstate products of the uncoupled subsystems; the
interacting operator is diagonalized densely once per realization and every
requested time is then reached with two matrix products, so arbitrarily
large step counts cost the same.  Entropies are averaged over (realization,
state) pairs in a fixed order for bit reproducibility.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensembles import FloquetSystem, TransitionSpec, assemble_full_operator, build_floquet
from .errors import DomainError, NumericalFailure
from .linalg import unitary_eig
from .parallel import run_ordered
from .rng import substream

__all__ = [
    "FullEigensystem",
    "EntropyCurve",
    "schmidt_spectrum",
    "schmidt_spectra_batched",
    "hct_entropy",
    "diagonalize_full",
    "propagate",
    "time_grid_steps",
    "run_quench",
    "MAX_DENSE_DIM",
]

MAX_DENSE_DIM = 4096


# ----------------------------------------------------------------------
# Schmidt spectra and entropies
# ----------------------------------------------------------------------


def schmidt_spectrum(amplitudes: np.ndarray) -> np.ndarray:
    """Schmidt eigenvalues (descending) of a normalized bipartite state.

    ``amplitudes`` is the N_A x N_B coefficient matrix.  The values are the
    squared singular values, clamped to [0, 1] and renormalized to unit sum
    when the numerical deviation is small.
    """
    m = np.asarray(amplitudes)
    if m.ndim != 2:
        raise DomainError("state must be an N_A x N_B coefficient matrix")
    norm2 = float(np.vdot(m, m).real)
    if abs(math.sqrt(norm2) - 1.0) > 1e-8:
        raise DomainError(f"state norm {math.sqrt(norm2):.12f} deviates beyond 1e-8")
    s = np.linalg.svd(m, compute_uv=False)
    lam = np.clip(s * s, 0.0, 1.0)
    total = lam.sum()
    if abs(total - 1.0) <= 1e-8:
        lam = lam / total
    return np.sort(lam)[::-1]


def schmidt_spectra_batched(states: np.ndarray) -> np.ndarray:
    """Schmidt eigenvalues for a stack of states shaped (M, N_A, N_B)."""
    s = np.linalg.svd(states, compute_uv=False)
    lam = np.clip(s * s, 0.0, 1.0)
    lam /= lam.sum(axis=1, keepdims=True)
    return lam


def validate_spectrum(values: np.ndarray) -> np.ndarray:
    """Clamp tiny negative weights; reject genuine negativity or bad sums."""
    v = np.asarray(values, dtype=float)
    if np.any(v < -1e-12):
        raise DomainError(f"negative Schmidt weight {v.min():.3e} beyond tolerance")
    v = np.clip(v, 0.0, 1.0)
    if abs(v.sum() - 1.0) > 1e-10:
        raise DomainError(f"Schmidt weights sum to {v.sum():.12f}, not 1")
    return v


def hct_entropy(spectrum: np.ndarray, alpha: float) -> float:
    """HCT entropy of a Schmidt spectrum; alpha = 1 is the von Neumann limit."""
    lam = np.asarray(spectrum, dtype=float)
    if alpha == 1.0:
        nz = lam[lam > 0.0]
        return float(-(nz * np.log(nz)).sum())
    if alpha <= 0.5:
        raise DomainError(f"alpha={alpha} unsupported (need alpha = 1 or > 1/2)")
    return float((1.0 - (lam**alpha).sum()) / (alpha - 1.0))


def _entropies_batched(lam: np.ndarray, alphas) -> dict[float, np.ndarray]:
    """Entropies for a stack of spectra shaped (M, N_A), per alpha."""
    out = {}
    for alpha in alphas:
        if alpha == 1.0:
            safe = np.where(lam > 0.0, lam, 1.0)
            out[alpha] = -(lam * np.log(safe)).sum(axis=1)
        else:
            out[alpha] = (1.0 - (lam**alpha).sum(axis=1)) / (alpha - 1.0)
    return out


# ----------------------------------------------------------------------
# Full-system eigenproblem and propagation
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class FullEigensystem:
    """Eigenphases and eigenbasis of the interacting one-step operator."""

    dims: tuple[int, int]
    phases: np.ndarray
    transform: np.ndarray = field(repr=False, default=None)


def diagonalize_full(system: FloquetSystem, max_dim: int = MAX_DENSE_DIM) -> FullEigensystem:
    """Dense unitary eigendecomposition of (U_A x U_B) diag(coupling).

    The operator is expressed in the product eigenbasis of the uncoupled
    subsystems before diagonalizing, so basis state j*N_B + k is the product
    eigenstate |j, k> and the returned transform maps product eigenstates to
    interacting eigenstates.
    """
    dim = system.spec.dim
    if dim > max_dim:
        raise DomainError(
            f"dimension {dim} exceeds the dense-diagonalization cap {max_dim}; "
            "use step-wise propagation instead"
        )
    full = assemble_full_operator(system)
    product_basis = np.kron(system.eig_vectors_a, system.eig_vectors_b)
    rotated = product_basis.conj().T @ full @ product_basis
    phases, vectors = unitary_eig(rotated)
    return FullEigensystem(dims=(system.spec.n_a, system.spec.n_b), phases=phases, transform=vectors)


def propagate(eig: FullEigensystem, initial_index: tuple[int, int], n: int) -> np.ndarray:
    """Exact n-step evolution of a product basis state, as an N_A x N_B matrix."""
    j, k = initial_index
    n_a, n_b = eig.dims
    if not (0 <= j < n_a and 0 <= k < n_b):
        raise DomainError(f"initial index {initial_index} out of range")
    if n < 0:
        raise DomainError("step count must be nonnegative")
    coeff = eig.transform.conj().T[:, j * n_b + k]
    evolved = eig.transform @ (np.exp(1j * eig.phases * n) * coeff)
    return evolved.reshape(n_a, n_b)


def time_grid_steps(lam: float, n_a: int, n_b: int, t_grid) -> np.ndarray:
    """Map rescaled times to integer step counts n = round(t / (D sqrt(Lambda))).

    Distinct times rounding to the same step are merged (first label kept).
    """
    if lam <= 0:
        raise DomainError("time rescaling undefined at lambda = 0; use raw step counts")
    d = 2.0 * math.pi / (n_a * n_b)
    steps, _ = _merge_time_grid(lam, d, t_grid)
    return steps


def _merge_time_grid(lam: float, mean_spacing: float, t_grid):
    scale = mean_spacing * math.sqrt(lam)
    steps = []
    labels = []
    for t in t_grid:
        n = int(round(t / scale))
        if steps and n == steps[-1]:
            continue
        steps.append(n)
        labels.append(float(t))
    return np.asarray(steps, dtype=np.int64), np.asarray(labels, dtype=float)


# ----------------------------------------------------------------------
# Ensemble-averaged quench
# ----------------------------------------------------------------------


@dataclass
class EntropyCurve:
    """Time series of ensemble-averaged entropies with standard errors."""

    t_grid: np.ndarray
    steps: np.ndarray
    achieved_t: np.ndarray
    alphas: tuple[float, ...]
    mean: dict[float, np.ndarray]
    stderr: dict[float, np.ndarray]
    sample_count: int
    top_two_mean: np.ndarray
    metadata: dict

    def max_entropy(self, alpha: float, n_a: int) -> float:
        if alpha == 1.0:
            return math.log(n_a)
        return (1.0 - float(n_a) ** (1.0 - alpha)) / (alpha - 1.0)


def _select_states(spec: TransitionSpec, realization: int) -> np.ndarray:
    dim = spec.dim
    m = spec.states_per_realization
    if m >= dim:
        return np.arange(dim, dtype=np.int64)
    stream = substream(spec.master_seed, realization, "state_choice")
    return np.sort(stream.choice(dim, size=m, replace=False).astype(np.int64))


def _realization_moments(spec: TransitionSpec, realization: int) -> dict:
    """Propagate one realization; return per-(time, alpha) moment sums."""
    system = build_floquet(spec, realization)
    eig = diagonalize_full(system)
    steps, _ = _merge_time_grid(spec.lam, spec.mean_spacing, spec.t_grid) if spec.lam > 0 else (
        np.zeros(len(spec.t_grid), dtype=np.int64),
        np.asarray(spec.t_grid),
    )
    cols = _select_states(spec, realization)
    basis = eig.transform.conj().T[:, cols]
    n_t = len(steps)
    n_alpha = len(spec.alpha_set)
    sums = np.zeros((n_t, n_alpha))
    sq_sums = np.zeros((n_t, n_alpha))
    top2 = np.zeros(n_t)
    for i, n in enumerate(steps):
        evolved = eig.transform @ (np.exp(1j * eig.phases * int(n))[:, None] * basis)
        stack = np.ascontiguousarray(evolved.T).reshape(len(cols), spec.n_a, spec.n_b)
        lam = schmidt_spectra_batched(stack)
        ent = _entropies_batched(lam, spec.alpha_set)
        for a_i, alpha in enumerate(spec.alpha_set):
            sums[i, a_i] = ent[alpha].sum()
            sq_sums[i, a_i] = (ent[alpha] ** 2).sum()
        top2[i] = lam[:, :2].sum(axis=1).sum()
    return {
        "realization": realization,
        "count": len(cols),
        "sums": sums,
        "sq_sums": sq_sums,
        "top2": top2,
    }


def realization_cache_key(kind: str, fields, realization: int) -> str:
    """Stable digest for one realization's reduced moments."""
    parts = [kind]
    for f in fields:
        parts.append(f.hex() if isinstance(f, float) else repr(f))
    parts.append(repr(realization))
    return hashlib.sha1("|".join(parts).encode()).hexdigest()


def _save_moments(path: Path, res: dict) -> None:
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        sums=res["sums"],
        sq_sums=res["sq_sums"],
        top2=res["top2"],
        count=np.int64(res["count"]),
        realization=np.int64(res["realization"]),
    )
    os.replace(tmp, path)


def _load_moments(path: Path) -> dict:
    with np.load(path) as data:
        return {
            "realization": int(data["realization"]),
            "count": int(data["count"]),
            "sums": data["sums"],
            "sq_sums": data["sq_sums"],
            "top2": data["top2"],
        }


def _spec_cache_fields(spec: TransitionSpec):
    return (
        spec.ensemble.tag,
        spec.n_a,
        spec.n_b,
        float(spec.lam),
        spec.master_seed,
        spec.states_per_realization,
        tuple(float(t) for t in spec.t_grid),
        tuple(float(a) for a in spec.alpha_set),
    )


def _safe_realization_moments(spec: TransitionSpec, realization: int, cache_dir=None) -> dict:
    path = None
    if cache_dir is not None:
        key = realization_cache_key("rmt", _spec_cache_fields(spec), realization)
        path = Path(cache_dir) / f"rmt_{key}.npz"
        if path.exists():
            return _load_moments(path)
    try:
        res = _realization_moments(spec, realization)
    except NumericalFailure as exc:
        return {"realization": realization, "error": str(exc)}
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        _save_moments(path, res)
    return res


def run_quench(
    spec: TransitionSpec, workers: int | None = None, cache_dir=None
) -> EntropyCurve:
    """Ensemble-averaged entropy curve for a transition-ensemble quench.

    Realizations are independent work units; the reduction runs in
    realization order so the output is identical for any worker count.
    Realizations whose diagonalization fails its residual check are dropped,
    but more than 10% failures abort the run.  With ``cache_dir`` set, each
    realization's reduced moments are stored on disk and reused, so extending
    a run recomputes only new realizations (results are deterministic, so the
    cache is exact).
    """
    if spec.lam > 0:
        steps, labels = _merge_time_grid(spec.lam, spec.mean_spacing, spec.t_grid)
        achieved = steps * spec.mean_spacing * math.sqrt(spec.lam)
    else:
        steps = np.zeros(len(spec.t_grid), dtype=np.int64)
        labels = np.asarray(spec.t_grid, dtype=float)
        achieved = labels.copy()

    results = run_ordered(
        _safe_realization_moments,
        [(spec, r, cache_dir) for r in range(spec.realizations)],
        workers=workers,
    )
    failures = [r for r in results if "error" in r]
    if len(failures) * 10 > spec.realizations:
        raise NumericalFailure(
            f"{len(failures)}/{spec.realizations} realizations failed: "
            + "; ".join(f["error"] for f in failures[:3])
        )

    n_t = len(steps)
    n_alpha = len(spec.alpha_set)
    total = np.zeros((n_t, n_alpha))
    total_sq = np.zeros((n_t, n_alpha))
    top2 = np.zeros(n_t)
    count = 0
    for res in sorted((r for r in results if "error" not in r), key=lambda r: r["realization"]):
        total += res["sums"]
        total_sq += res["sq_sums"]
        top2 += res["top2"]
        count += res["count"]

    mean = {}
    stderr = {}
    for a_i, alpha in enumerate(spec.alpha_set):
        mu = total[:, a_i] / count
        var = np.maximum(total_sq[:, a_i] / count - mu * mu, 0.0)
        mean[alpha] = mu
        stderr[alpha] = np.sqrt(var / max(count - 1, 1))
    return EntropyCurve(
        t_grid=labels,
        steps=steps,
        achieved_t=achieved,
        alphas=spec.alpha_set,
        mean=mean,
        stderr=stderr,
        sample_count=count,
        top_two_mean=top2 / count,
        metadata={
            "kind": "rmt-quench",
            "ensemble": spec.ensemble.tag,
            "n_a": spec.n_a,
            "n_b": spec.n_b,
            "lambda": spec.lam,
            "epsilon": spec.epsilon,
            "master_seed": spec.master_seed,
            "realizations": spec.realizations,
            "failed_realizations": len(failures),
            "states_per_realization": spec.states_per_realization,
        },
    )
