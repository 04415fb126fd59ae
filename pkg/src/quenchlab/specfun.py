"""Special functions used by the analytic theory.

Gamma/digamma, scaled modified Bessel functions, the error-function family
and Dawson's integral are delegated to mature library routines, which exceed
the accuracy targets of this package; their contracts (domains, scaling
conventions) are owned here.  The Kummer confluent hypergeometric function,
its parameter derivatives and the generalized hypergeometric series are
implemented from scratch because parameter derivatives and general pFq are
not available upstream.

Scaling conventions
-------------------
Everything that multiplies exp(-t^2) in the theory formulas is exposed in
pre-scaled form: ``bessel_i_scaled`` returns exp(-x) I_n(x) and
``erfi_scaled`` returns exp(-x^2) erfi(x).  Raw ``erfi`` refuses arguments
past the overflow threshold; callers must use the scaled combination there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .errors import AccuracyError, DomainError

__all__ = [
    "AccuracyPolicy",
    "gamma_ln",
    "digamma",
    "bessel_i_scaled",
    "erf",
    "erfi",
    "erfi_scaled",
    "dawson",
    "kummer_m",
    "kummer_m_da",
    "kummer_m_db",
    "pfq",
]

# |x| beyond which exp(x^2) overflows a double
_ERFI_OVERFLOW_X = 26.6
# Kummer transformation threshold: the alternating direct series starts to
# lose digits well before it stops converging, so the positive-term
# transformed series takes over at moderately negative z already
_KUMMER_DIRECT_Z = 8.0


@dataclass(frozen=True)
class AccuracyPolicy:
    """Tolerance and budget for the series evaluations in this module."""

    rel_tol: float = 1e-12
    max_terms: int = 10**6

    def __post_init__(self):
        if not 0.0 < self.rel_tol <= 1e-6:
            raise DomainError(f"rel_tol must lie in (0, 1e-6], got {self.rel_tol}")
        if self.max_terms < 100:
            raise DomainError(f"max_terms must be >= 100, got {self.max_terms}")


_DEFAULT_POLICY = AccuracyPolicy()


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def gamma_ln(x: float) -> float:
    """log |Gamma(x)|; rejects the poles at nonpositive integers."""
    if _is_nonpositive_integer(x):
        raise DomainError(f"gamma_ln pole at x={x}")
    return float(_sp.gammaln(x))


def digamma(x: float) -> float:
    if _is_nonpositive_integer(x):
        raise DomainError(f"digamma pole at x={x}")
    return float(_sp.psi(x))


def bessel_i_scaled(order: int, x):
    """exp(-x) I_order(x) for order in {0, 1}, x >= 0 (scalar or array)."""
    if order not in (0, 1):
        raise DomainError(f"order must be 0 or 1, got {order}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("bessel_i_scaled requires x >= 0")
    out = _sp.i0e(x) if order == 0 else _sp.i1e(x)
    return float(out) if out.ndim == 0 else out


def erf(x):
    out = _sp.erf(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def dawson(x):
    out = _sp.dawsn(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def erfi(x: float) -> float:
    """Raw imaginary error function; overflows past |x| ~ 26.6 by contract."""
    if abs(x) > _ERFI_OVERFLOW_X:
        raise DomainError(
            f"erfi({x}) would overflow; use erfi_scaled for the stable combination"
        )
    return float(_sp.erfi(x))


def erfi_scaled(x):
    """exp(-x^2) erfi(x), stable for all x; equals 2 dawson(x)/sqrt(pi)."""
    out = 2.0 * _sp.dawsn(np.asarray(x, dtype=float)) / math.sqrt(math.pi)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------
# Kummer confluent hypergeometric function M(a, b, z)
# ----------------------------------------------------------------------

_RESCALE = 2.0**512
_LOG_RESCALE = 512.0 * math.log(2.0)


def _kummer_series_scaled(a: float, b: float, z: float, policy: AccuracyPolicy):
    """Direct series of M(a,b,z) with overflow rescaling.

    Returns (mantissa, log_scale) with M = mantissa * exp(log_scale).
    Convergence is unconditional in z; the caller is responsible for
    choosing a representation without catastrophic cancellation.
    """
    s = 1.0
    term = 1.0
    log_scale = 0.0
    k = 0
    nmax = policy.max_terms
    while k < nmax:
        term *= (a + k) / (b + k) * z / (k + 1)
        s += term
        k += 1
        if term == 0.0 or (abs(term) < policy.rel_tol * abs(s) and k > 4):
            return s, log_scale
        if abs(s) > _RESCALE:
            s /= _RESCALE
            term /= _RESCALE
            log_scale += _LOG_RESCALE
    raise AccuracyError(f"Kummer series did not converge within {nmax} terms")


def _kummer_terminating(a: float, b: float, z: float) -> float:
    s = 1.0
    term = 1.0
    for k in range(int(-a)):
        term *= (a + k) / (b + k) * z / (k + 1)
        s += term
    return s


def kummer_m(a: float, b: float, z: float, policy: AccuracyPolicy = _DEFAULT_POLICY) -> float:
    """M(a, b, z), the confluent hypergeometric function of the first kind.

    Terminating cases (a a nonpositive integer) are summed exactly.  For
    z < -30 the Kummer transformation M(a,b,z) = e^z M(b-a,b,-z) avoids the
    cancellation of the alternating direct series.
    """
    if _is_nonpositive_integer(b):
        raise DomainError(f"kummer_m pole: b={b} is a nonpositive integer")
    if _is_nonpositive_integer(a):
        return _kummer_terminating(a, b, z)
    if z < -_KUMMER_DIRECT_Z:
        s, log_scale = _kummer_series_scaled(b - a, b, -z, policy)
        r = z + log_scale
        if s == 0.0 or r + math.log(abs(s)) < -745.0:
            return 0.0
        return s * math.exp(r)
    s, log_scale = _kummer_series_scaled(a, b, z, policy)
    return s * math.exp(log_scale)


def _kummer_da_series(a: float, b: float, z: float, policy: AccuracyPolicy) -> float:
    """d/da M(a,b,z) by term-by-term differentiation of the series.

    Accumulates the bounded ratio t_k = (a)_k/(b)_k z^k/k! together with the
    harmonic factor sum_{j<k} 1/(a+j) (the digamma-difference form), which
    avoids the Gamma-scale overflow of raw Pochhammer products.  Nonpositive
    integer a, where one Pochhammer factor vanishes but its derivative does
    not, gets its exact split series.
    """
    nmax = policy.max_terms
    if _is_nonpositive_integer(a):
        n = int(-a)
        s = 0.0
        t = 1.0
        harm = 0.0
        for k in range(n):  # product-rule terms below the vanishing factor
            harm += 1.0 / (a + k)
            t *= (a + k) / (b + k) * z / (k + 1)
            s += t * harm
        # beyond the zero factor: d(a)_k/da = (-1)^n n! (k-1-n)!
        u = math.gamma(n + 1.0) * (-1.0) ** n * z ** (n + 1)
        for j in range(n + 1):
            u /= b + j
        u /= math.gamma(n + 2.0)
        k = n + 1
        while k < nmax:
            s += u
            if abs(u) < policy.rel_tol * max(abs(s), 1e-300) and k > n + 4:
                return s
            u *= (k - n) * z / ((b + k) * (k + 1))
            k += 1
        raise AccuracyError(f"Kummer dM/da series did not converge within {nmax} terms")
    s = 0.0
    t = 1.0
    harm = 0.0
    k = 0
    last = np.inf
    while k < nmax:
        harm += 1.0 / (a + k)
        t *= (a + k) / (b + k) * z / (k + 1)
        term = t * harm
        s += term
        k += 1
        tol = policy.rel_tol * max(abs(s), 1e-300)
        if abs(term) < tol and abs(last) < tol and k > 4:
            return s
        last = term
    raise AccuracyError(f"Kummer dM/da series did not converge within {nmax} terms")


def _kummer_db_series(a: float, b: float, z: float, policy: AccuracyPolicy) -> float:
    """d/db M(a,b,z): -sum_k t_k [sum_{j<k} 1/(b+j)] with bounded t_k."""
    s = 0.0
    t = 1.0
    harm = 0.0
    k = 0
    nmax = policy.max_terms
    last = np.inf
    while k < nmax:
        harm += 1.0 / (b + k)
        t *= (a + k) / (b + k) * z / (k + 1)
        term = -t * harm
        s += term
        k += 1
        if t == 0.0:  # terminating numerator: the series is a finite sum
            return s
        tol = policy.rel_tol * max(abs(s), 1e-300)
        if abs(term) < tol and abs(last) < tol and k > 4:
            return s
        last = term
    raise AccuracyError(f"Kummer dM/db series did not converge within {nmax} terms")


def kummer_m_da(a: float, b: float, z: float, policy: AccuracyPolicy = _DEFAULT_POLICY) -> float:
    """Derivative of M(a,b,z) with respect to the first parameter."""
    if _is_nonpositive_integer(b):
        raise DomainError(f"kummer_m_da pole: b={b} is a nonpositive integer")
    if z < -_KUMMER_DIRECT_Z:
        # M(a,b,z) = e^z M(b-a,b,-z); the first slot enters with d(b-a)/da = -1
        return -math.exp(z) * _kummer_da_series(b - a, b, -z, policy)
    return _kummer_da_series(a, b, z, policy)


def kummer_m_db(a: float, b: float, z: float, policy: AccuracyPolicy = _DEFAULT_POLICY) -> float:
    """Derivative of M(a,b,z) with respect to the second parameter."""
    if _is_nonpositive_integer(b):
        raise DomainError(f"kummer_m_db pole: b={b} is a nonpositive integer")
    if z < -_KUMMER_DIRECT_Z:
        return math.exp(z) * (
            _kummer_da_series(b - a, b, -z, policy) + _kummer_db_series(b - a, b, -z, policy)
        )
    return _kummer_db_series(a, b, z, policy)


# ----------------------------------------------------------------------
# Generalized hypergeometric series pFq
# ----------------------------------------------------------------------


def pfq(numerators, denominators, z: float, policy: AccuracyPolicy = _DEFAULT_POLICY) -> float:
    """Generalized hypergeometric sum_k prod(a)_k / prod(b)_k z^k / k!.

    Terminates exactly when a numerator is a nonpositive integer; otherwise
    requires a convergent parameter/argument combination (p <= q, or
    p == q+1 with |z| < 1, or z = +-1 with sufficient parameter excess).
    Compensated summation keeps the accumulated roundoff at the ulp level.
    """
    As = [float(a) for a in numerators]
    Bs = [float(b) for b in denominators]
    terminating = [int(-a) for a in As if _is_nonpositive_integer(a)]
    kstop = min(terminating) if terminating else None
    for b in Bs:
        if _is_nonpositive_integer(b) and (kstop is None or -int(b) < kstop):
            raise DomainError(f"pfq pole: denominator parameter {b}")
    if kstop is None:
        p, q = len(As), len(Bs)
        if p > q + 1:
            raise DomainError("pfq divergent: more than q+1 numerator parameters")
        if p == q + 1 and abs(z) >= 1.0:
            excess = sum(Bs) - sum(As)
            if not (
                (z == 1.0 and excess > 0.0) or (z == -1.0 and excess > -1.0)
            ):
                raise DomainError(
                    f"pfq divergent at z={z} (parameter excess {excess:.6g})"
                )

    s = 1.0
    comp = 0.0
    term = 1.0
    prev = 1.0
    k = 0
    nmax = policy.max_terms
    while k < nmax:
        if kstop is not None and k >= kstop:
            return s
        num = 1.0
        for a in As:
            num *= a + k
        den = 1.0
        for b in Bs:
            den *= b + k
        term *= num / den * z / (k + 1)
        if term == 0.0:
            return s
        # Kahan update
        y = term - comp
        t = s + y
        comp = (t - s) - y
        s = t
        k += 1
        if k > 32 and prev != 0.0:
            r = term / prev
            if 0.0 < r < 1.0:
                # same-sign decaying terms; k(1-r) estimates the decay rate
                # (-> power p for algebraic k^-p tails, -> large for
                # geometric ones), giving the Euler-Maclaurin tail
                # term * k/(k(1-r) - 1) in both regimes
                denom = k * (1.0 - r) - 1.0
                if denom > 0.2 and abs(term) < policy.rel_tol * abs(s):
                    return s + term * (k / denom)
            elif r <= 0.0:
                if abs(term) < policy.rel_tol * abs(s) and abs(prev) < policy.rel_tol * abs(s):
                    return s
        prev = term
    raise AccuracyError(f"pfq did not converge within {nmax} terms")
