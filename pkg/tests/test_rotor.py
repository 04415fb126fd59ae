"""Coupled kicked rotors: unitarity, dense reconstruction, coupling map."""

import math

import numpy as np
import pytest
from scipy import stats

from quenchlab import rotor as R
from quenchlab import quench as Q
from quenchlab.errors import DomainError


def _normalized(shape, seed=0):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return psi / np.linalg.norm(psi)


class TestRotorStep:
    def test_norm_preserved_many_steps(self):
        params = R.RotorParams(n=32, k_a=10.0, k_b=14.0, b=0.2)
        op = R.RotorOperator(params)
        psi = _normalized((32, 32), seed=1)
        for _ in range(10**4):
            psi = R.rotor_step(psi, op)
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-12

    def test_uncoupled_product_stays_product(self):
        params = R.RotorParams(n=16, k_a=10.0, k_b=14.0, b=0.0)
        op = R.RotorOperator(params)
        psi = np.outer(_normalized(16, seed=2), _normalized(16, seed=3))
        for _ in range(200):
            psi = R.rotor_step(psi, op)
        lam = Q.schmidt_spectrum(psi)
        assert Q.hct_entropy(lam, 2.0) < 1e-12

    def test_dense_reconstruction(self):
        n = 8
        params = R.RotorParams(n=n, k_a=9.0, k_b=13.0, b=0.4)
        op = R.RotorOperator(params)
        eye = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
        dense_from_step = R.rotor_step(eye, op).reshape(n * n, n * n).T
        # independent dense product: subsystem matrices times coupling diagonal
        u_a = R.subsystem_operator(params, "a")
        u_b = R.subsystem_operator(params, "b")
        j = np.arange(n)
        q_a = (j + params.boundary_phases[0]) / n
        q_b = (j + params.boundary_phases[2]) / n
        coupling = np.exp(
            -1j * params.b * n * np.cos(2 * np.pi * (q_a[:, None] + q_b[None, :])) / (2 * np.pi)
        ).ravel()
        dense_product = np.kron(u_a, u_b) * coupling[None, :]
        assert np.max(np.abs(dense_from_step - dense_product)) < 1e-12
        # spectrum on the unit circle
        ev = np.linalg.eigvals(dense_from_step)
        assert np.max(np.abs(np.abs(ev) - 1.0)) < 1e-10

    def test_linear_and_unitary_columns(self):
        n = 8
        op = R.RotorOperator(R.RotorParams(n=n, k_a=10.0, k_b=14.0, b=0.3))
        eye = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
        x = R.rotor_step(eye, op).reshape(n * n, n * n).T
        defect = np.max(np.abs(x.conj().T @ x - np.eye(n * n)))
        assert defect < 1e-10

    def test_shape_guard(self):
        op = R.RotorOperator(R.RotorParams(n=8, k_a=10.0, k_b=14.0, b=0.3))
        with pytest.raises(DomainError):
            R.rotor_step(np.zeros((7, 7), dtype=complex), op)

    def test_unit_modulus_factors(self):
        op = R.RotorOperator(R.RotorParams(n=16, k_a=10.0, k_b=14.0, b=0.3))
        assert op.unit_modulus_defect() < 1e-14


class TestRotorLambda:
    def test_zero(self):
        assert R.rotor_lambda(100, 0.0) == 0.0

    def test_small_coupling_reference(self):
        lam = R.rotor_lambda(100, 1e-4)
        assert lam == pytest.approx(3.21e-4, abs=2e-6)
        assert lam == pytest.approx(R.rotor_lambda_small_b(100, 1e-4), rel=1e-3)

    def test_branch_consistency(self):
        # the exact expression and the small-b series agree through the switch
        lam_series = R.rotor_lambda(100, 0.99e-5)
        lam_exact = R.rotor_lambda(100, 1.01e-5)
        assert lam_series == pytest.approx(lam_exact * (0.99 / 1.01) ** 2, rel=1e-4)

    @pytest.mark.parametrize("lam", [1e-6, 1e-4, 1e-2])
    def test_roundtrip(self, lam):
        b = R.rotor_b_from_lambda(lam, 100)
        assert R.rotor_lambda(100, b) == pytest.approx(lam, rel=1e-10)

    def test_inverse_matches_small_b_closed_form(self):
        b = R.rotor_b_from_lambda(1e-2, 100)
        assert b == pytest.approx(math.sqrt(32 * math.pi**4 * 1e-2) / 100**2, rel=1e-3)

    def test_zero_lambda(self):
        assert R.rotor_b_from_lambda(0.0, 100) == 0.0

    def test_unattainable(self):
        with pytest.raises(DomainError, match="monotone branch"):
            R.rotor_b_from_lambda(1e4, 100)


class TestBrokenSymmetrySpectrum:
    def test_subsystem_spacings_follow_broken_symmetry_class(self):
        # spacing statistics of the single-rotor operator with generic
        # boundary phases against the broken-symmetry surmise
        spacings = []
        for i, k in enumerate(np.linspace(9.0, 18.0, 24)):
            params = R.RotorParams(n=100, k_a=float(k), k_b=14.0, b=0.0)
            u = R.subsystem_operator(params, "a")
            phases = np.sort(np.angle(np.linalg.eigvals(u)))
            gaps = np.diff(phases) * 100 / (2 * np.pi)
            spacings.extend(gaps)
        spacings = np.asarray(spacings)

        def cdf(s):
            return np.vectorize(
                lambda x: math.erf(2 * x / math.sqrt(math.pi))
                - 4 * x / math.pi * math.exp(-4 * x * x / math.pi)
            )(s)

        _, p = stats.kstest(spacings, cdf)
        assert p > 0.01


class TestRotorQuench:
    def test_small_end_to_end(self):
        params = [R.RotorParams(n=16, k_a=k_a, k_b=k_b, b=0.0) for k_a, k_b in [(10, 14), (18, 22)]]
        curve = R.rotor_quench(
            params, 1e-2, (0.2, 0.6, 1.5), alpha_set=(1.0, 2.0),
            states_per_realization=24, master_seed=5, workers=0,
        )
        assert curve.sample_count == 48
        assert np.all(curve.mean[2.0] >= 0)
        assert np.all(curve.mean[2.0] <= 1.0)
        # entanglement grows from the first to the last grid point
        assert curve.mean[2.0][-1] > curve.mean[2.0][0]

    def test_determinism(self):
        params = [R.RotorParams(n=12, k_a=10.0, k_b=14.0, b=0.0)]
        kwargs = dict(alpha_set=(2.0,), states_per_realization=10, master_seed=9, workers=0)
        c1 = R.rotor_quench(params, 2e-2, (0.3, 1.0), **kwargs)
        c2 = R.rotor_quench(params, 2e-2, (0.3, 1.0), **kwargs)
        assert np.array_equal(c1.mean[2.0], c2.mean[2.0])

    def test_step_budget_enforced(self):
        params = [R.RotorParams(n=100, k_a=10.0, k_b=14.0, b=0.0)]
        with pytest.raises(DomainError, match="budget"):
            R.rotor_quench(params, 1e-6, (10.0,), states_per_realization=4, master_seed=1,
                           workers=0, step_budget=10**6)

    def test_fast_dtype_matches_reference(self):
        # complex64 trajectory entropies track complex128 well inside the
        # statistical tolerances used by the acceptance runs
        params = [R.RotorParams(n=32, k_a=10.0, k_b=14.0, b=0.0)]
        common = dict(alpha_set=(2.0,), states_per_realization=16, master_seed=3, workers=0)
        ref = R.rotor_quench(params, 5e-2, (0.5, 2.0), dtype="complex128", **common)
        fast = R.rotor_quench(params, 5e-2, (0.5, 2.0), dtype="complex64", **common)
        assert np.max(np.abs(ref.mean[2.0] - fast.mean[2.0])) < 1e-4
