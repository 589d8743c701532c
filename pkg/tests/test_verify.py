"""Tests for the bound checkers"""

import math

import numpy as np
import pytest

from bpcalc.bernstein import DomainError, get_psi
from bpcalc.operators import FROBENIUS, TRACE, GeneratorTuple, HermitianPerturbation, make_commuting_tuple
from bpcalc.verify import (
    E_CONSTANT, BoundReport, HypothesisError, check_cor1_stability, check_cor2_lipschitz,
    check_cor3_stable, check_cor5_pointwise, check_cor9_commutator, check_cor14_shift,
    check_eq9_identity, check_example1_log, check_example1_power, check_lemma1, check_thm1,
    check_thm2_pointwise, check_thm5_commutator, check_thm6_frechet, check_thm8_trace,
    check_trace_kernel, gated_report, spectral_shift_diagonal, trace_kernel,
)


class TestBoundReport:
    """Test pass and gating semantics"""

    def test_slack(self):
        """Test the relative and absolute slack"""
        assert BoundReport('x', 1.0 + 5e-9, 1.0).passed
        assert not BoundReport('x', 1.0 + 1e-6, 1.0).passed
        assert BoundReport('x', 1e-13, 0.0).passed

    def test_nan_never_passes(self):
        """Test that NaN sides fail"""
        assert not BoundReport('x', math.nan, 1.0).passed

    def test_gated_report(self):
        """Test that gated reports are neither passing nor violating"""
        report = gated_report('cor2', HypothesisError('no', [('finite_moments', False)]))
        assert not report.hypotheses_met
        assert not report.passed
        assert report.details['reason'] == 'no'

    def test_flatten(self):
        """Test that subchecks flatten after their parent"""
        child = BoundReport('child', 0.0, 1.0)
        parent = BoundReport('parent', 0.0, 1.0, subchecks=(child,))
        assert [r.name for r in parent.flatten()] == ['parent', 'child']


class TestPerturbationBounds:
    """Test the moduli and Lipschitz bounds on known instances"""

    def test_thm1_diagonal(self, sqrt_psi, diag_pair):
        """Test the moduli bound for sqrt on diag(-1, -3) and diag(-2, -1)"""
        A, B = diag_pair
        report = check_thm1(sqrt_psi, A, B)
        assert report.lhs == pytest.approx(math.sqrt(3.0) - 1.0, abs=1e-8)
        assert report.rhs == pytest.approx(E_CONSTANT, abs=1e-10)
        assert report.rhs == pytest.approx(3.16395, abs=1e-5)
        assert report.passed

    @pytest.mark.parametrize('name', ['sqrt', 'log', 'rat', 'sum:sqrt+log'])
    def test_thm1_factory(self, name):
        """Test the moduli bound on seeded factory pairs"""
        psi = get_psi(name)
        A = make_commuting_tuple(psi.n, 3, seed=3, kappa_max=3.0)
        B = make_commuting_tuple(psi.n, 3, seed=4, kappa_max=3.0)
        assert check_thm1(psi, A, B, seed=3).passed

    @pytest.mark.parametrize('c', [0.25, 4.0])
    def test_thm1_scale_covariance(self, sqrt_psi, c):
        """Test that rescaling (A, B) by c rescales the distances and keeps the pass status"""
        A = make_commuting_tuple(1, 3, seed=3, kappa_max=3.0)
        B = make_commuting_tuple(1, 3, seed=4, kappa_max=3.0)
        base = check_thm1(sqrt_psi, A, B)
        scaled = check_thm1(sqrt_psi, A.scaled(c), B.scaled(c))
        assert scaled.details['distances'][0] == pytest.approx(c * base.details['distances'][0])
        # sqrt is homogeneous of degree 1/2
        assert scaled.lhs == pytest.approx(math.sqrt(c) * base.lhs, rel=1e-6)
        assert scaled.passed == base.passed

    def test_example1_power(self, scalar_pair):
        """Test the fractional power example"""
        report = check_example1_power(0.5, *scalar_pair)
        assert report.lhs == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-8)
        assert report.rhs == pytest.approx(math.sqrt(2.0) * math.e / (math.e - 1.0))
        assert report.passed

    def test_example1_log(self, scalar_pair):
        """Test the logarithm example"""
        report = check_example1_log(*scalar_pair)
        assert report.lhs == pytest.approx(math.log(1.5), abs=1e-8)
        assert report.rhs == pytest.approx(E_CONSTANT * math.log(1.5))
        assert report.passed

    def test_cor1_sequence(self, log_psi):
        """Test convergence along A_k -> B"""
        B = GeneratorTuple.diagonal([-2.0, -1.0])
        sequence = [GeneratorTuple.diagonal([-2.0 + 2.0 ** -k, -1.0 - 2.0 ** -k]) for k in range(1, 6)]
        report = check_cor1_stability(log_psi, B, sequence)
        assert report.lhs <= 1.0
        assert report.details['bounds_decreasing']
        assert report.passed

    def test_cor2_rat(self, rat_psi, scalar_pair):
        """Test the Lipschitz bound for rat on diag(-1), diag(-2)"""
        report = check_cor2_lipschitz(rat_psi, *scalar_pair)
        assert report.name == 'cor2'
        assert report.lhs == pytest.approx(1.0 / 6.0, abs=1e-8)
        assert report.rhs == pytest.approx(1.0)
        assert report.passed

    def test_cor2_gated_for_sqrt(self, sqrt_psi, scalar_pair):
        """Test that psi'(-0) = inf gates the Lipschitz bound"""
        with pytest.raises(HypothesisError) as info:
            check_cor2_lipschitz(sqrt_psi, *scalar_pair)
        assert ('finite_moments', False) in info.value.hypotheses

    def test_thm4_in_ideals(self, log_psi):
        """Test that non-operator ideals report as thm4"""
        A = make_commuting_tuple(1, 4, seed=1, kappa_max=2.0)
        B = make_commuting_tuple(1, 4, seed=2, kappa_max=2.0)
        for J in (TRACE, FROBENIUS):
            report = check_cor2_lipschitz(log_psi, A, B, J)
            assert report.name == 'thm4'
            assert report.norm == J.label
            assert report.passed

    def test_cor3_sqrt(self, sqrt_psi, scalar_pair):
        """Test the stable bound for sqrt with omega = -1"""
        report = check_cor3_stable(sqrt_psi, *scalar_pair)
        assert report.details['omega'] == [-1.0]
        assert report.rhs == pytest.approx(0.5, abs=1e-8)
        assert report.lhs == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-8)
        assert report.passed

    def test_cor3_log(self, log_psi):
        """Test the stable bound for log on diag(-1), diag(-3)"""
        A, B = GeneratorTuple.diagonal([-1.0]), GeneratorTuple.diagonal([-3.0])
        report = check_cor3_stable(log_psi, A, B)
        assert report.lhs == pytest.approx(math.log(2.0), abs=1e-8)
        assert report.rhs == pytest.approx(1.0, abs=1e-8)
        assert report.passed

    def test_cor8_in_ideals(self, sqrt_psi, diag_pair):
        """Test the stable bound in the trace ideal"""
        report = check_cor3_stable(sqrt_psi, *diag_pair, TRACE)
        assert report.name == 'cor8'
        assert report.passed

    def test_uncertified_input_gated(self, rat_psi, scalar_pair):
        """Test that user matrices fail the certification hypothesis"""
        user = GeneratorTuple.from_matrices([np.array([[-1.0]])], bound_m=1.0)
        with pytest.raises(HypothesisError):
            check_cor2_lipschitz(rat_psi, user, scalar_pair[1])


class TestPointwiseBounds:
    """Test the vector bounds"""

    def test_cor4_sqrt(self, sqrt_psi):
        """Test the B = 0 case for sqrt on diag(-4) and x = e1"""
        report = check_thm2_pointwise(sqrt_psi, GeneratorTuple.diagonal([-4.0]), None, [1.0])
        assert report.name == 'cor4'
        assert report.lhs == pytest.approx(2.0, abs=1e-8)
        assert report.rhs == pytest.approx(E_CONSTANT * math.sqrt(2.0))
        assert report.rhs == pytest.approx(4.474, abs=1e-3)
        assert report.passed

    def test_thm2_commuting_pair(self, log_psi):
        """Test the pointwise bound on a commuting pair"""
        A, B = GeneratorTuple.diagonal([-1.0, -3.0]), GeneratorTuple.diagonal([-2.0, -3.0])
        report = check_thm2_pointwise(log_psi, A, B, [1.0, 1.0])
        assert report.name == 'thm2'
        assert report.passed

    def test_thm2_needs_commuting_pair(self, log_psi):
        """Test the cross-commutation hypothesis"""
        A = make_commuting_tuple(1, 3, seed=1)
        B = make_commuting_tuple(1, 3, seed=2)
        with pytest.raises(HypothesisError):
            check_thm2_pointwise(log_psi, A, B, np.ones(3))

    def test_cor5_rat(self, rat_psi):
        """Test the pointwise Lipschitz bound"""
        report = check_cor5_pointwise(rat_psi, GeneratorTuple.diagonal([-1.0]), None, [1.0])
        assert report.lhs == pytest.approx(0.5, abs=1e-8)
        assert report.rhs == pytest.approx(1.0)
        assert report.passed


class TestCommutatorBounds:
    """Test commutator estimates against unitary groups"""

    def test_cor9_swap(self, swap_hermitian):
        """Test ||[A, H]||_Trace = 2 for A = diag(-1, -2)"""
        report = check_cor9_commutator(np.diag([-1.0, -2.0]), swap_hermitian, 1.0)
        assert report.rhs == pytest.approx(2.0)
        assert report.passed

    def test_lemma1(self, swap_hermitian):
        """Test the integral identity and its commutator subcheck"""
        report = check_lemma1(GeneratorTuple.diagonal([-1.0, -2.0]), swap_hermitian, 0.8)
        assert report.passed
        assert [sub.name for sub in report.subchecks] == ['cor9']
        assert report.subchecks[0].passed

    def test_thm5_rat(self, rat_psi, swap_hermitian):
        """Test ||[psi(A), H]|| for rat on diag(-1, -2)"""
        report = check_thm5_commutator(rat_psi, GeneratorTuple.diagonal([-1.0, -2.0]), swap_hermitian)
        assert report.lhs == pytest.approx(1.0 / 6.0, abs=1e-8)
        assert report.rhs == pytest.approx(1.0)
        assert report.passed
        assert report.subchecks[0].name == 'conjugation'
        assert report.subchecks[0].passed

    def test_thm5_stable_admits_sqrt(self, sqrt_psi):
        """Test the stable variant on a factory tuple"""
        A = make_commuting_tuple(1, 3, seed=5, kappa_max=2.0)
        H = HermitianPerturbation.random(3, seed=5)
        with pytest.raises(HypothesisError):
            check_thm5_commutator(sqrt_psi, A, H)
        report = check_thm5_commutator(sqrt_psi, A, H, stable=True)
        assert report.name == 'thm5_stable'
        assert report.passed


class TestDifferentiability:
    """Test the Frechet remainder and the divided-difference identity"""

    def test_thm6_rat_partner(self, rat_psi):
        """Test the quadratic remainder for rat at diag(-1) and delta = diag(-0.1)"""
        A = GeneratorTuple.diagonal([-1.0])
        reports = check_thm6_frechet(rat_psi, A, [GeneratorTuple.diagonal([-1.1])])
        by_name = {r.name: r for r in reports}
        assert by_name['thm7'].lhs == pytest.approx(0.525 - 1.1 / 2.1, abs=1e-9)
        assert by_name['thm7'].lhs == pytest.approx(1.190e-3, abs=1e-5)
        assert by_name['thm7'].rhs == pytest.approx(0.01)
        assert by_name['thm7'].details['M_power'] == 3
        assert by_name['thm7'].passed
        assert by_name['thm6'].rhs >= 0.9
        assert by_name['thm6'].passed

    def test_thm6_matrix_delta_gates_remainder(self, rat_psi):
        """Test that an uncertified shift gates the quantitative remainder"""
        A = GeneratorTuple.diagonal([-1.0, -2.0])
        reports = check_thm6_frechet(rat_psi, A, [np.array([[-0.05, 0.02], [0.0, -0.05]])])
        thm7 = next(r for r in reports if r.name == 'thm7')
        assert not thm7.hypotheses_met
        assert next(r for r in reports if r.name == 'thm6').passed

    def test_eq9_identity(self, rat_psi):
        """Test the divided-difference identity on a non-commuting pair"""
        A1 = make_commuting_tuple(1, 3, seed=1, kappa_max=2.0)
        A2 = make_commuting_tuple(1, 3, seed=2, kappa_max=2.0)
        report = check_eq9_identity(rat_psi, A1, A2)
        assert report.passed
        assert report.subchecks[0].name == 'phi_diagonal'
        assert report.subchecks[0].passed

    def test_eq9_gated_for_sqrt(self, sqrt_psi, scalar_pair):
        """Test that psi'(-0) = inf gates the identity"""
        with pytest.raises(HypothesisError):
            check_eq9_identity(sqrt_psi, *scalar_pair)


class TestTraceFormula:
    """Test the trace kernel, the trace formula and the spectral shift"""

    def test_kernel_at_one(self, scalar_pair):
        """Test f(1) = e^-1 - e^-2 for diag(-1), diag(-2)"""
        A, B = scalar_pair
        value = trace_kernel(A, B, 1.0)
        assert value == pytest.approx(math.exp(-1.0) - math.exp(-2.0), abs=1e-12)
        assert trace_kernel(A, B, 1.0, method='segment') == pytest.approx(value, abs=1e-10)

    def test_kernel_domain(self, scalar_pair):
        """Test that Re z <= 0 is rejected"""
        with pytest.raises(DomainError):
            trace_kernel(*scalar_pair, -1.0)

    def test_check_trace_kernel(self):
        """Test the kernel checks on a non-commuting factory pair"""
        A = make_commuting_tuple(1, 3, seed=1, kappa_max=2.0)
        B = make_commuting_tuple(1, 3, seed=2, kappa_max=2.0)
        report = check_trace_kernel(A, B)
        assert all(row.passed for row in report.flatten())

    def test_thm8_rat(self, rat_psi, scalar_pair):
        """Test the trace formula for rat: tr(psi(A) - psi(B)) = 1/6"""
        report = check_thm8_trace(rat_psi, *scalar_pair)
        assert complex(report.details['trace']).real == pytest.approx(1.0 / 6.0, abs=1e-8)
        assert report.passed
        assert report.subchecks[0].passed

    def test_shift_function(self):
        """Test xi for diag(-1, -3) against diag(-2, -2)"""
        xi = spectral_shift_diagonal(np.diag([-1.0, -3.0]), np.diag([-2.0, -2.0]))
        assert xi.breakpoints == (1.0, 2.0, 3.0)
        assert xi.heights == (1, -1)
        assert xi.integrate(lambda t: 1.0) == pytest.approx(0.0)

    def test_shift_rejects_non_diagonal(self):
        """Test that non-diagonal input has no step shift function"""
        with pytest.raises(DomainError):
            spectral_shift_diagonal(np.array([[-1.0, 1.0], [0.0, -1.0]]), np.diag([-1.0, -1.0]))

    def test_shift_sqrt(self, sqrt_psi, scalar_pair):
        """Test the shift pairing for sqrt"""
        report = check_cor14_shift(sqrt_psi, *scalar_pair)
        assert report.name == 'cor14'
        assert report.details['pairing'] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-10)
        assert report.details['closed_pairing'] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-12)
        assert report.details['pairing_gap'] <= 1e-10
        assert report.passed

    def test_shift_log_integrates_derivative(self, log_psi, diag_pair):
        """Test the pairing int 1/(1 + t) xi(t) dt = log(3/2) - log(2) on overlapping panels"""
        report = check_cor14_shift(log_psi, *diag_pair)
        assert report.details['pairing'] == pytest.approx(math.log(0.75), abs=1e-10)
        assert complex(report.details['trace']).real == pytest.approx(math.log(0.75), abs=1e-8)
        assert report.passed

    def test_shift_poisson_test_space(self, poisson_psi, diag_pair):
        """Test that the Poisson entry reports under the test-space name"""
        report = check_cor14_shift(poisson_psi, *diag_pair)
        assert report.name == 'cor13'
        assert report.passed
