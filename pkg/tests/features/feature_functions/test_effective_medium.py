import numpy as np
import pytest

from src.features.feature_functions import dem, dem_array, dem_residual, mga, sca
from src.features.feature_functions.effective_medium import check_bounds, effective_conductivity, phase_assignment
from src.shared.errors import DomainError, NumericError

FORMULAS = [mga, sca, dem]


@pytest.mark.unit
class TestMaxwellGarnett:
    def test_reference_value(self):
        assert mga(1.0, 10.0, 0.2) == pytest.approx(12.8 / 9.2, rel=1e-12)

    def test_limits(self):
        assert mga(1.0, 10.0, 0.0) == 1.0
        assert mga(1.0, 10.0, 1.0) == 10.0

    def test_broadcasts(self):
        values = mga(1.0, 10.0, np.array([0.0, 0.2, 1.0]))
        np.testing.assert_allclose(values, [1.0, 12.8 / 9.2, 10.0])


@pytest.mark.unit
class TestSelfConsistent:
    def test_symmetric_fraction(self):
        assert sca(1.0, 10.0, 0.5) == pytest.approx(np.sqrt(10.0), rel=1e-12)

    def test_empty_inclusions(self):
        assert sca(2.0, 7.0, 0.0) == 2.0

    def test_phase_inversion_symmetry(self):
        for phi in np.linspace(0.0, 1.0, 10):
            for contrast in np.logspace(-2, 2, 10):
                assert sca(1.0, contrast, phi) == pytest.approx(sca(contrast, 1.0, 1.0 - phi), rel=1e-10)


class TestDifferentialEffectiveMedium:
    def test_limits(self):
        assert dem(1.0, 10.0, 0.0) == 1.0
        assert dem(1.0, 10.0, 1.0) == 10.0

    def test_root_satisfies_equation(self):
        value = dem(1.0, 10.0, 0.2)
        assert abs(dem_residual(value, 1.0, 10.0, 0.2)) < 1e-10

    def test_matches_bisection(self):
        lo, hi = 1.0, 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            # residual decreases in the effective conductivity
            if dem_residual(mid, 1.0, 10.0, 0.2) > 0:
                lo = mid
            else:
                hi = mid
        assert dem(1.0, 10.0, 0.2) == pytest.approx(0.5 * (lo + hi), rel=1e-10)

    def test_low_conducting_inclusions(self):
        value = dem(10.0, 1.0, 0.3)
        assert 1.0 < value < 10.0
        assert abs(dem_residual(value, 10.0, 1.0, 0.3)) < 1e-10

    def test_vectorized(self):
        values = dem_array(1.0, 10.0, np.array([0.0, 0.5, 1.0]))
        assert values.shape == (3,)
        assert values[0] == 1.0
        assert values[2] == 10.0


class TestSharedProperties:
    @pytest.mark.parametrize("formula", FORMULAS)
    def test_within_phase_bounds(self, formula):
        for contrast in [*np.logspace(-2, 2, 10), 50.0, 0.31 / 0.3]:
            for phi in np.linspace(0.0, 1.0, 10):
                value = formula(1.0, contrast, phi)
                assert min(1.0, contrast) <= value <= max(1.0, contrast)

    def test_out_of_bounds_estimate_raises(self):
        with pytest.raises(NumericError, match="phase bounds"):
            check_bounds(np.array([2.0, 10.5]), np.array(1.0), np.array(10.0), "Maxwell-Garnett")
        with pytest.raises(NumericError):
            check_bounds(np.array(np.nan), np.array(1.0), np.array(10.0), "Self-consistent")

    def test_rounding_excess_is_trimmed(self):
        trimmed = check_bounds(np.array([10.0 * (1 + 1e-15), 1.0]), np.array(1.0), np.array(10.0), "mga")
        np.testing.assert_array_equal(trimmed, [10.0, 1.0])

    @pytest.mark.parametrize("formula", FORMULAS)
    def test_monotone_in_fraction(self, formula):
        values = [formula(1.0, 10.0, phi) for phi in np.arange(0.0, 1.0001, 0.01)]
        assert np.all(np.diff(values) >= 0)

    @pytest.mark.parametrize("formula", FORMULAS)
    def test_equal_phases(self, formula):
        assert formula(4.2, 4.2, 0.3) == 4.2

    @pytest.mark.parametrize("formula", FORMULAS)
    def test_rejects_invalid_inputs(self, formula):
        with pytest.raises(DomainError):
            formula(0.0, 10.0, 0.2)
        with pytest.raises(DomainError):
            formula(1.0, 10.0, 1.5)


class TestPhaseAssignment:
    def test_auto_uses_minority_as_inclusion(self):
        assert phase_assignment(10.0, 1.0, 0.2) == (1.0, 10.0, 0.2)
        assert phase_assignment(10.0, 1.0, 0.7) == pytest.approx((10.0, 1.0, 0.3))

    def test_explicit_matrix(self):
        assert phase_assignment(10.0, 1.0, 0.2, "high") == pytest.approx((10.0, 1.0, 0.8))

    def test_unknown_matrix(self):
        with pytest.raises(DomainError):
            phase_assignment(10.0, 1.0, 0.2, "middle")

    def test_homogeneous_high_field(self):
        for formula in ("mga", "sca", "dem"):
            assert effective_conductivity(formula, 10.0, 1.0, 1.0) == 10.0

    def test_unknown_formula(self):
        with pytest.raises(DomainError):
            effective_conductivity("hashin", 10.0, 1.0, 0.2)
