import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bclab.algebra import ScalarField
from bclab.chamber import (
    ChamberPoint,
    ModelParams,
    in_chamber,
    inverse_log_cosh,
    log_cosh_map,
    project_A,
    rho_a,
    rho_bc,
    snap_to_chamber,
)
from bclab.errors import NotInChamber, UnsupportedExponent


class TestChamberPoint:
    def test_snaps_tiny_violations(self):
        x = ChamberPoint([1.0, 1.0 + 1e-14, -1e-15])
        assert x.coords[0] >= x.coords[1] >= x.coords[2] == 0.0

    def test_rejects_unordered(self):
        with pytest.raises(NotInChamber):
            ChamberPoint([1.0, 2.0])

    def test_rejects_negative_in_b(self):
        with pytest.raises(NotInChamber):
            ChamberPoint([1.0, -0.5])

    def test_type_a_allows_negatives(self):
        assert ChamberPoint([1.0, -0.5], "A").q == 2

    def test_immutable(self):
        x = ChamberPoint([2.0, 1.0])
        with pytest.raises(ValueError):
            x.coords[0] = 0.0

    def test_in_chamber(self):
        assert in_chamber([3.0, 2.0, 0.0])
        assert not in_chamber([3.0, -2.0])
        assert in_chamber([3.0, -2.0], "A")

    def test_snap_batch(self):
        out = snap_to_chamber(np.array([[2.0, 1.0], [1.0, 0.0]]))
        assert out.shape == (2, 2)


class TestModelParams:
    def test_rejects_small_p(self):
        with pytest.raises(UnsupportedExponent):
            ModelParams(2, "real", 3.0)

    def test_multiplicities(self):
        params = ModelParams(2, ScalarField.COMPLEX, 5.0)
        assert params.multiplicities == (3.0, 0.5, 1.0)

    def test_laplace_constants_agree_iff_real(self):
        for field in ScalarField:
            params = ModelParams(2, field, 6.0)
            same = params.laplace_const_paper == params.laplace_const_multiplicity
            assert same == (field is ScalarField.REAL)

    def test_with_p(self):
        assert ModelParams(1, "real", 3.0).with_p(9.0).p == 9.0


class TestRho:
    def test_rank_one(self):
        np.testing.assert_allclose(rho_bc(ModelParams(1, "real", 3.0)), [1.0])

    def test_rank_two_complex(self):
        np.testing.assert_allclose(rho_bc(ModelParams(2, "complex", 5.0)), [6.0, 4.0])

    @pytest.mark.parametrize("field", list(ScalarField))
    @pytest.mark.parametrize("q", [1, 2, 3, 4])
    def test_strictly_decreasing(self, field, q):
        rho = rho_bc(ModelParams(q, field, 2 * q + 0.5))
        assert np.all(np.diff(rho) < 0)

    def test_type_a(self):
        np.testing.assert_allclose(rho_a(2, 1), [0.5, -0.5])
        np.testing.assert_allclose(rho_a(1, 4), [0.0])

    @pytest.mark.parametrize("q,d", [(1, 1), (2, 2), (3, 4), (5, 1)])
    def test_type_a_sums_to_zero(self, q, d):
        assert rho_a(q, d).sum() == pytest.approx(0.0, abs=1e-12)


class TestProjection:
    def test_constant_vector(self):
        np.testing.assert_allclose(project_A([1.0, 1.0]), [0.0, 0.0])

    def test_mean_subtraction(self):
        np.testing.assert_allclose(project_A([2.0, 0.0]), [1.0, -1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6))
    def test_idempotent(self, x):
        once = project_A(np.array(x))
        np.testing.assert_allclose(project_A(once), once, atol=1e-9)


class TestLogCosh:
    def test_zero(self):
        assert log_cosh_map(ChamberPoint([0.0, 0.0])) == ChamberPoint([0.0, 0.0])

    def test_monotone(self):
        x = np.linspace(0, 30, 301)
        assert np.all(np.diff(log_cosh_map(x)) > 0)

    def test_gap_tends_to_log_two(self):
        assert 20.0 - log_cosh_map(np.array([20.0]))[0] == pytest.approx(np.log(2.0), abs=1e-8)

    def test_no_overflow(self):
        assert np.isfinite(log_cosh_map(np.array([1e4]))).all()

    def test_inverse_at_zero(self):
        assert inverse_log_cosh(np.array([0.0]))[0] == 0.0

    @pytest.mark.parametrize("t", [0.01, 0.5, 1.0, 3.0])
    def test_inverse_constant_vector(self, t):
        want = np.log(np.exp(t) + np.sqrt(np.exp(2 * t) - 1))
        np.testing.assert_allclose(inverse_log_cosh(np.full(3, t)), np.full(3, want), rtol=1e-13)

    def test_arcosh_e(self):
        assert inverse_log_cosh(np.array([1.0]))[0] == pytest.approx(1.657454, abs=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 50), min_size=1, max_size=5))
    def test_round_trip(self, x):
        x = -np.sort(-np.array(x))
        np.testing.assert_allclose(inverse_log_cosh(log_cosh_map(x)), x, rtol=0, atol=1e-10)

    def test_round_trip_on_points(self):
        y = ChamberPoint([2.0, 0.3])
        assert np.allclose(log_cosh_map(inverse_log_cosh(y)).coords, y.coords, atol=1e-12)

    def test_inverse_rejects_negative(self):
        with pytest.raises(NotInChamber):
            inverse_log_cosh(np.array([-0.1]))
