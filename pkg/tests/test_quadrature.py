import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepenergy import autodiff as ad
from deepenergy.quadrature import build_grid, integrate, trapezoid_weights_1d


class TestGrid:
    def test_n2_lattice(self):
        g = build_grid(2)
        assert len(g) == 8
        np.testing.assert_allclose(g.weights, 0.125)

    def test_n1_rejected(self):
        with pytest.raises(ValueError, match="grid must have n >= 2"):
            build_grid(1)

    def test_ordering_last_index_fastest(self):
        g = build_grid(3)
        np.testing.assert_array_equal(g.points[:3], [[0, 0, 0], [0, 0, 0.5], [0, 0, 1]])

    @pytest.mark.parametrize("n", [2, 5, 11, 25])
    def test_weights_sum_to_volume(self, n):
        assert build_grid(n).weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_weights_1d(self):
        np.testing.assert_allclose(trapezoid_weights_1d(5), [0.125, 0.25, 0.25, 0.25, 0.125])

    def test_face_lattice(self):
        pts, w = build_grid(4).face("x3+")
        assert pts.shape == (16, 3)
        assert np.all(pts[:, 2] == 1.0)
        assert w.sum() == pytest.approx(1.0)

    def test_bad_face(self):
        with pytest.raises(ValueError):
            build_grid(3).face("x4+")

    def test_points_read_only(self):
        with pytest.raises(ValueError):
            build_grid(3).points[0, 0] = 2.0


class TestRule:
    @pytest.mark.parametrize("n", [2, 3, 7, 11])
    def test_multilinear_exact(self, n):
        g = build_grid(n)
        X = g.points
        assert abs(g.integrate(X[:, 0] * X[:, 1] * X[:, 2]) - 0.125) <= 1e-13
        assert abs(g.integrate(1 + 2 * X[:, 0] - X[:, 1] * X[:, 2]) - 1.75) <= 1e-13

    @pytest.mark.parametrize("n", [3, 5, 9])
    def test_quadratic_error_term(self, n):
        g = build_grid(n)
        assert g.integrate(g.points[:, 0] ** 2) == pytest.approx(1 / 3 + g.h**2 / 6, abs=1e-14)

    def test_second_order_convergence(self):
        ns = [5, 9, 17, 33]
        errs = []
        for n in ns:
            g = build_grid(n)
            errs.append(abs(g.integrate(np.exp(g.points.sum(axis=1))) - (np.e - 1) ** 3))
        slope = np.polyfit(np.log([1 / (n - 1) for n in ns]), np.log(errs), 1)[0]
        assert abs(slope - 2.0) <= 0.1

    def test_sine_convergence_slope(self):
        ns = [5, 9, 17, 33]
        errs = [abs(build_grid(n).integrate(np.sin(np.pi * build_grid(n).points[:, 0])) - 2 / np.pi) for n in ns]
        slope = np.polyfit(np.log([1 / (n - 1) for n in ns]), np.log(errs), 1)[0]
        assert abs(slope - 2.0) <= 0.1

    def test_integrate_on_tape(self):
        g = build_grid(3)
        tape = ad.Tape()
        v = tape.variable(np.ones(len(g)))
        (grad,) = tape.backward(g.integrate(ad.square(v)))
        np.testing.assert_allclose(grad, 2 * g.weights)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="grid points"):
            integrate(np.ones(5), build_grid(2).weights)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.lists(st.floats(-5, 5), min_size=8, max_size=8))
def test_trilinear_exact_property(n, c):
    g = build_grid(n)
    x, y, z = g.points.T
    f = c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * y + c[5] * y * z + c[6] * x * z + c[7] * x * y * z
    exact = c[0] + (c[1] + c[2] + c[3]) / 2 + (c[4] + c[5] + c[6]) / 4 + c[7] / 8
    assert abs(g.integrate(f) - exact) <= 1e-12
