import numpy as np
import pytest

from deepenergy import autodiff as ad
from deepenergy.network import (
    DEFAULT_LAYERS,
    NetworkParams,
    apply_ansatz,
    forward,
    forward_with_jacobian,
    simple_shear_bc,
    spatial_jacobian,
    uniaxial_strain_bc,
    uniaxial_stress_bc,
)

SMALL = (3, 5, 4, 3)


def naive_forward(x, layers, activation):
    """Per-point loop forward pass, used as an independent oracle."""
    act = np.tanh if activation == "tanh" else (lambda z: np.maximum(z, 0.0))
    out = []
    for p in x:
        y = list(p)
        for l, (W, b) in enumerate(layers):
            z = [sum(y[i] * W[i, j] for i in range(W.shape[0])) + b[j] for j in range(W.shape[1])]
            y = z if l == len(layers) - 1 else [float(act(v)) for v in z]
        out.append(y)
    return np.array(out)


def boundary_points(rng, n):
    X = rng.uniform(0, 1, size=(n, 3))
    face = rng.integers(0, 6, size=n)
    X[np.arange(n), face // 2] = (face % 2).astype(float)
    return X


class TestParams:
    def test_count_default_network(self):
        assert NetworkParams.count(DEFAULT_LAYERS) == 3 * 40 + 40 + 5 * (40 * 40 + 40) + 40 * 3 + 3

    def test_layers_are_views(self):
        p = NetworkParams(SMALL)
        p.layers()[0][0][...] = 1.0
        assert p.flat[:15].sum() == 15.0

    def test_glorot_is_seeded(self):
        a = NetworkParams.glorot(SMALL, 3).flat
        b = NetworkParams.glorot(SMALL, 3).flat
        assert np.array_equal(a, b)
        assert not np.array_equal(a, NetworkParams.glorot(SMALL, 4).flat)

    def test_glorot_bounds_and_zero_bias(self):
        p = NetworkParams.glorot(SMALL, 0)
        for W, b in p.layers():
            assert np.all(np.abs(W) <= np.sqrt(6.0 / sum(W.shape)))
            assert np.all(b == 0.0)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError, match="length"):
            NetworkParams(SMALL, np.zeros(3))


class TestForward:
    def test_zero_network_is_zero(self, rng):
        X = rng.uniform(size=(10, 3))
        assert np.all(forward(X, NetworkParams(SMALL).layers()) == 0.0)

    def test_output_bias_passes_through(self, rng):
        p = NetworkParams(SMALL)
        p.layers()[-1][1][...] = [0.5, -1.0, 2.0]
        y = forward(rng.uniform(size=(4, 3)), p.layers(), "tanh")
        np.testing.assert_array_equal(y, np.tile([0.5, -1.0, 2.0], (4, 1)))

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_matches_naive_loop(self, rng, activation):
        for seed in range(10):
            layers = NetworkParams.glorot(SMALL, seed).layers()
            for W, b in layers:
                b[...] = rng.normal(scale=0.3, size=b.shape)
            X = rng.uniform(size=(3, 3))
            np.testing.assert_allclose(forward(X, layers, activation), naive_forward(X, layers, activation), rtol=0, atol=1e-14)

    def test_unknown_activation(self):
        with pytest.raises(ValueError, match="activation"):
            forward(np.zeros((1, 3)), NetworkParams(SMALL).layers(), "sigmoid")

    def test_bad_point_shape(self):
        with pytest.raises(ad.ShapeError):
            forward(np.zeros((4, 2)), NetworkParams(SMALL).layers())


class TestJacobian:
    def test_tanh_matches_central_differences(self, rng):
        layers = NetworkParams.glorot(DEFAULT_LAYERS, 1).layers()
        X = rng.uniform(size=(20, 3))
        J = spatial_jacobian(X, layers, "tanh")
        h = 1e-6
        for a in range(3):
            dX = np.zeros(3)
            dX[a] = h
            fd = (forward(X + dX, layers, "tanh") - forward(X - dX, layers, "tanh")) / (2 * h)
            np.testing.assert_allclose(J[:, :, a], fd, rtol=0, atol=1e-8)

    def test_relu_matches_differences_away_from_kinks(self, rng):
        layers = NetworkParams.glorot(SMALL, 2).layers()
        X = rng.uniform(size=(30, 3))
        J = spatial_jacobian(X, layers, "relu")
        h = 1e-7
        for a in range(3):
            dX = np.zeros(3)
            dX[a] = h
            fd = (forward(X + dX, layers, "relu") - forward(X - dX, layers, "relu")) / (2 * h)
            np.testing.assert_allclose(J[:, :, a], fd, rtol=0, atol=1e-6)

    def test_linear_network_jacobian_is_product_of_weights(self, rng):
        p = NetworkParams.glorot((3, 3), 0)
        W, _ = p.layers()[0]
        J = spatial_jacobian(rng.uniform(size=(5, 3)), p.layers())
        np.testing.assert_allclose(J, np.broadcast_to(W.T, (5, 3, 3)))

    def test_parameter_gradient_through_jacobian(self, rng):
        p = NetworkParams.glorot(SMALL, 5)
        X = rng.uniform(size=(8, 3))

        def loss_value(flat):
            y, J = forward_with_jacobian(X, p.layers(flat), "tanh")
            return float(np.sum(y**2) + np.sum(J**2))

        tape = ad.Tape()
        leaves = [(tape.variable(W), tape.variable(b)) for W, b in p.layers()]
        y, J = forward_with_jacobian(X, leaves, "tanh")
        root = ad.sum(ad.square(y)) + ad.sum(ad.square(J))
        grads = np.concatenate([g.ravel() for g in tape.backward(root, [q for pair in leaves for q in pair])])
        h = 1e-6
        fd = np.empty_like(p.flat)
        for i in range(p.flat.size):
            e = np.zeros_like(p.flat)
            e[i] = h
            fd[i] = (loss_value(p.flat + e) - loss_value(p.flat - e)) / (2 * h)
        assert np.max(np.abs(grads - fd)) / np.max(np.abs(fd)) <= 1e-7


class TestAnsatz:
    @pytest.fixture
    def raw(self, rng):
        layers = NetworkParams.glorot(SMALL, 9).layers()
        for W, b in layers:
            b[...] = rng.normal(size=b.shape)
        return layers

    def test_uniaxial_stress_faces(self, rng, raw):
        bc = uniaxial_stress_bc(0.3)
        X = boundary_points(rng, 1000)
        u, _ = apply_ansatz(X, forward(X, raw, "tanh"), None, bc)
        on_x1_0 = X[:, 0] == 0.0
        on_x1_1 = X[:, 0] == 1.0
        assert np.all(u[on_x1_0, 0] == 0.0)
        assert np.max(np.abs(u[on_x1_1, 0] - 0.3)) <= 1e-12
        assert np.all(u[X[:, 1] == 0.0, 1] == 0.0)
        assert np.all(u[X[:, 2] == 0.0, 2] == 0.0)

    def test_uniaxial_strain_faces(self, rng, raw):
        bc = uniaxial_strain_bc(0.3)
        X = boundary_points(rng, 1000)
        u, _ = apply_ansatz(X, forward(X, raw, "tanh"), None, bc)
        for i in range(3):
            assert np.all(u[X[:, i] == 0.0, i] == 0.0)
        assert np.all(u[X[:, 1] == 1.0, 1] == 0.0)
        assert np.all(u[X[:, 2] == 1.0, 2] == 0.0)
        assert np.max(np.abs(u[X[:, 0] == 1.0, 0] - 0.3)) <= 1e-12

    def test_shear_whole_boundary(self, rng, raw):
        bc = simple_shear_bc(0.5)
        X = boundary_points(rng, 1000)
        u, _ = apply_ansatz(X, forward(X, raw, "tanh"), None, bc)
        expected = np.zeros_like(X)
        expected[:, 0] = 0.5 * X[:, 1]
        assert np.max(np.abs(u - expected)) <= 1e-12

    @pytest.mark.parametrize("factory", [uniaxial_stress_bc, uniaxial_strain_bc, simple_shear_bc])
    def test_ansatz_gradient_matches_differences(self, rng, raw, factory):
        bc = factory(0.2)
        X = rng.uniform(size=(15, 3))
        _, G = apply_ansatz(X, *forward_with_jacobian(X, raw, "tanh"), bc)
        h = 1e-6

        def u(Y):
            return apply_ansatz(Y, forward(Y, raw, "tanh"), None, bc)[0]

        for a in range(3):
            dX = np.zeros(3)
            dX[a] = h
            np.testing.assert_allclose(G[:, :, a], (u(X + dX) - u(X - dX)) / (2 * h), rtol=0, atol=1e-8)

    def test_zero_network_gives_affine_field(self, rng):
        X = rng.uniform(size=(6, 3))
        layers = NetworkParams(SMALL).layers()
        u, G = apply_ansatz(X, *forward_with_jacobian(X, layers), simple_shear_bc(0.4))
        np.testing.assert_allclose(u[:, 0], 0.4 * X[:, 1])
        assert np.all(G[:, 0, 1] == 0.4)
