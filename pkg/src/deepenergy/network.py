"""Fully connected displacement network with hard essential-BC ansatz.

The displacement is ``u(X) = A(X) + B(X) * y(X)`` with ``y`` the raw network
output.  ``A`` carries the prescribed displacement and ``B`` vanishes
componentwise on the constrained faces, so essential conditions hold exactly
for any parameters.

The spatial Jacobian of the network is propagated layer by layer alongside
the forward pass and recorded on the same tape, which keeps it
differentiable with respect to the parameters without second-order
machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad

DEFAULT_LAYERS = (3, 40, 40, 40, 40, 40, 40, 3)
ACTIVATIONS = ("relu", "tanh")


class NetworkParams:
    """Weights and biases of an MLP stored in one flat float64 vector.

    Layer ``l`` owns a weight matrix of shape ``(n_in, n_out)`` (so a layer
    maps row vectors, ``z = y @ W + b``) followed by its bias.  :meth:`layers`
    returns views into :attr:`flat`.
    """

    def __init__(self, sizes: Sequence[int], flat: np.ndarray | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.sizes}")
        n = self.count(self.sizes)
        if flat is None:
            flat = np.zeros(n)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (n,):
            raise ValueError(f"flat parameter vector must have length {n}, got {flat.shape}")
        self.flat = flat

    @staticmethod
    def count(sizes: Sequence[int]) -> int:
        return int(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))

    def __len__(self):
        return self.flat.size

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.sizes, self.flat.copy())

    def layers(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        flat = self.flat if flat is None else flat
        out = []
        k = 0
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            W = flat[k : k + n_in * n_out].reshape(n_in, n_out)
            k += n_in * n_out
            b = flat[k : k + n_out]
            k += n_out
            out.append((W, b))
        return out

    @classmethod
    def glorot(cls, sizes: Sequence[int], seed: int = 0) -> "NetworkParams":
        """Glorot-uniform weights from a seeded generator, zero biases."""
        params = cls(sizes)
        rng = np.random.default_rng(seed)
        for W, b in params.layers():
            limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-limit, limit, size=W.shape)
            b[...] = 0.0
        return params


def flatten(parts) -> np.ndarray:
    return np.concatenate([np.ravel(p) for pair in parts for p in pair])


def forward(X, layers, activation: str = "relu"):
    """Raw output ``y`` for points ``X`` of shape ``(n, 3)``."""
    return forward_with_jacobian(X, layers, activation, jacobian=False)[0]


def spatial_jacobian(X, layers, activation: str = "relu"):
    """``dy_i/dX_a`` as an ``(n, 3, 3)`` stack indexed ``[i, a]``."""
    return forward_with_jacobian(X, layers, activation)[1]


def forward_with_jacobian(X, layers, activation: str = "relu", jacobian: bool = True):
    """Forward pass with the exact layer-wise chain-rule Jacobian.

    ``layers`` is a sequence of ``(W, b)`` pairs, either arrays or tape nodes.
    Hidden layers use ``activation``; the output layer is linear.
    """
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ad.value(layers[0][0]).shape[0]:
        raise ad.ShapeError(f"forward: points must have shape (n, {ad.value(layers[0][0]).shape[0]}), got {X.shape}")
    n = X.shape[0]
    y = X
    # T[p, a, j] = d y_j / d X_a at point p
    T = None
    last = len(layers) - 1
    for l, (W, b) in enumerate(layers):
        z = ad.matmul(y, W) + b
        if jacobian:
            T = W if T is None else ad.matmul(T, W)
        if l == last:
            y = z
            break
        width = ad.value(z).shape[-1]
        if activation == "relu":
            y = ad.relu(z)
            if jacobian:
                mask = (ad.value(z) > 0.0).astype(np.float64).reshape(n, 1, width)
                T = T * mask
        else:
            y = ad.tanh(z)
            if jacobian:
                slope = 1.0 - ad.square(y)
                T = T * ad.reshape(slope, (n, 1, width))
    if not jacobian:
        return y, None
    if ad.value(T).ndim == 2:
        # purely linear network: same Jacobian at every point
        T = T + np.zeros((n, 1, 1))
    return y, ad.transpose(T)


FieldFn = Callable[[np.ndarray], np.ndarray]

FACES = ("x1-", "x1+", "x2-", "x2+", "x3-", "x3+")


@dataclass
class BCSpec:
    """Closed-form ansatz fields plus the traction list.

    ``A``/``B`` map points ``(n, 3)`` to ``(n, 3)``; ``grad_A``/``grad_B`` return
    ``(n, 3, 3)`` stacks ``[i, a] = d field_i / d X_a``.  ``tractions`` pairs a
    face id from :data:`FACES` with a constant traction vector.
    """

    A: FieldFn
    grad_A: FieldFn
    B: FieldFn
    grad_B: FieldFn
    tractions: list[tuple[str, np.ndarray]] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        for face, t in self.tractions:
            if face not in FACES:
                raise ValueError(f"unknown face {face!r}")
            if np.shape(t) != (3,):
                raise ValueError(f"traction on {face} must be a 3-vector")


def apply_ansatz(X, y, grad_y, bc: BCSpec):
    """Return ``(u, grad_u)`` for ``u = A + B * y`` by the product rule."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    A, B = bc.A(X), bc.B(X)
    u = A + B * y
    if grad_y is None:
        return u, None
    grad_u = bc.grad_A(X) + bc.grad_B(X) * ad.reshape(y, (n, 3, 1)) + B.reshape(n, 3, 1) * grad_y
    return u, grad_u


def _zeros3(X):
    return np.zeros((X.shape[0], 3, 3))


def uniaxial_stress_bc(stretch_disp: float) -> BCSpec:
    """``u1 = d*X1`` on both X1 faces, rollers on the X2 = 0 and X3 = 0 planes."""
    d = float(stretch_disp)

    def A(X):
        out = np.zeros_like(X)
        out[:, 0] = d * X[:, 0]
        return out

    def grad_A(X):
        g = _zeros3(X)
        g[:, 0, 0] = d
        return g

    def B(X):
        return np.stack([X[:, 0] * (1.0 - X[:, 0]), X[:, 1], X[:, 2]], axis=1)

    def grad_B(X):
        g = _zeros3(X)
        g[:, 0, 0] = 1.0 - 2.0 * X[:, 0]
        g[:, 1, 1] = 1.0
        g[:, 2, 2] = 1.0
        return g

    return BCSpec(A, grad_A, B, grad_B, name="uniaxial-stress")


def uniaxial_strain_bc(stretch_disp: float) -> BCSpec:
    """``u1 = d*X1`` on the X1 faces, zero normal displacement on all lateral faces."""
    d = float(stretch_disp)
    base = uniaxial_stress_bc(d)

    def B(X):
        return X * (1.0 - X)

    def grad_B(X):
        g = _zeros3(X)
        for i in range(3):
            g[:, i, i] = 1.0 - 2.0 * X[:, i]
        return g

    return BCSpec(base.A, base.grad_A, B, grad_B, name="uniaxial-strain")


def simple_shear_bc(shear: float) -> BCSpec:
    """``u = (g*X2, 0, 0)`` prescribed on the whole boundary."""
    g_ = float(shear)

    def A(X):
        out = np.zeros_like(X)
        out[:, 0] = g_ * X[:, 1]
        return out

    def grad_A(X):
        g = _zeros3(X)
        g[:, 0, 1] = g_
        return g

    def bubble(X):
        return np.prod(X * (1.0 - X), axis=1)

    def B(X):
        return np.repeat(bubble(X)[:, None], 3, axis=1)

    def grad_B(X):
        q = X * (1.0 - X)
        dq = 1.0 - 2.0 * X
        grad = np.stack([dq[:, 0] * q[:, 1] * q[:, 2], q[:, 0] * dq[:, 1] * q[:, 2], q[:, 0] * q[:, 1] * dq[:, 2]], axis=1)
        return np.repeat(grad[:, None, :], 3, axis=1)

    return BCSpec(A, grad_A, B, grad_B, name="simple-shear")
