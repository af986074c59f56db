"""Composite trapezoidal rule on evenly spaced lattices of the unit cube."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

_FACE_AXES = {"x1": 0, "x2": 1, "x3": 2}


def trapezoid_weights_1d(n: int) -> np.ndarray:
    h = 1.0 / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class QuadratureGrid:
    """Boundary-inclusive ``n**3`` lattice on [0, 1]^3 with trapezoid weights.

    Points are ordered lexicographically by lattice index ``(i, j, k)`` with
    ``k`` (the X3 index) varying fastest.
    """

    n: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    def __len__(self):
        return self.points.shape[0]

    def integrate(self, values):
        return integrate(values, self.weights)

    def face(self, face_id: str) -> tuple[np.ndarray, np.ndarray]:
        """``(points, weights)`` of the ``n**2`` lattice on one face, e.g. ``"x1+"``."""
        axis = _FACE_AXES.get(face_id[:2])
        if axis is None or face_id[2:] not in ("-", "+"):
            raise ValueError(f"unknown face id {face_id!r}")
        x = np.linspace(0.0, 1.0, self.n)
        w = trapezoid_weights_1d(self.n)
        a, b = np.meshgrid(x, x, indexing="ij")
        wa, wb = np.meshgrid(w, w, indexing="ij")
        pts = np.empty((self.n * self.n, 3))
        others = [i for i in range(3) if i != axis]
        pts[:, others[0]] = a.ravel()
        pts[:, others[1]] = b.ravel()
        pts[:, axis] = 1.0 if face_id[2] == "+" else 0.0
        return pts, (wa * wb).ravel()


def build_grid(n: int) -> QuadratureGrid:
    if int(n) != n or n < 2:
        raise ValueError("grid must have n >= 2")
    n = int(n)
    x = np.linspace(0.0, 1.0, n)
    w = trapezoid_weights_1d(n)
    X1, X2, X3 = np.meshgrid(x, x, x, indexing="ij")
    W1, W2, W3 = np.meshgrid(w, w, w, indexing="ij")
    points = np.stack([X1.ravel(), X2.ravel(), X3.ravel()], axis=1)
    weights = (W1 * W2 * W3).ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(n, points, weights)


def integrate(values, weights):
    """Weighted sum of per-point values; works on tape nodes."""
    weights = np.asarray(weights)
    if ad.value(values).shape != weights.shape:
        raise ValueError(
            f"integrate: {ad.value(values).shape[0] if ad.value(values).ndim else 0} values for {weights.shape[0]} grid points"
        )
    if isinstance(values, ad.Node):
        return ad.dot(values, weights)
    return float(np.dot(values, weights))
