"""Polar tensor grid on the annulus r0 <= |x| <= R1.

Nodes are stored as ``(Nr, Ntheta)`` arrays with the radial index first and
the angular index periodic.  Flattening uses C order, so node ``(i, j)`` has
flat index ``i * Ntheta + j``.  Fields are plain complex numpy arrays of the
node shape; every operator here accepts either the 2-D shape or its flat
view and returns the 2-D shape.

Derivatives are sparse matrices acting on the flat vector.  In r they are
second-order central differences with second-order one-sided stencils on the
two boundary circles; in theta they are periodic central differences.
Cartesian partials follow from the chain rule

    d/dx1 = cos(t) d/dr - sin(t)/r d/dt,
    d/dx2 = sin(t) d/dr + cos(t)/r d/dt.

Second derivatives compose the first-derivative matrices, which keeps a single
stencil family everywhere at the price of O(h) accuracy on the two rows
nearest each boundary circle (O(h^2) elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.sparse as sp

__all__ = [
    "InvalidGeometry",
    "PolarGrid",
    "BoundarySlice",
    "build_grid",
    "integrate_volume",
    "integrate_boundary",
    "partial_derivatives",
    "second_derivatives",
]

BoundaryTag = Literal["S_inner", "Gamma_outer"]
S_INNER: BoundaryTag = "S_inner"
GAMMA_OUTER: BoundaryTag = "Gamma_outer"

MIN_NODES = 8


class InvalidGeometry(ValueError):
    """Raised for impossible annuli or too coarse grids."""


def _simpson_weights(n_nodes: int, h: float) -> np.ndarray:
    """Composite Simpson weights on ``n_nodes`` equispaced points.

    With an odd number of intervals the last three intervals use Simpson's
    3/8 rule, so the rule stays exact for cubics either way.
    """
    n_int = n_nodes - 1
    w = np.zeros(n_nodes)
    m = n_int if n_int % 2 == 0 else n_int - 3
    if m > 0:
        w[0:m + 1:2] += 2.0
        w[1:m:2] += 4.0
        w[0] = w[m] = 1.0
        w[: m + 1] *= h / 3.0
    if n_int % 2 == 1:
        w[m:m + 4] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def _radial_diff_matrix(n: int, h: float) -> sp.csr_matrix:
    d = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        d[i, i - 1] = -0.5 / h
        d[i, i + 1] = 0.5 / h
    d[0, 0:3] = np.array([-1.5, 2.0, -0.5]) / h
    d[n - 1, n - 3:n] = np.array([0.5, -2.0, 1.5]) / h
    return d.tocsr()


def _periodic_diff_matrix(n: int, h: float) -> sp.csr_matrix:
    idx = np.arange(n)
    rows = np.concatenate([idx, idx])
    cols = np.concatenate([(idx + 1) % n, (idx - 1) % n])
    vals = np.concatenate([np.full(n, 0.5 / h), np.full(n, -0.5 / h)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class BoundarySlice:
    """One boundary circle of the annulus.

    ``normals`` point out of the annulus: ``-x/|x|`` on the inner circle and
    ``+x/|x|`` on the outer one.
    """

    tag: BoundaryTag
    row: int
    indices: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    @property
    def tangents(self) -> np.ndarray:
        # counter-clockwise unit tangent (-sin t, cos t), independent of normal orientation
        return np.stack([-self.normals[1], self.normals[0]]) * (1 if self.tag == GAMMA_OUTER else -1)


@dataclass(frozen=True, eq=True)
class PolarGrid:
    r0: float
    R1: float
    Nr: int
    Ntheta: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nr, self.Ntheta)

    @property
    def size(self) -> int:
        return self.Nr * self.Ntheta

    @property
    def h_r(self) -> float:
        return (self.R1 - self.r0) / (self.Nr - 1)

    @property
    def h_theta(self) -> float:
        return 2.0 * np.pi / self.Ntheta

    @cached_property
    def r(self) -> np.ndarray:
        return np.linspace(self.r0, self.R1, self.Nr)

    @cached_property
    def theta(self) -> np.ndarray:
        return self.h_theta * np.arange(self.Ntheta)

    @cached_property
    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.theta, indexing="ij")

    @cached_property
    def nodes(self) -> np.ndarray:
        """Cartesian coordinates, shape ``(2, Nr, Ntheta)``."""
        rr, tt = self.polar
        return np.stack([rr * np.cos(tt), rr * np.sin(tt)])

    @property
    def x1(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def x2(self) -> np.ndarray:
        return self.nodes[1]

    @cached_property
    def radial_weights(self) -> np.ndarray:
        return _simpson_weights(self.Nr, self.h_r)

    @cached_property
    def weights(self) -> np.ndarray:
        """Volume quadrature weights including the Jacobian ``r``."""
        w = (self.radial_weights * self.r)[:, None] * np.full(self.Ntheta, self.h_theta)[None, :]
        return w

    def boundary(self, tag: BoundaryTag) -> BoundarySlice:
        if tag == S_INNER:
            row, sign, radius = 0, -1.0, self.r0
        elif tag == GAMMA_OUTER:
            row, sign, radius = self.Nr - 1, 1.0, self.R1
        else:
            raise ValueError(f"unknown boundary tag {tag!r}")
        t = self.theta
        normals = sign * np.stack([np.cos(t), np.sin(t)])
        return BoundarySlice(
            tag=tag,
            row=row,
            indices=row * self.Ntheta + np.arange(self.Ntheta),
            normals=normals,
            weights=np.full(self.Ntheta, radius * self.h_theta),
        )

    # -- sparse derivative matrices on the flattened field --------------------

    @cached_property
    def d_r(self) -> sp.csr_matrix:
        return sp.kron(_radial_diff_matrix(self.Nr, self.h_r), sp.identity(self.Ntheta), format="csr")

    @cached_property
    def d_theta(self) -> sp.csr_matrix:
        return sp.kron(sp.identity(self.Nr), _periodic_diff_matrix(self.Ntheta, self.h_theta), format="csr")

    @cached_property
    def d1(self) -> sp.csr_matrix:
        rr, tt = self.polar
        c = sp.diags(np.cos(tt).ravel())
        s_over_r = sp.diags((np.sin(tt) / rr).ravel())
        return (c @ self.d_r - s_over_r @ self.d_theta).tocsr()

    @cached_property
    def d2(self) -> sp.csr_matrix:
        rr, tt = self.polar
        s = sp.diags(np.sin(tt).ravel())
        c_over_r = sp.diags((np.cos(tt) / rr).ravel())
        return (s @ self.d_r + c_over_r @ self.d_theta).tocsr()

    @cached_property
    def d11(self) -> sp.csr_matrix:
        return (self.d1 @ self.d1).tocsr()

    @cached_property
    def d12(self) -> sp.csr_matrix:
        return (0.5 * (self.d1 @ self.d2 + self.d2 @ self.d1)).tocsr()

    @cached_property
    def d22(self) -> sp.csr_matrix:
        return (self.d2 @ self.d2).tocsr()

    # -- helpers ----------------------------------------------------------------

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x1, x2)`` at every node."""
        return np.broadcast_to(np.asarray(func(self.x1, self.x2)), self.shape).copy()

    def apply(self, mat: sp.spmatrix, u: np.ndarray) -> np.ndarray:
        return (mat @ np.asarray(u).reshape(-1)).reshape(self.shape)

    def interior_mask(self, margin: float) -> np.ndarray:
        """Nodes at distance >= ``margin`` from both boundary circles."""
        rr, _ = self.polar
        return (rr >= self.r0 + margin - 1e-14) & (rr <= self.R1 - margin + 1e-14)

    def refined(self, factor: int = 2) -> "PolarGrid":
        """Same annulus with ``factor`` times as many intervals in each direction."""
        return PolarGrid(self.r0, self.R1, factor * (self.Nr - 1) + 1, factor * self.Ntheta)


def build_grid(r0: float, R1: float, Nr: int, Ntheta: int) -> PolarGrid:
    if not (np.isfinite(r0) and np.isfinite(R1)) or r0 <= 0 or R1 <= r0:
        raise InvalidGeometry(f"need 0 < r0 < R1, got r0={r0}, R1={R1}")
    if Nr < MIN_NODES or Ntheta < MIN_NODES:
        raise InvalidGeometry(f"need Nr, Ntheta >= {MIN_NODES}, got {Nr}, {Ntheta}")
    if Ntheta % 2:
        raise InvalidGeometry(f"Ntheta must be even, got {Ntheta}")
    return PolarGrid(float(r0), float(R1), int(Nr), int(Ntheta))


def _check_finite(f: np.ndarray) -> None:
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")


def integrate_volume(grid: PolarGrid, f) -> float | complex:
    """Sum of weights times ``f`` over all nodes (Euclidean measure dx).

    Summation order is fixed: angular sums per ring, then rings outward.
    """
    f = np.broadcast_to(np.asarray(f), grid.shape)
    _check_finite(f)
    total = np.sum(grid.weights * f, axis=1).sum()
    return total.item()


def integrate_boundary(grid: PolarGrid, tag: BoundaryTag, f) -> float | complex:
    """Arc-length quadrature of ``f`` (values on the boundary nodes) over one circle."""
    b = grid.boundary(tag)
    f = np.broadcast_to(np.asarray(f), b.weights.shape)
    _check_finite(f)
    return np.sum(b.weights * f).item()


def partial_derivatives(grid: PolarGrid, u) -> tuple[np.ndarray, np.ndarray]:
    return grid.apply(grid.d1, u), grid.apply(grid.d2, u)


def second_derivatives(grid: PolarGrid, u) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return grid.apply(grid.d11, u), grid.apply(grid.d12, u), grid.apply(grid.d22, u)


def boundary_values(grid: PolarGrid, tag: BoundaryTag, u) -> np.ndarray:
    """Values of a node field on one boundary circle."""
    b = grid.boundary(tag)
    return np.asarray(u).reshape(grid.shape)[b.row]
