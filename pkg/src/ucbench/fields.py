"""Metric, drift and potential coefficients and the operator

    P u = -Lap_g u + X^k d_k u + p u,
    Lap_g u = |g|^{-1/2} d_k( |g|^{1/2} g^{kl} d_l u ).

All coefficients are analytic callables of ``(x1, x2)`` that broadcast over
node arrays.  Metric callables return arrays of shape ``(2, 2, ...)`` and
their partials shape ``(2, 2, 2, ...)`` with the derivative index *first*:
``dg[m, k, l] = d_m g_kl``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import PolarGrid

__all__ = [
    "SingularMetric",
    "MetricField",
    "CoefficientSet",
    "MagneticPotential",
    "METRIC_PRESETS",
    "COEFFICIENT_PRESETS",
    "MAGNETIC_PRESETS",
    "metric_inverse_det",
    "laplace_beltrami",
    "laplace_beltrami_matrix",
    "apply_P",
    "P_matrix",
    "magnetic_to_drift",
    "apply_magnetic_L",
]


class SingularMetric(ValueError):
    pass


@dataclass(frozen=True)
class MetricField:
    """Symmetric positive definite metric ``g_kl(x)``.

    ``rho`` is a declared ellipticity constant, checked by
    :meth:`check_ellipticity` on a grid before use.
    """

    name: str
    g: Callable
    dg: Callable | None
    rho: float

    def at(self, grid: PolarGrid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.g(grid.x1, grid.x2), dtype=float), (2, 2) + grid.shape)

    def check_ellipticity(self, grid: PolarGrid) -> bool:
        G = self.at(grid)
        if not np.allclose(G[0, 1], G[1, 0], rtol=0, atol=0):
            return False
        probes = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])]
        for xi in probes:
            q = np.einsum("k,kl...,l->...", xi, G, xi)
            if np.any(q < self.rho * (xi @ xi)):
                return False
        det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
        return bool(np.all(det > 0))


@dataclass(frozen=True)
class CoefficientSet:
    """Drift ``X`` (complex 2-vector) and potential ``p`` (complex scalar)."""

    X: Callable
    p: Callable
    name: str = "custom"

    def X_at(self, grid: PolarGrid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.X(grid.x1, grid.x2), dtype=complex), (2,) + grid.shape)

    def p_at(self, grid: PolarGrid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.p(grid.x1, grid.x2), dtype=complex), grid.shape)

    def bounds(self, grid: PolarGrid) -> dict[str, float]:
        return {
            "X_sup": float(np.abs(self.X_at(grid)).max()),
            "p_sup": float(np.abs(self.p_at(grid)).max()),
        }


@dataclass(frozen=True)
class MagneticPotential:
    """Real vector potential ``a_k`` with partials ``da[m, k] = d_m a_k``."""

    a: Callable
    da: Callable | None = None
    name: str = "custom"


# -- metric algebra ---------------------------------------------------------------


def metric_inverse_det(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse and determinant of a (2, 2, ...) metric array, via the 2x2 closed form."""
    G = np.asarray(G, dtype=float)
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    if np.any(~(det > 0)):
        raise SingularMetric("metric determinant is not positive")
    inv = np.empty_like(G)
    inv[0, 0] = G[1, 1] / det
    inv[1, 1] = G[0, 0] / det
    inv[0, 1] = -G[0, 1] / det
    inv[1, 0] = -G[1, 0] / det
    return inv, det


def _metric_data(grid: PolarGrid, metric: MetricField):
    ginv, det = metric_inverse_det(metric.at(grid))
    return ginv, np.sqrt(det)


def laplace_beltrami_matrix(grid: PolarGrid, metric: MetricField) -> sp.csr_matrix:
    """Sparse Lap_g: flux ``sqrt|g| g^{kl} d_l u`` differentiated a second time."""
    ginv, sg = _metric_data(grid, metric)
    D = (grid.d1, grid.d2)
    out = None
    for k in range(2):
        for l in range(2):
            term = D[k] @ sp.diags((sg * ginv[k, l]).ravel()) @ D[l]
            out = term if out is None else out + term
    return (sp.diags(1.0 / sg.ravel()) @ out).tocsr()


def laplace_beltrami(grid: PolarGrid, u, metric: MetricField) -> np.ndarray:
    return grid.apply(laplace_beltrami_matrix(grid, metric), u)


def P_matrix(grid: PolarGrid, metric: MetricField, coeffs: CoefficientSet) -> sp.csr_matrix:
    X = coeffs.X_at(grid)
    p = coeffs.p_at(grid)
    P = (
        -laplace_beltrami_matrix(grid, metric).astype(complex)
        + sp.diags(X[0].ravel()) @ grid.d1
        + sp.diags(X[1].ravel()) @ grid.d2
        + sp.diags(p.ravel())
    )
    return P.tocsr()


def apply_P(grid: PolarGrid, u, metric: MetricField, coeffs: CoefficientSet) -> np.ndarray:
    return grid.apply(P_matrix(grid, metric, coeffs), u)


# -- magnetic Laplace-Beltrami ----------------------------------------------------


def _metric_divergence(grid, metric, a, da, ginv, sg):
    """|g|^{-1/2} d_k(|g|^{1/2} g^{kl} a_l) from analytic partials."""
    dG = np.asarray(metric.dg(grid.x1, grid.x2), dtype=float)
    dG = np.broadcast_to(dG, (2, 2, 2) + grid.shape)
    # d_m g^{kl} = -g^{ka} (d_m g_ab) g^{bl}
    dginv = -np.einsum("ka...,mab...,bl...->mkl...", ginv, dG, ginv)
    # d_m log sqrt|g| = 1/2 tr(g^{-1} d_m g)
    dlogsg = 0.5 * np.einsum("ab...,mba...->m...", ginv, dG)
    return (
        np.einsum("kl...,kl...->...", ginv, da)
        + np.einsum("kkl...,l...->...", dginv, a)
        + np.einsum("k...,kl...,l...->...", dlogsg, ginv, a)
    )


def magnetic_to_drift(magnetic: MagneticPotential, metric: MetricField, grid: PolarGrid) -> CoefficientSet:
    """Drift and potential such that ``-L u = P u`` for the magnetic operator L.

    Expanding L u = |g|^{-1/2}(d_k + i a_k)|g|^{1/2} g^{kl}(d_l u + i a_l u) gives

        X^l = -2i g^{kl} a_k,
        p   = -i |g|^{-1/2} d_k(|g|^{1/2} g^{kl} a_l) + g^{kl} a_k a_l.

    The coefficients are tabulated on ``grid``; the returned callables ignore
    their arguments and must only be used with that grid.
    """
    ginv, sg = _metric_data(grid, metric)
    a = np.broadcast_to(np.asarray(magnetic.a(grid.x1, grid.x2), dtype=float), (2,) + grid.shape)
    X = -2j * np.einsum("kl...,k...->l...", ginv, a)
    if magnetic.da is not None and metric.dg is not None:
        da = np.broadcast_to(np.asarray(magnetic.da(grid.x1, grid.x2), dtype=float), (2, 2) + grid.shape)
        div = _metric_divergence(grid, metric, a, da, ginv, sg)
    else:
        flux = sg * np.einsum("kl...,l...->k...", ginv, a)
        div = (grid.apply(grid.d1, flux[0]) + grid.apply(grid.d2, flux[1])) / sg
    p = -1j * div + np.einsum("kl...,k...,l...->...", ginv, a, a)
    return CoefficientSet(X=lambda x1, x2: X, p=lambda x1, x2: p, name=f"magnetic:{magnetic.name}")


def apply_magnetic_L(grid: PolarGrid, u, magnetic: MagneticPotential, metric: MetricField) -> np.ndarray:
    """L u evaluated directly in its factored form, no product-rule expansion."""
    ginv, sg = _metric_data(grid, metric)
    a = np.broadcast_to(np.asarray(magnetic.a(grid.x1, grid.x2), dtype=float), (2,) + grid.shape)
    u = np.asarray(u).reshape(grid.shape)
    cov = [grid.apply(grid.d1, u) + 1j * a[0] * u, grid.apply(grid.d2, u) + 1j * a[1] * u]
    flux = [sg * (ginv[k, 0] * cov[0] + ginv[k, 1] * cov[1]) for k in range(2)]
    out = (grid.apply(grid.d1, flux[0]) + 1j * a[0] * flux[0]) + (grid.apply(grid.d2, flux[1]) + 1j * a[1] * flux[1])
    return out / sg


# -- presets ------------------------------------------------------------------------


def _const_metric(M):
    M = np.asarray(M, dtype=float)
    return lambda x1, x2: M.reshape(2, 2, *([1] * np.ndim(x1))) * np.ones_like(x1)


def _zero_dg(x1, x2):
    return np.zeros((2, 2, 2) + np.shape(x1))


_PERTURB_SHAPE = np.array([[1.0, 0.5], [0.5, 1.0]])


def _bump_dg(x1, x2):
    db = np.stack([np.cos(x1) * np.sin(x2), np.sin(x1) * np.cos(x2)])
    return 0.3 * db[:, None, None] * _PERTURB_SHAPE.reshape(1, 2, 2, *([1] * np.ndim(x1)))


def _fix_eye(x1, x2):
    return np.eye(2).reshape(2, 2, *([1] * np.ndim(x1))) * np.ones_like(x1)


def _perturbed_g(x1, x2):
    nd = np.ndim(x1)
    b = np.sin(x1) * np.sin(x2)
    return np.eye(2).reshape(2, 2, *([1] * nd)) + 0.3 * b * _PERTURB_SHAPE.reshape(2, 2, *([1] * nd))


# eigenvalues of I + t*S with |t| <= 0.3 and eig(S) = {0.5, 1.5} are >= 0.55
METRIC_PRESETS: dict[str, MetricField] = {
    "identity": MetricField("identity", _fix_eye, _zero_dg, rho=1.0),
    "diagonal-anisotropic": MetricField("diagonal-anisotropic", _const_metric(np.diag([2.0, 0.5])), _zero_dg, rho=0.5),
    "smooth-perturbation": MetricField("smooth-perturbation", _perturbed_g, _bump_dg, rho=0.55),
}


def _zero_vec(x1, x2):
    return np.zeros((2,) + np.shape(x1), dtype=complex)


def _const(value):
    return lambda x1, x2: np.full(np.shape(x1), value, dtype=complex)


COEFFICIENT_PRESETS: dict[str, CoefficientSet] = {
    "laplacian": CoefficientSet(_zero_vec, _const(0.0), name="laplacian"),
    "complex-drift": CoefficientSet(
        lambda x1, x2: np.stack([np.full(np.shape(x1), 1.0 + 0.5j), np.full(np.shape(x1), -0.5 + 1.0j)]),
        _const(1.0),
        name="complex-drift",
    ),
}


MAGNETIC_PRESETS: dict[str, MagneticPotential] = {
    "constant": MagneticPotential(
        a=lambda x1, x2: np.stack([np.full(np.shape(x1), 0.7), np.full(np.shape(x1), -0.4)]),
        da=lambda x1, x2: np.zeros((2, 2) + np.shape(x1)),
        name="constant",
    ),
    "smooth": MagneticPotential(
        a=lambda x1, x2: np.stack([np.sin(x2), x1 * np.cos(x2)]),
        # da[m, k] = d_m a_k
        da=lambda x1, x2: np.stack(
            [
                np.stack([np.zeros_like(x1), np.cos(x2)]),
                np.stack([np.cos(x2), -x1 * np.sin(x2)]),
            ]
        ),
        name="smooth",
    ),
}
