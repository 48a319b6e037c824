"""Metric gradients, boundary derivatives and the norms of the stability estimates.

Boundary quantities use the metric-normalised conormal

    nu_g^k = g^{kl} nu_l / sqrt(g^{ab} nu_a nu_b),   d_{nu_g} u = nu_g^k d_k u,

and the tangential energy ``|grad_g u|_g^2 - |d_{nu_g} u|^2``.  Integrals
against dV_g and dS_g carry the factor sqrt|g|.

The fractional norm ``H^eta`` is realised spectrally: with the discrete L2
Gram matrix M (diagonal quadrature weights) and the discrete H2 Gram matrix
K, solve K e = lambda M e and set

    ||u||_eta^2 = sum_j lambda_j^(eta/2) |c_j|^2,   c_j = e_j^T M u.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .fields import CoefficientSet, MetricField, apply_P, metric_inverse_det
from .grid import GAMMA_OUTER, BoundaryTag, PolarGrid, integrate_boundary, integrate_volume

__all__ = [
    "NegativeTangentialEnergy",
    "InvalidEta",
    "SpectralPair",
    "metric_gradient_sq",
    "normal_derivative",
    "tangential_gradient_sq",
    "tangential_derivative",
    "cauchy_norm",
    "cauchy_terms",
    "l2_norm",
    "h1_boundary_norm",
    "h2_gram",
    "h2_norm",
    "spectral_pair",
    "sobolev_eta_norm",
]

TANGENTIAL_CLAMP = 1e-12


class NegativeTangentialEnergy(ArithmeticError):
    pass


class InvalidEta(ValueError):
    pass


def _inverse_metric(grid: PolarGrid, metric: MetricField):
    ginv, det = metric_inverse_det(metric.at(grid))
    return ginv, np.sqrt(det)


def metric_gradient_sq(grid: PolarGrid, u, metric: MetricField) -> np.ndarray:
    """g^{kl} d_k u conj(d_l u) at every node."""
    ginv, _ = _inverse_metric(grid, metric)
    du = np.stack([grid.apply(grid.d1, u), grid.apply(grid.d2, u)])
    val = np.einsum("kl...,k...,l...->...", ginv, du, du.conj())
    return val.real


def _boundary_geometry(grid: PolarGrid, metric: MetricField, tag: BoundaryTag):
    b = grid.boundary(tag)
    ginv, sg = _inverse_metric(grid, metric)
    ginv_b = ginv[:, :, b.row]
    nu = b.normals
    gnu = np.einsum("kl...,l...->k...", ginv_b, nu)
    length = np.sqrt(np.einsum("k...,k...->...", gnu, nu))
    return b, gnu / length, sg[b.row], ginv_b


def normal_derivative(grid: PolarGrid, u, metric: MetricField, tag: BoundaryTag) -> np.ndarray:
    b, conormal, _, _ = _boundary_geometry(grid, metric, tag)
    du1 = grid.apply(grid.d1, u)[b.row]
    du2 = grid.apply(grid.d2, u)[b.row]
    return conormal[0] * du1 + conormal[1] * du2


def tangential_gradient_sq(grid: PolarGrid, u, metric: MetricField, tag: BoundaryTag) -> np.ndarray:
    """|grad_g u|^2 - |d_{nu_g} u|^2 on the boundary, clamped for rounding only."""
    b = grid.boundary(tag)
    full = metric_gradient_sq(grid, u, metric)[b.row]
    val = full - np.abs(normal_derivative(grid, u, metric, tag)) ** 2
    scale = max(1.0, float(np.abs(full).max()))
    if np.any(val < -TANGENTIAL_CLAMP * scale):
        raise NegativeTangentialEnergy(f"tangential energy {val.min():.3e} below zero")
    return np.maximum(val, 0.0)


def tangential_derivative(grid: PolarGrid, u, metric: MetricField, tag: BoundaryTag) -> np.ndarray:
    """d_tau u / |tau|_g with tau the Euclidean unit tangent.

    In two dimensions ``|this|^2`` equals the tangential energy; it gives a
    linear operator on u where the subtraction identity does not.
    """
    b = grid.boundary(tag)
    tau = b.tangents
    G = metric.at(grid)[:, :, b.row]
    tau_len = np.sqrt(np.einsum("k...,kl...,l...->...", tau, G, tau))
    du1 = grid.apply(grid.d1, u)[b.row]
    du2 = grid.apply(grid.d2, u)[b.row]
    return (tau[0] * du1 + tau[1] * du2) / tau_len


def l2_norm(grid: PolarGrid, u, metric: MetricField | None = None) -> float:
    w = np.abs(np.asarray(u).reshape(grid.shape)) ** 2
    if metric is not None:
        w = w * _inverse_metric(grid, metric)[1]
    return float(np.sqrt(integrate_volume(grid, w)))


def h1_boundary_norm(grid: PolarGrid, u, metric: MetricField, tag: BoundaryTag = GAMMA_OUTER) -> float:
    b, _, sg_b, _ = _boundary_geometry(grid, metric, tag)
    trace = np.asarray(u).reshape(grid.shape)[b.row]
    dens = (tangential_gradient_sq(grid, u, metric, tag) + np.abs(trace) ** 2) * sg_b
    return float(np.sqrt(integrate_boundary(grid, tag, dens)))


def cauchy_terms(grid: PolarGrid, u, metric: MetricField, coeffs: CoefficientSet) -> tuple[float, float, float]:
    """(||Pu||_{L2(D)}, ||u||_{H1(Gamma)}, ||d_nu u||_{L2(Gamma)}), all metric-weighted."""
    Pu = apply_P(grid, u, metric, coeffs)
    _, _, sg_b, _ = _boundary_geometry(grid, metric, GAMMA_OUTER)
    dn = normal_derivative(grid, u, metric, GAMMA_OUTER)
    return (
        l2_norm(grid, Pu, metric),
        h1_boundary_norm(grid, u, metric, GAMMA_OUTER),
        float(np.sqrt(integrate_boundary(grid, GAMMA_OUTER, np.abs(dn) ** 2 * sg_b))),
    )


def cauchy_norm(grid: PolarGrid, u, metric: MetricField, coeffs: CoefficientSet) -> float:
    return float(sum(cauchy_terms(grid, u, metric, coeffs)))


# -- H2 and the spectral interpolation norm ---------------------------------------


def h2_gram(grid: PolarGrid) -> sp.csr_matrix:
    """K with u^H K u = sum of weighted |u|^2, |d_k u|^2 and |d_kl u|^2 (mixed term twice)."""
    M = sp.diags(grid.weights.ravel())
    K = M.copy()
    for D, mult in ((grid.d1, 1.0), (grid.d2, 1.0), (grid.d11, 1.0), (grid.d12, 2.0), (grid.d22, 1.0)):
        K = K + mult * (D.T @ M @ D)
    return K.tocsr()


def h2_norm(grid: PolarGrid, u) -> float:
    u = np.asarray(u).reshape(-1)
    return float(np.sqrt(max(np.vdot(u, h2_gram(grid) @ u).real, 0.0)))


@dataclass(frozen=True)
class SpectralPair:
    """Generalised eigenpairs of (K, M); ``vectors`` are M-orthonormal."""

    grid: PolarGrid
    eigenvalues: np.ndarray
    vectors: np.ndarray

    def coefficients(self, u) -> np.ndarray:
        u = np.asarray(u).reshape(-1)
        return self.vectors.T @ (self.grid.weights.ravel() * u)


_SPECTRAL_CACHE: dict[PolarGrid, SpectralPair] = {}
_SPECTRAL_LOCK = threading.Lock()
MAX_DENSE_UNKNOWNS = 65 * 128


def spectral_pair(grid: PolarGrid) -> SpectralPair:
    """Dense generalised eigensolve, computed once per grid."""
    with _SPECTRAL_LOCK:
        hit = _SPECTRAL_CACHE.get(grid)
        if hit is not None:
            return hit
        if grid.size > MAX_DENSE_UNKNOWNS:
            raise ValueError(f"grid with {grid.size} unknowns exceeds the dense eigensolve budget")
        m_half = np.sqrt(grid.weights.ravel())
        K = h2_gram(grid).toarray()
        A = K / m_half[:, None] / m_half[None, :]
        lam, V = la.eigh(A)
        pair = SpectralPair(grid, lam, V / m_half[:, None])
        _SPECTRAL_CACHE[grid] = pair
        return pair


def sobolev_eta_norm(
    grid: PolarGrid, u, eta: float, pair: SpectralPair | None = None, *, allow_endpoint: bool = False
) -> float:
    """Spectral H^eta norm; ``eta = 0`` takes the direct L2 route without an eigensolve.

    ``allow_endpoint`` admits eta = 2, which reproduces ``h2_norm``.
    """
    top_ok = eta <= 2.0 if allow_endpoint else eta < 2.0
    if not (0.0 <= eta and top_ok):
        raise InvalidEta(f"eta must lie in [0, 2), got {eta}")
    if eta == 0.0 and pair is None:
        return l2_norm(grid, u)
    pair = pair or spectral_pair(grid)
    c = pair.coefficients(u)
    return float(np.sqrt(np.sum(pair.eigenvalues ** (eta / 2.0) * np.abs(c) ** 2)))
