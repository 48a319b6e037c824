"""Logarithmic stability modulus, the choice of s, and Tikhonov continuation from Cauchy data.

The two-parameter bound  e^{cs} C + s^{-(2-eta)/2} M  (C the Cauchy-data
size, M the H2 bound) is minimised over s >= 1; the minimum behaves like the
single-logarithm modulus

    Phi_{eta,c}(r) = 1/r                    for 0 < r <= e^c,
                   = (log r)^{-(2-eta)/2}   for r > e^c,

evaluated at r = M / C.  The reconstruction solves the discrete Tikhonov
problem

    min_u ||Pu - F||^2 + ||u - f||_{H1(Gamma)}^2 + ||d_nu u - h||^2 + eps ||u||_{H2}^2

through the augmented (quasi-definite) system

    [ I     A      ] [r]   [b]
    [ A^H  -eps K  ] [u] = [0],

which avoids squaring the condition number of the data operator A.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .fields import CoefficientSet, MetricField, P_matrix, metric_inverse_det
from .grid import GAMMA_OUTER, PolarGrid
from .norms import h2_gram, l2_norm, sobolev_eta_norm

__all__ = [
    "InvalidParams",
    "InvalidConfig",
    "SolverFailure",
    "CauchyData",
    "StabilityFit",
    "phi_modulus",
    "minimize_over_s",
    "brute_force_min",
    "corollary_constants",
    "cauchy_data",
    "data_operator",
    "tikhonov_functional",
    "solve_cauchy",
    "fit_log_rate",
    "noise_sweep_fit",
]

log = logging.getLogger(__name__)


class InvalidParams(ValueError):
    pass


class InvalidConfig(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


def _check_eta(eta: float) -> None:
    if not (0.0 <= eta < 2.0):
        raise InvalidParams(f"eta must lie in [0, 2), got {eta}")


def phi_modulus(eta: float, c: float, r: float) -> float:
    _check_eta(eta)
    if not c > 0:
        raise InvalidParams(f"c must be positive, got {c}")
    if not r > 0:
        raise InvalidParams(f"r must be positive, got {r}")
    if r <= math.exp(c):
        return 1.0 / r
    return math.log(r) ** (-(2.0 - eta) / 2.0)


def _objective(C, M, c, eta):
    a = (2.0 - eta) / 2.0

    def F(s):
        with np.errstate(over="ignore"):
            return np.exp(c * s) * C + s ** (-a) * M

    return F


def minimize_over_s(C: float, M: float, c: float, eta: float) -> tuple[float, float]:
    """Minimiser and minimum of F(s) = e^{cs} C + s^{-(2-eta)/2} M on s >= 1.

    F is convex, so F'(1) >= 0 means s = 1.  Otherwise the minimiser lies in
    [1, s_hi] with c C e^{c s_hi} = a M (beyond it F' > 0), and a bounded
    Brent search locates it.
    """
    _check_eta(eta)
    if not (C > 0 and M > 0 and c > 0):
        raise InvalidParams("C, M and c must be positive")
    a = (2.0 - eta) / 2.0
    F = _objective(C, M, c, eta)
    slope_at_one = c * C * math.exp(c) - a * M
    if slope_at_one >= 0:
        return 1.0, float(F(1.0))
    s_hi = max(1.0, math.log(a * M / (c * C)) / c) + 1.0
    res = minimize_scalar(F, bounds=(1.0, s_hi), method="bounded", options={"xatol": 1e-10 * s_hi})
    s_opt = float(res.x)
    return s_opt, float(F(s_opt))


def brute_force_min(C: float, M: float, c: float, eta: float, n: int = 10_000, s_max: float = 1e8):
    """Grid search over n log-spaced points in [1, s_max]."""
    s = np.logspace(0.0, math.log10(s_max), n)
    vals = _objective(C, M, c, eta)(s)
    k = int(np.argmin(vals))
    return float(s[k]), float(vals[k])


def corollary_constants(eta: float, c: float = 1.0, c_prime: float | None = None, ks=range(2, 31), M: float = 1.0):
    """Ratios min_s F / (Phi_{eta,c'}(M/C) M) for C = M e^{-k}.

    Returns ``(ratios, double_log_ratios)``; the second divides by the
    double-logarithmic modulus (log log r)^{-(2-eta)/2} instead.
    """
    c_prime = c if c_prime is None else c_prime
    a = (2.0 - eta) / 2.0
    ratios, dbl = [], []
    for k in ks:
        C = M * math.exp(-k)
        _, val = minimize_over_s(C, M, c, eta)
        r = M / C
        ratios.append(val / (phi_modulus(eta, c_prime, r) * M))
        dbl.append(val / (math.log(max(math.log(r), math.e)) ** (-a) * M))
    return np.array(ratios), np.array(dbl)


# -- Cauchy data and the Tikhonov solver ----------------------------------------------


@dataclass
class CauchyData:
    """Trace ``f`` and conormal derivative ``h`` on Gamma, plus the interior source F = Pu.

    The noise level is relative: each of f and h receives a seeded complex
    Gaussian perturbation of L2(Gamma) size ``noise * ||clean||``.
    """

    f: np.ndarray
    h: np.ndarray
    source: np.ndarray | None = None
    noise: float = 0.0
    seed: int | None = None


def _outer_geometry(grid: PolarGrid, metric: MetricField):
    b = grid.boundary(GAMMA_OUTER)
    G = metric.at(grid)[:, :, b.row]
    ginv, det = metric_inverse_det(G)
    sg = np.sqrt(det)
    nu = b.normals
    gnu = np.einsum("kl...,l...->k...", ginv, nu)
    conormal = gnu / np.sqrt(np.einsum("k...,k...->...", gnu, nu))
    tau = b.tangents
    tau_len = np.sqrt(np.einsum("k...,kl...,l...->...", tau, G, tau))
    return b, sg, conormal, tau / tau_len


def _boundary_ops(grid: PolarGrid, metric: MetricField):
    """Sparse trace, conormal-derivative and tangential-derivative rows on Gamma."""
    b, _, conormal, tau = _outer_geometry(grid, metric)
    sel = sp.csr_matrix((np.ones(b.indices.size), (np.arange(b.indices.size), b.indices)), shape=(b.indices.size, grid.size))
    D1b, D2b = sel @ grid.d1, sel @ grid.d2
    dn = sp.diags(conormal[0]) @ D1b + sp.diags(conormal[1]) @ D2b
    dt = sp.diags(tau[0]) @ D1b + sp.diags(tau[1]) @ D2b
    return sel, dn, dt


def _add_noise(values: np.ndarray, weights: np.ndarray, level: float, rng: np.random.Generator) -> np.ndarray:
    if level == 0:
        return values
    xi = rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
    norm = lambda v: np.sqrt(np.sum(weights * np.abs(v) ** 2))  # noqa: E731
    return values + level * norm(values) * xi / norm(xi)


def cauchy_data(
    grid: PolarGrid,
    u,
    metric: MetricField,
    coeffs: CoefficientSet,
    noise: float = 0.0,
    seed: int = 0,
    normal_derivative=None,
    source=None,
) -> CauchyData:
    """Cauchy data of ``u`` on Gamma, optionally perturbed.

    By default the conormal derivative and source come from the discrete
    operators applied to ``u`` (consistent data).  Pass analytic
    ``normal_derivative`` values and ``source=0`` for data independent of the
    discretisation.
    """
    u = np.asarray(u, dtype=complex).reshape(grid.shape)
    b, sg, _, _ = _outer_geometry(grid, metric)
    sel, dn, _ = _boundary_ops(grid, metric)
    f = sel @ u.ravel()
    h = dn @ u.ravel() if normal_derivative is None else np.asarray(normal_derivative, dtype=complex)
    F = grid.apply(P_matrix(grid, metric, coeffs), u) if source is None else np.broadcast_to(source, grid.shape).astype(complex)
    rng = np.random.default_rng(seed)
    w = b.weights * sg
    return CauchyData(_add_noise(f, w, noise, rng), _add_noise(h, w, noise, rng), F, noise, seed)


def data_operator(grid: PolarGrid, metric: MetricField, coeffs: CoefficientSet, data: CauchyData):
    """Weighted data operator A and right-hand side b, so that ||A u - b||^2 are the data terms."""
    b_info, sg_b, _, _ = _outer_geometry(grid, metric)
    _, det = metric_inverse_det(metric.at(grid))
    wv = np.sqrt(grid.weights.ravel() * np.sqrt(det).ravel())
    wb = np.sqrt(b_info.weights * sg_b)
    sel, dn, dt = _boundary_ops(grid, metric)
    P = P_matrix(grid, metric, coeffs)
    A = sp.vstack(
        [
            sp.diags(wv) @ P,
            sp.diags(wb) @ sel,
            sp.diags(wb) @ dt,
            sp.diags(wb) @ dn,
        ]
    ).tocsr()
    F = np.zeros(grid.size, dtype=complex) if data.source is None else np.asarray(data.source).ravel()
    # the H1(Gamma) target for the tangential row is the tangential derivative of the data trace
    f_tan = _trace_tangential(grid, metric, data.f)
    rhs = np.concatenate([wv * F, wb * data.f, wb * f_tan, wb * data.h])
    return A, rhs


def _trace_tangential(grid: PolarGrid, metric: MetricField, f: np.ndarray) -> np.ndarray:
    """Tangential derivative of boundary data along Gamma, normalised by |tau|_g."""
    _, _, _, tau = _outer_geometry(grid, metric)
    # d/dtau = (1/R1) d/dtheta along the circle; same periodic stencil as the grid
    dtheta = (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * grid.h_theta)
    tau_unit_len = np.hypot(tau[0], tau[1])  # = 1/|tau_euclid|_g
    return dtheta / grid.R1 * tau_unit_len


def tikhonov_functional(grid, metric, coeffs, data: CauchyData, eps: float, u) -> float:
    A, rhs = data_operator(grid, metric, coeffs, data)
    u = np.asarray(u, dtype=complex).ravel()
    res = A @ u - rhs
    return float(np.vdot(res, res).real + eps * np.vdot(u, h2_gram(grid) @ u).real)


def solve_cauchy(grid: PolarGrid, data: CauchyData, metric: MetricField, coeffs: CoefficientSet, eps: float) -> np.ndarray:
    if not eps > 0:
        raise InvalidConfig(f"regularisation weight must be positive, got {eps}")
    for arr in (data.f, data.h):
        if not np.all(np.isfinite(arr)):
            raise InvalidConfig("Cauchy data contain non-finite values")
    A, rhs = data_operator(grid, metric, coeffs, data)
    K = h2_gram(grid).astype(complex)
    m, n = A.shape
    aug = sp.bmat([[sp.identity(m, dtype=complex), A], [A.conj().T, -eps * K]], format="csc")
    z = spla.spsolve(aug, np.concatenate([rhs, np.zeros(n, dtype=complex)]))
    u = z[m:]
    if not np.all(np.isfinite(u)):
        raise SolverFailure("augmented system is numerically singular")
    # guard the least-squares property J(u) <= J(0)
    r = A @ u - rhs
    J_u = np.vdot(r, r).real + eps * np.vdot(u, K @ u).real
    J_0 = np.vdot(rhs, rhs).real
    if J_u > J_0 * (1 + 1e-8) + 1e-300:
        raise SolverFailure(f"solution increases the functional ({J_u:.3e} > {J_0:.3e})")
    return u.reshape(grid.shape)


# -- rate fitting ------------------------------------------------------------------------


@dataclass
class StabilityFit:
    deltas: np.ndarray
    errors: np.ndarray
    beta: float
    residual: float
    target: float
    eps: np.ndarray = field(default_factory=lambda: np.array([]))
    errors_eta: np.ndarray = field(default_factory=lambda: np.array([]))

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.deltas)
        return bool(np.all(np.diff(self.errors[order]) > 0))


def fit_log_rate(deltas, errors) -> tuple[float, float]:
    """Least-squares slope beta of log(error) = const - beta * log(log(1/delta))."""
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if deltas.size < 4:
        raise InvalidConfig("rate fit needs at least 4 noise levels")
    x = np.log(np.log(1.0 / deltas))
    y = np.log(errors)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(-coef[0]), float(np.sqrt(np.mean(resid**2)))


def noise_sweep_fit(
    grid: PolarGrid,
    u_target,
    metric: MetricField,
    coeffs: CoefficientSet,
    deltas,
    eps_rule=lambda d: d**2,
    eta: float = 0.0,
    seed: int = 0,
    data_builder=None,
) -> StabilityFit:
    """Reconstruct from noisy data at each level and fit the logarithmic rate.

    ``data_builder(noise, seed)`` overrides the default consistent data.
    Level ``i`` uses seed ``seed + i``.
    """
    _check_eta(eta)
    deltas = np.asarray(list(deltas), dtype=float)
    if deltas.size < 4 or np.log10(deltas.max() / deltas.min()) < 3 - 1e-12:
        raise InvalidConfig("need >= 4 noise levels spanning >= 3 decades")
    u_target = np.asarray(u_target, dtype=complex).reshape(grid.shape)
    build = data_builder or (lambda d, sd: cauchy_data(grid, u_target, metric, coeffs, noise=d, seed=sd))
    errs, errs_eta, epss = [], [], []
    for i, d in enumerate(deltas):
        eps = float(eps_rule(d))
        u = solve_cauchy(grid, build(d, seed + i), metric, coeffs, eps)
        diff = u - u_target
        errs.append(l2_norm(grid, diff))
        errs_eta.append(errs[-1] if eta == 0 else sobolev_eta_norm(grid, diff, eta))
        epss.append(eps)
        log.info("delta=%.1e eps=%.1e error=%.4e", d, eps, errs[-1])
    beta, resid = fit_log_rate(deltas, errs_eta)
    return StabilityFit(deltas, np.array(errs_eta), beta, resid, (2.0 - eta) / 2.0, np.array(epss), np.array(errs))
