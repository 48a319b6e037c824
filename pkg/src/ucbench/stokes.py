"""Stokes system with drift on the annulus, with g = I and P = -Lap throughout.

    -Lap u + (a . grad) u + grad p = 0,   div u = 0.

For a solution, v = (u, p) satisfies

    Lap v = ((a . grad) u + grad p,  -d_k a^j d_j u^k),

which bounds |Lap v|^2 pointwise by |grad v|^2: with |a| the Euclidean
length of a and |grad a|_F the Frobenius norm of its Jacobian,

    |Lap v|^2 <= 2|a|^2 |grad u|^2 + 2|grad p|^2 + |grad a|_F^2 |grad u|^2
             <= max(2|a|^2 + |grad a|_F^2, 2) |grad v|^2,

so c0 = 1 / max(2 n A^2 + n^2 G^2, 2) works, A and G being component-wise
sup bounds of a and of its partials (n = 2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .carleman import CarlemanTerms, carleman_terms, integrands
from .continuation import cauchy_data, solve_cauchy
from .fields import COEFFICIENT_PRESETS, METRIC_PRESETS
from .grid import GAMMA_OUTER, PolarGrid
from .grid import integrate_boundary
from .norms import h1_boundary_norm, normal_derivative
from .weight import BaseWeight, CarlemanParams, grid_factors

__all__ = [
    "StokesState",
    "DriftCoefficient",
    "ManufacturedSolution",
    "MANUFACTURED",
    "rotational_family",
    "stokes_residual",
    "laplacian_identity_check",
    "domination_constant",
    "gradient_domination_check",
    "stokes_cauchy_norm",
    "stokes_carleman_run",
    "stokes_reconstruct",
]

N_DIM = 2
_IDENTITY = METRIC_PRESETS["identity"]
_LAPLACIAN = COEFFICIENT_PRESETS["laplacian"]


@dataclass
class StokesState:
    u: np.ndarray  # shape (2, Nr, Ntheta)
    p: np.ndarray  # shape (Nr, Ntheta)

    @property
    def v(self) -> list[np.ndarray]:
        return [self.u[0], self.u[1], self.p]

    def scaled(self, alpha) -> "StokesState":
        return StokesState(alpha * self.u, alpha * self.p)


@dataclass(frozen=True)
class DriftCoefficient:
    """Drift a^j(x) with Jacobian ``da[k, j] = d_k a^j``."""

    a: Callable
    da: Callable

    def at(self, grid: PolarGrid) -> tuple[np.ndarray, np.ndarray]:
        a = np.broadcast_to(np.asarray(self.a(grid.x1, grid.x2), dtype=complex), (2,) + grid.shape)
        da = np.broadcast_to(np.asarray(self.da(grid.x1, grid.x2), dtype=complex), (2, 2) + grid.shape)
        return a, da

    def bounds(self, grid: PolarGrid) -> tuple[float, float]:
        a, da = self.at(grid)
        return float(np.abs(a).max()), float(np.abs(da).max())


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    u: Callable
    p: Callable
    drift: DriftCoefficient
    note: str

    def state(self, grid: PolarGrid) -> StokesState:
        u = np.asarray(self.u(grid.x1, grid.x2), dtype=complex)
        p = np.broadcast_to(np.asarray(self.p(grid.x1, grid.x2), dtype=complex), grid.shape).copy()
        return StokesState(np.broadcast_to(u, (2,) + grid.shape).copy(), p)


def _zeros(x1):
    return np.zeros(np.shape(x1))


_NO_DRIFT = DriftCoefficient(
    a=lambda x1, x2: np.zeros((2,) + np.shape(x1)),
    da=lambda x1, x2: np.zeros((2, 2) + np.shape(x1)),
)


def _rotational_drift(q, dq, d2q) -> DriftCoefficient:
    """a = (d_2 q, -d_1 q); ``d2q`` returns (q_11, q_12, q_22)."""

    def a(x1, x2):
        g1, g2 = dq(x1, x2)
        return np.stack([g2, -g1])

    def da(x1, x2):
        q11, q12, q22 = d2q(x1, x2)
        # da[k, j] = d_k a^j
        return np.stack([np.stack([q12, -q11]), np.stack([q22, -q12])])

    return DriftCoefficient(a, da)


MANUFACTURED: dict[str, ManufacturedSolution] = {
    "poiseuille-like": ManufacturedSolution(
        name="poiseuille-like",
        u=lambda x1, x2: np.stack([x2**2, _zeros(x1)]),
        p=lambda x1, x2: 2.0 * x1,
        drift=DriftCoefficient(
            a=lambda x1, x2: np.stack([np.ones_like(x1), _zeros(x1)]),
            da=lambda x1, x2: np.zeros((2, 2) + np.shape(x1)),
        ),
        note="Lap u = (2, 0) = grad p; (a.grad)u = d_1 u = 0; div u = 0",
    ),
    "quadratic-pressure": ManufacturedSolution(
        name="quadratic-pressure",
        u=lambda x1, x2: np.stack([-(x2**3) / 3.0, -(x1**3) / 3.0]),
        p=lambda x1, x2: -2.0 * x1 * x2,
        drift=_NO_DRIFT,
        note="stream function (x1^4 - x2^4)/12; Lap u = (-2 x2, -2 x1) = grad p; div u = 0",
    ),
    "linear-pressure": ManufacturedSolution(
        name="linear-pressure",
        u=lambda x1, x2: np.stack([(x1**2 + x2**2) / 4.0, -x1 * x2 / 2.0]),
        p=lambda x1, x2: x1,
        drift=_NO_DRIFT,
        note="Lap u = (1, 0) = grad p; div u = x1/2 - x1/2 = 0",
    ),
    "rotational": ManufacturedSolution(
        name="rotational",
        u=lambda x1, x2: np.stack([-x2, x1]),
        p=lambda x1, x2: -(x1**2 + x2**2) / 2.0,
        drift=_rotational_drift(
            None,
            lambda x1, x2: (x1, x2),
            lambda x1, x2: (np.ones_like(x1), _zeros(x1), np.ones_like(x1)),
        ),
        note="q = |x|^2/2, a = (x2, -x1); (a.grad)u = grad q = -grad p; Lap u = 0; Lap p = -2 = -d_k a^j d_j u^k",
    ),
}


def rotational_family(seed: int, count: int = 10) -> list[ManufacturedSolution]:
    """Exact solutions u = k(-x2, x1), p = -k q, a = (d_2 q, -d_1 q) for random smooth q.

    q = sum of c_i sin(w_i . x + phase_i); (a.grad)u = k grad q cancels grad p.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        m = 3
        c = rng.normal(size=m) * 0.5
        w = rng.normal(size=(m, 2))
        ph = rng.uniform(0, 2 * np.pi, size=m)
        k = rng.uniform(0.5, 2.0)

        def arg(x1, x2, w=w, ph=ph):
            return w[:, 0, None, None] * x1 + w[:, 1, None, None] * x2 + ph[:, None, None]

        def q(x1, x2, c=c, arg=arg):
            return np.tensordot(c, np.sin(arg(x1, x2)), axes=1)

        def dq(x1, x2, c=c, w=w, arg=arg):
            cs = np.cos(arg(x1, x2))
            return (np.tensordot(c * w[:, 0], cs, axes=1), np.tensordot(c * w[:, 1], cs, axes=1))

        def d2q(x1, x2, c=c, w=w, arg=arg):
            sn = np.sin(arg(x1, x2))
            return tuple(-np.tensordot(c * w[:, a] * w[:, b], sn, axes=1) for a, b in ((0, 0), (0, 1), (1, 1)))

        out.append(
            ManufacturedSolution(
                name=f"rotational-random-{seed}-{i}",
                u=lambda x1, x2, k=k: k * np.stack([-x2, x1]),
                p=lambda x1, x2, k=k, q=q: -k * q(x1, x2),
                drift=_rotational_drift(q, dq, d2q),
                note="random smooth q",
            )
        )
    return out


# -- residuals and identities ----------------------------------------------------------


def _grad(grid, f):
    return np.stack([grid.apply(grid.d1, f), grid.apply(grid.d2, f)])


def _lap(grid, f):
    return grid.apply(grid.d11, f) + grid.apply(grid.d22, f)


def stokes_residual(grid: PolarGrid, state: StokesState, drift: DriftCoefficient):
    """Momentum residual -Lap u^k + a^j d_j u^k + d_k p (two fields) and div u."""
    a, _ = drift.at(grid)
    gp = _grad(grid, state.p)
    mom = []
    for k in range(2):
        gu = _grad(grid, state.u[k])
        mom.append(-_lap(grid, state.u[k]) + a[0] * gu[0] + a[1] * gu[1] + gp[k])
    div = grid.apply(grid.d1, state.u[0]) + grid.apply(grid.d2, state.u[1])
    return np.stack(mom), div


def _claimed_laplacian(grid, state, drift):
    a, da = drift.at(grid)
    gu = np.stack([_grad(grid, state.u[k]) for k in range(2)])  # gu[k, j] = d_j u^k
    gp = _grad(grid, state.p)
    vel = [a[0] * gu[k, 0] + a[1] * gu[k, 1] + gp[k] for k in range(2)]
    pres = -np.einsum("kj...,kj...->...", da, gu)
    return np.stack(vel + [pres])


def laplacian_identity_check(grid: PolarGrid, state: StokesState, drift: DriftCoefficient, mask=None) -> float:
    """Max nodal |Lap v - claimed right-hand side|, over ``mask`` if given."""
    lap = np.stack([_lap(grid, c) for c in state.v])
    defect = np.abs(lap - _claimed_laplacian(grid, state, drift)).max(axis=0)
    return float(defect[mask].max() if mask is not None else defect.max())


def domination_constant(grid: PolarGrid, drift: DriftCoefficient) -> float:
    A, G = drift.bounds(grid)
    return 1.0 / max(2.0 * N_DIM * A**2 + N_DIM**2 * G**2, 2.0)


def gradient_domination_check(grid: PolarGrid, state: StokesState, drift: DriftCoefficient, mask=None):
    """(c0, worst margin) for c0 |Lap v|^2 <= |grad v|^2 at every node.

    Lap v is the discrete Laplacian of each component; a negative margin is a
    violation.
    """
    c0 = domination_constant(grid, drift)
    lap_sq = sum(np.abs(_lap(grid, c)) ** 2 for c in state.v)
    grad_sq = sum(np.sum(np.abs(_grad(grid, c)) ** 2, axis=0) for c in state.v)
    margin = grad_sq - c0 * lap_sq
    if mask is not None:
        margin = margin[mask]
    return c0, float(margin.min())


def stokes_cauchy_norm(grid: PolarGrid, state: StokesState) -> float:
    """Sum of H1(Gamma) norms of u^k and p and L2(Gamma) norms of their normal derivatives."""
    total = 0.0
    for comp in state.v:
        total += h1_boundary_norm(grid, comp, _IDENTITY, GAMMA_OUTER)
    for comp in state.v:
        dn = normal_derivative(grid, comp, _IDENTITY, GAMMA_OUTER)
        total += float(np.sqrt(integrate_boundary(grid, GAMMA_OUTER, np.abs(dn) ** 2)))
    return total


# -- componentwise Carleman run --------------------------------------------------------


def _log_integral(grid, weight, params, density, offset):
    phi, _ = grid_factors(weight, params, grid)
    with np.errstate(divide="ignore"):
        logs = 2.0 * params.s * phi + np.log(grid.weights * density)
    return float(np.sum(np.exp(logs - offset), axis=1).sum())


def stokes_carleman_run(
    grid: PolarGrid, state: StokesState, drift: DriftCoefficient, weight: BaseWeight, params: CarlemanParams
) -> dict:
    """Carleman sides per component of v (g = I, P = -Lap), summed, plus the absorption step.

    All quantities are mantissas relative to one shared ``log_offset``.
    """
    per = [carleman_terms(grid, integrands(grid, c, _IDENTITY, _LAPLACIAN), weight, params) for c in state.v]
    offset = max(t.log_offset for t in per)
    rebased = [CarlemanTerms(offset, {k: t.term(k).rebase(offset).mantissa for k in t.terms}) for t in per]
    lhs = sum(t.lhs.mantissa for t in rebased)
    rhs = sum(t.rhs.mantissa for t in rebased)
    lap_term = sum(t.terms["source"] for t in rebased)
    vol_lhs = sum(t.terms["volume"] for t in rebased)
    grad_sq = sum(np.sum(np.abs(_grad(grid, c)) ** 2, axis=0) for c in state.v)
    grad_term = _log_integral(grid, weight, params, grad_sq, offset)
    c0 = domination_constant(grid, drift)
    return {
        "gamma": params.gamma,
        "s": params.s,
        "log_offset": offset,
        "components": [{"lhs": t.lhs.mantissa, "rhs": t.rhs.mantissa} for t in rebased],
        "lhs": lhs,
        "rhs": rhs,
        "ratio": rhs / lhs if lhs > 0 else float("nan"),
        "laplacian_term": lap_term,
        "gradient_term": grad_term,
        "volume_lhs": vol_lhs,
        "c0": c0,
        # Lap-term bounded by the gradient term via domination, then absorbed on the left
        "domination_holds": bool(c0 * lap_term <= grad_term * (1 + 1e-12)),
        "absorption_holds": bool(grad_term <= 0.5 * vol_lhs),
        "absorbed_lhs": vol_lhs - grad_term,
        "absorbed_positive": bool(vol_lhs - grad_term > 0),
    }


# -- componentwise continuation ---------------------------------------------------------


def stokes_reconstruct(grid: PolarGrid, state: StokesState, eps: float, noise: float = 0.0, seed: int = 0) -> StokesState:
    """Recover each component of v from its Cauchy data on Gamma with P = -Lap.

    The interior source of component k is -Lap v^k of the given state, which
    for a Stokes solution is fixed by the drift and the other components.
    Component k draws its noise from ``seed + k``.
    """
    out = []
    for k, comp in enumerate(state.v):
        data = cauchy_data(grid, comp, _IDENTITY, _LAPLACIAN, noise=noise, seed=seed + k)
        out.append(solve_cauchy(grid, data, _IDENTITY, _LAPLACIAN, eps))
    return StokesState(np.stack(out[:N_DIM]), out[N_DIM])
