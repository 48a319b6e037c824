"""Both sides of the global Carleman estimate on the annulus, and empirical constants.

For phi = exp(gamma psi), sigma = s gamma phi the two sides are

    LHS = int_D  e^{2s phi} sigma (gamma |grad_g u|^2 + gamma sigma^2 |u|^2) dV_g
        + int_S  e^{2s phi} sigma (|d_nu u|^2 + sigma^2 |u|^2) dS_g

    RHS = int_D  e^{2s phi} |Pu|^2 dV_g
        + int_G  e^{2s phi} sigma (|grad_g u|^2 + sigma^2 |u|^2) dS_g
        + int_S  e^{2s phi} sigma |grad_tau u|^2 dS_g

Every nodal contribution is formed as a logarithm and the five integrals are
reduced with one shared offset (the largest nodal log-contribution), so LHS
and RHS of the same field always share an offset and their ratio never
touches exp(offset).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fields import CoefficientSet, MetricField, P_matrix, metric_inverse_det
from .grid import GAMMA_OUTER, S_INNER, PolarGrid
from .norms import h2_norm, metric_gradient_sq, normal_derivative, tangential_gradient_sq
from .weight import BaseWeight, CarlemanParams, LogScaled, grid_factors

__all__ = [
    "DegenerateFamilyMember",
    "InvalidConfig",
    "TestFamily",
    "CarlemanIntegrands",
    "CarlemanTerms",
    "EmpiricalConstants",
    "make_family",
    "integrands",
    "carleman_terms",
    "carleman_lhs",
    "carleman_rhs",
    "family_ratios",
    "empirical_constant",
    "sweep",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = ["gamma", "s", "c_emp", "argmin_member", "lhs_log10", "rhs_log10"]
STABILITY_FACTOR = 0.5
LHS_TERMS = ("volume", "inner_boundary")
RHS_TERMS = ("source", "outer_boundary", "inner_tangential")


class DegenerateFamilyMember(ArithmeticError):
    pass


class InvalidConfig(ValueError):
    pass


@dataclass
class TestFamily:
    """Seeded probe fields with unit discrete H2 norm.

    Members are Chebyshev-in-r times Fourier-in-theta sums with random complex
    coefficients, followed by optional boundary-layer bumps hugging each circle.
    """

    __test__ = False  # not a pytest class

    seed: int
    count: int
    max_degree: int
    max_frequency: int
    members: list[np.ndarray]
    labels: list[str]


def _band_limited(grid: PolarGrid, rng: np.random.Generator, J: int, M: int, real: bool) -> np.ndarray:
    rr, tt = grid.polar
    rho = 2.0 * (rr - grid.r0) / (grid.R1 - grid.r0) - 1.0
    cheb = np.polynomial.chebyshev.chebvander(rho.ravel(), J).T.reshape((J + 1,) + grid.shape)
    u = np.zeros(grid.shape, dtype=complex)
    for j in range(J + 1):
        for m in range(-M, M + 1):
            c = rng.standard_normal() + (0.0 if real else 1j * rng.standard_normal())
            u += c / ((1 + j) * (1 + abs(m))) * cheb[j] * np.exp(1j * m * tt)
    return u.real.astype(complex) if real else u


def _boundary_bumps(grid: PolarGrid, width: float) -> list[tuple[str, np.ndarray]]:
    rr, tt = grid.polar
    out = []
    for tag, dist in ((S_INNER, rr - grid.r0), (GAMMA_OUTER, grid.R1 - rr)):
        for m in (0, 4):
            out.append((f"bump:{tag}:m={m}", np.exp(-((dist / width) ** 2)) * np.cos(m * tt) + 0j))
    return out


def make_family(
    grid: PolarGrid,
    seed: int = 42,
    count: int = 20,
    max_degree: int = 6,
    max_frequency: int = 6,
    adversarial: bool = True,
    real: bool = False,
    bump_width: float = 0.1,
) -> TestFamily:
    rng = np.random.default_rng(seed)
    members, labels = [], []
    for k in range(count):
        members.append(_band_limited(grid, rng, max_degree, max_frequency, real))
        labels.append(f"band:{k}")
    if adversarial:
        for label, u in _boundary_bumps(grid, bump_width):
            members.append(u)
            labels.append(label)
    members = [u / h2_norm(grid, u) for u in members]
    return TestFamily(seed, count, max_degree, max_frequency, members, labels)


@dataclass(frozen=True)
class CarlemanIntegrands:
    """Parameter-free nodal pieces of both sides for one field.

    Boundary arrays already include the dS_g factor and arc weights; volume
    arrays include the dV_g factor and the volume quadrature weights.
    """

    w_vol: np.ndarray
    grad_sq: np.ndarray
    u_sq: np.ndarray
    Pu_sq: np.ndarray
    w_inner: np.ndarray
    dn_inner_sq: np.ndarray
    tan_inner_sq: np.ndarray
    u_inner_sq: np.ndarray
    w_outer: np.ndarray
    grad_outer_sq: np.ndarray
    u_outer_sq: np.ndarray


def integrands(
    grid: PolarGrid, u, metric: MetricField, coeffs: CoefficientSet, P=None
) -> CarlemanIntegrands:
    u = np.asarray(u, dtype=complex).reshape(grid.shape)
    _, det = metric_inverse_det(metric.at(grid))
    sg = np.sqrt(det)
    P = P_matrix(grid, metric, coeffs) if P is None else P
    Pu = grid.apply(P, u)
    grad_sq = metric_gradient_sq(grid, u, metric)
    b_in, b_out = grid.boundary(S_INNER), grid.boundary(GAMMA_OUTER)
    return CarlemanIntegrands(
        w_vol=grid.weights * sg,
        grad_sq=grad_sq,
        u_sq=np.abs(u) ** 2,
        Pu_sq=np.abs(Pu) ** 2,
        w_inner=b_in.weights * sg[b_in.row],
        dn_inner_sq=np.abs(normal_derivative(grid, u, metric, S_INNER)) ** 2,
        tan_inner_sq=tangential_gradient_sq(grid, u, metric, S_INNER),
        u_inner_sq=np.abs(u[b_in.row]) ** 2,
        w_outer=b_out.weights * sg[b_out.row],
        grad_outer_sq=grad_sq[b_out.row],
        u_outer_sq=np.abs(u[b_out.row]) ** 2,
    )


@dataclass(frozen=True)
class CarlemanTerms:
    """Five integrals, all sharing ``log_offset``."""

    log_offset: float
    terms: dict[str, float]

    def _sum(self, names) -> LogScaled:
        return LogScaled(self.log_offset, float(sum(self.terms[n] for n in names)))

    @property
    def lhs(self) -> LogScaled:
        return self._sum(LHS_TERMS)

    @property
    def rhs(self) -> LogScaled:
        return self._sum(RHS_TERMS)

    def term(self, name: str) -> LogScaled:
        return LogScaled(self.log_offset, self.terms[name])


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def carleman_terms(
    grid: PolarGrid, data: CarlemanIntegrands, weight: BaseWeight, params: CarlemanParams
) -> CarlemanTerms:
    phi, sigma = grid_factors(weight, params, grid)
    g, s = params.gamma, params.s
    two_s_phi = 2.0 * s * phi
    i_in = grid.boundary(S_INNER).row
    i_out = grid.boundary(GAMMA_OUTER).row
    sig_in, sig_out = sigma[i_in], sigma[i_out]

    # nodal log-contributions; sums of nonnegative reals, so log is safe up to log(0) = -inf
    logs = {
        "volume": two_s_phi + _log(data.w_vol * sigma * g * (data.grad_sq + sigma**2 * data.u_sq)),
        "inner_boundary": two_s_phi[i_in] + _log(data.w_inner * sig_in * (data.dn_inner_sq + sig_in**2 * data.u_inner_sq)),
        "source": two_s_phi + _log(data.w_vol * data.Pu_sq),
        "outer_boundary": two_s_phi[i_out]
        + _log(data.w_outer * sig_out * (data.grad_outer_sq + sig_out**2 * data.u_outer_sq)),
        "inner_tangential": two_s_phi[i_in] + _log(data.w_inner * sig_in * data.tan_inner_sq),
    }
    top = max(float(np.max(v)) for v in logs.values())
    if not np.isfinite(top):
        return CarlemanTerms(0.0, {k: 0.0 for k in logs})
    terms = {k: float(np.sum(np.exp(v - top), axis=-1).sum()) for k, v in logs.items()}
    return CarlemanTerms(top, terms)


def carleman_lhs(grid, u, metric, coeffs, weight, params) -> LogScaled:
    return carleman_terms(grid, integrands(grid, u, metric, coeffs), weight, params).lhs


def carleman_rhs(grid, u, metric, coeffs, weight, params) -> LogScaled:
    return carleman_terms(grid, integrands(grid, u, metric, coeffs), weight, params).rhs


# -- empirical constants --------------------------------------------------------------


@dataclass
class FamilyRatios:
    ratios: np.ndarray
    lhs_log10: np.ndarray
    rhs_log10: np.ndarray
    excluded: list[int] = field(default_factory=list)

    @property
    def argmin(self) -> int:
        return int(np.nanargmin(self.ratios))

    @property
    def minimum(self) -> float:
        return float(np.nanmin(self.ratios))


def family_ratios(
    grid: PolarGrid,
    family_data: list[CarlemanIntegrands],
    weight: BaseWeight,
    params: CarlemanParams,
) -> FamilyRatios:
    ratios, lhs_l, rhs_l, excluded = [], [], [], []
    for k, data in enumerate(family_data):
        t = carleman_terms(grid, data, weight, params)
        lhs, rhs = t.lhs, t.rhs
        if lhs.mantissa == 0.0 and rhs.mantissa == 0.0:
            excluded.append(k)
            ratios.append(np.nan)
        else:
            with np.errstate(divide="ignore"):
                ratios.append(rhs / lhs)
        lhs_l.append(lhs.log10)
        rhs_l.append(rhs.log10)
    if len(excluded) == len(family_data):
        raise DegenerateFamilyMember("every family member has LHS = RHS = 0")
    return FamilyRatios(np.array(ratios), np.array(lhs_l), np.array(rhs_l), excluded)


def family_integrands(grid, family: TestFamily, metric, coeffs) -> list[CarlemanIntegrands]:
    P = P_matrix(grid, metric, coeffs)
    return [integrands(grid, u, metric, coeffs, P=P) for u in family.members]


def empirical_constant(grid, family: TestFamily, metric, coeffs, weight, gamma: float, s: float) -> float:
    """min over the family of RHS/LHS."""
    data = family_integrands(grid, family, metric, coeffs)
    return family_ratios(grid, data, weight, CarlemanParams(gamma, s)).minimum


@dataclass
class EmpiricalConstants:
    gamma_star: float | None
    s_star: float | None
    rows: list[dict]

    @property
    def unstable(self) -> bool:
        return self.gamma_star is None

    def table(self) -> dict[tuple[float, float], float]:
        return {(r["gamma"], r["s"]): r["c_emp"] for r in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(float(r[k])) if isinstance(r[k], float) else r[k]) for k in SWEEP_COLUMNS})
        return buf.getvalue()


def _non_degenerate(values: list[float], start: int) -> bool:
    return all(v >= STABILITY_FACTOR * values[start] for v in values[start + 1:])


def sweep(
    grid: PolarGrid,
    family: TestFamily,
    metric: MetricField,
    coeffs: CoefficientSet,
    weight: BaseWeight,
    gamma_list,
    s_list,
    workers: int = 1,
) -> EmpiricalConstants:
    """Empirical constant on the (gamma, s) table, rows ordered by gamma then s.

    gamma* is the smallest gamma whose constant never drops below half its
    value at the smallest s; s* is the smallest s from which that holds
    for gamma*.  This stability criterion is a convention of this package.
    """
    gamma_list = sorted(float(g) for g in gamma_list)
    s_list = sorted(float(s) for s in s_list)
    if not gamma_list or not s_list:
        raise InvalidConfig("gamma and s lists must be nonempty")
    data = family_integrands(grid, family, metric, coeffs)
    cells = [(g, s) for g in gamma_list for s in s_list]

    def run(cell):
        g, s = cell
        fr = family_ratios(grid, data, weight, CarlemanParams(g, s))
        k = fr.argmin
        return {
            "gamma": g,
            "s": s,
            "c_emp": fr.minimum,
            "argmin_member": family.labels[k],
            "lhs_log10": float(fr.lhs_log10[k]),
            "rhs_log10": float(fr.rhs_log10[k]),
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]

    gamma_star = s_star = None
    for g in gamma_list:
        values = [r["c_emp"] for r in rows if r["gamma"] == g]
        if _non_degenerate(values, 0):
            gamma_star = g
            s_star = next(s_list[i] for i in range(len(s_list)) if _non_degenerate(values, i))
            break
    return EmpiricalConstants(gamma_star, s_star, rows)
