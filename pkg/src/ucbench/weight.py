"""Base weights psi for the Carleman estimate and overflow-safe exponentials.

A base weight is positive in the annulus, vanishes on the inner circle and
has a gradient bounded away from zero.  The Carleman factors are

    phi = exp(gamma * psi),   sigma = s * gamma * phi,

and the weight exp(2 s phi) is double-exponential in psi, so weighted
quantities are carried as :class:`LogScaled` (offset, mantissa) pairs.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy

from .grid import S_INNER, PolarGrid

__all__ = [
    "InvalidParams",
    "ExpressionError",
    "BaseWeight",
    "CarlemanParams",
    "LogScaled",
    "ValidationReport",
    "quadratic_weight",
    "radial_linear_weight",
    "custom_weight",
    "weight_preset",
    "validate_weight",
    "carleman_factors",
    "stabilized_weight",
    "parse_expression",
]

EXP_CAP = 700.0
BOUNDARY_TOL = 1e-12
GRADIENT_FLOOR = 1e-8


class InvalidParams(ValueError):
    pass


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class BaseWeight:
    name: str
    psi: Callable
    grad: Callable
    delta: float | None = None  # declared lower bound on |grad psi|; None = measure it

    def on_grid(self, grid: PolarGrid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.psi(grid.x1, grid.x2), dtype=float), grid.shape)

    def grad_on_grid(self, grid: PolarGrid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.grad(grid.x1, grid.x2), dtype=float), (2,) + grid.shape)


@dataclass(frozen=True)
class CarlemanParams:
    gamma: float
    s: float

    def __post_init__(self):
        for name in ("gamma", "s"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 1:
                raise InvalidParams(f"{name} must be finite and >= 1, got {v}")


@dataclass(frozen=True)
class LogScaled:
    """The quantity ``mantissa * exp(log_offset)``.

    Values sharing an offset add and divide without ever forming
    ``exp(log_offset)``.
    """

    log_offset: float
    mantissa: np.ndarray | float

    def _same(self, other: "LogScaled") -> None:
        if self.log_offset != other.log_offset:
            raise ValueError("LogScaled values carry different offsets")

    def __add__(self, other: "LogScaled") -> "LogScaled":
        self._same(other)
        return LogScaled(self.log_offset, self.mantissa + other.mantissa)

    def __truediv__(self, other: "LogScaled"):
        self._same(other)
        return self.mantissa / other.mantissa

    def scale(self, factor) -> "LogScaled":
        return LogScaled(self.log_offset, self.mantissa * factor)

    def rebase(self, log_offset: float) -> "LogScaled":
        return LogScaled(log_offset, self.mantissa * np.exp(self.log_offset - log_offset))

    @property
    def log10(self):
        with np.errstate(divide="ignore"):
            return (self.log_offset + np.log(self.mantissa)) / np.log(10.0)

    def value(self):
        """Plain floating-point value; overflows for large offsets."""
        return self.mantissa * np.exp(self.log_offset)


@dataclass
class ValidationReport:
    name: str
    min_interior_psi: float
    max_abs_psi_inner: float
    min_grad: float
    delta_declared: float | None
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def delta(self) -> float:
        return self.delta_declared if self.delta_declared is not None else self.min_grad


# -- presets ------------------------------------------------------------------------


def quadratic_weight(r0: float) -> BaseWeight:
    """psi = |x|^2 - r0^2, grad psi = 2x, delta = 2 r0."""
    return BaseWeight(
        name="quadratic",
        psi=lambda x1, x2: x1 * x1 + x2 * x2 - r0 * r0,
        grad=lambda x1, x2: np.stack([2.0 * x1, 2.0 * x2]),
        delta=2.0 * r0,
    )


def radial_linear_weight(r0: float) -> BaseWeight:
    """psi = |x| - r0 with unit gradient."""

    def grad(x1, x2):
        r = np.hypot(x1, x2)
        return np.stack([x1 / r, x2 / r])

    return BaseWeight(name="radial-linear", psi=lambda x1, x2: np.hypot(x1, x2) - r0, grad=grad, delta=1.0)


_X1, _X2 = sympy.symbols("x1 x2", real=True)
_FUNCS = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp, "log": sympy.log}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def _to_sympy(node: ast.AST):
    if isinstance(node, ast.Expression):
        return _to_sympy(node.body)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_to_sympy(node.left), _to_sympy(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _to_sympy(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return sympy.Float(node.value) if isinstance(node.value, float) else sympy.Integer(node.value)
    if isinstance(node, ast.Name):
        if node.id == "x1":
            return _X1
        if node.id == "x2":
            return _X2
        if node.id == "pi":
            return sympy.pi
        if node.id == "_absx":
            return sympy.sqrt(_X1**2 + _X2**2)
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
        and not node.keywords
    ):
        return _FUNCS[node.func.id](_to_sympy(node.args[0]))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse_expression(text: str) -> sympy.Expr:
    """Parse a weight expression in x1, x2.

    Grammar: numbers, ``x1``, ``x2``, ``|x|`` (Euclidean norm), ``pi``,
    ``+ - * / ^`` and the functions ``sin cos exp log``.  ``^`` is power.
    """
    src = text.replace("|x|", "_absx").replace("^", "**").replace("×", "*").replace("−", "-")
    if "|" in src:
        raise ExpressionError("only |x| is supported inside bars")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _to_sympy(tree)


def custom_weight(expression: str, delta: float | None = None) -> BaseWeight:
    expr = parse_expression(expression)
    f = sympy.lambdify((_X1, _X2), expr, "numpy")
    g1 = sympy.lambdify((_X1, _X2), sympy.diff(expr, _X1), "numpy")
    g2 = sympy.lambdify((_X1, _X2), sympy.diff(expr, _X2), "numpy")

    def psi(x1, x2):
        return np.broadcast_to(np.asarray(f(x1, x2), dtype=float), np.shape(x1))

    def grad(x1, x2):
        return np.stack([np.broadcast_to(np.asarray(g(x1, x2), dtype=float), np.shape(x1)) for g in (g1, g2)])

    return BaseWeight(name=f"custom:{expression}", psi=psi, grad=grad, delta=delta)


def invalid_control_weight(r0: float, R1: float) -> BaseWeight:
    """Deliberately bad weight: nonzero on the inner circle, flat on the mid circle."""
    mid = 0.5 * (r0 + R1)
    return custom_weight(f"(|x| - {mid!r})^2")


def weight_preset(name: str, r0: float, expression: str | None = None, R1: float | None = None) -> BaseWeight:
    if name == "quadratic":
        return quadratic_weight(r0)
    if name == "radial-linear":
        return radial_linear_weight(r0)
    if name == "custom":
        if not expression:
            raise ValueError("custom weight needs an expression")
        return custom_weight(expression)
    if name == "invalid-control":
        return invalid_control_weight(r0, R1 if R1 is not None else 2.0 * r0)
    raise KeyError(f"unknown weight preset {name!r}")


# -- checks and factors -------------------------------------------------------------


def validate_weight(weight: BaseWeight, grid: PolarGrid) -> ValidationReport:
    """Check positivity in D, vanishing on the inner circle and a gradient floor."""
    psi = weight.on_grid(grid)
    grad = np.hypot(*weight.grad_on_grid(grid))
    inner = psi[grid.boundary(S_INNER).row]
    interior = psi[1:]
    min_grad = float(grad.min())
    rep = ValidationReport(
        name=weight.name,
        min_interior_psi=float(interior.min()),
        max_abs_psi_inner=float(np.abs(inner).max()),
        min_grad=min_grad,
        delta_declared=weight.delta,
    )
    rep.checks["positive_in_D"] = rep.min_interior_psi > 0
    rep.checks["vanishes_on_S"] = rep.max_abs_psi_inner <= BOUNDARY_TOL
    if weight.delta is not None:
        rep.checks["gradient_bound"] = min_grad >= weight.delta - BOUNDARY_TOL and weight.delta > 0
    else:
        rep.checks["gradient_bound"] = min_grad > GRADIENT_FLOOR
    rep.checks["finite"] = bool(np.all(np.isfinite(psi)) and np.all(np.isfinite(grad)))
    return rep


def carleman_factors(psi, params: CarlemanParams):
    """(phi, sigma) from base-weight values ``psi`` (scalar or array)."""
    gp = params.gamma * np.asarray(psi, dtype=float)
    if np.any(gp > EXP_CAP):
        raise InvalidParams(f"gamma*psi = {gp.max():.1f} exceeds {EXP_CAP}; use LogScaled arithmetic")
    phi = np.exp(gp)
    return phi, params.s * params.gamma * phi


def grid_factors(weight: BaseWeight, params: CarlemanParams, grid: PolarGrid):
    phi, sigma = carleman_factors(weight.on_grid(grid), params)
    # psi vanishes on the inner circle up to rounding; pin phi = 1 there exactly
    psi_inner = weight.on_grid(grid)[0]
    if np.all(np.abs(psi_inner) <= BOUNDARY_TOL):
        phi = phi.copy()
        sigma = sigma.copy()
        phi[0] = 1.0
        sigma[0] = params.s * params.gamma
    return phi, sigma


def stabilized_weight(weight: BaseWeight, params: CarlemanParams, grid: PolarGrid) -> LogScaled:
    """exp(2 s phi) at every node as offset ``2 s max(phi)`` plus mantissas in (0, 1]."""
    phi, _ = grid_factors(weight, params, grid)
    top = phi.max()
    return LogScaled(2.0 * params.s * top, np.exp(2.0 * params.s * (phi - top)))

