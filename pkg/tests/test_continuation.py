import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucbench.continuation import (
    CauchyData,
    InvalidConfig,
    InvalidParams,
    brute_force_min,
    cauchy_data,
    corollary_constants,
    fit_log_rate,
    minimize_over_s,
    noise_sweep_fit,
    phi_modulus,
    solve_cauchy,
    tikhonov_functional,
)
from ucbench.fields import COEFFICIENT_PRESETS, METRIC_PRESETS
from ucbench.grid import GAMMA_OUTER, build_grid
from ucbench.norms import cauchy_terms, l2_norm

IDENTITY = METRIC_PRESETS["identity"]
LAP = COEFFICIENT_PRESETS["laplacian"]
MID = build_grid(1.0, 2.0, 33, 64)
DELTAS = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]


# -- modulus and s-minimisation ----------------------------------------------------


def test_phi_modulus_examples():
    assert phi_modulus(0, 1, math.exp(0.5)) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert phi_modulus(1, 2, math.exp(4)) == pytest.approx(0.5, rel=1e-15)
    assert phi_modulus(0, 1, math.e) == pytest.approx(1 / math.e, rel=1e-15)
    # just past the endpoint the second branch applies
    assert phi_modulus(0, 1, math.e * (1 + 1e-12)) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("args", [(0, 1, 0.0), (0, 1, -1.0), (2.0, 1, 2.0), (-0.5, 1, 2.0), (0, 0, 2.0), (0, -1, 2.0)])
def test_phi_modulus_rejects(args):
    with pytest.raises(InvalidParams):
        phi_modulus(*args)


def test_minimize_data_dominated():
    s, v = minimize_over_s(2.0, 1.0, 1.0, 0.0)
    assert s == 1.0 and v == pytest.approx(math.e * 2.0 + 1.0, rel=1e-15)


def test_minimize_small_data_matches_brute_force():
    _, v = minimize_over_s(math.exp(-10), 1.0, 1.0, 0.0)
    _, vb = brute_force_min(math.exp(-10), 1.0, 1.0, 0.0)
    assert abs(v - vb) <= 1e-3 * vb and v <= vb * (1 + 1e-12)


def test_minimize_random_tuples_against_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        C = math.exp(-rng.uniform(0, 30))
        M = rng.uniform(0.1, 10)
        c = rng.uniform(0.1, 3)
        eta = rng.uniform(0, 1.99)
        _, v = minimize_over_s(C, M, c, eta)
        _, vb = brute_force_min(C, M, c, eta)
        assert abs(v - vb) <= 1e-3 * vb


@settings(max_examples=50, deadline=None)
@given(k=st.floats(0, 40), M=st.floats(1e-3, 1e3), c=st.floats(0.05, 5), eta=st.floats(0, 1.999))
def test_minimizer_is_local_minimum(k, M, c, eta):
    C = M * math.exp(-k)
    s, v = minimize_over_s(C, M, c, eta)
    F = lambda t: math.exp(c * t) * C + t ** (-(2 - eta) / 2) * M  # noqa: E731
    assert s >= 1.0
    assert v <= F(max(1.0, s * (1 - 1e-3))) * (1 + 1e-9)
    assert v <= F(s * (1 + 1e-3)) * (1 + 1e-9)


@pytest.mark.parametrize("args", [(0.0, 1, 1, 0), (1, -1, 1, 0), (1, 1, 0, 0), (1, 1, 1, 2.0)])
def test_minimize_rejects(args):
    with pytest.raises(InvalidParams):
        minimize_over_s(*args)


@pytest.mark.parametrize("eta", [0.0, 1.0])
def test_corollary_shape(eta):
    ratios, dbl = corollary_constants(eta)
    assert len(ratios) == 29 and np.all(np.isfinite(ratios))
    assert ratios.max() / ratios.min() < 10
    # the double-log modulus is too weak: its constant drifts much more
    assert dbl.max() / dbl.min() > ratios.max() / ratios.min()


# -- fitter --------------------------------------------------------------------------


@pytest.mark.parametrize("beta", [1.0, 0.5, 1.5])
def test_fitter_calibration(beta):
    d = np.array(DELTAS)
    b, resid = fit_log_rate(d, np.log(1 / d) ** (-beta))
    assert abs(b - beta) <= 1e-6 and resid < 1e-10


def test_fitter_needs_four_points():
    with pytest.raises(InvalidConfig):
        fit_log_rate([1e-2, 1e-3, 1e-4], [1, 2, 3])


def test_sweep_requires_three_decades():
    with pytest.raises(InvalidConfig):
        noise_sweep_fit(MID, np.zeros(MID.shape), IDENTITY, LAP, [1e-2, 5e-3, 2e-3, 1e-3])


# -- solver --------------------------------------------------------------------------


def test_cauchy_data_reproducible():
    u = MID.x1**2 - MID.x2**2
    a = cauchy_data(MID, u, IDENTITY, LAP, noise=1e-3, seed=7)
    b = cauchy_data(MID, u, IDENTITY, LAP, noise=1e-3, seed=7)
    c = cauchy_data(MID, u, IDENTITY, LAP, noise=1e-3, seed=8)
    assert np.array_equal(a.f, b.f) and np.array_equal(a.h, b.h)
    assert not np.array_equal(a.f, c.f)
    clean = cauchy_data(MID, u, IDENTITY, LAP)
    w = MID.boundary(GAMMA_OUTER).weights
    rel = np.sqrt(np.sum(w * np.abs(a.f - clean.f) ** 2) / np.sum(w * np.abs(clean.f) ** 2))
    assert rel == pytest.approx(1e-3, rel=1e-10)


def test_data_terms_are_cauchy_components():
    # J at eps -> 0 with data from u_true, evaluated at u_true + w, equals the squared
    # components of C(w) (with the tangential part in its discrete-trace form)
    u_true = np.sin(MID.x1) * MID.x2
    w = np.cos(MID.x2) * MID.x1**2
    data = cauchy_data(MID, u_true, IDENTITY, LAP)
    J = tikhonov_functional(MID, IDENTITY, LAP, data, 1e-300, u_true + w)
    pu, _, dn = cauchy_terms(MID, w, IDENTITY, LAP)
    assert J >= pu**2 + dn**2


def test_zero_data_zero_solution():
    data = cauchy_data(MID, np.zeros(MID.shape), IDENTITY, LAP)
    for eps in (1e-12, 1e-4, 1.0):
        assert np.abs(solve_cauchy(MID, data, IDENTITY, LAP, eps)).max() == 0


@pytest.mark.parametrize("metric, coeffs", [("identity", "laplacian"), ("smooth-perturbation", "complex-drift")])
def test_solver_beats_truth(metric, coeffs):
    m, c = METRIC_PRESETS[metric], COEFFICIENT_PRESETS[coeffs]
    u_true = MID.x1**2 - MID.x2**2
    data = cauchy_data(MID, u_true, m, c, noise=1e-2, seed=1)
    eps = 1e-4
    u = solve_cauchy(MID, data, m, c, eps)
    J = lambda v: tikhonov_functional(MID, m, c, data, eps, v)  # noqa: E731
    assert J(u) <= J(u_true) and J(u) <= J(np.zeros(MID.shape))


def test_solver_rejects_bad_input():
    data = cauchy_data(MID, np.zeros(MID.shape), IDENTITY, LAP)
    with pytest.raises(InvalidConfig):
        solve_cauchy(MID, data, IDENTITY, LAP, 0.0)
    bad = CauchyData(np.full(MID.Ntheta, np.nan), data.h, data.source)
    with pytest.raises(InvalidConfig):
        solve_cauchy(MID, bad, IDENTITY, LAP, 1e-3)


def test_noiseless_recovery(grid):
    u_true = grid.x1**2 - grid.x2**2
    u = solve_cauchy(grid, cauchy_data(grid, u_true, IDENTITY, LAP), IDENTITY, LAP, 1e-10)
    assert l2_norm(grid, u - u_true) <= 0.05 * l2_norm(grid, u_true)


def test_noise_sweep_monotone_and_seeded():
    u_true = MID.x1**2 - MID.x2**2
    fit = noise_sweep_fit(MID, u_true, IDENTITY, LAP, DELTAS, seed=3)
    order = np.argsort(fit.deltas)
    assert np.all(np.diff(fit.errors[order]) > 0) and fit.monotone
    assert np.array_equal(fit.eps, np.array(DELTAS) ** 2)
    assert fit.target == 1.0 and np.isfinite(fit.beta)
    again = noise_sweep_fit(MID, u_true, IDENTITY, LAP, DELTAS, seed=3)
    assert np.array_equal(fit.errors, again.errors)


def test_noise_sweep_eta_target():
    g = build_grid(1.0, 2.0, 17, 32)
    fit = noise_sweep_fit(g, g.x1**2 - g.x2**2, IDENTITY, LAP, DELTAS, eta=1.0)
    assert fit.target == 0.5 and np.all(fit.errors >= fit.errors_eta * (1 - 1e-9))
