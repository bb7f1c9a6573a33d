"""Levenberg-Marquardt engine and the three measurement models.

Synthetic data is generated straight from the model formulas written out
locally, so a systematic error in the package models would show up as a
recovery failure rather than cancel out.
"""

import math
import random

import numpy as np
import pytest

from labkit.errors import DegenerateData
from labkit.fitting import (
    MODELS,
    evaluate_model,
    fit_gauss1d,
    fit_gauss2d,
    fit_lorentz_dip,
    initial_guess,
    levenberg_marquardt,
)


def gauss1d_y(x, a, x0, sigma, offset):
    return offset + a * np.exp(-((x - x0) ** 2) / (2 * sigma**2))


def lorentz_y(f, offset, c, f0, fwhm):
    h = fwhm / 2.0
    return offset * (1 - c * h * h / ((f - f0) ** 2 + h * h))


X41 = np.linspace(0.0, 2.0, 41)
F101 = np.linspace(2.87e9 - 1.0e8, 2.87e9 + 1.0e8, 101)


# -- noise-free recovery ------------------------------------------------------


def test_gauss1d_recovers_exact_parameters():
    y = gauss1d_y(X41, 100.0, 1.0, 0.2, 10.0)
    fit = fit_gauss1d(X41, y)
    assert fit.converged
    assert fit.params["A"] == pytest.approx(100.0, rel=1e-4)
    assert fit.params["x0"] == pytest.approx(1.0, rel=1e-4)
    assert fit.params["sigma"] == pytest.approx(0.2, rel=1e-4)
    assert fit.params["offset"] == pytest.approx(10.0, rel=1e-4)
    assert set(fit.stderr) == set(fit.params)


def test_gauss2d_recovers_exact_parameters():
    xs = np.linspace(0.0, 2.0, 21)
    xy = np.array([(x, y) for y in xs for x in xs])
    dx = xy[:, 0] - 0.9
    dy = xy[:, 1] - 1.2
    z = 10.0 + 100.0 * np.exp(-dx**2 / (2 * 0.25**2) - dy**2 / (2 * 0.35**2))
    fit = fit_gauss2d(xy, z)
    assert fit.converged
    expected = {"A": 100.0, "x0": 0.9, "y0": 1.2,
                "sigma_x": 0.25, "sigma_y": 0.35, "offset": 10.0}
    for name, want in expected.items():
        assert fit.params[name] == pytest.approx(want, rel=1e-4), name


def test_lorentz_dip_recovers_exact_parameters():
    y = lorentz_y(F101, 1.0e5, 0.25, 2.87e9, 1.0e7)
    fit = fit_lorentz_dip(F101, y)
    assert fit.converged
    assert fit.params["offset"] == pytest.approx(1.0e5, rel=1e-4)
    assert fit.params["c"] == pytest.approx(0.25, rel=1e-4)
    assert fit.params["f0"] == pytest.approx(2.87e9, rel=1e-4)
    assert fit.params["fwhm"] == pytest.approx(1.0e7, rel=1e-4)


def test_gauss2d_peak_on_grid_corner():
    xs = np.linspace(0.0, 2.0, 21)
    xy = np.array([(x, y) for y in xs for x in xs])
    z = 10.0 + 100.0 * np.exp(-(xy[:, 0] ** 2 + xy[:, 1] ** 2) / (2 * 0.3**2))
    fit = fit_gauss2d(xy, z)
    assert fit.converged
    pitch = 0.1
    assert abs(fit.params["x0"]) < pitch
    assert abs(fit.params["y0"]) < pitch


def test_noise_free_residual_is_tiny():
    y = gauss1d_y(X41, 100.0, 1.0, 0.2, 10.0)
    fit = fit_gauss1d(X41, y)
    assert fit.residual_norm < 1e-10
    recon = evaluate_model("gauss1d", fit.params, X41)
    assert np.allclose(recon, y, rtol=1e-7)


# -- degenerate inputs --------------------------------------------------------


def test_constant_signal_raises():
    with pytest.raises(DegenerateData):
        fit_gauss1d(X41, np.full_like(X41, 7.0))
    xs = np.linspace(0.0, 2.0, 21)
    xy = np.array([(x, y) for y in xs for x in xs])
    with pytest.raises(DegenerateData):
        fit_gauss2d(xy, np.full(len(xy), 7.0))
    with pytest.raises(DegenerateData):
        fit_lorentz_dip(F101, np.full_like(F101, 7.0))


def test_input_shape_checks():
    with pytest.raises(DegenerateData):
        fit_gauss1d([0, 1, 2], [1, 2, 3])  # too short
    with pytest.raises(DegenerateData):
        fit_gauss1d(X41, X41[:-1])  # length mismatch
    with pytest.raises(DegenerateData):
        fit_gauss1d([0, 1, 1, 2, 3], [1, 2, 3, 2, 1])  # not monotonic
    with pytest.raises(DegenerateData):
        fit_lorentz_dip(F101[::-1], lorentz_y(F101, 1e5, 0.2, 2.87e9, 1e7))
    with pytest.raises(DegenerateData):
        fit_gauss2d(np.zeros((10, 3)), np.zeros(10))
    xy = np.array([(0.0, float(i)) for i in range(10)])  # no x spread
    with pytest.raises(DegenerateData):
        fit_gauss2d(xy, np.arange(10.0))


# -- initial guesses ----------------------------------------------------------


def test_guess_center_near_truth():
    y = gauss1d_y(X41, 100.0, 1.0, 0.2, 10.0)
    guess = initial_guess("gauss1d", (X41, y))
    spacing = X41[1] - X41[0]
    assert abs(guess["x0"] - 1.0) <= 2 * spacing


def test_guess_symmetric_data_centered():
    # two equal maxima around 1.0: ties average to the symmetry point
    y = gauss1d_y(X41, 100.0, 1.0, 0.2, 10.0)
    sym = np.minimum(y, y[::-1])
    guess = initial_guess("gauss1d", (X41, sym))
    assert guess["x0"] == pytest.approx(1.0)


def test_guess_dip_contrast_within_factor_two():
    y = lorentz_y(F101, 1.0e5, 0.25, 2.87e9, 1.0e7)
    guess = initial_guess("lorentz_dip", (F101, y))
    assert 0.125 <= guess["c"] <= 0.5
    assert abs(guess["f0"] - 2.87e9) <= 2 * (F101[1] - F101[0])


# -- engine invariants --------------------------------------------------------


def test_ssr_trace_is_monotone():
    """Re-running with increasing iteration budgets reconstructs the
    deterministic per-iteration SSR trace; it must never increase."""
    mdef = MODELS["gauss1d"]
    y = gauss1d_y(X41, 100.0, 1.0, 0.2, 10.0)
    p0 = np.array([30.0, 0.4, 0.6, 0.0])  # deliberately poor start
    r0 = y - mdef.func(X41, p0)
    trace = [float(r0 @ r0)]
    for budget in range(1, 26):
        _, ssr, n_iter, _ = levenberg_marquardt(mdef.func, X41, y, p0,
                                                max_iter=budget)
        assert n_iter <= budget
        trace.append(ssr)
    for prev, cur in zip(trace, trace[1:]):
        assert cur <= prev + 1e-12 * max(prev, 1.0)
    assert trace[-1] < trace[0]


def test_fit_never_worse_than_start():
    mdef = MODELS["lorentz_dip"]
    y = lorentz_y(F101, 1.0e5, 0.25, 2.87e9, 1.0e7)
    p0 = np.array([8.0e4, 0.5, 2.90e9, 5.0e7])
    r0 = y - mdef.func(F101, p0)
    _, ssr, _, _ = levenberg_marquardt(mdef.func, F101, y, p0)
    assert ssr <= float(r0 @ r0)


JAC_RANGES = {
    "gauss1d": [(20.0, 500.0), (0.3, 1.7), (0.08, 0.5), (0.0, 50.0)],
    "gauss2d": [(20.0, 500.0), (0.3, 1.7), (0.3, 1.7), (0.08, 0.5),
                (0.08, 0.5), (0.0, 50.0)],
    "lorentz_dip": [(1.0e4, 2.0e5), (0.05, 0.6), (2.80e9, 2.94e9),
                    (3.0e6, 4.0e7)],
}


def _fd_scales(model, p):
    """Characteristic length per parameter for the finite-difference step.

    Location parameters vary the model over the *width* scale, not their
    own magnitude (f0 ~ 1e9 but the dip is 1e7 wide), so stepping
    proportionally to the parameter value would drown in truncation error.
    """
    if model == "gauss1d":
        a, _, sigma, offset = p
        return [abs(a), sigma, sigma, max(abs(offset), 1.0)]
    if model == "gauss2d":
        a, _, _, sx, sy, offset = p
        return [abs(a), sx, sy, sx, sy, max(abs(offset), 1.0)]
    offset, _, _, fwhm = p
    return [abs(offset), 1.0, fwhm, fwhm]


@pytest.mark.parametrize("model", sorted(MODELS))
def test_analytic_jacobian_matches_finite_differences(model):
    mdef = MODELS[model]
    if model == "gauss2d":
        xs = np.linspace(0.0, 2.0, 15)
        x = np.array([(a, b) for b in xs for a in xs])
    elif model == "lorentz_dip":
        x = F101
    else:
        x = X41
    rng = random.Random(2026)
    for _ in range(20):
        p = np.array([rng.uniform(lo, hi) for lo, hi in JAC_RANGES[model]])
        analytic = np.asarray(mdef.jac(x, p), dtype=float)
        numeric = np.empty_like(analytic)
        scales = _fd_scales(model, p)
        for j in range(len(p)):
            h = 6e-6 * scales[j]  # ~cbrt(eps) of the feature scale
            up, dn = p.copy(), p.copy()
            up[j] += h
            dn[j] -= h
            numeric[:, j] = (mdef.func(x, up) - mdef.func(x, dn)) / (2 * h)
        for j in range(len(p)):
            scale = max(np.max(np.abs(analytic[:, j])), 1e-12)
            worst = np.max(np.abs(analytic[:, j] - numeric[:, j])) / scale
            assert worst < 1e-6, f"param {mdef.param_names[j]}: {worst}"


def test_location_is_scale_invariant():
    y = gauss1d_y(X41, 100.0, 1.0, 0.2, 10.0)
    base = fit_gauss1d(X41, y).params["x0"]
    scaled = fit_gauss1d(X41, 1000.0 * y).params["x0"]
    assert scaled == pytest.approx(base, rel=1e-9)

    yd = lorentz_y(F101, 1.0e5, 0.25, 2.87e9, 1.0e7)
    f_base = fit_lorentz_dip(F101, yd).params["f0"]
    f_scaled = fit_lorentz_dip(F101, 250.0 * yd).params["f0"]
    assert f_scaled == pytest.approx(f_base, rel=1e-9)


def test_width_parameters_reported_positive():
    # start the solver in a sign-flipped basin; widths enter squared
    y = gauss1d_y(X41, 100.0, 1.0, 0.2, 10.0)
    fit = fit_gauss1d(X41, y)
    assert fit.params["sigma"] > 0
    yd = lorentz_y(F101, 1.0e5, 0.25, 2.87e9, 1.0e7)
    assert fit_lorentz_dip(F101, yd).params["fwhm"] > 0


# -- noisy recovery, calibrated Monte Carlo ----------------------------------


def test_gauss1d_noisy_center_recovery():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        mu = gauss1d_y(X41, 9000.0, 1.0, 0.2, 1000.0)  # peak counts 1e4
        y = rng.poisson(mu).astype(float)
        try:
            fit = fit_gauss1d(X41, y)
        except DegenerateData:
            continue
        if fit.converged and abs(fit.params["x0"] - 1.0) < 0.02:
            hits += 1
    assert hits >= 95


def test_lorentz_noisy_center_recovery():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        mu = lorentz_y(F101, 1.0e5, 0.25, 2.87e9, 1.0e7)
        y = mu * (1.0 + 0.01 * rng.standard_normal(len(mu)))
        try:
            fit = fit_lorentz_dip(F101, y)
        except DegenerateData:
            continue
        if fit.converged and abs(fit.params["f0"] - 2.87e9) < 1.0e6:
            hits += 1
    assert hits >= 95


def test_noisy_fit_reports_finite_stderr():
    rng = np.random.default_rng(7)
    mu = gauss1d_y(X41, 9000.0, 1.0, 0.2, 1000.0)
    fit = fit_gauss1d(X41, rng.poisson(mu).astype(float))
    for name, err in fit.stderr.items():
        assert math.isfinite(err) and err > 0, name
    # center known to ~sigma/10 here, so its stderr must be of that order
    assert fit.stderr["x0"] < 0.02
