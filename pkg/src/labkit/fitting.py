"""Nonlinear least squares: Levenberg-Marquardt with Gaussian and
Lorentzian-dip models plus initial-guess heuristics.

The engine differentiates by central differences, so models only need an
evaluation function; the analytic Jacobians carried by the built-in models
exist for verification and external consumers, not for the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateData, NoConvergence

#: 1/e^2 radius of a Gaussian beam per fitted sigma: w = 2*sigma.
W_OVER_SIGMA = 2.0

#: FWHM of a Gaussian per sigma.
FWHM_OVER_SIGMA = 2.3548200450309493  # 2*sqrt(2*ln 2)

LAMBDA_START = 1e-3
LAMBDA_MAX = 1e13
SSR_RTOL = 1e-10
STEP_TOL = 1e-12
MAX_ITER = 200


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict[str, float]
    stderr: dict[str, float]
    residual_norm: float
    converged: bool
    n_iter: int


@dataclass(frozen=True)
class ModelDef:
    name: str
    param_names: tuple[str, ...]
    func: Callable  # func(x, p) -> y, vectorized over x
    jac: Callable   # analytic d y / d p_j, shape (n, k)


def _gauss1d(x, p):
    a, x0, sigma, offset = p
    return offset + a * np.exp(-((x - x0) ** 2) / (2.0 * sigma ** 2))


def _gauss1d_jac(x, p):
    a, x0, sigma, _ = p
    u = x - x0
    e = np.exp(-(u ** 2) / (2.0 * sigma ** 2))
    return np.column_stack([
        e,
        a * e * u / sigma ** 2,
        a * e * u ** 2 / sigma ** 3,
        np.ones_like(x),
    ])


def _gauss2d(xy, p):
    a, x0, y0, sx, sy, offset = p
    dx = xy[:, 0] - x0
    dy = xy[:, 1] - y0
    return offset + a * np.exp(-(dx ** 2) / (2.0 * sx ** 2)
                               - (dy ** 2) / (2.0 * sy ** 2))


def _gauss2d_jac(xy, p):
    a, x0, y0, sx, sy, _ = p
    dx = xy[:, 0] - x0
    dy = xy[:, 1] - y0
    e = np.exp(-(dx ** 2) / (2.0 * sx ** 2) - (dy ** 2) / (2.0 * sy ** 2))
    return np.column_stack([
        e,
        a * e * dx / sx ** 2,
        a * e * dy / sy ** 2,
        a * e * dx ** 2 / sx ** 3,
        a * e * dy ** 2 / sy ** 3,
        np.ones(len(xy)),
    ])


def _lorentz_dip(f, p):
    offset, c, f0, fwhm = p
    h = fwhm / 2.0
    lor = h * h / ((f - f0) ** 2 + h * h)
    return offset * (1.0 - c * lor)


def _lorentz_dip_jac(f, p):
    offset, c, f0, fwhm = p
    h = fwhm / 2.0
    d = f - f0
    denom = d * d + h * h
    lor = h * h / denom
    return np.column_stack([
        1.0 - c * lor,
        -offset * lor,
        -offset * c * 2.0 * h * h * d / denom ** 2,
        -offset * c * h * d * d / denom ** 2,  # d/dfwhm = d/dh * 1/2
    ])


MODELS: dict[str, ModelDef] = {
    "gauss1d": ModelDef("gauss1d", ("A", "x0", "sigma", "offset"),
                        _gauss1d, _gauss1d_jac),
    "gauss2d": ModelDef("gauss2d", ("A", "x0", "y0", "sigma_x", "sigma_y", "offset"),
                        _gauss2d, _gauss2d_jac),
    "lorentz_dip": ModelDef("lorentz_dip", ("offset", "c", "f0", "fwhm"),
                            _lorentz_dip, _lorentz_dip_jac),
}


def evaluate_model(model: str, params: dict[str, float], x) -> np.ndarray:
    mdef = MODELS[model]
    p = np.array([params[name] for name in mdef.param_names], dtype=float)
    return np.asarray(mdef.func(np.asarray(x, dtype=float), p), dtype=float)


# --- initial guesses ---------------------------------------------------------

def _tie_mean_arg_extremum(x: np.ndarray, y: np.ndarray, maximum: bool) -> float:
    """x at the extremum of y; exact ties average, so symmetric data guess
    the symmetry point."""
    target = np.max(y) if maximum else np.min(y)
    return float(np.mean(x[y == target]))


def _span_at_level(x: np.ndarray, above: np.ndarray) -> float:
    """Width of the x-interval covered by True entries of ``above``."""
    hit = x[above]
    if len(hit) == 0:
        return 0.0
    return float(np.max(hit) - np.min(hit))


def _min_spacing(x: np.ndarray) -> float:
    diffs = np.abs(np.diff(np.sort(np.unique(x))))
    return float(np.min(diffs)) if len(diffs) else 1.0


def initial_guess(model: str, data) -> dict[str, float]:
    """Heuristic starting parameters; raises DegenerateData when the data
    cannot seed the model (constant signal)."""
    if model == "gauss1d":
        x, y = (np.asarray(v, dtype=float) for v in data)
        if np.max(y) == np.min(y):
            raise DegenerateData("signal is constant")
        offset = float(np.percentile(y, 10))
        a = float(np.max(y) - offset)
        if a <= 0:
            raise DegenerateData("no peak above the baseline")
        x0 = _tie_mean_arg_extremum(x, y, maximum=True)
        span = _span_at_level(x, y >= offset + a / 2.0)
        sigma = max(span / FWHM_OVER_SIGMA, _min_spacing(x) / 2.0)
        return {"A": a, "x0": x0, "sigma": sigma, "offset": offset}
    if model == "gauss2d":
        xy, z = data
        xy = np.asarray(xy, dtype=float)
        z = np.asarray(z, dtype=float)
        if np.max(z) == np.min(z):
            raise DegenerateData("signal is constant")
        offset = float(np.percentile(z, 10))
        a = float(np.max(z) - offset)
        if a <= 0:
            raise DegenerateData("no peak above the baseline")
        peak = z == np.max(z)
        x0 = float(np.mean(xy[peak, 0]))
        y0 = float(np.mean(xy[peak, 1]))
        above = z >= offset + a / 2.0
        sx = max(_span_at_level(xy[:, 0], above) / FWHM_OVER_SIGMA,
                 _min_spacing(xy[:, 0]) / 2.0)
        sy = max(_span_at_level(xy[:, 1], above) / FWHM_OVER_SIGMA,
                 _min_spacing(xy[:, 1]) / 2.0)
        return {"A": a, "x0": x0, "y0": y0, "sigma_x": sx, "sigma_y": sy,
                "offset": offset}
    if model == "lorentz_dip":
        f, y = (np.asarray(v, dtype=float) for v in data)
        if np.max(y) == np.min(y):
            raise DegenerateData("signal is constant")
        offset = float(np.percentile(y, 90))
        if offset <= 0:
            raise DegenerateData("baseline must be positive for a dip model")
        depth = offset - float(np.min(y))
        if depth <= 0:
            raise DegenerateData("no dip below the baseline")
        c = min(max(depth / offset, 0.01), 0.95)
        f0 = _tie_mean_arg_extremum(f, y, maximum=False)
        fwhm = max(_span_at_level(f, y <= offset - depth / 2.0),
                   _min_spacing(f))
        return {"offset": offset, "c": c, "f0": f0, "fwhm": fwhm}
    raise KeyError(f"unknown model '{model}'")


# --- engine -------------------------------------------------------------------

def _fd_jacobian(func, x, p: np.ndarray) -> np.ndarray:
    n = len(np.asarray(func(x, p)))
    jac = np.empty((n, len(p)))
    for j in range(len(p)):
        h = 1e-6 * max(abs(p[j]), 1e-12)
        plus = p.copy()
        minus = p.copy()
        plus[j] += h
        minus[j] -= h
        jac[:, j] = (func(x, plus) - func(x, minus)) / (2.0 * h)
    return jac


def levenberg_marquardt(func, x, y: np.ndarray, p0: np.ndarray,
                        max_iter: int = MAX_ITER) -> tuple[np.ndarray, float, int, bool]:
    """Minimize sum((y - func(x, p))^2) from p0.

    Returns (p, ssr, n_iter, converged). Steps are only ever accepted when
    they lower the SSR, so the result is never worse than the start.
    """
    p = np.asarray(p0, dtype=float).copy()
    residual = y - func(x, p)
    ssr = float(residual @ residual)
    lam = LAMBDA_START
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        jac = _fd_jacobian(func, x, p)
        jtj = jac.T @ jac
        jtr = jac.T @ residual
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = 1e-30
        stepped = False
        while lam <= LAMBDA_MAX:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            trial = p + delta
            trial_res = y - func(x, trial)
            trial_ssr = float(trial_res @ trial_res)
            if np.isfinite(trial_ssr) and trial_ssr < ssr:
                step_norm = float(np.linalg.norm(delta))
                rel_drop = (ssr - trial_ssr) / ssr if ssr > 0 else 0.0
                p, residual, ssr = trial, trial_res, trial_ssr
                lam = max(lam / 10.0, 1e-15)
                stepped = True
                if rel_drop < SSR_RTOL or step_norm < STEP_TOL:
                    converged = True
                break
            lam *= 10.0
        if not stepped:
            # no direction lowers SSR within the damping budget: local minimum
            converged = True
        if converged:
            break
    return p, ssr, n_iter, converged


def _stderr(func, x, p: np.ndarray, ssr: float) -> np.ndarray:
    n = len(np.asarray(func(x, p)))
    k = len(p)
    if n <= k:
        return np.full(k, np.nan)
    jac = _fd_jacobian(func, x, p)
    try:
        cov = np.linalg.inv(jac.T @ jac) * (ssr / (n - k))
    except np.linalg.LinAlgError:
        return np.full(k, np.nan)
    diag = np.diag(cov).copy()
    diag[diag < 0] = np.nan
    return np.sqrt(diag)


def _fit(model: str, x, y, guess: dict[str, float]) -> FitResult:
    mdef = MODELS[model]
    p0 = np.array([guess[name] for name in mdef.param_names], dtype=float)
    y = np.asarray(y, dtype=float)
    p, ssr, n_iter, converged = levenberg_marquardt(mdef.func, x, y, p0)
    if not converged:
        raise NoConvergence(f"{model} fit did not converge in {MAX_ITER} iterations")
    # width parameters enter the models squared, so normalize their sign
    p = p.copy()
    for i, name in enumerate(mdef.param_names):
        if name.startswith("sigma") or name == "fwhm":
            p[i] = abs(p[i])
    err = _stderr(mdef.func, x, p, ssr)
    return FitResult(
        model=model,
        params={name: float(v) for name, v in zip(mdef.param_names, p)},
        stderr={name: float(e) for name, e in zip(mdef.param_names, err)},
        residual_norm=ssr,
        converged=True,
        n_iter=n_iter,
    )


def fit_gauss1d(x, y) -> FitResult:
    """Peak fit y = offset + A*exp(-(x-x0)^2 / (2 sigma^2))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise DegenerateData("x and y lengths differ")
    if len(x) < 5:
        raise DegenerateData("need at least 5 points")
    dx = np.diff(x)
    if not (np.all(dx > 0) or np.all(dx < 0)):
        raise DegenerateData("x must be strictly monotonic")
    return _fit("gauss1d", x, y, initial_guess("gauss1d", (x, y)))


def fit_gauss2d(xy, z) -> FitResult:
    """Axis-aligned 2D peak fit over scattered (x, y) -> z samples."""
    xy = np.asarray(xy, dtype=float)
    z = np.asarray(z, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise DegenerateData("xy must be an array of (x, y) pairs")
    if len(xy) != len(z):
        raise DegenerateData("xy and z lengths differ")
    if len(z) < 6:
        raise DegenerateData("need at least 6 points")
    if len(np.unique(xy[:, 0])) < 2 or len(np.unique(xy[:, 1])) < 2:
        raise DegenerateData("points must span both axes")
    return _fit("gauss2d", xy, z, initial_guess("gauss2d", (xy, z)))


def fit_lorentz_dip(f, y) -> FitResult:
    """Dip fit y = offset*(1 - c*(fwhm/2)^2 / ((f-f0)^2 + (fwhm/2)^2))."""
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(f) != len(y):
        raise DegenerateData("f and y lengths differ")
    if len(f) < 5:
        raise DegenerateData("need at least 5 points")
    if not np.all(np.diff(f) > 0):
        raise DegenerateData("f must be strictly ascending")
    return _fit("lorentz_dip", f, y, initial_guess("lorentz_dip", (f, y)))
