"""Nonlinear least squares (Levenberg-Marquardt) and the model zoo.

All zoo models carry analytic Jacobians (verified against central finite
differences in the test suite).  Lineshapes are parameterized by FWHM
directly.  The stretched exponential is a*exp(-(t/T)^beta) with T the
1/e time.  The fitter is deterministic: no randomized restarts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FitError",
    "RankDeficiencyError",
    "FitModel",
    "FitResult",
    "MODEL_NAMES",
    "make_model",
    "fit",
    "fit_damped_cosine",
    "visibility",
    "fit_scaling",
    "ScalingResult",
    "fit_ou_bath",
    "BathFitResult",
    "linear_fit",
]

_LM_NU = 10.0  # multiplicative damping factor
_LM_LAMBDA0 = 1e-3
_TOL_ABS = 1e-10
_TOL_REL = 1e-8
_MAX_ITER = 200

MODEL_NAMES = (
    "lorentzian", "gaussian", "exponential", "double_exponential",
    "stretched_exponential", "sqrt_power", "power_law_scaling", "ou_cpmg",
)


class FitError(RuntimeError):
    pass


class RankDeficiencyError(FitError):
    """Jacobian has a dead column: a parameter the data cannot see."""


@dataclass(frozen=True)
class FitModel:
    """A named model: y = predict(params, x) with analytic jacobian."""

    name: str
    param_names: tuple[str, ...]
    predict: callable
    jacobian: callable  # (params, x) -> (n_points, n_params)
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @property
    def n_params(self) -> int:
        return len(self.param_names)


@dataclass
class FitResult:
    model: str
    param_names: tuple[str, ...]
    params: np.ndarray
    std_errors: np.ndarray
    residual_norm: float
    converged: bool
    n_iterations: int
    n_points: int
    message: str = ""

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.param_names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.std_errors[self.param_names.index(name)])

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in zip(self.param_names, self.params)},
            "std_errors": {k: float(v) for k, v in zip(self.param_names, self.std_errors)},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "n_iterations": int(self.n_iterations),
            "n_points": int(self.n_points),
            "message": self.message,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# model zoo

_LN2X4 = 4.0 * math.log(2.0)
_INF = math.inf


def _lorentzian(p, x):
    a, c, fw, off = p
    h = fw / 2.0
    return a * h * h / ((x - c) ** 2 + h * h) + off


def _lorentzian_jac(p, x):
    a, c, fw, off = p
    h = fw / 2.0
    d2 = (x - c) ** 2
    den = d2 + h * h
    return np.stack([
        h * h / den,
        a * h * h * 2.0 * (x - c) / den**2,
        a * h * d2 / den**2,
        np.ones_like(x),
    ], axis=1)


def _gaussian(p, x):
    a, c, fw, off = p
    return a * np.exp(-_LN2X4 * (x - c) ** 2 / fw**2) + off


def _gaussian_jac(p, x):
    a, c, fw, off = p
    e = np.exp(-_LN2X4 * (x - c) ** 2 / fw**2)
    return np.stack([
        e,
        a * e * 2.0 * _LN2X4 * (x - c) / fw**2,
        a * e * 2.0 * _LN2X4 * (x - c) ** 2 / fw**3,
        np.ones_like(x),
    ], axis=1)


def _exponential(p, x):
    a, r = p
    return a * np.exp(-r * x)


def _exponential_jac(p, x):
    a, r = p
    e = np.exp(-r * x)
    return np.stack([e, -a * x * e], axis=1)


def _double_exponential(p, x):
    a1, r1, a2, r2 = p
    return a1 * np.exp(-r1 * x) + a2 * np.exp(-r2 * x)


def _double_exponential_jac(p, x):
    a1, r1, a2, r2 = p
    e1, e2 = np.exp(-r1 * x), np.exp(-r2 * x)
    return np.stack([e1, -a1 * x * e1, e2, -a2 * x * e2], axis=1)


def _stretched(p, x):
    a, t1e, beta = p
    q = (np.maximum(x, 0.0) / t1e) ** beta
    return a * np.exp(-q)


def _stretched_jac(p, x):
    a, t1e, beta = p
    xs = np.maximum(x, 0.0)
    q = (xs / t1e) ** beta
    e = np.exp(-q)
    with np.errstate(divide="ignore"):
        lnx = np.where(xs > 0, np.log(np.where(xs > 0, xs / t1e, 1.0)), 0.0)
    return np.stack([
        e,
        a * e * q * beta / t1e,
        -a * e * q * lnx,
    ], axis=1)


def _sqrt_power(p, x):
    (k,) = p
    return k * np.sqrt(x)


def _sqrt_power_jac(p, x):
    return np.sqrt(x)[:, None]


def _power_law(p, x):
    t2e, beta = p
    return t2e * x**beta


def _power_law_jac(p, x):
    t2e, beta = p
    xb = x**beta
    return np.stack([xb, t2e * xb * np.log(x)], axis=1)


def _sech(x):
    ax = np.abs(x)
    return 2.0 * np.exp(-ax) / (1.0 + np.exp(-2.0 * ax))


def _ou_chi_grads(n: int, tau: np.ndarray, sigma: float, tau_c: float):
    """chi(tau) of the OU-CPMG closed form and (dchi/dsigma, dchi/dtau_c)."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        t = n * tau
        x = tau / (2.0 * tau_c)
        th = np.tanh(x)
        sh = _sech(x)
        sgn = (-1.0) ** (n + 1)
        edec = np.exp(-t / tau_c)
        b1 = (1.0 / tau_c - (2.0 / tau) * th) * t
        one_m_sech = 1.0 - sh
        b2 = (1.0 + sgn * edec) * one_m_sech**2
        pref = (sigma * tau_c) ** 2
        chi = pref * (b1 - b2)

        d_chi_d_sigma = 2.0 * chi / sigma if sigma != 0 else np.zeros_like(t)
        # d(b1)/dtau_c: t * (sech^2(x) - 1)/tau_c^2
        db1 = t * (sh * sh - 1.0) / tau_c**2
        # d(b2)/dtau_c
        db2 = (sgn * (t / tau_c**2) * edec * one_m_sech**2
               + (1.0 + sgn * edec) * (-2.0 * one_m_sech * sh * th * x / tau_c))
        d_chi_d_tauc = 2.0 * pref / tau_c * (b1 - b2) + pref * (db1 - db2)
    return chi, d_chi_d_sigma, d_chi_d_tauc


def _make_ou_cpmg(n: int) -> FitModel:
    def predict(p, x):
        sigma, tau_c, a = p
        chi, _, _ = _ou_chi_grads(n, x, sigma, tau_c)
        return a * np.exp(-chi)

    def jacobian(p, x):
        sigma, tau_c, a = p
        chi, dchis, dchitc = _ou_chi_grads(n, x, sigma, tau_c)
        y = a * np.exp(-chi)
        return np.stack([-y * dchis, -y * dchitc, np.exp(-chi)], axis=1)

    return FitModel(
        name="ou_cpmg",
        param_names=("sigma", "tau_c", "amplitude"),
        predict=predict,
        jacobian=jacobian,
        lower=(0.0, 1e-30, -_INF),
        upper=(_INF, _INF, _INF),
    )


def make_model(name: str, *, n_pulses: int = 1) -> FitModel:
    """Build a zoo model by name; ``n_pulses`` applies to ou_cpmg."""
    if name == "lorentzian":
        return FitModel(name, ("amplitude", "center", "fwhm", "offset"),
                        _lorentzian, _lorentzian_jac,
                        (-_INF, -_INF, 1e-30, -_INF), (_INF, _INF, _INF, _INF))
    if name == "gaussian":
        return FitModel(name, ("amplitude", "center", "fwhm", "offset"),
                        _gaussian, _gaussian_jac,
                        (-_INF, -_INF, 1e-30, -_INF), (_INF, _INF, _INF, _INF))
    if name == "exponential":
        return FitModel(name, ("amplitude", "rate"), _exponential, _exponential_jac,
                        (-_INF, 0.0), (_INF, _INF))
    if name == "double_exponential":
        return FitModel(name, ("amplitude_1", "rate_1", "amplitude_2", "rate_2"),
                        _double_exponential, _double_exponential_jac,
                        (-_INF, 0.0, -_INF, 0.0), (_INF, _INF, _INF, _INF))
    if name == "stretched_exponential":
        return FitModel(name, ("amplitude", "t_1e", "beta"), _stretched, _stretched_jac,
                        (-_INF, 1e-30, 1e-3), (_INF, _INF, 20.0))
    if name == "sqrt_power":
        return FitModel(name, ("k",), _sqrt_power, _sqrt_power_jac, (-_INF,), (_INF,))
    if name == "power_law_scaling":
        return FitModel(name, ("t2_echo", "beta"), _power_law, _power_law_jac,
                        (1e-30, -_INF), (_INF, _INF))
    if name == "ou_cpmg":
        return _make_ou_cpmg(n_pulses)
    raise FitError(f"unknown model {name!r}; known: {', '.join(MODEL_NAMES)}")


# ---------------------------------------------------------------------------
# Levenberg-Marquardt core

def _lm(residual, jacobian, x0, lower, upper):
    """Damped least squares with multiplicative damping.

    residual(p) -> (m,), jacobian(p) -> (m, k).  Returns
    (params, covariance | None, converged, n_iter, message).
    """
    p = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r = residual(p)
    cost = 0.5 * float(r @ r)
    lam = _LM_LAMBDA0
    converged = False
    message = "max iterations reached"
    n_iter = 0
    for n_iter in range(1, _MAX_ITER + 1):
        j = jacobian(p)
        col_norm = np.linalg.norm(j, axis=0)
        if np.any(col_norm == 0.0) and n_iter == 1:
            dead = [name for name, cn in zip(range(len(p)), col_norm) if cn == 0.0]
            raise RankDeficiencyError(f"jacobian column(s) {dead} identically zero")
        g = j.T @ r
        if np.linalg.norm(g, ord=np.inf) < _TOL_ABS:
            converged = True
            message = "gradient below tolerance"
            break
        jtj = j.T @ j
        scale = np.sqrt(np.diag(jtj))
        scale[scale == 0.0] = 1.0
        stepped = False
        for _ in range(50):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(scale**2), -g)
            except np.linalg.LinAlgError:
                lam *= _LM_NU
                continue
            p_new = np.clip(p + step, lower, upper)
            r_new = residual(p_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                rel_step = np.max(np.abs(p_new - p) / np.maximum(np.abs(p), 1e-300))
                improved = cost - cost_new
                p, r, cost = p_new, r_new, cost_new
                lam = max(lam / _LM_NU, 1e-14)
                stepped = True
                if improved < _TOL_REL * max(cost, _TOL_ABS) and rel_step < _TOL_REL:
                    converged = True
                    message = "cost and step below tolerance"
                break
            lam *= _LM_NU
            if lam > 1e14:
                break
        if converged:
            break
        if not stepped:
            converged = cost < _TOL_ABS or np.linalg.norm(g, ord=np.inf) < 1e-6
            message = ("stalled at tolerance" if converged
                       else "no downhill step found (damping exhausted)")
            break

    j = jacobian(p)
    try:
        cov = np.linalg.inv(j.T @ j)
    except np.linalg.LinAlgError:
        cov = None
    return p, cov, converged, n_iter, message, r


def fit(model: FitModel, x, y, weights=None, init=None) -> FitResult:
    """Weighted least squares fit of a zoo model.

    ``weights`` multiply the residuals (1/sigma convention).  ``init``
    must lie within the model's bounds.  Non-convergence is reported via
    ``converged=False``, never silently.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    good = np.isfinite(x) & np.isfinite(y)
    x, y = x[good], y[good]
    if init is None:
        raise FitError("init is required")
    init = np.asarray(init, dtype=float)
    if init.shape != (model.n_params,):
        raise FitError(f"init must have {model.n_params} entries")
    if x.size < model.n_params:
        raise FitError("fewer points than parameters")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)[good]

    def residual(p):
        return (model.predict(p, x) - y) * w

    def jacobian(p):
        return model.jacobian(p, x) * w[:, None]

    p, cov, converged, n_iter, message, r = _lm(
        residual, jacobian, init, np.array(model.lower), np.array(model.upper))
    dof = max(x.size - model.n_params, 1)
    s2 = float(r @ r) / dof
    if cov is not None:
        std = np.sqrt(np.maximum(np.diag(cov) * s2, 0.0))
    else:
        std = np.full(model.n_params, np.inf)
        message += "; singular covariance"
    return FitResult(
        model=model.name,
        param_names=model.param_names,
        params=p,
        std_errors=std,
        residual_norm=float(np.linalg.norm(r)),
        converged=converged,
        n_iterations=n_iter,
        n_points=int(x.size),
        message=message,
    )


# ---------------------------------------------------------------------------
# damped cosine (Rabi / FID frequency extraction; not a zoo model)

def _damped_cos(p, t):
    a, f, rdec, c, ph = p
    return a * np.exp(-rdec * t) * np.cos(2.0 * math.pi * f * t + ph) + c


def _damped_cos_jac(p, t):
    a, f, rdec, c, ph = p
    e = np.exp(-rdec * t)
    arg = 2.0 * math.pi * f * t + ph
    cosv, sinv = np.cos(arg), np.sin(arg)
    return np.stack([
        e * cosv,
        -a * e * sinv * 2.0 * math.pi * t,
        -a * t * e * cosv,
        np.ones_like(t),
        -a * e * sinv,
    ], axis=1)


def fit_damped_cosine(t, y, f_init: float | None = None) -> FitResult:
    """Fit a*exp(-r t)*cos(2 pi f t + phi) + c; frequency seeded by a
    zero-padded periodogram peak unless ``f_init`` is given."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if f_init is None:
        yc = y - y.mean()
        pad = 32 * len(t)
        amp = np.abs(np.fft.rfft(yc, n=pad))
        freqs = np.fft.rfftfreq(pad, d=float(t[1] - t[0]))
        f_init = float(freqs[np.argmax(amp[1:]) + 1])
        if f_init <= 0:
            f_init = 1.0 / (t[-1] - t[0])
    a0 = -(y.max() - y.min()) / 2.0
    init = np.array([a0, f_init, 1.0 / (t[-1] - t[0] + 1e-300), y.mean(), 0.0])
    model = FitModel(
        name="damped_cosine",
        param_names=("amplitude", "frequency", "decay_rate", "offset", "phase"),
        predict=_damped_cos,
        jacobian=_damped_cos_jac,
        lower=(-_INF, 0.0, 0.0, -_INF, -math.pi),
        upper=(_INF, _INF, _INF, _INF, math.pi),
    )
    return fit(model, t, y, init=init)


# ---------------------------------------------------------------------------
# derived quantities

def visibility(s_plus, s_minus) -> np.ndarray:
    """(S+ - S-)/(S+ + S-), elementwise; zero-sum samples come back NaN
    (flagged for exclusion from fits)."""
    sp = np.asarray(s_plus, dtype=float)
    sm = np.asarray(s_minus, dtype=float)
    if sp.shape != sm.shape:
        raise FitError("s_plus and s_minus must have equal length")
    den = sp + sm
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(den != 0.0, (sp - sm) / np.where(den != 0.0, den, 1.0), np.nan)
    return v


@dataclass
class ScalingResult:
    beta: float
    t2_echo: float
    beta_stderr: float
    t2_echo_stderr: float

    def to_dict(self) -> dict:
        return {"beta": self.beta, "t2_echo": self.t2_echo,
                "beta_stderr": self.beta_stderr, "t2_echo_stderr": self.t2_echo_stderr}


def fit_scaling(t2_by_n) -> ScalingResult:
    """log-log ordinary least squares of T2(N) = T2_echo * N^beta."""
    pts = [(float(n), float(t2)) for n, t2 in t2_by_n]
    if len({n for n, _ in pts}) < 2:
        raise FitError("need at least 2 distinct N values")
    if any(n < 1 or t2 <= 0 for n, t2 in pts):
        raise FitError("need N >= 1 and T2 > 0")
    lx = np.log([n for n, _ in pts])
    ly = np.log([t2 for _, t2 in pts])
    slope, intercept, s_se, i_se = linear_fit(lx, ly)
    t2e = math.exp(intercept)
    return ScalingResult(beta=slope, t2_echo=t2e,
                         beta_stderr=s_se, t2_echo_stderr=t2e * i_se)


def linear_fit(x, y) -> tuple[float, float, float, float]:
    """OLS slope/intercept with standard errors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise FitError("x values are all identical")
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = ym - slope * xm
    resid = y - slope * x - intercept
    s2 = float(resid @ resid) / max(n - 2, 1)
    slope_se = math.sqrt(s2 / sxx)
    intercept_se = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    return slope, intercept, slope_se, intercept_se


@dataclass
class BathFitResult:
    sigma: float
    tau_c: float
    amplitudes: tuple[float, ...]
    converged: bool
    n_iterations: int
    residual_norm: float
    sigma_stderr: float
    tau_c_stderr: float
    message: str = ""

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "tau_c": self.tau_c,
                "amplitudes": list(self.amplitudes), "converged": self.converged,
                "n_iterations": self.n_iterations, "residual_norm": self.residual_norm,
                "sigma_stderr": self.sigma_stderr, "tau_c_stderr": self.tau_c_stderr,
                "message": self.message}


def fit_ou_bath(curves, tau_c_init: float | None = None) -> BathFitResult:
    """Joint fit of the OU-CPMG closed form over several (N, tau, visibility)
    curves sharing (sigma, tau_c), with one amplitude per curve.

    Internally parameterized as (ln c3, ln tau_c) with
    c3 = sigma^2/(12 tau_c), the combination the small-tau regime
    constrains, so the fit cannot wander along the degeneracy valley.
    A tau_c standard error above a factor ~3 marks the regime
    non-identifiable (converged=False with a diagnostic message).
    """
    curves = [(int(n), np.asarray(t, dtype=float), np.asarray(v, dtype=float))
              for n, t, v in curves]
    if not curves:
        raise FitError("no curves")
    for n, t, v in curves:
        if np.any(np.abs(v[np.isfinite(v)]) > 1.0 + 1e-9):
            raise FitError("visibility outside [-1, 1]")

    # init c3 from the first curve's 1/e time (chi ~ c3 * t^3 / N^2)
    n0, t0, v0 = curves[0]
    tt = n0 * t0
    vmax = np.nanmax(v0) if np.nanmax(v0) > 0 else 1.0
    idx = int(np.nanargmin(np.abs(v0 / vmax - math.exp(-1.0))))
    t1e = max(float(tt[idx]), 1e-12)
    c3_init = n0**2 / t1e**3
    if tau_c_init is None:
        tau_c_init = float(max(np.max(n * t) for n, t, _ in curves))

    k = len(curves)

    def unpack(p):
        c3 = math.exp(p[0])
        tc = math.exp(p[1])
        return math.sqrt(12.0 * c3 * tc), tc, p[2:]

    def residual(p):
        sigma, tc, amps = unpack(p)
        out = []
        for (n, t, v), a in zip(curves, amps):
            chi, _, _ = _ou_chi_grads(n, t, sigma, tc)
            r = a * np.exp(-chi) - v
            out.append(np.where(np.isfinite(v), r, 0.0))
        return np.concatenate(out)

    def jacobian(p):
        sigma, tc, amps = unpack(p)
        rows = []
        for ci, ((n, t, v), a) in enumerate(zip(curves, amps)):
            chi, dchis, dchitc = _ou_chi_grads(n, t, sigma, tc)
            y = a * np.exp(-chi)
            # chain rule to (ln c3, ln tau_c): sigma = sqrt(12 c3 tc)
            dy_dsig = -y * dchis
            dy_dtc = -y * dchitc
            d_lnc3 = dy_dsig * sigma / 2.0
            d_lntc = dy_dsig * sigma / 2.0 + dy_dtc * tc
            block = np.zeros((t.size, 2 + k))
            block[:, 0] = d_lnc3
            block[:, 1] = d_lntc
            block[:, 2 + ci] = np.exp(-chi)
            finite = np.isfinite(v)
            block[~finite] = 0.0
            rows.append(block)
        return np.concatenate(rows, axis=0)

    amp0 = [float(np.nanmax(v)) if np.nanmax(v) > 0 else 1.0 for _, _, v in curves]
    # ln bounds keep every scalar power in chi finite (exp(150)^2 < 1e308)
    p0 = np.array([np.clip(math.log(max(c3_init, 1e-30)), -149, 149),
                   np.clip(math.log(tau_c_init), -149, 149)] + amp0)
    lower = np.array([-150.0, -150.0] + [-_INF] * k)
    upper = np.array([150.0, 150.0] + [_INF] * k)
    p, cov, converged, n_iter, message, r = _lm(residual, jacobian, p0, lower, upper)
    sigma, tc, amps = unpack(p)

    n_pts = sum(int(np.isfinite(v).sum()) for _, _, v in curves)
    dof = max(n_pts - (2 + k), 1)
    s2 = float(r @ r) / dof
    if cov is not None:
        se_lnc3 = math.sqrt(max(cov[0, 0] * s2, 0.0))
        se_lntc = math.sqrt(max(cov[1, 1] * s2, 0.0))
        cov_c3tc = cov[0, 1] * s2
        # sigma = sqrt(12 c3 tc): d ln sigma = (d ln c3 + d ln tc)/2
        var_lnsig = 0.25 * (se_lnc3**2 + se_lntc**2 + 2.0 * cov_c3tc)
        sigma_se = sigma * math.sqrt(max(var_lnsig, 0.0))
        tc_se = tc * se_lntc
    else:
        sigma_se = tc_se = math.inf
        se_lntc = math.inf

    decays = any(np.nanmin(v) < 0.9 * np.nanmax(v) for _, _, v in curves)
    if decays and se_lntc > math.log(3.0):
        converged = False
        message = (f"tau_c not identifiable on these grids "
                   f"(stderr factor {math.exp(se_lntc):.1f}); {message}")

    return BathFitResult(
        sigma=sigma, tau_c=tc, amplitudes=tuple(float(a) for a in amps),
        converged=converged, n_iterations=n_iter,
        residual_norm=float(np.linalg.norm(r)),
        sigma_stderr=sigma_se, tau_c_stderr=tc_se, message=message,
    )
