"""Least-squares fits of exponential decays and RB success curves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

B_FIXED = {"zero": 0.0, "quarter": 0.25, "half": 0.5}

_TIGHT = {"ftol": 1e-15, "xtol": 1e-15, "gtol": 1e-15, "maxfev": 20000}


@dataclass
class FitResult:
    params: dict
    errors: dict
    degenerate: bool = False
    extras: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]


def _weights(y, sigma):
    if sigma is None:
        return None, False
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        # zero-variance points would get infinite weight
        sigma = np.maximum(sigma, np.min(sigma[sigma > 0]) if np.any(sigma > 0) else 1.0)
    return sigma, True


def _curve_fit(model, x, y, p0, sigma, absolute):
    # exact synthetic data leave the covariance undefined; that is handled by callers
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        popt, pcov = curve_fit(model, x, y, p0=p0, sigma=sigma, absolute_sigma=absolute, **_TIGHT)
    return [float(v) for v in popt], pcov


def _errors(pcov, n):
    if pcov is None or not np.all(np.isfinite(pcov)):
        return [np.inf] * n
    return [float(v) for v in np.sqrt(np.clip(np.diag(pcov), 0, None))]


def fit_exponential(x, y, sigma=None) -> FitResult:
    """Fit ``y = a exp(-x / tau)``.

    ``tau`` is reported as ``inf`` (with ``degenerate`` set) when the fitted
    rate is not positive, i.e. the data do not decay.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    sigma, absolute = _weights(y, sigma)
    span = float(x.max() - x.min()) or 1.0
    a0 = float(y[np.argmin(x)]) or 1.0
    pos = y > 0
    k0 = 0.0
    if pos.sum() >= 2:
        k0 = max(-np.polyfit(x[pos], np.log(y[pos]), 1)[0], 0.0)

    def model(xx, a, k):
        return a * np.exp(-k * xx)

    popt, pcov = _curve_fit(model, x, y, (a0, k0), sigma, absolute)
    a, k = popt
    a_err, k_err = _errors(pcov, 2)
    if not absolute and np.allclose(model(x, a, k), y, rtol=0, atol=1e-14):
        a_err = k_err = 0.0
    if k * span <= 1e-9:
        return FitResult({"a": a, "tau": np.inf, "rate": k}, {"a": a_err, "tau": np.inf, "rate": k_err}, True)
    return FitResult(
        {"a": a, "tau": 1.0 / k, "rate": k},
        {"a": a_err, "tau": k_err / k**2, "rate": k_err},
    )


def fit_rb(depths, success, b_mode: str = "quarter", sigma=None) -> FitResult:
    """Fit ``a p**l + b``; error per gate is ``(1 - b)(1 - p)``.

    ``b_mode`` fixes b to 0, 1/4 or 1/2, or leaves it free.
    """
    depths = np.asarray(depths, dtype=float)
    success = np.asarray(success, dtype=float)
    if np.unique(depths).size < 3:
        raise ValueError("RB fit needs at least three distinct depths")
    sigma, absolute = _weights(success, sigma)
    order = np.argsort(depths)
    y0, y1 = success[order[0]], success[order[-1]]

    if b_mode in B_FIXED:
        b = B_FIXED[b_mode]
        amp = y0 - b
        ratio = (y1 - b) / amp if amp != 0 else 1.0
        p0 = np.clip(ratio, 1e-3, 1.0) ** (1.0 / max(depths[order[-1]] - depths[order[0]], 1.0))

        def model(l, a, p):
            return a * p**l + b

        start = (amp / p0 ** depths[order[0]] if amp else 0.0, p0)
        popt, pcov = _curve_fit(model, depths, success, start, sigma, absolute)
        a, p = popt
        a_err, p_err = _errors(pcov, 2)
        b_err = 0.0
    elif b_mode == "free":

        def model(l, a, p, bb):
            return a * p**l + bb

        start = (y0 - y1 * 0.5, 0.99, y1 * 0.5)
        popt, pcov = _curve_fit(model, depths, success, start, sigma, absolute)
        a, p, b = popt
        a_err, p_err, b_err = _errors(pcov, 3)
    else:
        raise ValueError(f"unknown b_mode {b_mode!r}")

    exact = np.allclose(model(depths, *popt), success, rtol=0, atol=1e-13)
    if not absolute and exact:
        a_err = p_err = b_err = 0.0
    epg = (1 - b) * (1 - p)
    epg_err = float(np.hypot((1 - b) * p_err, (1 - p) * b_err))
    degenerate = bool(
        p <= 0
        or p - 1 > max(3 * p_err, 1e-9)
        or abs(a) <= max(3 * a_err if np.isfinite(a_err) else 0.0, 1e-9)
    )
    return FitResult(
        {"a": a, "p": p, "b": b, "epg": epg},
        {"a": a_err, "p": p_err, "b": b_err, "epg": epg_err},
        degenerate,
    )
