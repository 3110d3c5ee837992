"""Lifetime characteristics at an operating stress, with delta-method CIs.

Under the fitted model, a device held at stress ``x0`` has Weibull lifetime
with scale ``alpha_0 = exp(a0 + a1 x0)`` and shape ``eta``. This module
evaluates three summaries of that distribution:

* ``reliability(t)`` — survival probability at mission time t;
* ``quantile(q)`` — time by which reliability has dropped to q;
* ``mean_lifetime()`` — expected lifetime ``alpha_0 * Gamma(1 + 1/eta)``.

Each has a closed-form gradient in (a0, a1, eta), so the sandwich
covariance of the fit propagates by the delta method. Two interval styles
are produced: the direct ``value ± z * se`` interval, and a transformed
interval that respects the characteristic's range — logit scale for
reliability, log scale for quantile and mean — so endpoints never need
truncation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ExtrapolationWarning, NumericError
from .estimation import FitResult
from .model import ModelParams, StressPlan
from .special_math import digamma_fn, gamma_fn, std_normal_quantile

CHARACTERISTIC_KINDS = ("reliability", "quantile", "mean")

# reliability values this close to 0 or 1 carry no logit-scale information;
# the transform clips there instead of overflowing
_LOGIT_CLIP = 1e-12


@dataclass(frozen=True)
class CharacteristicEstimate:
    """A lifetime characteristic with its uncertainty at stress x0.

    ``extra`` is the mission time for reliability, the reliability level
    for quantiles, and None for the mean.
    """

    kind: str
    value: float
    std_error: float
    ci_direct: tuple[float, float]
    ci_transformed: tuple[float, float]
    x0: float
    extra: float | None
    confidence: float


def _scale_at(params: ModelParams, x0: float) -> float:
    return float(np.exp(params.a0 + params.a1 * x0))


def reliability(params: ModelParams, x0: float, t: float) -> float:
    """Probability that a device at stress x0 survives past time t."""
    if t <= 0:
        raise ValueError("mission time t must be positive")
    u = (t / _scale_at(params, x0)) ** params.eta
    return float(np.exp(-u))


def quantile(params: ModelParams, x0: float, level: float) -> float:
    """Time at which reliability at stress x0 equals ``level``.

    ``level`` is a reliability (survival) level: quantile(params, x0, 0.95)
    is the time by which 5% of devices fail.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("reliability level must lie strictly in (0, 1)")
    return _scale_at(params, x0) * (-np.log(level)) ** (1.0 / params.eta)


def mean_lifetime(params: ModelParams, x0: float) -> float:
    """Expected lifetime at stress x0."""
    return _scale_at(params, x0) * gamma_fn(1.0 + 1.0 / params.eta)


def characteristic_gradient(
    params: ModelParams, x0: float, kind: str, extra: float | None = None
) -> np.ndarray:
    """Gradient in (a0, a1, eta) of the requested characteristic."""
    eta = params.eta
    if kind == "reliability":
        t = _require_extra(kind, extra)
        alpha0 = _scale_at(params, x0)
        u = (t / alpha0) ** eta
        r = np.exp(-u)
        return r * u * np.array([eta, eta * x0, -np.log(t / alpha0)])
    if kind == "quantile":
        q = _require_extra(kind, extra)
        value = quantile(params, x0, q)
        return value * np.array([1.0, x0, -np.log(-np.log(q)) / eta**2])
    if kind == "mean":
        if extra is not None:
            raise ValueError("mean lifetime takes no extra argument")
        value = mean_lifetime(params, x0)
        return value * np.array([1.0, x0, -digamma_fn(1.0 + 1.0 / eta) / eta**2])
    raise ValueError(f"kind must be one of {CHARACTERISTIC_KINDS}, got {kind!r}")


def _require_extra(kind: str, extra: float | None) -> float:
    if extra is None:
        raise ValueError(f"{kind} requires an extra argument")
    extra = float(extra)
    if kind == "reliability" and extra <= 0:
        raise ValueError("mission time t must be positive")
    if kind == "quantile" and not 0.0 < extra < 1.0:
        raise ValueError("reliability level must lie strictly in (0, 1)")
    return extra


def _point_value(params, x0, kind, extra):
    if kind == "reliability":
        return reliability(params, x0, _require_extra(kind, extra))
    if kind == "quantile":
        return quantile(params, x0, _require_extra(kind, extra))
    if kind == "mean":
        return mean_lifetime(params, x0)
    raise ValueError(f"kind must be one of {CHARACTERISTIC_KINDS}, got {kind!r}")


def _check_extrapolation(plan: StressPlan | None, x0: float) -> None:
    if plan is None:
        return
    levels = plan.stress_levels
    if x0 < levels.min() - 1e-12 or x0 > levels.max() + 1e-12:
        warnings.warn(
            f"operating stress {x0:g} lies outside the tested range "
            f"[{levels.min():g}, {levels.max():g}]; characteristics "
            "extrapolate the stress-response relationship",
            ExtrapolationWarning,
            stacklevel=3,
        )


def characteristic_ci(
    fit: FitResult,
    plan: StressPlan | None,
    x0: float,
    kind: str,
    extra: float | None = None,
    confidence: float = 0.95,
) -> CharacteristicEstimate:
    """Point estimate with direct and range-respecting CIs.

    ``plan`` is only consulted to warn when x0 lies outside the tested
    stress range; pass None to skip that check.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie strictly in (0, 1)")
    if not fit.converged:
        raise ValueError("cannot build intervals from a non-converged fit")
    _check_extrapolation(plan, x0)

    params = fit.params
    value = float(_point_value(params, x0, kind, extra))
    grad = characteristic_gradient(params, x0, kind, extra)
    var = float(grad @ fit.covariance @ grad)
    if var < -1e-10 * max(1.0, float(np.abs(grad).max()) ** 2):
        raise NumericError("covariance is not positive semi-definite")
    se = np.sqrt(max(var, 0.0) / fit.n_devices)
    z = std_normal_quantile(0.5 + confidence / 2.0)

    ci_direct = (value - z * se, value + z * se)
    if kind == "reliability":
        r = min(max(value, _LOGIT_CLIP), 1.0 - _LOGIT_CLIP)
        spread = np.exp(z * se / (r * (1.0 - r)))
        ci_transformed = (r / (r + (1.0 - r) * spread), r / (r + (1.0 - r) / spread))
    else:
        ratio = z * se / value if value > 0 else 0.0
        ci_transformed = (value * np.exp(-ratio), value * np.exp(ratio))

    return CharacteristicEstimate(
        kind=kind,
        value=value,
        std_error=float(se),
        ci_direct=(float(ci_direct[0]), float(ci_direct[1])),
        ci_transformed=(float(ci_transformed[0]), float(ci_transformed[1])),
        x0=float(x0),
        extra=None if extra is None else float(extra),
        confidence=float(confidence),
    )


def param_ci(fit: FitResult, confidence: float = 0.95) -> np.ndarray:
    """Direct CIs for (a0, a1, eta) as a (3, 2) array of (lo, hi) rows."""
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie strictly in (0, 1)")
    if not fit.converged:
        raise ValueError("cannot build intervals from a non-converged fit")
    z = std_normal_quantile(0.5 + confidence / 2.0)
    center = fit.params.as_array()
    half = z * fit.standard_errors
    return np.column_stack([center - half, center + half])
