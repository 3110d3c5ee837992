"""Cumulative-exposure Weibull model for multiple step-stress life tests.

Devices move through k increasing stress levels at fixed change times; the
lifetime scale at stress x is alpha(x) = exp(a0 + a1*x) and the shape eta is
common to all levels. Cumulative exposure links the segments: on segment i
the cdf is that of a Weibull with scale alpha_i evaluated at t + h_{i-1},
where the shift h_{i-1} carries over the exposure accumulated at earlier
levels and makes the cdf continuous at every change time.

One-shot devices are only inspected, never observed failing, so inference
sees interval counts: n_j devices found newly failed at inspection time t_j,
plus survivors at termination. This module evaluates the distribution, the
resulting cell probabilities, and their analytic parameter gradient (the
W matrix), which every estimation and diagnostic routine builds on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError

__all__ = [
    "StressPlan",
    "ModelParams",
    "IntervalData",
    "ShiftTerms",
    "ParameterSpaceWarning",
    "scale_at_level",
    "shift_terms",
    "cdf",
    "pdf",
    "cell_probabilities",
    "gradient_matrix",
]


class ParameterSpaceWarning(UserWarning):
    """Parameters are usable but outside the intended parameter space."""


def _vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class StressPlan:
    """Design of a step-stress experiment.

    Attributes:
        stress_levels: the k stress values x_1..x_k, strictly increasing.
        change_times: times tau_1..tau_k at which stress steps up; tau_k is
            the termination time of the experiment.
        inspection_times: the L inspection times t_1..t_L. Every change time
            must be an inspection time and t_L must equal tau_k.
    """

    stress_levels: np.ndarray
    change_times: np.ndarray
    inspection_times: np.ndarray

    def __post_init__(self):
        x = _vector(self.stress_levels, "stress_levels")
        tau = _vector(self.change_times, "change_times")
        t = _vector(self.inspection_times, "inspection_times")
        if len(x) == 0:
            raise ValueError("need at least one stress level")
        if len(tau) != len(x):
            raise ValueError("change_times must have one entry per stress level")
        if np.any(np.diff(x) <= 0):
            raise ValueError("stress_levels must be strictly increasing")
        if tau[0] <= 0 or np.any(np.diff(tau) <= 0):
            raise ValueError("change_times must be positive and strictly increasing")
        if t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("inspection_times must be positive and strictly increasing")
        for ct in tau:
            if not np.any(np.abs(t - ct) <= 1e-12 * max(ct, 1.0)):
                raise ValueError(f"change time {ct} is not an inspection time")
        if abs(t[-1] - tau[-1]) > 1e-12 * max(tau[-1], 1.0):
            raise ValueError("the last inspection time must equal the termination time")
        object.__setattr__(self, "stress_levels", x)
        object.__setattr__(self, "change_times", tau)
        object.__setattr__(self, "inspection_times", t)

    @property
    def n_levels(self) -> int:
        return len(self.stress_levels)

    @property
    def n_inspections(self) -> int:
        return len(self.inspection_times)

    @property
    def n_cells(self) -> int:
        """Number of observation cells: one per inspection interval plus survivors."""
        return len(self.inspection_times) + 1


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: log-scale intercept a0, slope a1, Weibull shape eta.

    The physically meaningful space has a1 < 0 (higher stress shortens
    life); a1 >= 0 is accepted with a warning so that fits on pathological
    data still report what they found.
    """

    a0: float
    a1: float
    eta: float

    def __post_init__(self):
        for name in ("a0", "a1", "eta"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, float(v))
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.a1 >= 0:
            warnings.warn(
                "a1 >= 0: lifetimes do not shorten with stress",
                ParameterSpaceWarning,
                stacklevel=2,
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.eta])


@dataclass(frozen=True)
class IntervalData:
    """Interval counts from one experiment.

    counts[j] is the number of devices first found failed at inspection
    time t_{j+1}; the last entry counts survivors at termination. Counts are
    usually integers but fractional pseudo-counts (expected counts from a
    known model, used by diagnostics) are accepted.
    """

    counts: np.ndarray
    total: int

    def __post_init__(self):
        counts = _vector(self.counts, "counts")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if self.total <= 0:
            raise ValueError("total must be positive")
        if abs(counts.sum() - self.total) > 1e-9 * max(self.total, 1):
            raise ValueError(
                f"counts sum to {counts.sum()}, expected total {self.total}"
            )
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(self.total))

    def validate_against(self, plan: StressPlan) -> None:
        if len(self.counts) != plan.n_cells:
            raise DataError(
                f"counts has {len(self.counts)} cells, plan implies {plan.n_cells}"
            )

    @property
    def proportions(self) -> np.ndarray:
        """Observed cell proportions (the empirical distribution over cells)."""
        return self.counts / self.total


@dataclass(frozen=True)
class ShiftTerms:
    """Per-level scales and cumulative-exposure shifts.

    alphas[i] is the Weibull scale at level i+1. h[i] is the time shift
    applied on segment i+1 (h[0] = 0), chosen so the cdf is continuous at
    each change time. h_star[i] is the derivative of h[i] with respect to
    a1, needed by the analytic gradient.
    """

    alphas: np.ndarray
    h: np.ndarray
    h_star: np.ndarray


def scale_at_level(params: ModelParams, x: float) -> float:
    """Weibull scale exp(a0 + a1*x) at stress x."""
    scale = float(np.exp(params.a0 + params.a1 * x))
    if not np.isfinite(scale) or scale <= 0.0:
        raise NumericError(f"non-finite or vanished scale at stress {x}")
    return scale


def shift_terms(params: ModelParams, plan: StressPlan) -> ShiftTerms:
    """Scales and cumulative-exposure shifts for every stress segment."""
    x = plan.stress_levels
    tau = plan.change_times
    with np.errstate(over="ignore", under="ignore"):
        alphas = np.exp(params.a0 + params.a1 * x)
    if not np.all(np.isfinite(alphas)) or np.any(alphas <= 0.0):
        raise NumericError("non-finite or vanished scale among stress levels")

    k = len(x)
    h = np.zeros(k)
    h_star = np.zeros(k)
    # h_i = alpha_{i+1} * sum_{m<=i} (1/alpha_m - 1/alpha_{m+1}) tau_m and its
    # a1-derivative, accumulated once over segments.
    inv_gap = 0.0
    slope_gap = 0.0
    for i in range(1, k):
        inv_gap += (1.0 / alphas[i - 1] - 1.0 / alphas[i]) * tau[i - 1]
        slope_gap += (x[i] / alphas[i] - x[i - 1] / alphas[i - 1]) * tau[i - 1]
        h[i] = alphas[i] * inv_gap
        h_star[i] = h[i] * x[i] + alphas[i] * slope_gap
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(h_star))):
        raise NumericError("non-finite cumulative-exposure shift")
    return ShiftTerms(alphas=alphas, h=h, h_star=h_star)


def _segments_cdf(plan: StressPlan, t: np.ndarray) -> np.ndarray:
    """0-based segment index for cdf evaluation: tau_{i-1} < t <= tau_i."""
    idx = np.searchsorted(plan.change_times, t, side="left")
    return np.minimum(idx, plan.n_levels - 1)


def _segments_pdf(plan: StressPlan, t: np.ndarray) -> np.ndarray:
    """0-based segment index for pdf evaluation: tau_{i-1} <= t < tau_i."""
    idx = np.searchsorted(plan.change_times, t, side="right")
    return np.minimum(idx, plan.n_levels - 1)


def _shifted_scaled(
    terms: ShiftTerms, seg: np.ndarray, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Shifted times t + h and scaled arguments (t + h)/alpha per segment."""
    shifted = t + terms.h[seg]
    if np.any((shifted <= 0.0) & (t > 0.0)) or np.any(shifted < 0.0):
        raise NumericError("non-positive shifted time; parameters out of domain")
    return shifted, shifted / terms.alphas[seg]


def cdf(params: ModelParams, plan: StressPlan, t) -> float | np.ndarray:
    """Failure-time cdf at time t (scalar or array), continuous in t."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("cdf requires t >= 0")
    seg = _segments_cdf(plan, t_arr)
    terms = shift_terms(params, plan)
    _, u = _shifted_scaled(terms, seg, t_arr)
    with np.errstate(over="ignore", under="ignore"):
        values = -np.expm1(-(u**params.eta))
    if not np.all(np.isfinite(values)):
        raise NumericError("cdf evaluation overflowed")
    values = np.clip(values, 0.0, 1.0)
    return float(values) if np.isscalar(t) or t_arr.ndim == 0 else values


def pdf(params: ModelParams, plan: StressPlan, t) -> float | np.ndarray:
    """Failure-time density at t > 0.

    The density jumps at stress-change times; there the new-stress branch
    (right limit) is returned.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("pdf requires t > 0")
    seg = _segments_pdf(plan, t_arr)
    terms = shift_terms(params, plan)
    _, u = _shifted_scaled(terms, seg, t_arr)
    eta = params.eta
    with np.errstate(over="ignore", under="ignore"):
        values = eta / terms.alphas[seg] * u ** (eta - 1.0) * np.exp(-(u**eta))
    if not np.all(np.isfinite(values)):
        raise NumericError("pdf evaluation overflowed")
    return float(values) if np.isscalar(t) or t_arr.ndim == 0 else values


def _survivals(params: ModelParams, plan: StressPlan, terms: ShiftTerms) -> np.ndarray:
    """Survival probabilities at each inspection time."""
    t = plan.inspection_times
    seg = _segments_cdf(plan, t)
    _, u = _shifted_scaled(terms, seg, t)
    with np.errstate(over="ignore", under="ignore"):
        s = np.exp(-(u**params.eta))
    if not np.all(np.isfinite(s)):
        raise NumericError("survival evaluation overflowed")
    return s


def cell_probabilities(params: ModelParams, plan: StressPlan) -> np.ndarray:
    """Probability of first observing a failure in each inspection cell.

    Returns a vector of length L+1: entries 1..L are the probabilities of
    failing within (t_{j-1}, t_j], the last entry is the survival
    probability at termination. Entries are clamped to [0, 1] and sum to 1.
    """
    terms = shift_terms(params, plan)
    s = _survivals(params, plan, terms)
    pi = np.empty(plan.n_cells)
    pi[0] = 1.0 - s[0]
    pi[1:-1] = s[:-1] - s[1:]
    pi[-1] = s[-1]
    return np.clip(pi, 0.0, 1.0)


def gradient_matrix(params: ModelParams, plan: StressPlan) -> np.ndarray:
    """Gradient of cell probabilities: W[j] = d pi_{j+1} / d (a0, a1, eta).

    Rows are differences w_j = z_j - z_{j-1} of the per-inspection score
    vectors z_j = dG(t_j)/d theta, with zero sentinels at both ends, so the
    matrix has shape (L+1) x 3 and its rows sum to the zero vector.
    """
    terms = shift_terms(params, plan)
    t = plan.inspection_times
    seg = _segments_cdf(plan, t)
    shifted, u = _shifted_scaled(terms, seg, t)
    eta = params.eta
    x_seg = plan.stress_levels[seg]
    hstar_seg = terms.h_star[seg]
    alpha_seg = terms.alphas[seg]

    with np.errstate(over="ignore", under="ignore"):
        dens = eta / alpha_seg * u ** (eta - 1.0) * np.exp(-(u**eta))
        log_u = np.log(u)
    if not (np.all(np.isfinite(dens)) and np.all(np.isfinite(log_u))):
        raise NumericError("gradient evaluation overflowed")

    z = np.empty((len(t), 3))
    z[:, 0] = -shifted
    z[:, 1] = -shifted * x_seg + hstar_seg
    z[:, 2] = log_u * shifted / eta
    z *= dens[:, None]

    w = np.empty((plan.n_cells, 3))
    w[0] = z[0]
    w[1:-1] = z[1:] - z[:-1]
    w[-1] = -z[-1]
    return w
