"""Special functions and 3x3 matrix kernels used by the statistical modules.

The model has exactly three parameters, so every linear-algebra need in the
package is a 3x3 solve, inverse, or pseudo-inverse; those kernels live here
together with the distribution functions the tests and confidence intervals
rely on. Implementations delegate to scipy/numpy; the accuracy contracts
(checked against an arbitrary-precision oracle in the test suite) are:
relative error <= 1e-12 for gamma/digamma on (0.5, 10), absolute error
<= 1e-10 for the distribution functions.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import special as _sp
from scipy import stats as _st

from .errors import NumericError

__all__ = [
    "gamma_fn",
    "digamma_fn",
    "chi2_cdf",
    "chi2_quantile",
    "noncentral_chi2_cdf",
    "std_normal_cdf",
    "std_normal_quantile",
    "solve3",
    "inverse3",
    "pseudo_inverse3",
    "Inverse3Result",
    "CONDITION_LIMIT",
]

# Above this condition number an inverse is reported but flagged unreliable.
CONDITION_LIMIT = 1e12

# Relative eigenvalue threshold below which pseudo_inverse3 treats a mode
# as null.
PINV_EIGENVALUE_THRESHOLD = 1e-12


def gamma_fn(x: float) -> float:
    """Gamma function for positive arguments."""
    if not np.all(np.asarray(x) > 0):
        raise ValueError("gamma_fn requires x > 0")
    return float(_sp.gamma(x))


def digamma_fn(x: float) -> float:
    """Digamma (psi_0) function for positive arguments."""
    if not np.all(np.asarray(x) > 0):
        raise ValueError("digamma_fn requires x > 0")
    return float(_sp.psi(x))


def chi2_cdf(x: float, df: float) -> float:
    """Chi-squared cdf at x with df degrees of freedom."""
    if df <= 0:
        raise ValueError("chi2_cdf requires df > 0")
    if x < 0:
        raise ValueError("chi2_cdf requires x >= 0")
    return float(_sp.chdtr(df, x))


def chi2_quantile(p: float, df: float) -> float:
    """Inverse chi-squared cdf: the x with chi2_cdf(x, df) = p."""
    if df <= 0:
        raise ValueError("chi2_quantile requires df > 0")
    if not 0.0 <= p < 1.0:
        raise ValueError("chi2_quantile requires p in [0, 1)")
    return float(_sp.chdtri(df, 1.0 - p))


def noncentral_chi2_cdf(x: float, df: float, ncp: float) -> float:
    """Noncentral chi-squared cdf; reduces to chi2_cdf when ncp = 0."""
    if df <= 0:
        raise ValueError("noncentral_chi2_cdf requires df > 0")
    if ncp < 0:
        raise ValueError("noncentral_chi2_cdf requires ncp >= 0")
    if x < 0:
        raise ValueError("noncentral_chi2_cdf requires x >= 0")
    if ncp == 0.0:
        return chi2_cdf(x, df)
    return float(_st.ncx2.cdf(x, df, ncp))


def std_normal_cdf(x: float) -> float:
    """Standard normal cdf."""
    return float(_sp.ndtr(x))


def std_normal_quantile(p: float) -> float:
    """Standard normal quantile for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError("std_normal_quantile requires p in (0, 1)")
    return float(_sp.ndtri(p))


def _as_mat3(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"{name} must be a 3x3 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must have finite entries")
    return a


def solve3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve the 3x3 system a @ x = b.

    Raises NumericError when the matrix is singular to working precision.
    """
    a = _as_mat3(a, "a")
    b = np.asarray(b, dtype=float)
    if b.shape != (3,):
        raise ValueError(f"b must be a 3-vector, got shape {b.shape}")
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular 3x3 system") from exc
    if not np.all(np.isfinite(x)):
        raise NumericError("3x3 solve produced non-finite values")
    return x


class Inverse3Result(NamedTuple):
    matrix: np.ndarray
    condition: float
    ill_conditioned: bool


def inverse3(a: np.ndarray) -> Inverse3Result:
    """Invert a 3x3 matrix, reporting a condition estimate alongside.

    A condition number above CONDITION_LIMIT (or an outright singular
    matrix, inverted in the pseudo-inverse sense) sets ill_conditioned
    rather than raising, so callers can flag rather than abort.
    """
    a = _as_mat3(a, "a")
    condition = float(np.linalg.cond(a, 2))
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        return Inverse3Result(pseudo_inverse3(a), np.inf, True)
    if not np.all(np.isfinite(inv)):
        return Inverse3Result(pseudo_inverse3(a), np.inf, True)
    return Inverse3Result(inv, condition, condition > CONDITION_LIMIT)


def pseudo_inverse3(a: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric 3x3 matrix.

    Uses an eigendecomposition of the symmetrized input; eigenvalues below
    PINV_EIGENVALUE_THRESHOLD times the largest magnitude are treated as
    exact zeros.
    """
    a = _as_mat3(a, "a")
    sym = 0.5 * (a + a.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    scale = np.max(np.abs(eigvals))
    if scale == 0.0:
        return np.zeros((3, 3))
    inv_vals = np.zeros(3)
    keep = np.abs(eigvals) > PINV_EIGENVALUE_THRESHOLD * scale
    inv_vals[keep] = 1.0 / eigvals[keep]
    return (eigvecs * inv_vals) @ eigvecs.T
