"""Numerical statistics kernel.

Least-squares autoregression (optionally with exogenous lag terms),
F- and t-distribution tail probabilities via the regularized incomplete
beta function, Spearman rank correlation, paired t-test, and great-circle
distance.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0

_CF_MAX_ITER = 400
_CF_TOL = 1e-12
_RIDGE_JITTER = 1e-10


class InsufficientDataError(ValueError):
    """Series too short for the requested fit."""


class SingularDesignError(RuntimeError):
    """Normal equations unsolvable even after ridge jitter."""


@dataclass(frozen=True)
class ARFit:
    """Least-squares autoregression fit.

    ``own_coeffs[i-1]`` multiplies y[t-i]; ``exog_coeffs``, when present,
    holds the coefficients for the exogenous lags m..q in order.
    """

    intercept: float
    own_coeffs: np.ndarray
    exog_coeffs: np.ndarray | None
    exog_lag_range: tuple[int, int] | None
    rss: float
    n_obs: int
    n_params: int

    @property
    def residual_df(self) -> int:
        return self.n_obs - self.n_params

    def one_step(self, own_history: np.ndarray, exog_history: np.ndarray | None = None) -> float:
        """Predict the value following ``own_history`` (ordered oldest to newest)."""
        own = np.asarray(own_history, dtype=float)
        d = len(self.own_coeffs)
        if len(own) < d:
            raise InsufficientDataError(f"need {d} lagged values, got {len(own)}")
        pred = self.intercept + float(np.dot(self.own_coeffs, own[::-1][:d]))
        if self.exog_coeffs is not None:
            if exog_history is None:
                raise ValueError("fit has exogenous terms but no exogenous history given")
            exog = np.asarray(exog_history, dtype=float)
            m, q = self.exog_lag_range
            if len(exog) < q:
                raise InsufficientDataError(f"need {q} exogenous lags, got {len(exog)}")
            taps = exog[::-1][m - 1 : q]
            pred += float(np.dot(self.exog_coeffs, taps))
        return pred


def fit_ar(
    y: np.ndarray,
    d: int,
    exog: tuple[np.ndarray, int, int] | None = None,
    t0: int | None = None,
) -> ARFit:
    """Fit y_t = phi_0 + sum_k phi_k y_{t-k} (+ sum_l psi_l x_{t-l}) by least squares.

    Parameters
    ----------
    y : target series.
    d : autoregression order (own lags 1..d).
    exog : optional (x, m, q), adding lags m..q of the exogenous series x.
    t0 : first predicted index; defaults to max(d, q).  Passing a common t0
        to two fits makes their RSS values comparable (same sample window).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("y must be one-dimensional")
    if d < 1:
        raise ValueError("autoregression order d must be >= 1")
    t = len(y)

    x = m = q = None
    if exog is not None:
        x, m, q = exog
        x = np.asarray(x, dtype=float)
        if len(x) != t:
            raise ValueError("exogenous series length must match y")
        if not (1 <= m <= q):
            raise ValueError("exogenous lag range requires 1 <= m <= q")

    min_t0 = max(d, q or 0)
    if t0 is None:
        t0 = min_t0
    elif t0 < min_t0:
        raise ValueError(f"t0={t0} leaves insufficient lag history (need >= {min_t0})")

    n_params = 1 + d + (q - m + 1 if exog is not None else 0)
    n_obs = t - t0
    if n_obs < n_params + 2:
        raise InsufficientDataError(
            f"{n_obs} usable samples for {n_params} parameters (need >= {n_params + 2})"
        )

    cols = [np.ones(n_obs)]
    for k in range(1, d + 1):
        cols.append(y[t0 - k : t - k])
    if exog is not None:
        for lag in range(m, q + 1):
            cols.append(x[t0 - lag : t - lag])
    design = np.column_stack(cols)
    target = y[t0:]

    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += _RIDGE_JITTER
    try:
        beta = np.linalg.solve(gram, design.T @ target)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(f"design matrix singular after jitter: {exc}") from exc

    resid = target - design @ beta
    rss = float(resid @ resid)
    exog_coeffs = beta[1 + d :].copy() if exog is not None else None
    return ARFit(
        intercept=float(beta[0]),
        own_coeffs=beta[1 : 1 + d].copy(),
        exog_coeffs=exog_coeffs,
        exog_lag_range=(m, q) if exog is not None else None,
        rss=rss,
        n_obs=n_obs,
        n_params=n_params,
    )


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for it in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * it
        aa = it * (b - it) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + it) * (qab + it) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the representation that converges fast on each side of the mean.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def f_sf(f: float, df1: int, df2: int) -> float:
    """Upper-tail probability of the F(df1, df2) distribution."""
    if df1 < 1 or df2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if f <= 0.0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return betainc_reg(df2 / 2.0, df1 / 2.0, x)


def f_test(
    rss_restricted: float,
    rss_unrestricted: float,
    extra_params: int,
    residual_df: int,
) -> float:
    """p-value of the nested-model F-test on an RSS reduction.

    Negative F (possible from ridge jitter round-off) is clamped to 0,
    giving p = 1.
    """
    if extra_params < 1:
        raise ValueError("extra_params must be >= 1")
    if residual_df < 1:
        raise ValueError("residual_df must be >= 1")
    if rss_unrestricted <= 0.0:
        # Perfect unrestricted fit: any RSS reduction is infinitely significant.
        return 0.0 if rss_restricted > rss_unrestricted else 1.0
    f = ((rss_restricted - rss_unrestricted) / extra_params) / (rss_unrestricted / residual_df)
    if f <= 0.0:
        return 1.0
    return f_sf(f, extra_params, residual_df)


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t with df degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return betainc_reg(df / 2.0, 0.5, x)


def paired_ttest(errors_a: np.ndarray, errors_b: np.ndarray) -> float:
    """Two-sided paired t-test p-value for mean(a - b) = 0."""
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be one-dimensional and of equal length")
    n = len(a)
    if n < 2:
        raise InsufficientDataError("paired t-test needs at least 2 pairs")
    diff = a - b
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        warnings.warn("paired_ttest: zero variance of differences", RuntimeWarning)
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / math.sqrt(n))
    return t_sf_two_sided(t, n - 1)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties receiving the average of their positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=float)
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float | None:
    """Spearman rank correlation; None when a rank variance is zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be one-dimensional and of equal length")
    if len(x) < 3:
        raise InsufficientDataError("spearman needs at least 3 observations")
    rx = average_ranks(x)
    ry = average_ranks(y)
    sx = rx.std()
    sy = ry.std()
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between (lat, lon) points in degrees."""
    lat1, lon1 = (math.radians(v) for v in a)
    lat2, lon2 = (math.radians(v) for v in b)
    s = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))
