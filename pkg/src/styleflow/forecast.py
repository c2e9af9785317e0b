"""Influence-conditioned coherent forecaster and baseline models.

Each (style, city) trajectory gets a small two-layer sigmoid network fed
with its own lags plus one tap per discovered influencer at the discovered
lag.  All city networks of a style train jointly: squared one-step error
plus a coherence penalty tying the cross-city mean of the predictions to
the mean of the ground truth.  Multi-step forecasts come from a joint
recursive rollout in which every city's forecast is appended to the shared
history before the next step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .datamodel import DataError
from .numstats import ARFit, InsufficientDataError, fit_ar, paired_ttest
from .trajectories import SplitSpec, TrajectoryPanel

BASELINE_METHODS = ("gaussian", "seasonal", "mean", "last", "drift", "exp", "ar", "arima", "var")
SEASON = 52
MAPE_EPS = 1e-8


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


# ---------------------------------------------------------------------------
# network plumbing

@dataclass
class CityNet:
    """Two-layer network for one (style, city) series plus its input wiring.

    Inputs are standardized with training-range statistics (stored here so
    inference applies the same transform); parameters are in standardized
    input space.
    """

    w1: np.ndarray            # (hidden, n_in)
    b1: np.ndarray            # (hidden,)
    w2: np.ndarray            # (hidden,)
    b2: np.ndarray            # (1,)
    influencers: list[tuple[int, int]]  # (source city index, lag)
    x_mean: np.ndarray | None = None    # (n_in,)
    x_std: np.ndarray | None = None     # (n_in,)

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def standardize(self, x: np.ndarray) -> np.ndarray:
        if self.x_mean is None:
            return x
        return (x - self.x_mean) / self.x_std

    def forward(self, x: np.ndarray) -> np.ndarray:
        hidden = _sigmoid(self.standardize(x) @ self.w1.T + self.b1)
        return hidden @ self.w2 + self.b2[0]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _city_inputs(values_k: np.ndarray, net: CityNet, j: int, t_idx: np.ndarray, d: int) -> np.ndarray:
    """Input rows for city j at predicted indices t_idx (lags look backwards)."""
    cols = [values_k[j, t_idx - lag] for lag in range(1, d + 1)]
    cols += [values_k[i, t_idx - lag] for i, lag in net.influencers]
    return np.column_stack(cols)


def _style_loss_and_grads(
    nets: list[CityNet],
    inputs: list[np.ndarray],
    targets: np.ndarray,
    lam: float,
    l2: float,
) -> tuple[float, list[list[np.ndarray]]]:
    """Total loss over one style's cities and its analytic gradients.

    ``inputs`` are the (already standardized) per-city design matrices.

    loss = sum_j sum_t (pred - y)^2
         + lam * sum_t (mean_j y - mean_j pred)^2
         + l2 * sum(theta^2)
    """
    c = len(nets)
    n = targets.shape[1]
    preds = np.empty((c, n))
    hiddens = []
    for j, net in enumerate(nets):
        hidden = _sigmoid(inputs[j] @ net.w1.T + net.b1)
        hiddens.append(hidden)
        preds[j] = hidden @ net.w2 + net.b2[0]

    err = preds - targets
    gap = targets.mean(axis=0) - preds.mean(axis=0)
    loss = float((err * err).sum()) + lam * float((gap * gap).sum())
    dpred = 2.0 * err - (2.0 * lam / c) * gap  # d(gap^2)/dpred_j = -2*gap/c

    grads: list[list[np.ndarray]] = []
    for j, net in enumerate(nets):
        hidden = hiddens[j]
        dp = dpred[j]
        dw2 = hidden.T @ dp + 2.0 * l2 * net.w2
        db2 = np.array([dp.sum() + 2.0 * l2 * net.b2[0]])
        dhidden = np.outer(dp, net.w2)
        dz = dhidden * hidden * (1.0 - hidden)
        dw1 = dz.T @ inputs[j] + 2.0 * l2 * net.w1
        db1 = dz.sum(axis=0) + 2.0 * l2 * net.b1
        grads.append([dw1, db1, dw2, db2])
        loss += l2 * float(
            (net.w1 * net.w1).sum() + (net.b1 * net.b1).sum()
            + (net.w2 * net.w2).sum() + net.b2[0] ** 2
        )
    return loss, grads


class _Adam:
    """Adam with bias correction; update order is fixed by parameter order."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# coherent model

@dataclass
class ForecastModel:
    city_ids: list[str]
    d: int
    hidden: int
    lam: float
    lr: float
    l2: float
    seed: int
    nets: list[list[CityNet]]  # [style][city]
    logs: list[dict] = field(default_factory=list)

    @property
    def n_styles(self) -> int:
        return len(self.nets)


@dataclass
class ForecastPanel:
    week_starts: list[str]
    city_ids: list[str]
    values: np.ndarray  # (K, C, H)
    method: str


def _check_complete(values: np.ndarray) -> None:
    if np.isnan(values).any():
        raise DataError("panel contains missing bins; run interpolate_missing first")


def train_coherent(
    panel: TrajectoryPanel,
    tensor,
    split: SplitSpec,
    lam: float = 1.0,
    lr: float = 1e-2,
    l2: float = 1e-8,
    seed: int = 0,
    d: int = 8,
    hidden: int = 16,
    use_influence: bool = True,
    patience: int = 20,
    max_epochs: int = 2000,
    min_delta: float = 1e-5,
) -> ForecastModel:
    """Jointly train the per-city networks of every style.

    Full-batch Adam on one-step training pairs; early stopping restores the
    parameters with the best validation one-step MAE (no improvement for
    ``patience`` epochs stops training).  Deterministic given the seed.
    Pass ``use_influence=False`` (or ``lam=0``) for the ablation variants.
    """
    values = panel.values
    _check_complete(values)
    k, c, _ = values.shape
    train_end = split.train[1]
    val_start, val_end = split.validation
    if val_end <= val_start:
        raise ValueError("validation range is empty; early stopping needs one")

    nets_all: list[list[CityNet]] = []
    logs: list[dict] = []
    for style in range(k):
        rng = np.random.default_rng([seed, style])
        nets: list[CityNet] = []
        max_lag = d
        for j in range(c):
            influencers: list[tuple[int, int]] = []
            if use_influence and tensor is not None:
                for i in range(c):
                    lag = int(tensor.lags[style, i, j])
                    if lag > 0:
                        influencers.append((i, lag))
                        max_lag = max(max_lag, lag)
            n_in = d + len(influencers)
            # small init keeps the sigmoid near its linear regime at the start,
            # which makes the learned map stable under recursive rollout
            nets.append(
                CityNet(
                    w1=rng.normal(0.0, 0.3 / math.sqrt(n_in), size=(hidden, n_in)),
                    b1=np.zeros(hidden),
                    w2=rng.normal(0.0, 0.3 / math.sqrt(hidden), size=hidden),
                    b2=np.zeros(1),
                    influencers=influencers,
                )
            )

        t0 = max_lag  # samples with a full lag window start here
        train_idx = np.arange(t0, train_end)
        val_idx = np.arange(val_start, val_end)
        if len(train_idx) < 4:
            raise InsufficientDataError(
                f"style {style}: only {len(train_idx)} training samples after lag window"
            )
        x_train = [_city_inputs(values[style], nets[j], j, train_idx, d) for j in range(c)]
        x_val = [_city_inputs(values[style], nets[j], j, val_idx, d) for j in range(c)]
        y_train = values[style][:, train_idx]
        y_val = values[style][:, val_idx]
        for j in range(c):
            nets[j].x_mean = x_train[j].mean(axis=0)
            nets[j].x_std = np.maximum(x_train[j].std(axis=0), 1e-8)
            x_train[j] = nets[j].standardize(x_train[j])
            x_val[j] = nets[j].standardize(x_val[j])
            # start with an unbiased output so early stopping sees real progress
            hid = _sigmoid(x_train[j] @ nets[j].w1.T + nets[j].b1)
            nets[j].b2[0] = y_train[j].mean() - (hid @ nets[j].w2).mean()

        flat_params = [p for net in nets for p in net.params()]
        opt = _Adam(flat_params, lr=lr)
        best_mae = np.inf
        best_params = [p.copy() for p in flat_params]
        best_epoch = 0
        wait = 0
        epochs_run = 0
        final_loss = np.nan
        for epoch in range(max_epochs):
            epochs_run = epoch + 1
            loss, grads = _style_loss_and_grads(nets, x_train, y_train, lam, l2)
            if not np.isfinite(loss):
                raise DivergenceError(f"style {style}: non-finite loss at epoch {epoch}")
            final_loss = loss
            opt.step(flat_params, [g for gs in grads for g in gs])

            val_pred = np.vstack(
                [_sigmoid(x_val[j] @ nets[j].w1.T + nets[j].b1) @ nets[j].w2 + nets[j].b2[0]
                 for j in range(c)]
            )
            val_mae = float(np.abs(val_pred - y_val).mean())
            if val_mae < best_mae - min_delta:
                best_mae = val_mae
                best_params = [p.copy() for p in flat_params]
                best_epoch = epoch
                wait = 0
            else:
                wait += 1
                if wait >= patience:
                    break
        for p, best in zip(flat_params, best_params):
            p[...] = best
        logs.append(
            {
                "style": style,
                "epochs": epochs_run,
                "best_epoch": best_epoch,
                "best_val_mae": best_mae,
                "final_train_loss": final_loss,
            }
        )
        nets_all.append(nets)

    return ForecastModel(
        city_ids=list(panel.city_ids), d=d, hidden=hidden, lam=lam, lr=lr, l2=l2,
        seed=seed, nets=nets_all, logs=logs,
    )


def _extend_weeks(week_starts: list[str], test_start: int, h: int) -> list[str]:
    from datetime import date, timedelta

    labels = list(week_starts[test_start : test_start + h])
    while len(labels) < h:
        last = date.fromisoformat(labels[-1] if labels else week_starts[test_start - 1])
        labels.append((last + timedelta(days=7)).isoformat())
    return labels


def forecast_horizon(
    model: ForecastModel,
    panel: TrajectoryPanel,
    split: SplitSpec,
    horizon: int | None = None,
) -> ForecastPanel:
    """Joint recursive rollout over the test range.

    At each step every city's forecast is computed from the shared lagged
    history, then appended so later influencer taps read forecasted values.
    Test-range ground truth is never read.
    """
    h = split.horizon if horizon is None else horizon
    test_start = split.test_start
    values = panel.values
    _check_complete(values[:, :, :test_start])
    k, c, _ = values.shape
    hist = values[:, :, :test_start]
    # envelope keeps the recursion from drifting out of the data's range
    span = hist.max(axis=2) - hist.min(axis=2)
    lo = (hist.min(axis=2) - 0.25 * span)[:, :, None]
    hi = (hist.max(axis=2) + 0.25 * span)[:, :, None]
    ext = np.empty((k, c, test_start + h))
    ext[:, :, :test_start] = hist
    for step in range(h):
        p = test_start + step
        idx = np.array([p])
        for style in range(k):
            row = np.empty(c)
            for j in range(c):
                x = _city_inputs(ext[style], model.nets[style][j], j, idx, model.d)
                row[j] = model.nets[style][j].forward(x)[0]
            ext[style, :, p] = np.clip(row, lo[style, :, 0], hi[style, :, 0])
    return ForecastPanel(
        week_starts=_extend_weeks(panel.week_starts, test_start, h),
        city_ids=list(panel.city_ids),
        values=ext[:, :, test_start:],
        method="coherent",
    )


# ---------------------------------------------------------------------------
# baselines

def select_ar_order(y: np.ndarray, max_order: int = 8) -> int:
    """AIC order selection for an AR baseline (common sample window)."""
    y = np.asarray(y, dtype=float)
    best_order, best_aic = 1, np.inf
    for p in range(1, max_order + 1):
        fit = fit_ar(y, p, t0=max_order)
        n = fit.n_obs
        aic = n * math.log(max(fit.rss / n, 1e-300)) + 2.0 * (p + 1)
        if aic < best_aic:
            best_order, best_aic = p, aic
    return best_order


def ar_baseline_fit(y: np.ndarray, order: int | None = None) -> ARFit:
    """The AR fit used by the 'ar' baseline (AIC order when unspecified)."""
    if order is None:
        order = select_ar_order(y)
    return fit_ar(y, order)


def _forecast_ar(y: np.ndarray, h: int, order: int | None) -> np.ndarray:
    fit = ar_baseline_fit(y, order)
    hist = list(y)
    out = []
    for _ in range(h):
        nxt = fit.one_step(np.asarray(hist))
        out.append(nxt)
        hist.append(nxt)
    return np.array(out)


def _css_arma(w: np.ndarray, p: int, q: int, start: int) -> tuple[np.ndarray, float]:
    """Conditional-least-squares ARMA fit (innovations before ``start`` are 0).

    Returns (params, rss) with params = [c, phi_1..phi_p, theta_1..theta_q].
    """
    n = len(w)
    design = np.column_stack(
        [np.ones(n - start)] + [w[start - i : n - i] for i in range(1, p + 1)]
    )
    target = w[start:]

    def css(params: np.ndarray) -> float:
        ar_pred = design @ params[: 1 + p]
        theta = params[1 + p :]
        eps = np.zeros(n)
        rss = 0.0
        for t in range(start, n):
            e = target[t - start] - ar_pred[t - start]
            for jj in range(q):
                e -= theta[jj] * eps[t - 1 - jj]
            eps[t] = e
            rss += e * e
        return rss

    if p > 0:
        ar = fit_ar(w, p, t0=start)
        x0 = np.concatenate([[ar.intercept], ar.own_coeffs, np.zeros(q)])
    else:
        x0 = np.concatenate([[w[start:].mean()], np.zeros(q)])
    if q == 0:
        return x0, css(x0)
    res = minimize(css, x0, method="Nelder-Mead",
                   options={"xatol": 1e-7, "fatol": 1e-9, "maxiter": 400})
    return res.x, float(res.fun)


def _forecast_arima(y: np.ndarray, h: int, pq_grid=((0, 0), (0, 1), (0, 2), (1, 0), (1, 1),
                                                    (1, 2), (2, 0), (2, 1), (2, 2))) -> np.ndarray:
    """ARIMA(p,1,q): difference once, AIC-select (p, q), CSS fit, integrate back."""
    w = np.diff(np.asarray(y, dtype=float))
    start = max(p for p, _ in pq_grid)
    n_eff = len(w) - start
    if n_eff < 8:
        raise InsufficientDataError(f"history too short for ARIMA ({len(y)} points)")
    best = None
    for p, q in pq_grid:
        params, rss = _css_arma(w, p, q, start)
        aic = n_eff * math.log(max(rss / n_eff, 1e-300)) + 2.0 * (p + q + 1)
        if best is None or aic < best[0]:
            best = (aic, p, q, params)
    _, p, q, params = best
    c0 = params[0]
    phi = params[1 : 1 + p]
    theta = params[1 + p :]

    eps = np.zeros(len(w) + h)
    for t in range(start, len(w)):  # in-sample residuals feed the MA taps
        pred = c0 + sum(phi[i] * w[t - 1 - i] for i in range(p)) \
                  + sum(theta[jj] * eps[t - 1 - jj] for jj in range(q))
        eps[t] = w[t] - pred
    w_ext = np.concatenate([w, np.zeros(h)])
    for step in range(h):
        t = len(w) + step
        pred = c0 + sum(phi[i] * w_ext[t - 1 - i] for i in range(p)) \
                  + sum(theta[jj] * eps[t - 1 - jj] for jj in range(q))
        w_ext[t] = pred  # future innovations are zero
    return y[-1] + np.cumsum(w_ext[len(w) :])


def _fit_var(y_mat: np.ndarray, order: int, t0: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-equation least squares for a VAR(order); returns (B, residuals, n)."""
    t, c = y_mat.shape
    n = t - t0
    cols = [np.ones(n)]
    for lag in range(1, order + 1):
        cols.append(y_mat[t0 - lag : t - lag])
    design = np.column_stack(cols)
    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += 1e-10
    b = np.linalg.solve(gram, design.T @ y_mat[t0:])
    resid = y_mat[t0:] - design @ b
    return b, resid, n


def _forecast_var(y_mat: np.ndarray, h: int, max_order: int = 8, order: int | None = None
                  ) -> np.ndarray:
    """Joint cross-city forecast; AIC order selection over 1..max_order."""
    t, c = y_mat.shape
    if t <= max_order + c * max_order + 3:
        max_order = max(1, min(max_order, (t - 4) // (c + 1)))
    if order is None:
        best = None
        for p in range(1, max_order + 1):
            _, resid, n = _fit_var(y_mat, p, max_order)
            sigma = resid.T @ resid / n
            sigma[np.diag_indices_from(sigma)] += 1e-12
            _, logdet = np.linalg.slogdet(sigma)
            aic = logdet + 2.0 * (p * c * c + c) / n
            if best is None or aic < best[0]:
                best = (aic, p)
        order = best[1]
    b, _, _ = _fit_var(y_mat, order, order)
    hist = list(y_mat)
    out = np.empty((h, c))
    for step in range(h):
        row = [1.0]
        for lag in range(1, order + 1):
            row.extend(hist[-lag])
        out[step] = np.asarray(row) @ b
        hist.append(out[step])
    return out


def _forecast_exp(y: np.ndarray, h: int) -> np.ndarray:
    """Simple exponential smoothing; decay fitted by training MSE grid search."""
    best_level, best_mse = y[0], np.inf
    for decay in np.arange(1, 101) / 100.0:
        level = y[0]
        sse = 0.0
        for t in range(1, len(y)):
            sse += (y[t] - level) ** 2
            level = decay * y[t] + (1.0 - decay) * level
        mse = sse / max(len(y) - 1, 1)
        if mse < best_mse:
            best_mse, best_level = mse, level
    return np.full(h, best_level)


def baseline_forecast(
    method: str,
    panel: TrajectoryPanel,
    split: SplitSpec,
    horizon: int | None = None,
    seed: int = 0,
    options: dict | None = None,
) -> ForecastPanel:
    """H-step forecasts from one of the baseline models.

    Every method sees only pre-test history (train + validation) and its own
    prior forecasts.  ``gaussian`` sampling is seeded; ``var`` forecasts each
    style's cities jointly, everything else is per series.
    """
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline '{method}' (choose from {BASELINE_METHODS})")
    options = options or {}
    h = split.horizon if horizon is None else horizon
    test_start = split.test_start
    values = panel.values
    _check_complete(values[:, :, :test_start])
    k, c, _ = values.shape
    out = np.empty((k, c, h))
    rng = np.random.default_rng([seed, 7])

    if method == "var":
        for style in range(k):
            fc = _forecast_var(values[style, :, :test_start].T, h,
                               order=options.get("var_order"))
            out[style] = fc.T
    else:
        for style in range(k):
            for j in range(c):
                y = values[style, j, :test_start]
                if method == "gaussian":
                    mu, sd = float(y.mean()), float(y.std(ddof=1))
                    out[style, j] = rng.normal(mu, sd, size=h) if sd > 0 else np.full(h, mu)
                elif method == "seasonal":
                    if len(y) < SEASON:
                        raise InsufficientDataError(
                            f"seasonal baseline needs >= {SEASON} history points, got {len(y)}"
                        )
                    ext = np.concatenate([y, np.zeros(h)])
                    for step in range(h):
                        ext[len(y) + step] = ext[len(y) + step - SEASON]
                    out[style, j] = ext[len(y) :]
                elif method == "mean":
                    out[style, j] = np.full(h, y.mean())
                elif method == "last":
                    out[style, j] = np.full(h, y[-1])
                elif method == "drift":
                    slope = (y[-1] - y[0]) / (len(y) - 1) if len(y) > 1 else 0.0
                    out[style, j] = y[-1] + slope * np.arange(1, h + 1)
                elif method == "exp":
                    out[style, j] = _forecast_exp(y, h)
                elif method == "ar":
                    out[style, j] = _forecast_ar(y, h, options.get("ar_order"))
                elif method == "arima":
                    out[style, j] = _forecast_arima(y, h)
    return ForecastPanel(
        week_starts=_extend_weeks(panel.week_starts, test_start, h),
        city_ids=list(panel.city_ids),
        values=out,
        method=method,
    )


# ---------------------------------------------------------------------------
# metrics

@dataclass
class MetricsReport:
    """Macro-averaged forecast errors plus per-series detail for t-tests."""

    mae: float
    mape: float
    per_series_mae: np.ndarray   # (K, C)
    per_series_mape: np.ndarray  # (K, C)
    abs_errors: np.ndarray       # (K, C, H)
    tag: str = "seasonal"
    mape_floored_points: int = 0

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "mape": self.mape,
            "tag": self.tag,
            "mape_floored_points": self.mape_floored_points,
            "per_series_mae": self.per_series_mae.tolist(),
            "per_series_mape": self.per_series_mape.tolist(),
        }


def _values_of(panel_or_array) -> np.ndarray:
    if isinstance(panel_or_array, (ForecastPanel, TrajectoryPanel)):
        return panel_or_array.values
    return np.asarray(panel_or_array, dtype=float)


def compute_metrics(forecasts, truth, tag: str = "seasonal") -> MetricsReport:
    """MAE and MAPE, macro-averaged over (style, city) series.

    MAPE scales by |truth| floored at a tiny epsilon; floored points are
    counted in the report.
    """
    f = _values_of(forecasts)
    t = _values_of(truth)
    if f.shape != t.shape:
        raise ValueError(f"forecast shape {f.shape} != truth shape {t.shape}")
    abs_err = np.abs(f - t)
    denom = np.abs(t)
    floored = int((denom < MAPE_EPS).sum())
    per_mae = abs_err.mean(axis=-1)
    per_mape = 100.0 * (abs_err / np.maximum(denom, MAPE_EPS)).mean(axis=-1)
    return MetricsReport(
        mae=float(per_mae.mean()),
        mape=float(per_mape.mean()),
        per_series_mae=per_mae,
        per_series_mape=per_mape,
        abs_errors=abs_err,
        tag=tag,
        mape_floored_points=floored,
    )


def compare_models(report_a: MetricsReport, report_b: MetricsReport) -> tuple[float, float]:
    """(MAE_a - MAE_b, p) with a paired t-test over per-series MAEs."""
    if report_a.per_series_mae.shape != report_b.per_series_mae.shape:
        raise ValueError("reports cover different series sets")
    delta = report_a.mae - report_b.mae
    p = paired_ttest(report_a.per_series_mae.ravel(), report_b.per_series_mae.ravel())
    return delta, p


# ---------------------------------------------------------------------------
# serialization

def model_to_json(model: ForecastModel, path: str | Path) -> None:
    doc = {
        "city_ids": model.city_ids,
        "d": model.d,
        "hidden": model.hidden,
        "lam": model.lam,
        "lr": model.lr,
        "l2": model.l2,
        "seed": model.seed,
        "logs": model.logs,
        "styles": [
            [
                {
                    "influencers": net.influencers,
                    "w1": net.w1.tolist(),
                    "b1": net.b1.tolist(),
                    "w2": net.w2.tolist(),
                    "b2": net.b2.tolist(),
                    "x_mean": None if net.x_mean is None else net.x_mean.tolist(),
                    "x_std": None if net.x_std is None else net.x_std.tolist(),
                }
                for net in nets
            ]
            for nets in model.nets
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def model_from_json(path: str | Path) -> ForecastModel:
    with open(path) as fh:
        doc = json.load(fh)
    nets_all = [
        [
            CityNet(
                w1=np.asarray(n["w1"], dtype=float),
                b1=np.asarray(n["b1"], dtype=float),
                w2=np.asarray(n["w2"], dtype=float),
                b2=np.asarray(n["b2"], dtype=float),
                influencers=[tuple(p) for p in n["influencers"]],
                x_mean=None if n.get("x_mean") is None else np.asarray(n["x_mean"], dtype=float),
                x_std=None if n.get("x_std") is None else np.asarray(n["x_std"], dtype=float),
            )
            for n in nets
        ]
        for nets in doc["styles"]
    ]
    return ForecastModel(
        city_ids=list(doc["city_ids"]), d=int(doc["d"]), hidden=int(doc["hidden"]),
        lam=float(doc["lam"]), lr=float(doc["lr"]), l2=float(doc["l2"]),
        seed=int(doc["seed"]), nets=nets_all, logs=list(doc.get("logs", [])),
    )


def forecast_to_csv(fp: ForecastPanel, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("style_id,city_id,week,value\n")
        k, c, h = fp.values.shape
        for style in range(k):
            for j, city in enumerate(fp.city_ids):
                for step in range(h):
                    fh.write(f"{style},{city},{fp.week_starts[step]},{float(fp.values[style, j, step])!r}\n")


def forecast_from_csv(path: str | Path) -> ForecastPanel:
    cells: dict[tuple[int, str, str], float] = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "style_id,city_id,week,value":
            raise DataError(f"{path}: unexpected forecast header '{header}'")
        for line in fh:
            style, city, week, value = line.strip().split(",")
            cells[(int(style), city, week)] = float(value)
    styles = sorted({k for k, _, _ in cells})
    cities = sorted({c for _, c, _ in cells})
    weeks = sorted({w for _, _, w in cells})
    values = np.empty((len(styles), len(cities), len(weeks)))
    for (k, c, w), v in cells.items():
        values[k, cities.index(c), weeks.index(w)] = v
    return ForecastPanel(week_starts=weeks, city_ids=cities, values=values, method="loaded")
