"""Style discovery: diagonal-covariance Gaussian mixture fit by EM.

A style is one mixture component over attribute space; per-record style
posteriors are the component responsibilities.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import Corpus

VARIANCE_FLOOR = 1e-6
_DEGENERATE_MASS = 1e-10


@dataclass
class FitLog:
    log_likelihoods: list[float] = field(default_factory=list)
    reseeded: list[tuple[int, int]] = field(default_factory=list)  # (iteration, component)
    converged: bool = False
    n_iters: int = 0


@dataclass
class StyleModel:
    """K-component diagonal Gaussian mixture over M attributes."""

    weights: np.ndarray     # (K,)
    means: np.ndarray       # (K, M)
    variances: np.ndarray   # (K, M)
    attribute_names: list[str]
    fit_log: FitLog | None = None

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def n_attributes(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        if self.n_components < 1:
            raise ValueError("K must be >= 1")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()}, not 1")
        if np.any(self.variances < VARIANCE_FLOOR * (1 - 1e-12)):
            raise ValueError("variance below floor")


def _as_matrix(data) -> tuple[np.ndarray, list[str]]:
    if isinstance(data, Corpus):
        return data.attribute_matrix(), list(data.attribute_names)
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a Corpus or an (N, M) array")
    return x, [f"attr_{i + 1}" for i in range(x.shape[1])]


def _log_gaussians(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """(N, K) matrix of per-component diagonal-Gaussian log densities."""
    n, m = x.shape
    k = means.shape[0]
    out = np.empty((n, k))
    const = m * np.log(2.0 * np.pi)
    for j in range(k):
        diff = x - means[j]
        out[:, j] = -0.5 * (const + np.log(variances[j]).sum() + (diff * diff / variances[j]).sum(axis=1))
    return out


def _posteriors_and_ll(
    x: np.ndarray, weights: np.ndarray, means: np.ndarray, variances: np.ndarray
) -> tuple[np.ndarray, float]:
    log_joint = _log_gaussians(x, means, variances) + np.log(weights)
    log_norm = np.logaddexp.reduce(log_joint, axis=1)
    resp = np.exp(log_joint - log_norm[:, None])
    return resp, float(log_norm.mean())


def _kmeanspp_means(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++-style pick of K records as initial means."""
    n = len(x)
    order = rng.permutation(n)
    chosen = [order[0]]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # All remaining points coincide with a chosen mean; fall back to the shuffle order.
            for idx in order:
                if idx not in chosen:
                    chosen.append(idx)
                    break
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((x - x[chosen[-1]]) ** 2).sum(axis=1))
    return x[chosen].copy()


def fit_gmm(
    corpus,
    k: int,
    seed: int,
    max_iters: int = 500,
    tol: float = 1e-6,
    standardize: bool = False,
    init_means: np.ndarray | None = None,
) -> StyleModel:
    """Fit a K-component diagonal GMM by EM; deterministic given the seed.

    Convergence: relative mean-log-likelihood change below ``tol``.  A
    component whose responsibility mass vanishes is re-seeded from a random
    record and the event is recorded in the fit log.  ``standardize``
    z-scores the attributes for fitting and maps the parameters back to raw
    space afterwards.
    """
    x_raw, attribute_names = _as_matrix(corpus)
    n, m = x_raw.shape
    if k < 1:
        raise ValueError("K must be >= 1")
    if n < k:
        raise ValueError(f"K={k} exceeds record count {n}")

    shift = np.zeros(m)
    scale = np.ones(m)
    if standardize:
        shift = x_raw.mean(axis=0)
        scale = x_raw.std(axis=0)
        scale[scale == 0.0] = 1.0
    x = (x_raw - shift) / scale

    rng = np.random.default_rng(seed)
    if init_means is not None:
        means = (np.asarray(init_means, dtype=float) - shift) / scale
        if means.shape != (k, m):
            raise ValueError(f"init_means must have shape ({k}, {m})")
        means = means.copy()
    else:
        means = _kmeanspp_means(x, k, rng)
    weights = np.full(k, 1.0 / k)
    global_var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
    variances = np.tile(global_var, (k, 1))

    log = FitLog()
    prev_ll = -np.inf
    for it in range(max_iters):
        resp, ll = _posteriors_and_ll(x, weights, means, variances)
        log.log_likelihoods.append(ll)
        log.n_iters = it + 1

        nk = resp.sum(axis=0)
        dead = np.flatnonzero(nk < _DEGENERATE_MASS)
        if dead.size:
            for j in dead:
                means[j] = x[rng.integers(n)]
                variances[j] = global_var
                log.reseeded.append((it, int(j)))
            warnings.warn(f"fit_gmm: re-seeded degenerate component(s) {dead.tolist()} at iteration {it}")
            nk = np.maximum(nk, _DEGENERATE_MASS)

        weights = nk / nk.sum()
        means = (resp.T @ x) / nk[:, None]
        sq = (resp.T @ (x * x)) / nk[:, None]
        variances = np.maximum(sq - means * means, VARIANCE_FLOOR)

        if np.isfinite(prev_ll) and abs(ll - prev_ll) <= tol * max(1.0, abs(prev_ll)):
            log.converged = True
            break
        prev_ll = ll

    model = StyleModel(
        weights=weights,
        means=means * scale + shift,
        variances=np.maximum(variances * scale * scale, VARIANCE_FLOOR),
        attribute_names=attribute_names,
        fit_log=log,
    )
    model.validate()
    return model


def assign_style_posteriors(model: StyleModel, corpus) -> np.ndarray:
    """(N, K) responsibilities of each record under the mixture; rows sum to 1."""
    x, _ = _as_matrix(corpus)
    if x.shape[1] != model.n_attributes:
        raise ValueError(
            f"record dimension {x.shape[1]} != model dimension {model.n_attributes}"
        )
    resp, _ = _posteriors_and_ll(x, model.weights, model.means, model.variances)
    return resp


def gmm_log_likelihood(model: StyleModel, corpus) -> float:
    """Mean per-record log density under the mixture."""
    x, _ = _as_matrix(corpus)
    if x.shape[1] != model.n_attributes:
        raise ValueError(
            f"record dimension {x.shape[1]} != model dimension {model.n_attributes}"
        )
    _, ll = _posteriors_and_ll(x, model.weights, model.means, model.variances)
    return ll


def save_style_model(model: StyleModel, path: str | Path) -> None:
    doc = {
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
        "attribute_names": model.attribute_names,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_style_model(path: str | Path) -> StyleModel:
    with open(path) as fh:
        doc = json.load(fh)
    model = StyleModel(
        weights=np.asarray(doc["weights"], dtype=float),
        means=np.asarray(doc["means"], dtype=float),
        variances=np.asarray(doc["variances"], dtype=float),
        attribute_names=list(doc["attribute_names"]),
    )
    model.validate()
    return model
