"""Lower confidence bounds for the mMSE gap.

The LCB is built from per-row numerator/denominator samples
R_i = Y_i (mu_i - E[mu | Z_i]) and V_i = Var(mu | Z_i), aggregated by a
delta-method standard error for the ratio of means R-bar / sqrt(V-bar).
Conditional moments of mu come either in closed form (partially linear
mu under a Gaussian covariate model) or from K Monte Carlo null copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (ConfidenceLevel, Dataset, LcbReport, MMSE_GAP,
                   MMSE_GAP_SCALE_FREE, as_confidence_level, ratio_lcb)
from .covariates import CovariateModel, cond_moments_linear
from .errors import ShapeError, SizeError, ValidationError
from .regression import LinearWorkingRegression, WorkingRegression


@dataclass(frozen=True)
class FloodgateConfig:
    """Settings for one floodgate LCB computation.

    big_k = 0 requests closed-form conditional moments (only valid when
    the covariate model and mu support them); big_k >= 2 requests the
    Monte Carlo estimators with K null copies. big_k = 1 is rejected
    because the K-copy variance estimator needs at least two copies.
    """

    alpha: ConfidenceLevel | float = 0.05
    big_k: int = 500
    center_y: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", as_confidence_level(self.alpha))
        if self.big_k == 1 or self.big_k < 0:
            raise ValidationError(
                f"big_k must be 0 (closed form) or >= 2, got {self.big_k}")

    def with_alpha(self, alpha) -> "FloodgateConfig":
        return replace(self, alpha=as_confidence_level(alpha))


def _predict_rows(mu: WorkingRegression, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.asarray(mu.predict(x, z), dtype=float).reshape(len(x))


def mu_null_values(mu: WorkingRegression, model: CovariateModel,
                   z: np.ndarray, big_k: int, seed: int) -> np.ndarray:
    """mu evaluated on K null copies of x; shape (K, n)."""
    copies = model.sample_null_copies(z, big_k, seed).copies
    big_k, n, d_x = copies.shape
    if isinstance(mu, LinearWorkingRegression):
        # Evaluate the z part once instead of retiling it per copy.
        base = np.full(n, mu.intercept)
        if len(mu.z_coef):
            base = base + z @ mu.z_coef
        f = base[None, :] + copies @ mu.x_coef
        return np.tanh(f / 2.0) if mu.link == "binary_mean" else f
    flat = copies.reshape(big_k * n, d_x)
    z_rep = np.tile(z, (big_k, 1))
    return _predict_rows(mu, flat, z_rep).reshape(big_k, n)


def moment_samples(infer_part: Dataset, mu: WorkingRegression,
                   model: CovariateModel, cfg: FloodgateConfig
                   ) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-row (R_i, V_i) samples and the squared scale of the centered
    mu values (used by the degeneracy threshold)."""
    if infer_part.n < 2:
        raise SizeError("floodgate needs at least two inference rows")
    mu_obs = _predict_rows(mu, infer_part.x, infer_part.z)
    if cfg.big_k == 0:
        g, v = cond_moments_linear(model, mu, infer_part.z)
        center = g
    else:
        # The centering function must be independent of the copies that
        # enter R_i, otherwise the shared Monte Carlo noise biases the
        # numerator upward by Var(mu | Z) / K; a separate copy pool
        # keeps the numerator unbiased.
        if cfg.center_y:
            pool = mu_null_values(mu, model, infer_part.z,
                                  2 * cfg.big_k, cfg.seed)
            center = pool[:cfg.big_k].mean(axis=0)
            tilde = pool[cfg.big_k:]
        else:
            tilde = mu_null_values(mu, model, infer_part.z, cfg.big_k,
                                   cfg.seed)
            center = None
        g = tilde.mean(axis=0)
        v = tilde.var(axis=0, ddof=1)
    centered = mu_obs - g
    y = infer_part.y - center if cfg.center_y else infer_part.y
    r = y * centered
    scale_sq = float(np.mean(centered ** 2))
    return r, v, scale_sq


def floodgate_lcb(infer_part: Dataset, mu: WorkingRegression,
                  model: CovariateModel, cfg: FloodgateConfig) -> LcbReport:
    """Delta-method LCB for the mMSE-gap floodgate functional."""
    r, v, scale_sq = moment_samples(infer_part, mu, model, cfg)
    return ratio_lcb(r, v, cfg.alpha, estimand=MMSE_GAP,
                     mu_scale_sq=scale_sq, seed=cfg.seed)


def variance_ucb(y: np.ndarray, alpha) -> float:
    """CLT-based upper confidence bound for Var(Y)."""
    level = as_confidence_level(alpha)
    d = (y - y.mean()) ** 2
    return float(d.mean() + level.z * d.std(ddof=1) / math.sqrt(len(y)))


def floodgate_lcb_scale_free(infer_part: Dataset, mu: WorkingRegression,
                             model: CovariateModel,
                             cfg: FloodgateConfig) -> LcbReport:
    """LCB for the scale-free gap I^2 / Var(Y), combining an alpha/2
    gap LCB with an alpha/2 variance UCB by Bonferroni; clipped to [0,1]."""
    half = cfg.alpha.alpha / 2.0
    y = infer_part.y
    if y.std(ddof=1) == 0.0:
        return LcbReport(0.0, 0.0, 0.0, infer_part.n, MMSE_GAP_SCALE_FREE,
                         degenerate=True, seed=cfg.seed)
    base = floodgate_lcb(infer_part, mu, model, cfg.with_alpha(half))
    if base.degenerate:
        return base.replace(estimand=MMSE_GAP_SCALE_FREE)
    ucb = variance_ucb(y, half)
    if ucb <= 0.0:
        return LcbReport(0.0, base.point, base.se, infer_part.n,
                         MMSE_GAP_SCALE_FREE, degenerate=True, seed=cfg.seed)
    value = min(max(base.lcb ** 2 / ucb, 0.0), 1.0)
    return LcbReport(value, base.point ** 2 / ucb, base.se, infer_part.n,
                     MMSE_GAP_SCALE_FREE, degenerate=False, seed=cfg.seed,
                     diagnostics={"var_y_ucb": ucb, "gap_lcb": base.lcb})


def floodgate_lcb_weighted(infer_part: Dataset, mu: WorkingRegression,
                           model: CovariateModel, weights,
                           cfg: FloodgateConfig) -> LcbReport:
    """Importance-weighted floodgate LCB for a shifted target population.

    weights is a pair (w, w1): w has shape (n,) and carries the joint
    covariate-density ratio at the observed rows; w1 has shape (K, n)
    and carries the conditional ratio at each null copy. Per row,

        R_i = mean_k (Y_i - mu(X~_ik, Z_i))^2 w_i w1_ik
              - (Y_i - mu(X_i, Z_i))^2 w_i
        V_i = mean_k 2 (mu(X_i, Z_i) - mu(X~_ik, Z_i))^2 w_i w1_ik

    and the usual delta-method LCB is applied after normalizing both
    sample means by the mean row weight, which makes the bound exactly
    invariant to a constant rescaling of the weights.
    """
    if cfg.big_k < 1:
        raise ValidationError("weighted floodgate needs big_k >= 1 null copies")
    if infer_part.n < 2:
        raise SizeError("floodgate needs at least two inference rows")
    w, w1 = weights
    w = np.asarray(w, dtype=float)
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    n = infer_part.n
    if w.shape != (n,):
        raise ShapeError(f"w must have shape ({n},)")
    if w1.shape != (cfg.big_k, n):
        raise ShapeError(f"w1 must have shape ({cfg.big_k}, {n})")
    if (not np.all(np.isfinite(w)) or not np.all(np.isfinite(w1))
            or w.min() < 0 or w1.min() < 0):
        raise ValidationError("weights must be finite and nonnegative")
    w_bar = float(w.mean())
    if w_bar <= 0.0:
        return LcbReport(0.0, 0.0, 0.0, n, MMSE_GAP, degenerate=True,
                         seed=cfg.seed)
    mu_obs = _predict_rows(mu, infer_part.x, infer_part.z)
    tilde = mu_null_values(mu, model, infer_part.z, cfg.big_k, cfg.seed)
    y = infer_part.y
    sq_tilde = (y[None, :] - tilde) ** 2
    r = (np.mean(sq_tilde * w1, axis=0) * w - (y - mu_obs) ** 2 * w) / w_bar
    v = np.mean(2.0 * (mu_obs[None, :] - tilde) ** 2 * w1, axis=0) * w / w_bar
    scale_sq = float(np.mean((mu_obs - tilde.mean(axis=0)) ** 2))
    return ratio_lcb(r, v, cfg.alpha, estimand=MMSE_GAP,
                     mu_scale_sq=scale_sq, seed=cfg.seed)


def trivial_ucb(infer_part: Dataset, nu: WorkingRegression, alpha) -> float:
    """CLT upper confidence bound for E[(Y - nu(Z))^2], which upper
    bounds the squared mMSE gap for any function nu of z alone."""
    if infer_part.n < 2:
        raise SizeError("trivial_ucb needs at least two rows")
    level = as_confidence_level(alpha)
    nu_vals = np.asarray(
        nu.predict(np.zeros_like(infer_part.x), infer_part.z),
        dtype=float).reshape(infer_part.n)
    sq = (infer_part.y - nu_vals) ** 2
    return float(sq.mean() + level.z * sq.std(ddof=1) / math.sqrt(len(sq)))


def zero_out_transform(reports: list[LcbReport], selected) -> list[LcbReport]:
    """Zero the LCBs of unselected variables, leaving selected ones
    untouched; output order and length match the input."""
    selected = set(selected)
    for idx in selected:
        if not 0 <= idx < len(reports):
            raise IndexError(f"selected index {idx} out of range")
    return [rep if i in selected
            else rep.replace(lcb=0.0, degenerate=True)
            for i, rep in enumerate(reports)]
