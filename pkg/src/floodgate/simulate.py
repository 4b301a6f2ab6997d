"""Simulation harness: synthetic data generation, oracle importance
values, and a seeded replicate runner that measures coverage and
half-width of the floodgate bounds across configurations.

A replicate draws covariates from an AR(1) (or Gaussian-copula) model,
generates Y from a linear, nonlinear, or logistic mu*, splits the data,
fits a working regression on one part, and runs the chosen inference
method(s) once per focal variable on the other part. Oracles come from
closed forms where available and seeded Monte Carlo elsewhere.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from .core import Dataset, LcbReport, MACM_GAP, MMSE_GAP, split
from .covariates import (Ar1Model, CopulaModel, CovariateModel,
                         GaussianLinearModel, ar1_covariance)
from .errors import SizeError, ValidationError
from .macm import MacmConfig, macm_gap_oracle, macm_lcb
from .mmse import FloodgateConfig, floodgate_lcb
from .cosufficient import cosufficient_lcb
from .regression import (CUSTOM, CvConfig, LASSO, LinearWorkingRegression,
                         LOGIT_L1, LOGIT_L2, OLS, RIDGE, WorkingRegression,
                         fit_lasso, fit_logistic, fit_ols, fit_ridge)

LINEAR_SPARSE = "LINEAR_SPARSE"
NONLINEAR_F1 = "NONLINEAR_F1"
LOGISTIC_LINEAR = "LOGISTIC_LINEAR"

MMSE_EXACT = "MMSE_EXACT"
MMSE_MC = "MMSE_MC"
MACM = "MACM"
COSUFFICIENT = "COSUFFICIENT"

MODEL_AR1 = "AR1"
MODEL_COPULA_AR1 = "COPULA_AR1"

FIT_MU_STAR = "MU_STAR"
FIT_MU_STAR_CORRUPTED = "MU_STAR_CORRUPTED"

MISSPEC_NONE = "NONE"
MISSPEC_INSAMPLE = "INSAMPLE_GAUSSIAN_FIT"


def derive_seed(*keys: int) -> int:
    """A deterministic 63-bit seed from a tuple of integer keys."""
    ss = np.random.SeedSequence(entropy=[int(k) for k in keys])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# mu* construction


_G_FUNCTIONS: list[tuple[str, Callable[[np.ndarray], np.ndarray]]] = [
    ("sin_pi", lambda x: np.sin(np.pi * x)),
    ("cos_pi", lambda x: np.cos(np.pi * x)),
    ("sin_half_pi", lambda x: np.sin(np.pi * x / 2.0)),
    ("cos_pi_pos", lambda x: np.cos(np.pi * x) * (x > 0)),
    ("x_sin_pi", lambda x: x * np.sin(np.pi * x)),
    ("identity", lambda x: x),
    ("abs", lambda x: np.abs(x)),
    ("square", lambda x: x ** 2),
    ("cube", lambda x: x ** 3),
    ("expm1", lambda x: np.exp(x) - 1.0),
]
_G_BY_TAG = dict(_G_FUNCTIONS)


@dataclass(frozen=True)
class MuStarSpec:
    """Recipe for the true regression function mu*.

    amplitude is divided by sqrt(n) when the function is realized, so
    the signal strength stays in the CLT regime as n grows.
    """

    kind: str = LINEAR_SPARSE
    sparsity: int = 30
    amplitude: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (LINEAR_SPARSE, NONLINEAR_F1, LOGISTIC_LINEAR):
            raise ValidationError(f"unknown mu* kind {self.kind!r}")
        if self.sparsity < 1:
            raise ValidationError("sparsity must be >= 1")


@dataclass(frozen=True)
class RealizedMuStar:
    """A concrete mu*: either a sparse coefficient vector (linear and
    logistic kinds) or the nonlinear main-effect/interaction structure."""

    kind: str
    p: int
    scale: float
    coef: np.ndarray | None = None              # length p, already scaled
    s1: tuple[int, ...] = ()                    # 0-based variable indices
    s2: tuple[tuple[int, int], ...] = ()
    s3: tuple[tuple[int, int, int], ...] = ()
    g_tags: dict = field(default_factory=dict)  # 0-based index -> tag

    def values(self, w: np.ndarray) -> np.ndarray:
        """mu* evaluated on full covariate rows, shape (n, p)."""
        if self.coef is not None:
            return w @ self.coef
        g = {j: _G_BY_TAG[self.g_tags[j]](w[:, j])
             for j in self.g_tags}
        out = sum(g[j] for j in self.s1)
        out = out + sum(g[j] * g[l] for j, l in self.s2)
        out = out + sum(g[j] * g[l] * g[m] for j, l, m in self.s3)
        return self.scale * out

    @property
    def support(self) -> np.ndarray:
        """0-based indices of variables that enter mu*."""
        if self.coef is not None:
            return np.flatnonzero(self.coef)
        return np.array(sorted(self.g_tags), dtype=int)


def _weighted_pick(rng: np.random.Generator, s_star: np.ndarray,
                   s_wl: set[int], count: int, wl_weight: float) -> list[int]:
    """Pick `count` distinct variables from s_star, favoring the ones
    still on the waiting list; relative weights follow the generator's
    recipe and are normalized into a distribution before sampling."""
    size = len(s_star)
    other_weight = (size - len(s_wl)) / size
    weights = np.array([wl_weight * len(s_wl) / size if j in s_wl
                        else other_weight for j in s_star])
    weights = weights / weights.sum()
    picked = rng.choice(s_star, size=count, replace=False, p=weights)
    return [int(j) for j in picked]


def build_mu_star(spec: MuStarSpec, n: int, p: int) -> RealizedMuStar:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(spec.seed)))
    scale = spec.amplitude / math.sqrt(n)
    if spec.kind in (LINEAR_SPARSE, LOGISTIC_LINEAR):
        if spec.sparsity > p:
            raise ValidationError("sparsity cannot exceed p")
        support = rng.choice(p, size=spec.sparsity, replace=False)
        signs = rng.choice([-1.0, 1.0], size=spec.sparsity)
        coef = np.zeros(p)
        coef[support] = signs * scale
        return RealizedMuStar(spec.kind, p, scale, coef=coef)

    # Nonlinear: 30 variables, 15 main effects, 5 forced pairs, then
    # weighted pair/triple sampling until the waiting list is exhausted.
    if spec.sparsity != 30:
        raise ValidationError("the nonlinear mu* generator is defined for "
                              "sparsity 30")
    if p < 30:
        raise ValidationError("nonlinear mu* needs p >= 30")
    s_star = rng.choice(p, size=30, replace=False)
    s_wl = set(int(j) for j in s_star)
    s1 = [int(j) for j in rng.choice(s_star, size=15, replace=False)]
    s_wl -= set(s1)
    paired = rng.choice(np.array(s1), size=10, replace=False)
    s2 = [(int(paired[2 * i]), int(paired[2 * i + 1])) for i in range(5)]
    while len(s_wl) > 5:
        pair = _weighted_pick(rng, s_star, s_wl, 2, 2.0)
        s2.append((pair[0], pair[1]))
        s_wl -= set(pair)
    s3 = []
    while s_wl:
        triple = _weighted_pick(rng, s_star, s_wl, 3, 1.5)
        s3.append((triple[0], triple[1], triple[2]))
        s_wl -= set(triple)
    tags = {int(j): _G_FUNCTIONS[rng.integers(len(_G_FUNCTIONS))][0]
            for j in s_star}
    return RealizedMuStar(NONLINEAR_F1, p, scale, s1=tuple(s1),
                          s2=tuple(s2), s3=tuple(s3), g_tags=tags)


# ---------------------------------------------------------------------------
# Oracles


def ar1_conditional_variances(p: int, rho: float) -> np.ndarray:
    """Var(W_j | W_-j) for each coordinate of the stationary AR(1)
    vector, from the precision-matrix diagonal."""
    precision = np.linalg.inv(ar1_covariance(p, rho))
    return 1.0 / np.diag(precision)


def mmse_oracle_linear(coef: np.ndarray, rho: float) -> np.ndarray:
    """I_j = |beta_j| sqrt(Var(W_j | W_-j)) for a linear conditional
    mean over AR(1) covariates."""
    return np.abs(coef) * np.sqrt(ar1_conditional_variances(len(coef), rho))


def mmse_oracle_nested_mc(mu_star: RealizedMuStar, model: CovariateModel,
                          outer: int, inner: int, seed: int,
                          focal_0based: int) -> tuple[float, float]:
    """Brute-force I_j = sqrt(E[Var(mu*(W) | W_-j)]) by nested Monte
    Carlo: outer joint draws, inner conditional draws of W_j, and the
    unbiased (inner - 1)-denominator conditional-variance estimate.
    Returns (value, standard error of the squared-gap estimate)."""
    _, z = model.sample_joint(outer, seed)
    copies = model.sample_null_copies(z, inner, derive_seed(seed, 1)).copies
    j = focal_0based
    w = np.empty((inner, outer, mu_star.p))
    w[:, :, :] = np.concatenate(
        [z[:, :j], np.zeros((outer, 1)), z[:, j:]], axis=1)[None, :, :]
    w[:, :, j] = copies[:, :, 0]
    vals = mu_star.values(w.reshape(inner * outer, mu_star.p))
    vals = vals.reshape(inner, outer)
    cond_var = vals.var(axis=0, ddof=1)
    gap_sq = float(cond_var.mean())
    se = float(cond_var.std(ddof=1) / math.sqrt(outer))
    return math.sqrt(max(gap_sq, 0.0)), se


def _assemble_rows(x: np.ndarray, z: np.ndarray, focal_0based: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(len(z), -1)
    return np.concatenate([z[:, :focal_0based], x, z[:, focal_0based:]], axis=1)


def macm_oracle_values(mu_star: RealizedMuStar, rho: float, n_draws: int,
                       seed: int, se_target: float = 0.002) -> np.ndarray:
    """MACM-gap oracle per variable for the logistic-linear model over
    AR(1) covariates: E[Y | W] = tanh(mu*(W) / 2), nulls are exactly 0,
    and draw counts are doubled until the Monte Carlo SE meets the
    target."""
    if mu_star.coef is None:
        raise ValidationError("the MACM oracle expects a coefficient mu*")
    out = np.zeros(mu_star.p)
    for j in mu_star.support:
        model = Ar1Model(mu_star.p, rho, int(j) + 1)

        def cond_mean_y(x, z, _j=int(j)):
            w = _assemble_rows(x, z, _j)
            return np.tanh(mu_star.values(w) / 2.0)

        draws = n_draws
        while True:
            value, se = macm_gap_oracle(model, cond_mean_y, draws,
                                        derive_seed(seed, int(j), draws))
            if se < se_target or draws >= 64 * n_draws:
                break
            draws *= 2
        out[j] = value
    return out


# ---------------------------------------------------------------------------
# Experiment specification


@dataclass(frozen=True)
class MethodSpec:
    """One inference method to run per focal variable."""

    name: str
    big_k: int = 500          # MMSE_MC null copies
    m_copies: int | None = None
    k_copies: int = 100       # MACM indicator copies
    n2: int = 100             # co-sufficient batch size
    mc_k: int = 0             # co-sufficient within-batch copies (0 = exact)
    center_y: bool = True

    def __post_init__(self) -> None:
        if self.name not in (MMSE_EXACT, MMSE_MC, MACM, COSUFFICIENT):
            raise ValidationError(f"unknown method {self.name!r}")

    @property
    def label(self) -> str:
        if self.name == MMSE_MC:
            return f"MMSE_MC_K{self.big_k}"
        if self.name == COSUFFICIENT:
            return f"COSUFFICIENT_N2_{self.n2}"
        return self.name


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one synthetic coverage/half-width study."""

    n: int
    p: int
    mu_star: MuStarSpec
    methods: tuple[MethodSpec, ...]
    model_kind: str = MODEL_AR1
    rho: float = 0.3
    fitter: str = LASSO
    cv: CvConfig = CvConfig()
    split_proportion: float = 0.5
    replicates: int = 64
    base_seed: int = 0
    alpha: float = 0.05
    variables: tuple[int, ...] | None = None    # 1-based; None = all
    misspecification: str = MISSPEC_NONE
    misspec_m_rows: int = 0
    misspec_ridge: float = 1e-3
    corruption_tau: float = 0.0                 # for MU_STAR_CORRUPTED
    oracle_draws: int = 100_000
    oracle_seed: int = 987

    def __post_init__(self) -> None:
        if self.n < 4 or self.p < 1:
            raise ValidationError("need n >= 4 and p >= 1")
        if self.model_kind not in (MODEL_AR1, MODEL_COPULA_AR1):
            raise ValidationError(f"unknown model kind {self.model_kind!r}")
        if not self.methods:
            raise ValidationError("at least one method is required")
        if isinstance(self.methods, list):
            object.__setattr__(self, "methods", tuple(self.methods))
        if self.fitter not in (LASSO, RIDGE, OLS, LOGIT_L1, LOGIT_L2,
                               FIT_MU_STAR, FIT_MU_STAR_CORRUPTED):
            raise ValidationError(f"unknown fitter {self.fitter!r}")
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")
        if self.misspecification not in (MISSPEC_NONE, MISSPEC_INSAMPLE):
            raise ValidationError(
                f"unknown misspecification mode {self.misspecification!r}")
        if self.variables is not None:
            object.__setattr__(self, "variables",
                               tuple(int(v) for v in self.variables))
            if any(v < 1 or v > self.p for v in self.variables):
                raise ValidationError("variables must be 1-based in [1, p]")

    @property
    def variable_list(self) -> tuple[int, ...]:
        return self.variables if self.variables is not None \
            else tuple(range(1, self.p + 1))

    def to_json(self) -> str:
        d = asdict(self)
        d["mu_star"] = asdict(self.mu_star)
        d["methods"] = [asdict(m) for m in self.methods]
        d["cv"] = asdict(self.cv)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        d = json.loads(text)
        d["mu_star"] = MuStarSpec(**d["mu_star"])
        d["methods"] = tuple(MethodSpec(**m) for m in d["methods"])
        cv = d.get("cv")
        if cv is not None:
            if cv.get("lambda_grid") is not None:
                cv["lambda_grid"] = tuple(cv["lambda_grid"])
            d["cv"] = CvConfig(**cv)
        else:
            d.pop("cv", None)
        if d.get("variables") is not None:
            d["variables"] = tuple(d["variables"])
        return cls(**d)


def _full_covariate_sampler(spec: ExperimentSpec):
    """Returns a function (n, seed) -> full W matrix (n, p)."""
    base = Ar1Model(spec.p, spec.rho, 1)
    if spec.model_kind == MODEL_AR1:
        def sample(n, seed):
            x, z = base.sample_joint(n, seed)
            return np.concatenate([x, z], axis=1)
    else:
        copula = CopulaModel(base)

        def sample(n, seed):
            x, z = copula.sample_joint(n, seed)
            return np.concatenate([x, z], axis=1)
    return sample


def focal_model(spec: ExperimentSpec, variable: int) -> CovariateModel:
    """Conditional model of W_variable given the rest (1-based)."""
    latent = Ar1Model(spec.p, spec.rho, variable)
    if spec.model_kind == MODEL_COPULA_AR1:
        return CopulaModel(latent)
    return latent


def gaussian_family_model(spec: ExperimentSpec, variable: int) -> GaussianLinearModel:
    """The focal conditional law expressed in the linear-Gaussian family
    (used by the co-sufficient method, which needs sigma2 and the family
    but not the slope parameters)."""
    if spec.model_kind != MODEL_AR1:
        raise ValidationError("co-sufficient inference needs Gaussian covariates")
    latent = Ar1Model(spec.p, spec.rho, variable)
    gamma = np.concatenate([[0.0], latent._cond_map[0]])
    return GaussianLinearModel(gamma, float(latent._cond_cov[0, 0]),
                               np.zeros(spec.p - 1), np.eye(spec.p - 1))


def generate_replicate(spec: ExperimentSpec, replicate_index: int
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Covariates W (n, p) and responses y for one replicate."""
    mu_star = build_mu_star(spec.mu_star, spec.n, spec.p)
    w = _full_covariate_sampler(spec)(
        spec.n, derive_seed(spec.base_seed, replicate_index, 1))
    signal = mu_star.values(w)
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=[spec.base_seed, replicate_index, 2]))
    if spec.mu_star.kind == LOGISTIC_LINEAR:
        prob = 1.0 / (1.0 + np.exp(-signal))
        y = np.where(rng.random(spec.n) < prob, 1.0, -1.0)
    else:
        y = signal + rng.standard_normal(spec.n)
    return w, y


def oracle_values(spec: ExperimentSpec) -> np.ndarray:
    """Per-variable importance oracle (same for every replicate)."""
    mu_star = build_mu_star(spec.mu_star, spec.n, spec.p)
    if spec.mu_star.kind == LINEAR_SPARSE:
        if spec.model_kind != MODEL_AR1:
            raise ValidationError("closed-form linear oracle needs AR(1)")
        return mmse_oracle_linear(mu_star.coef, spec.rho)
    if spec.mu_star.kind == LOGISTIC_LINEAR:
        return macm_oracle_values(mu_star, spec.rho, spec.oracle_draws,
                                  spec.oracle_seed)
    out = np.zeros(spec.p)
    for j0 in mu_star.support:
        model = focal_model(spec, int(j0) + 1)
        outer = max(spec.oracle_draws // 100, 100)
        value, _ = mmse_oracle_nested_mc(mu_star, model, outer, 400,
                                         derive_seed(spec.oracle_seed, int(j0)),
                                         int(j0))
        out[j0] = value
    return out


def _fit_working_regression(spec: ExperimentSpec, fit_ds: Dataset,
                            replicate_index: int) -> LinearWorkingRegression:
    """Fits (or fabricates) a full-p coefficient working regression."""
    mu_star = build_mu_star(spec.mu_star, spec.n, spec.p)
    fit_seed = derive_seed(spec.base_seed, replicate_index, 3)
    if spec.fitter in (FIT_MU_STAR, FIT_MU_STAR_CORRUPTED):
        if mu_star.coef is None:
            raise ValidationError("coefficient fitters need a linear mu*")
        coef = mu_star.coef.copy()
        if spec.fitter == FIT_MU_STAR_CORRUPTED:
            noise_rng = np.random.default_rng(np.random.SeedSequence(
                entropy=[spec.base_seed, replicate_index, 4]))
            coef = coef + spec.corruption_tau * noise_rng.standard_normal(spec.p)
        link = "binary_mean" if spec.mu_star.kind == LOGISTIC_LINEAR else "identity"
        return LinearWorkingRegression(CUSTOM, 0.0, coef, np.empty(0), link=link)
    if spec.fitter == LASSO:
        return fit_lasso(fit_ds, spec.cv, fit_seed)
    if spec.fitter == RIDGE:
        return fit_ridge(fit_ds, spec.cv, fit_seed)
    if spec.fitter == OLS:
        return fit_ols(fit_ds)
    penalty = "L1" if spec.fitter == LOGIT_L1 else "L2"
    return fit_logistic(fit_ds, penalty, spec.cv, fit_seed)


def _focal_view(full_fit: LinearWorkingRegression, j0: int
                ) -> LinearWorkingRegression:
    """Re-expresses a full-p coefficient fit with variable j0 (0-based)
    as the focal x and the remaining columns as z."""
    coef = full_fit.x_coef
    return LinearWorkingRegression(
        full_fit.kind, full_fit.intercept, coef[j0:j0 + 1],
        np.delete(coef, j0), link=full_fit.link)


def _insample_gaussian_fit(w: np.ndarray, j0: int, m: int,
                           ridge: float) -> GaussianLinearModel:
    """Refits the conditional law of W_j on the other columns from m
    in-sample rows by ridge-regularized Gaussian regression."""
    p = w.shape[1]
    if m < p + 2:
        raise SizeError(f"in-sample fit needs m >= p + 2 = {p + 2} rows")
    rows = w[:m]
    x = rows[:, j0]
    z = np.delete(rows, j0, axis=1)
    design = np.hstack([np.ones((m, 1)), z])
    penalty = ridge * np.eye(p)
    penalty[0, 0] = 0.0
    gamma = np.linalg.solve(design.T @ design / m + penalty,
                            design.T @ x / m)
    resid = x - design @ gamma
    sigma2 = max(float(resid @ resid) / max(m - p, 1), 1e-12)
    return GaussianLinearModel(gamma, sigma2, np.zeros(p - 1), np.eye(p - 1))


_ZERO_SHORTCUT_FITTERS = (LASSO, LOGIT_L1)


def _run_replicate(spec: ExperimentSpec, replicate_index: int) -> list[dict]:
    w, y = generate_replicate(spec, replicate_index)
    full = Dataset(y, w, np.empty((spec.n, 0)))
    parts = split(full, spec.split_proportion,
                  derive_seed(spec.base_seed, replicate_index, 5))
    full_fit = _fit_working_regression(spec, parts.fit_part, replicate_index)
    infer_w = parts.infer_part.x
    infer_y = parts.infer_part.y
    rows: list[dict] = []
    for variable in spec.variable_list:
        j0 = variable - 1
        mu_j = _focal_view(full_fit, j0)
        infer_ds = Dataset(infer_y, infer_w[:, j0:j0 + 1],
                           np.delete(infer_w, j0, axis=1))
        for mi, method in enumerate(spec.methods):
            estimand = MACM_GAP if method.name == MACM else MMSE_GAP
            seed = derive_seed(spec.base_seed, replicate_index, 6, j0, mi)
            if (spec.fitter in _ZERO_SHORTCUT_FITTERS
                    and full_fit.x_coef[j0] == 0.0):
                rep = LcbReport(0.0, 0.0, 0.0, infer_ds.n, estimand,
                                degenerate=True, seed=seed)
            else:
                rep = _infer_one(spec, method, infer_ds, mu_j, variable,
                                 seed, w)
            rows.append({"replicate": replicate_index, "variable": variable,
                         "method": method.label, "lcb": rep.lcb,
                         "point": rep.point, "se": rep.se,
                         "degenerate": int(rep.degenerate)})
    return rows


def _infer_one(spec: ExperimentSpec, method: MethodSpec, infer_ds: Dataset,
               mu_j: WorkingRegression, variable: int, seed: int,
               full_w: np.ndarray) -> LcbReport:
    if spec.misspecification == MISSPEC_INSAMPLE:
        model: CovariateModel = _insample_gaussian_fit(
            full_w, variable - 1, spec.misspec_m_rows or spec.n,
            spec.misspec_ridge)
    else:
        model = focal_model(spec, variable)
    if method.name == MMSE_EXACT:
        cfg = FloodgateConfig(spec.alpha, big_k=0, center_y=method.center_y,
                              seed=seed)
        return floodgate_lcb(infer_ds, mu_j, model, cfg)
    if method.name == MMSE_MC:
        cfg = FloodgateConfig(spec.alpha, big_k=method.big_k,
                              center_y=method.center_y, seed=seed)
        return floodgate_lcb(infer_ds, mu_j, model, cfg)
    if method.name == MACM:
        cfg = MacmConfig(spec.alpha, m_copies=method.m_copies,
                         k_copies=method.k_copies, seed=seed)
        return macm_lcb(infer_ds, mu_j, model, cfg)
    if spec.misspecification != MISSPEC_INSAMPLE:
        model = gaussian_family_model(spec, variable)
    return cosufficient_lcb(infer_ds, mu_j, model, method.n2, spec.alpha,
                            mc_k=method.mc_k, seed=seed)


@dataclass(frozen=True)
class ExperimentResult:
    """Per-(replicate, variable, method) detail plus aggregates."""

    spec: ExperimentSpec
    detail: tuple[dict, ...]
    oracle: np.ndarray

    def summary(self) -> list[dict]:
        rows = []
        for method in sorted({d["method"] for d in self.detail}):
            for variable in spec_vars(self.spec):
                sub = [d for d in self.detail
                       if d["method"] == method and d["variable"] == variable]
                if not sub:
                    continue
                oracle = float(self.oracle[variable - 1])
                covered = np.array([d["lcb"] <= oracle + 1e-12 for d in sub])
                hw = np.array([oracle - d["lcb"] for d in sub])
                r = len(sub)
                cov = float(covered.mean())
                rows.append({
                    "method": method, "variable": variable, "oracle": oracle,
                    "replicates": r, "coverage": cov,
                    "coverage_se": math.sqrt(max(cov * (1 - cov), 0.0) / r),
                    "mean_half_width": float(hw.mean()),
                    "half_width_se": float(hw.std(ddof=1) / math.sqrt(r))
                    if r > 1 else 0.0,
                    "degenerate_rate": float(np.mean(
                        [d["degenerate"] for d in sub]))})
        return rows

    def write_csvs(self, detail_path, summary_path) -> None:
        detail_cols = ["replicate", "variable", "method", "lcb", "point",
                       "se", "degenerate", "oracle", "covered", "half_width"]
        with open(detail_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(detail_cols)
            for d in self.detail:
                oracle = float(self.oracle[d["variable"] - 1])
                writer.writerow([
                    d["replicate"], d["variable"], d["method"],
                    format(d["lcb"], ".12g"), format(d["point"], ".12g"),
                    format(d["se"], ".12g"), d["degenerate"],
                    format(oracle, ".12g"),
                    int(d["lcb"] <= oracle + 1e-12),
                    format(oracle - d["lcb"], ".12g")])
        summary_cols = ["method", "variable", "oracle", "replicates",
                        "coverage", "coverage_se", "mean_half_width",
                        "half_width_se", "degenerate_rate"]
        with open(summary_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(summary_cols)
            for row in self.summary():
                writer.writerow([
                    row["method"], row["variable"],
                    format(row["oracle"], ".12g"), row["replicates"],
                    format(row["coverage"], ".12g"),
                    format(row["coverage_se"], ".12g"),
                    format(row["mean_half_width"], ".12g"),
                    format(row["half_width_se"], ".12g"),
                    format(row["degenerate_rate"], ".12g")])


def spec_vars(spec: ExperimentSpec) -> tuple[int, ...]:
    return spec.variable_list


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Runs every replicate and aggregates; deterministic given
    spec.base_seed, independent of the thread count."""
    oracle = oracle_values(spec)
    if threads > 1:
        from multiprocessing import get_context
        with get_context("spawn").Pool(threads) as pool:
            chunks = pool.starmap(_run_replicate,
                                  [(spec, r) for r in range(spec.replicates)])
    else:
        chunks = [_run_replicate(spec, r) for r in range(spec.replicates)]
    detail = tuple(row for chunk in chunks for row in chunk)
    return ExperimentResult(spec, detail, oracle)
