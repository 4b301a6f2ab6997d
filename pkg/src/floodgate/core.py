"""Domain types, dataset handling, and the confidence arithmetic shared by
every inference routine: the normal quantile, the delta-method standard
error for a ratio-of-means statistic, seeded data splitting, and moment
aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ShapeError, SizeError, ValidationError

# Relative threshold for the 0/0 = 0 convention: a mean conditional
# variance below RELATIVE_DEGENERACY_EPS * (scale of mu)^2 is treated as
# exactly zero.
RELATIVE_DEGENERACY_EPS = 1e-12

MMSE_GAP = "MMSE_GAP"
MMSE_GAP_SCALE_FREE = "MMSE_GAP_SCALE_FREE"
MACM_GAP = "MACM_GAP"


def normal_cdf(x: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


_NORMAL_PDF_CONST = 1.0 / math.sqrt(2.0 * math.pi)


def _normal_pdf(x: float) -> float:
    return _NORMAL_PDF_CONST * math.exp(-0.5 * x * x)


# Coefficients of Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _normal_sf(x: float) -> float:
    """Standard normal survival function P(Z > x), accurate in the far tail."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Upper-tail quantile: the z with P(Z > z) = p for standard normal Z.

    Rational-approximation inversion refined by one Newton step on the
    survival function; absolute error below 1e-9 for p in
    [1e-8, 1 - 1e-8] (outside that range the representation of p itself
    limits the attainable accuracy). The
    whole computation is phrased in terms of the tail probability p so
    no accuracy is lost to 1 - p cancellation for tiny p.
    """
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile probability must lie in (0,1), got {p}")
    if p < _P_LOW:
        r = math.sqrt(-2.0 * math.log(p))
        x = -((((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5])
              / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0))
    elif p <= 1.0 - _P_LOW:
        r = 0.5 - p
        t = r * r
        x = ((((((_A[0] * t + _A[1]) * t + _A[2]) * t + _A[3]) * t + _A[4]) * t + _A[5]) * r
             / (((((_B[0] * t + _B[1]) * t + _B[2]) * t + _B[3]) * t + _B[4]) * t + 1.0))
    else:
        q = 1.0 - p
        r = math.sqrt(-2.0 * math.log(q))
        x = ((((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5])
             / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0))
    # Two Newton refinements against the high-accuracy erfc-based tail.
    for _ in range(2):
        x += (_normal_sf(x) - p) / _normal_pdf(x)
    return x


@dataclass(frozen=True)
class ConfidenceLevel:
    """One-sided miscoverage level alpha in (0, 1)."""

    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0,1), got {self.alpha}")

    @property
    def z(self) -> float:
        return normal_quantile(self.alpha)


def as_confidence_level(alpha) -> ConfidenceLevel:
    if isinstance(alpha, ConfidenceLevel):
        return alpha
    return ConfidenceLevel(float(alpha))


@dataclass(frozen=True)
class Dataset:
    """n samples of (response, focal covariates, conditioning covariates).

    y has shape (n,), x has shape (n, d_x) with d_x >= 1 (d_x > 1 means a
    group of focal covariates), z has shape (n, d_z) with d_z >= 0.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if z.ndim == 1:
            z = z[:, None]
        if z.size == 0:
            z = z.reshape(len(y), 0)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        n = len(y)
        if n < 1:
            raise SizeError("dataset must contain at least one row")
        if x.shape[0] != n or z.shape[0] != n:
            raise ShapeError(
                f"row counts differ: y has {n}, x has {x.shape[0]}, z has {z.shape[0]}")
        if x.shape[1] < 1:
            raise ShapeError("x must have at least one column")
        for name, arr in (("y", y), ("x", x), ("z", z)):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def d_z(self) -> int:
        return self.z.shape[1]

    def take(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.y[rows], self.x[rows], self.z[rows])

    def to_csv(self, path) -> None:
        header = (["y"]
                  + [f"x{j + 1}" for j in range(self.d_x)]
                  + [f"z{j + 1}" for j in range(self.d_z)])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = [self.y[i], *self.x[i], *self.z[i]]
                writer.writerow([format(v, ".12g") for v in row])

    @classmethod
    def from_csv(cls, path, x_cols: Sequence[str] | None = None) -> "Dataset":
        """Read a dataset CSV with a header row.

        By default the header must name columns y, x1..x{d_x}, z1..z{d_z}.
        When x_cols is given, all non-y columns are covariates and the
        named ones become the focal x block (the rest become z).
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty file") from None
            rows = [row for row in reader if row]
        if "y" not in header:
            raise ValidationError(f"{path}: no 'y' column in header")
        try:
            data = np.array([[float(v) for v in row] for row in rows], dtype=float)
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric cell ({exc})") from None
        if data.size == 0:
            raise SizeError(f"{path}: no data rows")
        if data.shape[1] != len(header):
            raise ShapeError(f"{path}: row width does not match header")
        cols = {name: data[:, j] for j, name in enumerate(header)}
        y = cols["y"]
        if x_cols is None:
            x_names = sorted((h for h in header if h.startswith("x")),
                             key=lambda h: int(h[1:]))
            z_names = sorted((h for h in header if h.startswith("z")),
                             key=lambda h: int(h[1:]))
            if not x_names:
                raise ValidationError(f"{path}: no x columns found")
        else:
            missing = [c for c in x_cols if c not in header]
            if missing:
                raise ValidationError(f"{path}: x-cols not in header: {missing}")
            x_names = list(x_cols)
            z_names = [h for h in header if h != "y" and h not in x_names]
        x = np.column_stack([cols[c] for c in x_names])
        z = (np.column_stack([cols[c] for c in z_names])
             if z_names else np.empty((len(y), 0)))
        return cls(y, x, z)


@dataclass(frozen=True)
class SplitDataset:
    """A disjoint partition of a dataset into a fitting part and an
    inference part; the partition depends on the seed only."""

    fit_part: Dataset
    infer_part: Dataset
    proportion: float


def split(data: Dataset, proportion: float, seed: int) -> SplitDataset:
    """Seeded random split; the fit part gets floor(proportion * n) rows."""
    if not 0.0 < proportion < 1.0:
        raise ValidationError(f"split proportion must lie in (0,1), got {proportion}")
    n = data.n
    n_fit = int(math.floor(proportion * n))
    if n_fit < 1 or n - n_fit < 1:
        raise SizeError(
            f"split of n={n} at proportion={proportion} leaves an empty part")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    perm = rng.permutation(n)
    return SplitDataset(data.take(np.sort(perm[:n_fit])),
                        data.take(np.sort(perm[n_fit:])),
                        proportion)


class MomentPair(NamedTuple):
    """One per-row (or per-batch) numerator/denominator sample."""

    r: float
    v: float


@dataclass(frozen=True)
class LcbReport:
    """A lower confidence bound with its ingredients."""

    lcb: float
    point: float
    se: float
    n_eff: int
    estimand: str
    degenerate: bool = False
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lcb < 0:
            raise ValidationError("lcb must be nonnegative")
        if self.degenerate and self.lcb != 0:
            raise ValidationError("degenerate reports must carry lcb = 0")

    def replace(self, **kwargs) -> "LcbReport":
        return replace(self, **kwargs)


REPORT_CSV_COLUMNS = ["variable", "estimand", "lcb", "point", "se", "n_eff",
                      "degenerate", "seed"]


def reports_to_csv(path, reports: Iterable[tuple[str, LcbReport]],
                   extra_columns: Sequence[str] = ()) -> None:
    """Write one CSV row per (variable/group, estimand)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_COLUMNS + list(extra_columns))
        for variable, rep in reports:
            row = [variable, rep.estimand,
                   format(rep.lcb, ".12g"), format(rep.point, ".12g"),
                   format(rep.se, ".12g"), rep.n_eff,
                   int(rep.degenerate), "" if rep.seed is None else rep.seed]
            row += [format(rep.diagnostics.get(c, float("nan")), ".12g")
                    for c in extra_columns]
            writer.writerow(row)


def sample_mean_cov(pairs) -> tuple[float, float, np.ndarray]:
    """Sample mean of (r, v) pairs and their 2x2 sample covariance.

    The covariance uses the unbiased n-1 denominator; a single pair gets
    a zero covariance matrix.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError("expected a sequence of (r, v) pairs")
    n = arr.shape[0]
    if n == 0:
        raise SizeError("sample_mean_cov needs at least one pair")
    r_bar = float(arr[:, 0].mean())
    v_bar = float(arr[:, 1].mean())
    if n == 1:
        return r_bar, v_bar, np.zeros((2, 2))
    return r_bar, v_bar, np.cov(arr.T, ddof=1)


def delta_method_se(r_bar: float, v_bar: float, sigma_hat: np.ndarray) -> float:
    """Standard error of r_bar / sqrt(v_bar) by the delta method.

    s^2 = (1/v)[ (r/2v)^2 S22 + S11 - (r/v) S12 ]; a floating-point
    negative s^2 is clamped at zero.
    """
    if v_bar <= 0:
        raise ValidationError("delta_method_se requires v_bar > 0")
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if sigma_hat.shape != (2, 2):
        raise ShapeError("sigma_hat must be 2x2")
    ratio = r_bar / v_bar
    s2 = (1.0 / v_bar) * ((ratio / 2.0) ** 2 * sigma_hat[1, 1]
                          + sigma_hat[0, 0]
                          - ratio * sigma_hat[0, 1])
    return math.sqrt(max(s2, 0.0))


def degeneracy_threshold(mu_scale_sq: float) -> float:
    """Variance threshold implementing the 0/0 = 0 convention.

    The scale is the mean squared size of the (conditionally centered)
    working-regression values, so the threshold respects the additive
    and multiplicative invariances of the procedure.
    """
    return RELATIVE_DEGENERACY_EPS * max(mu_scale_sq, 0.0)


def ratio_lcb(r: np.ndarray, v: np.ndarray, alpha, n_eff: int | None = None,
              estimand: str = MMSE_GAP, mu_scale_sq: float | None = None,
              seed: int | None = None) -> LcbReport:
    """Aggregate (r, v) samples into the delta-method LCB for E r / sqrt(E v).

    Shared by the exact, Monte Carlo, weighted, and co-sufficient paths.
    """
    level = as_confidence_level(alpha)
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if r.shape != v.shape or r.ndim != 1:
        raise ShapeError("r and v must be equal-length vectors")
    if len(r) < 2:
        raise SizeError("need at least two samples for an LCB")
    n = n_eff if n_eff is not None else len(r)
    r_bar, v_bar, sigma = sample_mean_cov(np.column_stack([r, v]))
    if mu_scale_sq is None:
        mu_scale_sq = float(np.mean(v))
    if v_bar <= degeneracy_threshold(mu_scale_sq) or v_bar <= 0.0:
        return LcbReport(0.0, 0.0, 0.0, n, estimand, degenerate=True, seed=seed)
    se = delta_method_se(r_bar, v_bar, sigma)
    point = r_bar / math.sqrt(v_bar)
    lcb = max(point - level.z * se / math.sqrt(n), 0.0)
    return LcbReport(lcb, point, se, n, estimand, degenerate=False, seed=seed)
