"""Conditional laws of X given Z.

Each model can simulate full covariate rows, draw null copies of the
focal block from X | Z, and (where the law is Gaussian) report
closed-form conditional moments of X given Z.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .core import normal_cdf, normal_quantile
from .errors import (ShapeError, UnsupportedClosedFormError, ValidationError)

_PHI = np.vectorize(normal_cdf, otypes=[float])


def _rng(seed: int) -> np.random.Generator:
    # Philox is counter based, so a full vectorized draw from a fresh
    # generator is reproducible independent of thread count.
    return np.random.Generator(np.random.Philox(key=np.uint64(seed & (2**64 - 1))))


def _normal_quantile_vec(p: np.ndarray) -> np.ndarray:
    flat = np.asarray(p, dtype=float).ravel()
    out = np.array([-normal_quantile(v) for v in flat])
    return out.reshape(np.shape(p))


@dataclass(frozen=True)
class NullCopies:
    """K resampled versions of the focal covariates, shape (K, n, d_x)."""

    copies: np.ndarray

    @property
    def big_k(self) -> int:
        return self.copies.shape[0]


class CovariateModel(ABC):
    """A joint covariate law split into a focal block X and the rest Z."""

    @property
    @abstractmethod
    def d_x(self) -> int: ...

    @property
    @abstractmethod
    def d_z(self) -> int: ...

    @abstractmethod
    def sample_joint(self, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw n i.i.d. rows; returns (x, z) with shapes (n,d_x), (n,d_z)."""

    @abstractmethod
    def sample_null_copies(self, z: np.ndarray, big_k: int, seed: int) -> NullCopies:
        """Draw big_k conditionally independent copies of X given each z row."""

    def conditional_x_moments(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-row conditional mean (n, d_x) and the conditional covariance
        (d_x, d_x) of X given Z, when the law is Gaussian."""
        raise UnsupportedClosedFormError(
            f"{type(self).__name__} has no closed-form conditional moments")

    @abstractmethod
    def to_config(self) -> dict: ...

    def to_json(self) -> str:
        cfg = {"model": type(self).__name__, **self.to_config()}
        return json.dumps(cfg, indent=2)

    def _check_z(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None] if self.d_z == 1 else z[None, :]
        if z.shape[1] != self.d_z:
            raise ShapeError(f"z has {z.shape[1]} columns, model expects {self.d_z}")
        return z


@dataclass(frozen=True)
class GaussianLinearModel(CovariateModel):
    """X | Z ~ N((1, Z) gamma, sigma2) with Z ~ N(z_mean, z_cov)."""

    gamma: np.ndarray
    sigma2: float
    z_mean: np.ndarray
    z_cov: np.ndarray

    def __post_init__(self) -> None:
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        z_mean = np.atleast_1d(np.asarray(self.z_mean, dtype=float))
        z_cov = np.atleast_2d(np.asarray(self.z_cov, dtype=float))
        if self.sigma2 <= 0:
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")
        d_z = len(z_mean)
        if gamma.shape != (d_z + 1,):
            raise ShapeError(f"gamma must have length d_z+1={d_z + 1}")
        if z_cov.shape != (d_z, d_z):
            raise ShapeError("z_cov must be square of side d_z")
        if not np.allclose(z_cov, z_cov.T):
            raise ValidationError("z_cov must be symmetric")
        if d_z and np.linalg.eigvalsh(z_cov).min() <= 0:
            raise ValidationError("z_cov must be positive definite")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "z_mean", z_mean)
        object.__setattr__(self, "z_cov", z_cov)

    @property
    def d_x(self) -> int:
        return 1

    @property
    def d_z(self) -> int:
        return len(self.z_mean)

    def conditional_mean(self, z: np.ndarray) -> np.ndarray:
        z = self._check_z(z)
        return self.gamma[0] + z @ self.gamma[1:]

    def sample_joint(self, n, seed):
        if n < 1:
            raise ValidationError("n must be >= 1")
        rng = _rng(seed)
        if self.d_z:
            chol = np.linalg.cholesky(self.z_cov)
            z = self.z_mean + rng.standard_normal((n, self.d_z)) @ chol.T
        else:
            z = np.empty((n, 0))
        x = self.conditional_mean(z) + math.sqrt(self.sigma2) * rng.standard_normal(n)
        return x[:, None], z

    def sample_null_copies(self, z, big_k, seed):
        if big_k < 1:
            raise ValidationError("big_k must be >= 1")
        z = self._check_z(z)
        mean = self.conditional_mean(z)
        draws = _rng(seed).standard_normal((big_k, len(z)))
        return NullCopies((mean + math.sqrt(self.sigma2) * draws)[:, :, None])

    def conditional_x_moments(self, z):
        z = self._check_z(z)
        return self.conditional_mean(z)[:, None], np.array([[self.sigma2]])

    def to_config(self):
        return {"gamma": self.gamma.tolist(), "sigma2": float(self.sigma2),
                "z_mean": self.z_mean.tolist(), "z_cov": self.z_cov.tolist()}


def _as_focal_tuple(focal_index) -> tuple[int, ...]:
    if isinstance(focal_index, (int, np.integer)):
        return (int(focal_index),)
    return tuple(int(j) for j in focal_index)


class _StationaryGaussianVector(CovariateModel):
    """Shared machinery for zero-mean Gaussian covariate vectors with a
    known full covariance: generic conditional law of the focal block
    given the rest via covariance partitioning.

    Focal indices are 1-based, matching the x1..xp column naming.
    """

    def __init__(self, cov: np.ndarray, focal_index) -> None:
        self._cov = np.asarray(cov, dtype=float)
        p = self._cov.shape[0]
        focal = _as_focal_tuple(focal_index)
        if not focal or len(set(focal)) != len(focal):
            raise ValidationError("focal_index must be distinct indices")
        if any(j < 1 or j > p for j in focal):
            raise ValidationError(f"focal indices must lie in [1, {p}]")
        self._p = p
        self._focal0 = np.array(sorted(j - 1 for j in focal))
        self._rest0 = np.array([j for j in range(p) if j not in set(self._focal0)])
        s, r = self._focal0, self._rest0
        if len(r):
            solve = np.linalg.solve(self._cov[np.ix_(r, r)], self._cov[np.ix_(r, s)])
            self._cond_map = solve.T                       # (d_x, d_z)
            self._cond_cov = (self._cov[np.ix_(s, s)]
                              - self._cov[np.ix_(s, r)] @ solve)
        else:
            self._cond_map = np.empty((len(s), 0))
            self._cond_cov = self._cov[np.ix_(s, s)]
        self._cond_cov = 0.5 * (self._cond_cov + self._cond_cov.T)
        self._cond_chol = np.linalg.cholesky(self._cond_cov)

    @property
    def d_x(self) -> int:
        return len(self._focal0)

    @property
    def d_z(self) -> int:
        return len(self._rest0)

    def _sample_latent(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _split(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return w[:, self._focal0], w[:, self._rest0]

    def latent_conditional(self, z_latent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Conditional mean rows and covariance of the focal latent block."""
        return z_latent @ self._cond_map.T, self._cond_cov

    def sample_joint(self, n, seed):
        if n < 1:
            raise ValidationError("n must be >= 1")
        return self._split(self._sample_latent(n, _rng(seed)))

    def sample_null_copies(self, z, big_k, seed):
        if big_k < 1:
            raise ValidationError("big_k must be >= 1")
        z = self._check_z(z)
        mean, _ = self.latent_conditional(z)
        draws = _rng(seed).standard_normal((big_k, len(z), self.d_x))
        return NullCopies(mean[None, :, :] + draws @ self._cond_chol.T)

    def conditional_x_moments(self, z):
        z = self._check_z(z)
        mean, cov = self.latent_conditional(z)
        return mean, cov


def ar1_covariance(dim: int, rho: float) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


class Ar1Model(_StationaryGaussianVector):
    """Stationary Gaussian AR(1) vector with unit marginal variances.

    W_1 ~ N(0,1) and W_{j+1} = rho W_j + sqrt(1-rho^2) eps_{j+1}; the
    focal block X is the column(s) at focal_index (1-based) and Z is the
    remaining columns in order.
    """

    def __init__(self, dim: int, rho: float, focal_index) -> None:
        if dim < 1:
            raise ValidationError("dim must be >= 1")
        if not -1.0 < rho < 1.0:
            raise ValidationError(f"rho must lie in (-1,1), got {rho}")
        self.dim = int(dim)
        self.rho = float(rho)
        self.focal_index = _as_focal_tuple(focal_index)
        super().__init__(ar1_covariance(dim, rho), self.focal_index)

    def _sample_latent(self, n, rng):
        w = np.empty((n, self.dim))
        w[:, 0] = rng.standard_normal(n)
        scale = math.sqrt(1.0 - self.rho ** 2)
        for j in range(1, self.dim):
            w[:, j] = self.rho * w[:, j - 1] + scale * rng.standard_normal(n)
        return w

    def to_config(self):
        return {"dim": self.dim, "rho": self.rho,
                "focal_index": list(self.focal_index)}


class CopulaModel(CovariateModel):
    """Gaussian-copula covariates: W_j = 2 Phi(L_j) - 1 for a latent
    AR(1) vector L, giving Uniform[-1,1] marginals."""

    def __init__(self, latent: Ar1Model) -> None:
        self.latent = latent

    @property
    def d_x(self) -> int:
        return self.latent.d_x

    @property
    def d_z(self) -> int:
        return self.latent.d_z

    @staticmethod
    def _to_uniform(latent_vals: np.ndarray) -> np.ndarray:
        return 2.0 * _PHI(latent_vals) - 1.0

    @staticmethod
    def _to_latent(uniform_vals: np.ndarray) -> np.ndarray:
        u = np.clip((np.asarray(uniform_vals) + 1.0) / 2.0, 1e-15, 1 - 1e-15)
        return _normal_quantile_vec(u)

    def sample_joint(self, n, seed):
        x_lat, z_lat = self.latent.sample_joint(n, seed)
        return self._to_uniform(x_lat), self._to_uniform(z_lat)

    def sample_null_copies(self, z, big_k, seed):
        z = self._check_z(z)
        lat_copies = self.latent.sample_null_copies(self._to_latent(z), big_k, seed)
        return NullCopies(self._to_uniform(lat_copies.copies))

    def to_config(self):
        return {"latent": self.latent.to_config()}


class DiscreteMarkovChain(CovariateModel):
    """A length-p Markov chain over states {0..K-1}; the focal variable
    must be interior (both neighbors exist) so its conditional law given
    the rest depends only on the two adjacent states."""

    def __init__(self, initial, transitions, focal_index: int) -> None:
        initial = np.asarray(initial, dtype=float)
        transitions = [np.asarray(t, dtype=float) for t in transitions]
        k = len(initial)
        if k < 2:
            raise ValidationError("need at least 2 states")
        if abs(initial.sum() - 1.0) > 1e-12 or initial.min() < 0:
            raise ValidationError("initial must be a probability vector")
        for t in transitions:
            if t.shape != (k, k):
                raise ShapeError("each transition matrix must be K x K")
            if t.min() < 0 or np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-12:
                raise ValidationError("transition rows must sum to 1")
        p = len(transitions) + 1
        if not 1 < focal_index < p:
            raise ValidationError(
                f"focal_index must be interior (1 < j < {p}), got {focal_index}")
        self.initial = initial
        self.transitions = transitions
        self.focal_index = int(focal_index)
        self.num_states = k
        self.chain_length = p

    @property
    def d_x(self) -> int:
        return 1

    @property
    def d_z(self) -> int:
        return self.chain_length - 1

    def sample_path(self, n: int, seed: int) -> np.ndarray:
        rng = _rng(seed)
        path = np.empty((n, self.chain_length), dtype=np.int64)
        path[:, 0] = rng.choice(self.num_states, size=n, p=self.initial)
        u = rng.random((n, self.chain_length - 1))
        for j, t in enumerate(self.transitions):
            cum = np.cumsum(t, axis=1)
            path[:, j + 1] = (u[:, j][:, None] > cum[path[:, j]]).sum(axis=1)
        return path

    def sample_joint(self, n, seed):
        if n < 1:
            raise ValidationError("n must be >= 1")
        path = self.sample_path(n, seed)
        f = self.focal_index - 1
        x = path[:, f].astype(float)[:, None]
        z = np.delete(path, f, axis=1).astype(float)
        return x, z

    def neighbor_states(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Left and right neighbor states of the focal variable, read off
        the z block (the full path with the focal column removed)."""
        z = self._check_z(z)
        f = self.focal_index - 1
        return z[:, f - 1].astype(np.int64), z[:, f].astype(np.int64)

    def conditional_pmf(self, z: np.ndarray) -> np.ndarray:
        """Rows of q(. | k1, k2) proportional to A[k1, k] * B[k, k2]."""
        k1, k2 = self.neighbor_states(z)
        a = self.transitions[self.focal_index - 2]   # into the focal variable
        b = self.transitions[self.focal_index - 1]   # out of the focal variable
        w = a[k1, :] * b[:, k2].T
        totals = w.sum(axis=1, keepdims=True)
        if np.any(totals <= 0):
            raise ValidationError("a neighbor pair has zero path probability")
        return w / totals

    def sample_null_copies(self, z, big_k, seed):
        if big_k < 1:
            raise ValidationError("big_k must be >= 1")
        pmf = self.conditional_pmf(z)
        cum = np.cumsum(pmf, axis=1)
        u = _rng(seed).random((big_k, len(pmf)))
        copies = (u[:, :, None] > cum[None, :, :]).sum(axis=2)
        return NullCopies(copies.astype(float)[:, :, None])

    def to_config(self):
        return {"initial": self.initial.tolist(),
                "transitions": [t.tolist() for t in self.transitions],
                "focal_index": self.focal_index}


_MODEL_TYPES = {
    "GaussianLinearModel": lambda c: GaussianLinearModel(
        np.array(c["gamma"]), c["sigma2"], np.array(c["z_mean"]),
        np.array(c["z_cov"])),
    "Ar1Model": lambda c: Ar1Model(c["dim"], c["rho"], c["focal_index"]),
    "CopulaModel": lambda c: CopulaModel(
        Ar1Model(c["latent"]["dim"], c["latent"]["rho"],
                 c["latent"]["focal_index"])),
    "DiscreteMarkovChain": lambda c: DiscreteMarkovChain(
        c["initial"], c["transitions"], c["focal_index"]),
}


def cond_moments_linear(model: CovariateModel, mu, z: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Per-row conditional mean and variance of mu(X, Z) given Z when mu
    is partially linear in x (mu(x, z) = a.x + g(z)) and the model has
    Gaussian conditional moments.

    Raises UnsupportedClosedFormError otherwise; callers fall back to
    Monte Carlo null copies.
    """
    a = getattr(mu, "linear_focal_coef", None)
    if a is None:
        raise UnsupportedClosedFormError(
            "mu does not declare a linear focal coefficient")
    cond_mean_x, cond_cov = model.conditional_x_moments(z)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape[0] != cond_mean_x.shape[1]:
        raise ShapeError("focal coefficient length does not match d_x")
    mean = mu.predict(cond_mean_x, model._check_z(z))
    variance = float(a @ cond_cov @ a)
    return np.asarray(mean, dtype=float), np.full(len(cond_mean_x), variance)


def model_from_json(text: str) -> CovariateModel:
    cfg = json.loads(text)
    kind = cfg.pop("model", None)
    if kind not in _MODEL_TYPES:
        raise ValidationError(f"unknown covariate model type: {kind!r}")
    return _MODEL_TYPES[kind](cfg)
