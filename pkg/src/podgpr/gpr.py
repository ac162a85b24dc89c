"""Single-output Gaussian process regression with exact inference.

Hyperparameters are optimized in log space by maximizing the log marginal
likelihood

    log p(y | X, theta) = -1/2 (y - m)^T Ky^{-1} (y - m) - 1/2 log det Ky - n/2 log 2 pi,

with Ky = K(X, X) + sigma_y^2 I, using analytic gradients and several
seeded starting points.

Arrays follow the scikit-learn convention: inputs have shape
``(n_samples, n_features)``.
"""

from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .sampling import DegenerateFeatureError, Scaler, fit_scaler

__all__ = [
    "KernelSpec",
    "TrainedGp",
    "GpConfig",
    "IllConditionedKernelError",
    "TrainingFailureError",
    "kernel_eval",
    "kernel_matrix",
    "log_marginal_likelihood",
    "train_gp",
    "load_gp",
    "count_kernel_evaluations",
]

log = logging.getLogger(__name__)

LOG_BOUND = 8.0
NOISE_FLOOR = 1e-10
JITTER_START = 1e-10
JITTER_MAX = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


class IllConditionedKernelError(np.linalg.LinAlgError):
    """Cholesky failed even with the largest admissible jitter."""


class TrainingFailureError(RuntimeError):
    """Every optimizer start failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


@dataclass(frozen=True)
class KernelSpec:
    """Covariance function and its hyperparameters.

    kind : {"rbf", "ard", "poly"}
        ``rbf``: sigma_f^2 exp(-|x - x'|^2 / (2 l^2)).
        ``ard``: one length scale per input dimension.
        ``poly``: sigma_f^2 (x . x' + offset)^degree.
    """

    kind: str
    sigma_f: float = 1.0
    lengthscales: tuple = (1.0,)
    offset: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if self.kind not in ("rbf", "ard", "poly"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.sigma_f > 0.0:
            raise ValueError("sigma_f must be positive")
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in np.atleast_1d(self.lengthscales)))
        if self.kind in ("rbf", "ard") and any(not v > 0.0 for v in self.lengthscales):
            raise ValueError("length scales must be positive")
        if self.kind == "rbf" and len(self.lengthscales) != 1:
            raise ValueError("rbf takes a single length scale")
        if self.kind == "poly":
            if self.degree not in (1, 2, 3):
                raise ValueError("polynomial degree must be 1, 2 or 3")
            if self.offset < 0.0:
                raise ValueError("polynomial offset must be >= 0")

    # log-parameter vector <-> spec
    def theta(self):
        if self.kind == "poly":
            return np.log([self.sigma_f, max(self.offset, np.exp(-LOG_BOUND))])
        return np.log([self.sigma_f, *self.lengthscales])

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "poly":
            return KernelSpec("poly", float(np.exp(theta[0])), offset=float(np.exp(theta[1])), degree=self.degree)
        return KernelSpec(self.kind, float(np.exp(theta[0])), tuple(np.exp(theta[1:])), degree=self.degree)

    @staticmethod
    def n_theta(kind, dim):
        return 1 + dim if kind == "ard" else 2

    @classmethod
    def default(cls, kind, dim, degree=2):
        if kind == "ard":
            return cls("ard", 1.0, (1.0,) * dim, degree=degree)
        return cls(kind, 1.0, (1.0,), degree=degree)

    def to_dict(self):
        return {
            "kind": self.kind,
            "sigma_f": self.sigma_f,
            "lengthscales": list(self.lengthscales),
            "offset": self.offset,
            "degree": self.degree,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["sigma_f"], tuple(d["lengthscales"]), d["offset"], d["degree"])


class _EvalCounter:
    """Tally of scalar kernel evaluations, active inside
    :func:`count_kernel_evaluations`."""

    def __init__(self):
        self.count = 0
        self.active = False


_COUNTER = _EvalCounter()


@contextmanager
def count_kernel_evaluations():
    """Context manager yielding a counter of scalar kernel evaluations.

    Not thread-safe; meant for cost accounting in tests and reports.
    """
    _COUNTER.count = 0
    _COUNTER.active = True
    try:
        yield _COUNTER
    finally:
        _COUNTER.active = False


def _check_dim(spec, d):
    if spec.kind == "ard" and len(spec.lengthscales) != d:
        raise ValueError(f"ARD kernel has {len(spec.lengthscales)} length scales, inputs have {d} dims")


def kernel_matrix(spec, X1, X2, grad=False):
    """Covariance matrix between rows of ``X1`` and ``X2``.

    With ``grad=True`` also returns the derivatives with respect to the
    log-hyperparameters, stacked along axis 0.
    """
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != X2.shape[1]:
        raise ValueError("input dimension mismatch")
    _check_dim(spec, X1.shape[1])
    if _COUNTER.active:
        _COUNTER.count += X1.shape[0] * X2.shape[0]
    sf2 = spec.sigma_f**2
    if spec.kind == "poly":
        base = X1 @ X2.T + spec.offset
        K = sf2 * base**spec.degree
        if not grad:
            return K
        dK = np.empty((2,) + K.shape)
        dK[0] = 2.0 * K
        dK[1] = sf2 * spec.degree * base ** (spec.degree - 1) * spec.offset
        return K, dK
    ls = np.asarray(spec.lengthscales)
    if spec.kind == "rbf":
        ls = np.full(X1.shape[1], ls[0])
    A = X1 / ls
    B = X2 / ls
    sq = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    K = sf2 * np.exp(-0.5 * sq)
    if not grad:
        return K
    if spec.kind == "rbf":
        dK = np.empty((2,) + K.shape)
        dK[0] = 2.0 * K
        dK[1] = K * sq
        return K, dK
    d = X1.shape[1]
    dK = np.empty((1 + d,) + K.shape)
    dK[0] = 2.0 * K
    for j in range(d):
        diff = (X1[:, j][:, None] - X2[:, j][None, :]) / ls[j]
        dK[1 + j] = K * diff * diff
    return K, dK


def kernel_eval(spec, x, xp):
    """Covariance between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != xp.shape:
        raise ValueError("dimension mismatch")
    return float(kernel_matrix(spec, x[None, :], xp[None, :])[0, 0])


def _cholesky(Ky):
    """Lower Cholesky factor with escalating diagonal jitter; returns (L, jitter)."""
    try:
        return sla.cholesky(Ky, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(Ky)))
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1.0 + 1e-9):
        try:
            L = sla.cholesky(Ky + jitter * scale * np.eye(len(Ky)), lower=True, check_finite=False)
            return L, jitter * scale
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise IllConditionedKernelError("kernel matrix not positive definite after maximal jitter")


def _unpack(theta, kind, dim, degree, noise):
    theta = np.asarray(theta, dtype=float)
    nk = KernelSpec.n_theta(kind, dim)
    spec = KernelSpec.default(kind, dim, degree).with_theta(theta[:nk])
    if noise is None:
        sigma_y = float(np.exp(theta[nk]))
    else:
        sigma_y = float(noise)
    return spec, sigma_y


def log_marginal_likelihood(theta, X, y, kind="ard", mean=0.0, noise=None, degree=2):
    """Log marginal likelihood and its gradient w.r.t. ``theta``.

    Parameters
    ----------
    theta : array
        Log kernel hyperparameters, followed by log sigma_y when ``noise``
        is None (learned noise).
    noise : float or None
        Fixed noise standard deviation, or None to take it from ``theta``.

    Returns
    -------
    value : float
    grad : ndarray, same length as ``theta``
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.asarray(y, dtype=float).ravel() - mean
    n = len(r)
    spec, sigma_y = _unpack(theta, kind, X.shape[1], degree, noise)
    K, dK = kernel_matrix(spec, X, X, grad=True)
    Ky = K + sigma_y**2 * np.eye(n)
    L, _ = _cholesky(Ky)
    alpha = sla.cho_solve((L, True), r, check_finite=False)
    value = -0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    Kinv = sla.cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    grad = 0.5 * np.einsum("ij,kij->k", W, dK)
    if noise is None:
        grad = np.append(grad, 0.5 * np.trace(W) * 2.0 * sigma_y**2)
    return float(value), grad


@dataclass(frozen=True)
class GpConfig:
    """Training settings shared by every GP of a ROM."""

    kernel: str = "ard"
    degree: int = 2
    noise: float | None = None  # None: learned
    n_starts: int = 5
    scaling: str = "standardize"
    max_iter: int = 200

    def to_dict(self):
        return {
            "kernel": self.kernel,
            "degree": self.degree,
            "noise": self.noise,
            "n_starts": self.n_starts,
            "scaling": self.scaling,
            "max_iter": self.max_iter,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainedGp:
    """Posterior of a trained GP; inputs and outputs live in scaled units
    internally, :meth:`predict` works in physical units."""

    kernel: KernelSpec
    sigma_y: float
    X: np.ndarray
    alpha: np.ndarray
    prior_mean: float
    x_scaler: Scaler
    y_scaler: Scaler
    log_likelihood: float = float("nan")
    jitter: float = 0.0
    _L: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._L is None:
            K = kernel_matrix(self.kernel, self.X, self.X)
            Ky = K + (self.sigma_y**2 + self.jitter) * np.eye(len(self.X))
            self._L, extra = _cholesky(Ky)
            self.jitter += extra

    @property
    def n_train(self):
        return len(self.X)

    @property
    def dim(self):
        return self.X.shape[1]

    def predict_scaled(self, Xs):
        """Posterior mean and latent variance in scaled units."""
        Ks = kernel_matrix(self.kernel, self.X, Xs)
        mean = self.prior_mean + Ks.T @ self.alpha
        v = sla.solve_triangular(self._L, Ks, lower=True, check_finite=False)
        if self.kernel.kind == "poly":
            kss = np.einsum("ij,ij->i", Xs, Xs)
            kss = self.kernel.sigma_f**2 * (kss + self.kernel.offset) ** self.kernel.degree
        else:
            kss = np.full(len(Xs), self.kernel.sigma_f**2)
        var = np.maximum(kss - np.sum(v * v, axis=0), 0.0)
        return mean, var

    def predict(self, X_new):
        """Posterior mean and variance at the rows of ``X_new`` (physical units)."""
        X_new = np.asarray(X_new, dtype=float)
        if X_new.ndim == 1:
            X_new = X_new.reshape(-1, self.dim) if self.dim > 1 else X_new[:, None]
        if X_new.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} input dimensions, got {X_new.shape[1]}")
        mean, var = self.predict_scaled(self.x_scaler.apply(X_new))
        return self.y_scaler.invert(mean), var * np.asarray(self.y_scaler.scale) ** 2

    def save(self, path):
        """Write ``<path>.json`` plus ``<path>.X.npy`` and ``<path>.alpha.npy``."""
        path = Path(path)
        meta = {
            "kernel": self.kernel.to_dict(),
            "sigma_y": self.sigma_y,
            "prior_mean": self.prior_mean,
            "x_scaler": self.x_scaler.to_dict(),
            "y_scaler": self.y_scaler.to_dict(),
            "log_likelihood": self.log_likelihood,
            "jitter": self.jitter,
            "n_train": self.n_train,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True))
        np.save(path.with_suffix(".X.npy"), self.X)
        np.save(path.with_suffix(".alpha.npy"), self.alpha)


def load_gp(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    return TrainedGp(
        kernel=KernelSpec.from_dict(meta["kernel"]),
        sigma_y=meta["sigma_y"],
        X=np.load(path.with_suffix(".X.npy")),
        alpha=np.load(path.with_suffix(".alpha.npy")),
        prior_mean=meta["prior_mean"],
        x_scaler=Scaler.from_dict(meta["x_scaler"]),
        y_scaler=Scaler.from_dict(meta["y_scaler"], scalar=True),
        log_likelihood=meta["log_likelihood"],
        jitter=meta["jitter"],
    )


def _fit_y_scaler(kind, y):
    try:
        sc = fit_scaler(kind, y)
    except DegenerateFeatureError:
        # constant targets: centre only
        return Scaler(kind, np.asarray(float(y[0])), np.asarray(1.0))
    return Scaler(kind, np.asarray(float(sc.shift)), np.asarray(float(sc.scale)))


def _starting_points(n_theta, learned_noise, n_starts, rng):
    starts = [np.concatenate([np.zeros(n_theta), [np.log(1e-2)] if learned_noise else []])]
    for _ in range(n_starts - 1):
        th = rng.uniform(-2.0, 2.0, n_theta)
        if learned_noise:
            th = np.append(th, rng.uniform(np.log(1e-6), np.log(1e-1)))
        starts.append(th)
    return starts


def train_gp(X, y, config=None, seed=0, **overrides):
    """Fit scalers, optimize hyperparameters and cache the posterior.

    Parameters
    ----------
    X : array, shape (n, d)
    y : array, shape (n,)
    config : GpConfig, optional
    seed : int
        Seeds the random restarts.
    overrides
        Any :class:`GpConfig` field.
    """
    config = config or GpConfig()
    if overrides:
        config = GpConfig(**{**config.to_dict(), **overrides})
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if len(y) != n:
        raise ValueError("X and y have different lengths")
    # canonical row order makes the fit independent of how samples are listed
    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    X, y = X[order], y[order]
    learned = config.noise is None
    if learned and n < 2:
        raise ValueError("learning the noise needs at least two samples")

    if config.scaling == "none":
        x_scaler = Scaler.identity(d)
        y_scaler = Scaler.identity()
    else:
        x_scaler = fit_scaler(config.scaling, X)
        y_scaler = _fit_y_scaler(config.scaling, y)
    Xs = x_scaler.apply(X)
    ys = y_scaler.apply(y)
    prior_mean = float(np.mean(ys))
    if abs(prior_mean) < 1e-14:
        prior_mean = 0.0

    nk = KernelSpec.n_theta(config.kernel, d)
    bounds = [(-LOG_BOUND, LOG_BOUND)] * nk
    if learned:
        bounds.append((np.log(NOISE_FLOOR), LOG_BOUND))

    def objective(theta):
        try:
            v, g = log_marginal_likelihood(theta, Xs, ys, config.kernel, prior_mean, config.noise, config.degree)
        except np.linalg.LinAlgError:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(v):
            return 1e25, np.zeros_like(theta)
        return -v, -g

    rng = np.random.default_rng(seed)
    best = None
    diagnostics = []
    for th0 in _starting_points(nk, learned, config.n_starts, rng):
        try:
            res = minimize(
                objective,
                th0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": config.max_iter},
            )
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            diagnostics.append(repr(exc))
            continue
        diagnostics.append(f"start={np.round(th0, 3).tolist()} f={res.fun:.6g} status={res.status}")
        if res.fun >= 1e25:
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise TrainingFailureError("all optimizer starts failed", diagnostics)

    spec, sigma_y = _unpack(best.x, config.kernel, d, config.degree, config.noise)
    K = kernel_matrix(spec, Xs, Xs)
    L, jitter = _cholesky(K + sigma_y**2 * np.eye(n))
    alpha = sla.cho_solve((L, True), ys - prior_mean, check_finite=False)
    log.debug("GP trained: n=%d kernel=%s sigma_y=%.3g lml=%.6g", n, spec, sigma_y, -best.fun)
    return TrainedGp(
        kernel=spec,
        sigma_y=sigma_y,
        X=Xs,
        alpha=alpha,
        prior_mean=prior_mean,
        x_scaler=x_scaler,
        y_scaler=y_scaler,
        log_likelihood=-float(best.fun),
        jitter=jitter,
        _L=L,
    )
