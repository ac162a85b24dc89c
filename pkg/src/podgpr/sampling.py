"""Parameter spaces, Latin hypercube designs and feature scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ParameterSpace",
    "Scaler",
    "DegenerateFeatureError",
    "lhs_sample",
    "fit_scaler",
    "beam_parameter_space",
]


class DegenerateFeatureError(ValueError):
    """A feature has zero range or zero standard deviation."""

    def __init__(self, message, feature):
        super().__init__(message)
        self.feature = feature


@dataclass(frozen=True)
class ParameterSpace:
    """Axis-aligned box of admissible parameters."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not (len(self.names) == lo.size == hi.size):
            raise ValueError("names, lower and upper must have the same length")
        if np.any(~(lo < hi)):
            i = int(np.flatnonzero(~(lo < hi))[0])
            raise ValueError(f"empty range for {self.names[i]!r}: [{lo[i]}, {hi[i]}]")

    @property
    def dim(self):
        return len(self.names)

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower)

    def from_unit(self, z):
        return self.lower + np.asarray(z, dtype=float) * (self.upper - self.lower)

    def contains(self, x):
        """Boolean mask: which rows of ``x`` lie in the closed box."""
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)

    def to_dict(self):
        return {"names": list(self.names), "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), np.asarray(d["lower"]), np.asarray(d["upper"]))


def beam_parameter_space():
    """Ranges of the nine beam inputs (exponents, K and C in kPa, load slope in kPa)."""
    return ParameterSpace(
        names=("b_f", "b_s", "b_n", "b_fs", "b_fn", "b_sn", "K", "C", "p_tilde"),
        lower=np.array([4.0, 1.0, 1.0, 2.0, 2.0, 1.0, 25.0, 1.0, 0.002]),
        upper=np.array([12.0, 3.0, 3.0, 6.0, 6.0, 3.0, 75.0, 3.0, 0.006]),
    )


def lhs_sample(space, n_samples, seed):
    """Plain Latin hypercube design.

    Each column gets an independent random permutation of the strata and a
    uniform offset inside its stratum.

    Returns
    -------
    ndarray, shape (n_samples, space.dim)
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    p = space.dim
    u = np.empty((n_samples, p))
    for j in range(p):
        strata = rng.permutation(n_samples)
        u[:, j] = (strata + rng.random(n_samples)) / n_samples
    return space.from_unit(u)


@dataclass(frozen=True)
class Scaler:
    """Per-feature affine transform ``(x - shift) / scale``.

    ``kind`` is ``"min-max"`` (shift = min, scale = max - min) or
    ``"standardize"`` (shift = mean, scale = population std).
    """

    kind: str
    shift: np.ndarray
    scale: np.ndarray

    def apply(self, data):
        return (np.asarray(data, dtype=float) - self.shift) / self.scale

    def invert(self, scaled):
        return np.asarray(scaled, dtype=float) * self.scale + self.shift

    def to_dict(self):
        return {"kind": self.kind, "shift": np.atleast_1d(self.shift).tolist(), "scale": np.atleast_1d(self.scale).tolist()}

    @classmethod
    def from_dict(cls, d, scalar=False):
        shift = np.asarray(d["shift"], dtype=float)
        scale = np.asarray(d["scale"], dtype=float)
        if scalar:
            shift, scale = shift.reshape(()), scale.reshape(())
        return cls(d["kind"], shift, scale)

    @classmethod
    def identity(cls, n_features=None):
        if n_features is None:
            return cls("identity", np.asarray(0.0), np.asarray(1.0))
        return cls("identity", np.zeros(n_features), np.ones(n_features))


def fit_scaler(kind, training_data):
    """Learn scaling statistics from training data.

    A 1-D array is a single feature; a 2-D array has samples in rows and
    features in columns.
    """
    x = np.asarray(training_data, dtype=float)
    axis = 0
    if kind == "min-max":
        shift = x.min(axis=axis)
        scale = x.max(axis=axis) - shift
    elif kind == "standardize":
        shift = x.mean(axis=axis)
        scale = x.std(axis=axis)
    else:
        raise ValueError(f"unknown scaler kind {kind!r}")
    bad = np.atleast_1d(~(scale > 0.0))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateFeatureError(f"feature {i} is constant in the training data", feature=i)
    return Scaler(kind, shift, scale)
