"""Global sensitivity analysis: Morris screening and Sobol indices.

Models are opaque callables; these routines only build designs and reduce
model outputs.  Outputs may be 1-D (one QoI) or 2-D with one column per
QoI (or per time step); every column is analysed independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

__all__ = [
    "MorrisDesign",
    "MorrisResult",
    "SaltelliDesign",
    "SobolResult",
    "DesignError",
    "DegenerateOutputError",
    "morris_design",
    "morris_indices",
    "saltelli_design",
    "sobol_indices",
    "time_integrated_sobol",
    "evaluate",
    "minmax_scale",
]


class DesignError(ValueError):
    """Invalid Morris grid settings."""


class DegenerateOutputError(ValueError):
    """The model output has zero variance; Sobol indices are undefined."""


def evaluate(model, points):
    """Call ``model`` on every row of ``points`` and stack the results."""
    out = [np.atleast_1d(np.asarray(model(x), dtype=float)) for x in points]
    out = np.stack(out)
    return out[:, 0] if out.shape[1] == 1 else out


# ---------------------------------------------------------------- Morris


@dataclass(frozen=True)
class MorrisDesign:
    """r one-at-a-time trajectories on the iota-level grid.

    ``unit_points`` has shape (r, p+1, p) in the unit hypercube;
    ``points`` holds the same points in physical units.  ``changed[t, j]``
    is the coordinate that moves between rows j and j+1 of trajectory t.
    """

    unit_points: np.ndarray
    points: np.ndarray
    changed: np.ndarray
    levels: int
    delta: float
    seed: int | None
    lower: np.ndarray
    upper: np.ndarray

    @property
    def r(self):
        return self.unit_points.shape[0]

    @property
    def p(self):
        return self.unit_points.shape[2]

    @property
    def n_runs(self):
        return self.r * (self.p + 1)

    def flat_points(self):
        """All design points, trajectory by trajectory, shape (r (p+1), p)."""
        return self.points.reshape(-1, self.p)


def morris_design(space, r, levels=6, seed=0):
    """Random Morris trajectories with step delta = levels / (2 (levels - 1)).

    Each trajectory starts at a random base point on the grid
    {0, 1/(levels-1), ..., 1} restricted so that base + delta <= 1, and
    moves one randomly ordered coordinate at a time by +-delta.
    """
    if levels < 2 or levels % 2:
        raise DesignError(f"number of levels must be even and >= 2, got {levels}")
    if r < 1:
        raise DesignError("r must be >= 1")
    p = space.dim
    delta = levels / (2.0 * (levels - 1))
    n_base = levels // 2  # base levels 0 .. levels/2 - 1 keep base + delta on the grid
    rng = np.random.default_rng(seed)
    B = np.tril(np.ones((p + 1, p)), -1)
    J = np.ones((p + 1, p))
    traj = np.empty((r, p + 1, p))
    changed = np.empty((r, p), dtype=int)
    for t in range(r):
        base = rng.integers(0, n_base, size=p) / (levels - 1)
        D = np.diag(rng.choice([-1.0, 1.0], size=p))
        perm = rng.permutation(p)
        Bstar = base[None, :] + 0.5 * delta * ((2.0 * B - J) @ D + J)
        # column order of the permutation decides which factor moves at step j
        M = np.empty_like(Bstar)
        M[:, perm] = Bstar
        traj[t] = M
        changed[t] = perm
    traj = np.round(traj * (levels - 1)) / (levels - 1)
    return MorrisDesign(traj, space.from_unit(traj), changed, levels, delta, seed, space.lower, space.upper)


@dataclass(frozen=True)
class MorrisResult:
    """Morris statistics, shape (p,) or (p, n_outputs).

    ``sd`` uses the unbiased 1/(r-1) variance; it is NaN when r = 1
    (``sd_defined`` is then False).
    """

    mu: np.ndarray
    mu_star: np.ndarray
    sd: np.ndarray
    elementary_effects: np.ndarray  # (r, p[, n_outputs])
    sd_defined: bool = True


def morris_indices(design, outputs, units="unit"):
    """Elementary effects and the statistics m, m*, sd.

    Parameters
    ----------
    outputs : array, shape (r (p+1),) or (r (p+1), n_outputs)
        Model values at ``design.flat_points()``.
    units : {"unit", "physical"}
        Difference quotients in unit-hypercube or physical coordinates.
    """
    y = np.asarray(outputs, dtype=float)
    squeeze = y.ndim == 1
    y = y.reshape(design.r, design.p + 1, -1)
    pts = design.unit_points if units == "unit" else design.points
    if units not in ("unit", "physical"):
        raise ValueError(f"unknown units {units!r}")
    dy = np.diff(y, axis=1)  # (r, p, q)
    dx = np.diff(pts, axis=1)  # (r, p, p)
    ee = np.empty((design.r, design.p, y.shape[2]))
    for t in range(design.r):
        for j, i in enumerate(design.changed[t]):
            ee[t, i] = dy[t, j] / dx[t, j, i]
    mu = ee.mean(axis=0)
    mu_star = np.abs(ee).mean(axis=0)
    if design.r > 1:
        sd = np.sqrt(np.sum((ee - mu) ** 2, axis=0) / (design.r - 1))
        defined = True
    else:
        sd = np.full_like(mu, np.nan)
        defined = False
    if squeeze:
        return MorrisResult(mu[:, 0], mu_star[:, 0], sd[:, 0], ee[:, :, 0], defined)
    return MorrisResult(mu, mu_star, sd, ee, defined)


def minmax_scale(values, axis=0):
    """Rescale to [0, 1] along ``axis`` (constant slices map to 0)."""
    v = np.asarray(values, dtype=float)
    lo = v.min(axis=axis, keepdims=True)
    span = v.max(axis=axis, keepdims=True) - lo
    return (v - lo) / np.where(span > 0.0, span, 1.0)


# ---------------------------------------------------------------- Sobol


@dataclass(frozen=True)
class SaltelliDesign:
    """Base matrices A, B (n x p) and the cross matrices A_B^(i)."""

    A: np.ndarray
    B: np.ndarray
    AB: np.ndarray  # (p, n, p)
    seed: int | None

    @property
    def n_samples(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.A.shape[1]

    @property
    def n_runs(self):
        return self.n_samples * (self.p + 2)

    def all_points(self):
        """Stack [A; B; A_B^(1); ...; A_B^(p)], shape (n (p+2), p)."""
        return np.vstack([self.A, self.B, *self.AB])


def saltelli_design(space, n_samples, seed=0):
    """Independent uniform matrices A, B and the p column-swapped copies."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    rng = np.random.default_rng(seed)
    p = space.dim
    A = space.from_unit(rng.random((n_samples, p)))
    B = space.from_unit(rng.random((n_samples, p)))
    AB = np.repeat(A[None], p, axis=0)
    for i in range(p):
        AB[i, :, i] = B[:, i]
    return SaltelliDesign(A, B, AB, seed)


@dataclass(frozen=True)
class SobolResult:
    """First-order and total indices, shape (p,) or (p, n_outputs).

    ``first_numerator`` and ``total_numerator`` are the variance
    estimates behind the indices; ``variance`` is the output variance.
    ``first_se``/``total_se`` are Monte Carlo standard errors.
    """

    first: np.ndarray
    total: np.ndarray
    first_se: np.ndarray
    total_se: np.ndarray
    first_numerator: np.ndarray
    total_numerator: np.ndarray
    variance: np.ndarray


def sobol_indices(design, outputs, allow_degenerate=False):
    """Jansen estimators of S_i and S_Ti.

    With f_A, f_B, f_ABi the outputs on A, B and A_B^(i), and V the
    variance of the pooled f_A, f_B values::

        V_Ti = mean((f_A - f_ABi)^2) / 2
        V_i  = V - mean((f_B - f_ABi)^2) / 2

    Zero-variance output columns raise :class:`DegenerateOutputError`
    unless ``allow_degenerate`` is set, in which case their indices are NaN.
    """
    y = np.asarray(outputs, dtype=float)
    squeeze = y.ndim == 1
    n, p = design.n_samples, design.p
    y = y.reshape(n * (p + 2), -1)
    fA, fB = y[:n], y[n : 2 * n]
    fAB = y[2 * n :].reshape(p, n, -1)
    V = np.var(np.vstack([fA, fB]), axis=0)
    ok = V > 0.0
    if not allow_degenerate and np.any(~ok):
        raise DegenerateOutputError("output variance is zero; Sobol indices are undefined")
    Vd = np.where(ok, V, np.nan)
    dT = 0.5 * (fA[None] - fAB) ** 2  # (p, n, q)
    d1 = 0.5 * (fB[None] - fAB) ** 2
    VT = dT.mean(axis=1)
    Vi = V - d1.mean(axis=1)
    ST = VT / Vd
    S = Vi / Vd
    seT = dT.std(axis=1, ddof=1) / np.sqrt(n) / Vd
    se1 = d1.std(axis=1, ddof=1) / np.sqrt(n) / Vd
    if squeeze:
        return SobolResult(S[:, 0], ST[:, 0], se1[:, 0], seT[:, 0], Vi[:, 0], VT[:, 0], V[0])
    return SobolResult(S, ST, se1, seT, Vi, VT, V)


def time_integrated_sobol(times, result):
    """Cumulative-in-time indices from per-step Sobol results.

    ``result`` holds per-step numerators of shape (p, N_t) and variances
    of shape (N_t,).  Entry n is

        int_{t^1}^{t^n} V_i dt / int_{t^1}^{t^n} Var(y) dt

    by the trapezoidal rule; entry 0 is the plain step-1 index.  Entries
    where the cumulative variance is still zero are NaN.

    Returns
    -------
    first, total : ndarray, shape (p, N_t)
    """
    times = np.asarray(times, dtype=float)
    V = np.atleast_1d(np.asarray(result.variance, dtype=float))
    Vi = np.asarray(result.first_numerator, dtype=float).reshape(-1, len(times))
    VT = np.asarray(result.total_numerator, dtype=float).reshape(-1, len(times))
    if len(times) != len(V):
        raise ValueError("one variance per time step is required")
    iV = cumulative_trapezoid(V, times, initial=0.0)
    iVi = cumulative_trapezoid(Vi, times, axis=1, initial=0.0)
    iVT = cumulative_trapezoid(VT, times, axis=1, initial=0.0)
    iV[0], iVi[:, 0], iVT[:, 0] = V[0], Vi[:, 0], VT[:, 0]
    ok = iV > 0.0
    den = np.where(ok, iV, 1.0)
    first = np.where(ok, iVi / den, np.nan)
    total = np.where(ok, iVT / den, np.nan)
    return first, total
