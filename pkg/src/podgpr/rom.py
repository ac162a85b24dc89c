"""Non-intrusive POD-GPR reduced order models.

Two variants map a time/parameter pair to reduced coefficients q(t, mu):

* :class:`GlobalRom` trains one GP per coefficient on the joint input
  (t, mu) in R^{p+1}.
* :class:`TdRom` factors, for each coefficient, the N_t x N_s matrix
  Q_l[n, m] = q_l(t^n; mu_m) by a truncated SVD,
  Q_l ~ sum_k lambda_k psi_k(t) phi_k(mu), and regresses every time mode
  psi_k and parameter mode phi_k with its own GP.

The field is recovered as V q.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .gpr import GpConfig, TrainingFailureError, load_gp, train_gp
from .pod import CoefficientTable, ReducedBasis, energy_rank, fix_signs

__all__ = [
    "GlobalRom",
    "TdRom",
    "RomPrediction",
    "RomTrainingError",
    "train_global_rom",
    "train_td_rom",
    "predict_global",
    "predict_td",
    "error_metrics",
    "save_rom",
    "load_rom",
    "thin_steps",
]

log = logging.getLogger(__name__)

Z95 = 1.96


class RomTrainingError(RuntimeError):
    """A GP of the ROM failed to train.

    Attributes ``coefficient``, ``mode`` and ``factor`` locate the failing GP
    (``mode``/``factor`` are None for the global variant).
    """

    def __init__(self, message, coefficient, mode=None, factor=None):
        super().__init__(message)
        self.coefficient = coefficient
        self.mode = mode
        self.factor = factor


@dataclass
class RomPrediction:
    """Predicted reduced coefficients.

    ``mean`` and ``variance`` have shape (N, n_times) for a single
    parameter, or (n_params, N, n_times) for a batch.
    """

    mean: np.ndarray
    variance: np.ndarray
    times: np.ndarray
    extrapolated: np.ndarray | bool = False

    @property
    def std(self):
        return np.sqrt(self.variance)

    def band(self, z=Z95):
        """Lower and upper limits of the mean +- z std band (95% for z = 1.96)."""
        s = z * self.std
        return self.mean - s, self.mean + s

    def field(self, basis):
        """Reconstructed displacement V q (N_h x n_times, batched if needed)."""
        return np.einsum("hl,...lt->...ht", basis.V, self.mean)


def thin_steps(n_steps, stride):
    """0-based indices of steps stride, 2 stride, ... (1-based), i.e. t^{stride i}."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(stride - 1, n_steps, stride)


def _as_params(mu, dim):
    mu = np.asarray(mu, dtype=float)
    single = mu.ndim == 1
    mu = np.atleast_2d(mu)
    if mu.shape[1] != dim:
        raise ValueError(f"expected {dim} parameters, got {mu.shape[1]}")
    return mu, single


def _outside(box, pts):
    lo, hi = box
    return np.any((pts < lo - 1e-12 * np.abs(lo)) | (pts > hi + 1e-12 * np.abs(hi)), axis=-1)


def _check_layout(coeffs, times, params, basis):
    if coeffs.q.shape[0] != basis.N:
        raise ValueError(f"coefficient table has {coeffs.q.shape[0]} rows, basis has {basis.N}")
    if coeffs.n_steps != len(times):
        raise ValueError("coefficient table and time grid disagree on the number of steps")
    if coeffs.n_samples != len(params):
        raise ValueError("coefficient table and parameter set disagree on the number of samples")


# ---------------------------------------------------------------- global


@dataclass
class GlobalRom:
    """One GP per reduced coefficient over the joint (t, mu) input."""

    basis: ReducedBasis
    gps: list
    time_box: tuple
    param_box: tuple
    gp_config: GpConfig = field(default_factory=GpConfig)
    time_stride: int = 1
    variant: str = field(default="global", init=False)

    @property
    def N(self):
        return len(self.gps)

    @property
    def n_gps(self):
        return len(self.gps)

    @property
    def n_params(self):
        return len(self.param_box[0])

    def kernel_evaluations_per_query(self):
        """Scalar kernel evaluations needed for one (t, mu) query."""
        return sum(gp.n_train for gp in self.gps)

    def predict(self, times, mu):
        return predict_global(self, times, mu)


def global_design(times, params, steps=None):
    """Rows (t^n, mu_m), all steps of sample 0 first, then sample 1, ..."""
    times = np.asarray(times, dtype=float)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if steps is not None:
        times = times[steps]
    t_col = np.tile(times, len(params))
    p_cols = np.repeat(params, len(times), axis=0)
    return np.column_stack([t_col, p_cols])


def train_global_rom(basis, coeffs, times, params, gp_config=None, seed=0, time_stride=1):
    """Train the global POD-GPR model.

    Parameters
    ----------
    basis : ReducedBasis
    coeffs : CoefficientTable
        Sample-major coefficient table matching ``times`` x ``params``.
    times : array, shape (N_t,)
    params : array, shape (N_s, p)
    time_stride : int
        Keep only steps ``stride, 2 stride, ...`` in the training set.
    """
    gp_config = gp_config or GpConfig()
    params = np.atleast_2d(np.asarray(params, dtype=float))
    times = np.asarray(times, dtype=float)
    _check_layout(coeffs, times, params, basis)
    steps = thin_steps(len(times), time_stride)
    X = global_design(times, params, steps)
    cols = (np.arange(coeffs.n_samples)[:, None] * coeffs.n_steps + steps[None, :]).ravel()
    gps = []
    for ell in range(basis.N):
        y = coeffs.q[ell, cols]
        try:
            gp = train_gp(X, y, gp_config, seed=np.random.SeedSequence([seed, ell]))
        except (TrainingFailureError, np.linalg.LinAlgError) as exc:
            raise RomTrainingError(f"GP for coefficient {ell} failed: {exc}", ell) from exc
        gps.append(gp)
        log.info("global GP %d/%d trained (lml=%.4g)", ell + 1, basis.N, gp.log_likelihood)
    return GlobalRom(
        basis,
        gps,
        (times[steps].min(), times[steps].max()),
        (params.min(axis=0), params.max(axis=0)),
        gp_config,
        time_stride,
    )


def predict_global(rom, times, mu):
    """Coefficient means and variances at every (t, mu) pair.

    ``mu`` may be a single parameter vector or a batch of shape (m, p).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    mus, single = _as_params(mu, rom.n_params)
    X = global_design(times, mus)
    mean = np.empty((len(mus), rom.N, len(times)))
    var = np.empty_like(mean)
    for ell, gp in enumerate(rom.gps):
        m, v = gp.predict(X)
        mean[:, ell, :] = m.reshape(len(mus), len(times))
        var[:, ell, :] = v.reshape(len(mus), len(times))
    lo_t, hi_t = rom.time_box
    extra = _outside(rom.param_box, mus) | np.any((times < lo_t) | (times > hi_t))
    if single:
        return RomPrediction(mean[0], var[0], times, bool(extra[0]))
    return RomPrediction(mean, var, times, extra)


# ---------------------------------------------------------------- tensor decomposition


@dataclass
class TdCoefficient:
    """Separated representation of one reduced coefficient."""

    singular_values: np.ndarray  # retained lambda_k
    time_gps: list
    param_gps: list
    full_spectrum: np.ndarray

    @property
    def rank(self):
        return len(self.singular_values)


@dataclass
class TdRom:
    """Tensor-decomposition POD-GPR model."""

    basis: ReducedBasis
    coefficients: list
    eps_svd: float
    time_box: tuple
    param_box: tuple
    gp_config: GpConfig = field(default_factory=GpConfig)
    variant: str = field(default="td", init=False)

    @property
    def N(self):
        return len(self.coefficients)

    @property
    def ranks(self):
        return [c.rank for c in self.coefficients]

    @property
    def n_gps(self):
        return 2 * sum(self.ranks)

    @property
    def n_params(self):
        return len(self.param_box[0])

    def kernel_evaluations_per_query(self):
        """Scalar kernel evaluations for one (t, mu) query: sum_l N_ql (N_t + N_s)."""
        return sum(gp.n_train for c in self.coefficients for gp in (*c.time_gps, *c.param_gps))

    def predict(self, times, mu):
        return predict_td(self, times, mu)


def train_td_rom(basis, coeffs, times, params, eps_svd=1e-2, gp_config=None, seed=0):
    """Train the tensor-decomposition POD-GPR model.

    For each coefficient the N_t x N_s matrix Q_l is decomposed by a thin
    SVD, truncated with the same energy criterion as the POD, and each
    retained time/parameter mode is regressed by its own GP.
    """
    gp_config = gp_config or GpConfig()
    params = np.atleast_2d(np.asarray(params, dtype=float))
    times = np.asarray(times, dtype=float)
    _check_layout(coeffs, times, params, basis)
    Xt = times[:, None]
    # canonical sample order so the SVD, and hence every fit, ignores listing order
    order = np.lexsort(params.T[::-1])
    params = params[order]
    out = []
    for ell in range(basis.N):
        Q = coeffs.matrix(ell)[:, order]
        U, lam, Vt = np.linalg.svd(Q, full_matrices=False)
        if not np.any(lam > 0.0):
            out.append(TdCoefficient(np.zeros(0), [], [], lam))
            continue
        r = energy_rank(lam, eps_svd)
        U, signs = fix_signs(U[:, :r])
        Phi = Vt[:r].T * signs
        tgps, pgps = [], []
        for k in range(r):
            for factor, X, y, bucket in (("time", Xt, U[:, k], tgps), ("param", params, Phi[:, k], pgps)):
                ss = np.random.SeedSequence([seed, ell, k, 0 if factor == "time" else 1])
                try:
                    bucket.append(train_gp(X, y, gp_config, seed=ss))
                except (TrainingFailureError, np.linalg.LinAlgError) as exc:
                    raise RomTrainingError(
                        f"{factor} GP for coefficient {ell}, mode {k} failed: {exc}", ell, k, factor
                    ) from exc
        out.append(TdCoefficient(lam[:r].copy(), tgps, pgps, lam))
        log.info("TD coefficient %d/%d: rank %d", ell + 1, basis.N, r)
    return TdRom(
        basis,
        out,
        eps_svd,
        (times.min(), times.max()),
        (params.min(axis=0), params.max(axis=0)),
        gp_config,
    )


def predict_td(rom, times, mu):
    """q_l(t, mu) = sum_k lambda_k psi_k(t) phi_k(mu) with propagated variance.

    The variance is the first-order expression
    sum_k lambda_k^2 (psi_k^2 var(phi_k) + phi_k^2 var(psi_k)).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    mus, single = _as_params(mu, rom.n_params)
    tt = times[:, None]
    mean = np.zeros((len(mus), rom.N, len(times)))
    var = np.zeros_like(mean)
    for ell, c in enumerate(rom.coefficients):
        for lam, tg, pg in zip(c.singular_values, c.time_gps, c.param_gps):
            psi, vpsi = tg.predict(tt)
            phi, vphi = pg.predict(mus)
            mean[:, ell, :] += lam * phi[:, None] * psi[None, :]
            var[:, ell, :] += lam**2 * (psi[None, :] ** 2 * vphi[:, None] + phi[:, None] ** 2 * vpsi[None, :])
    lo_t, hi_t = rom.time_box
    extra = _outside(rom.param_box, mus) | np.any((times < lo_t) | (times > hi_t))
    if single:
        return RomPrediction(mean[0], var[0], times, bool(extra[0]))
    return RomPrediction(mean, var, times, extra)


# ---------------------------------------------------------------- metrics


def error_metrics(truth, q_pred, basis):
    """Accuracy metrics over a test set.

    Parameters
    ----------
    truth : sequence of arrays (N_h, N_t)
        FOM trajectories of the test samples.
    q_pred : sequence of arrays (N, N_t)
        Predicted coefficients for the same samples and steps.
    basis : ReducedBasis

    Returns
    -------
    dict with ``mse`` and ``rse`` (per coefficient), ``tae`` and ``tre``
    (per sample), their means over non-degenerate items, per-step error
    curves, and ``degenerate_rse`` / ``degenerate_tre`` masks.
    """
    U = [np.asarray(u, dtype=float) for u in truth]
    Qh = [np.asarray(q, dtype=float) for q in q_pred]
    if len(U) != len(Qh) or not U:
        raise ValueError("truth and predictions must be non-empty and aligned")
    q_true = np.stack([basis.V.T @ u for u in U])  # (M, N, N_t)
    q_hat = np.stack(Qh)
    if q_hat.shape != q_true.shape:
        raise ValueError(f"prediction shape {q_hat.shape} does not match {q_true.shape}")
    diff = q_true - q_hat
    mse = np.mean(diff**2, axis=(0, 2))
    dev = q_true - q_true.mean(axis=(0, 2), keepdims=True)
    den = np.sum(dev**2, axis=(0, 2))
    deg_rse = ~(den > 0.0)
    rse = np.where(deg_rse, np.nan, np.sum(diff**2, axis=(0, 2)) / np.where(deg_rse, 1.0, den))

    abs_err = np.stack([np.linalg.norm(u - basis.V @ q, axis=0) for u, q in zip(U, Qh)])  # (M, N_t)
    norms = np.stack([np.linalg.norm(u, axis=0) for u in U])
    deg_tre = np.any(~(norms > 0.0), axis=1)
    rel = abs_err / np.where(norms > 0.0, norms, 1.0)
    tae = abs_err.mean(axis=1)
    tre = np.where(deg_tre, np.nan, rel.mean(axis=1))
    return {
        "mse": mse,
        "rse": rse,
        "tae": tae,
        "tre": tre,
        "mean_tae": float(tae.mean()),
        "mean_tre": float(np.mean(tre[~deg_tre])) if np.any(~deg_tre) else float("nan"),
        "abs_error_per_step": abs_err,
        "rel_error_per_step": np.where(norms > 0.0, rel, np.nan),
        "degenerate_rse": deg_rse,
        "degenerate_tre": deg_tre,
    }


# ---------------------------------------------------------------- persistence


def _box_dict(box):
    return [np.atleast_1d(box[0]).tolist(), np.atleast_1d(box[1]).tolist()]


def save_rom(rom, directory, extra=None):
    """Write a ROM bundle: basis container, one file set per GP, manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    io.write_container(
        d / "basis.bin",
        rom.basis.V,
        meta={"singular_values": rom.basis.singular_values.tolist(), "tolerance": rom.basis.tolerance},
    )
    manifest = {
        "variant": rom.variant,
        "N": rom.N,
        "n_gps": rom.n_gps,
        "gp_config": rom.gp_config.to_dict(),
        "time_box": [float(rom.time_box[0]), float(rom.time_box[1])],
        "param_box": _box_dict(rom.param_box),
    }
    if rom.variant == "global":
        manifest["time_stride"] = rom.time_stride
        for ell, gp in enumerate(rom.gps):
            gp.save(d / f"gp_{ell:03d}")
    else:
        manifest["eps_svd"] = rom.eps_svd
        manifest["coefficients"] = []
        for ell, c in enumerate(rom.coefficients):
            manifest["coefficients"].append(
                {"singular_values": c.singular_values.tolist(), "full_spectrum": c.full_spectrum.tolist()}
            )
            for k in range(c.rank):
                c.time_gps[k].save(d / f"gp_{ell:03d}_{k:03d}_time")
                c.param_gps[k].save(d / f"gp_{ell:03d}_{k:03d}_param")
    if extra:
        manifest.update(extra)
    io.write_json(d / "manifest.json", manifest)
    return d


def load_rom(directory):
    d = Path(directory)
    m = io.read_json(d / "manifest.json")
    V, _, meta = io.read_container(d / "basis.bin")
    basis = ReducedBasis(V, np.asarray(meta["singular_values"]), meta.get("tolerance"))
    cfg = GpConfig.from_dict(m["gp_config"])
    tbox = tuple(m["time_box"])
    pbox = (np.asarray(m["param_box"][0]), np.asarray(m["param_box"][1]))
    if m["variant"] == "global":
        gps = [load_gp(d / f"gp_{ell:03d}") for ell in range(m["N"])]
        return GlobalRom(basis, gps, tbox, pbox, cfg, m["time_stride"])
    coeffs = []
    for ell, c in enumerate(m["coefficients"]):
        lam = np.asarray(c["singular_values"])
        tg = [load_gp(d / f"gp_{ell:03d}_{k:03d}_time") for k in range(len(lam))]
        pg = [load_gp(d / f"gp_{ell:03d}_{k:03d}_param") for k in range(len(lam))]
        coeffs.append(TdCoefficient(lam, tg, pg, np.asarray(c["full_spectrum"])))
    return TdRom(basis, coeffs, m["eps_svd"], tbox, pbox, cfg)


def timed(fn, *args, repeats=1, **kwargs):
    """Run ``fn`` and return (result, median wall time in seconds)."""
    times = []
    out = None
    for _ in range(repeats):
        t0 = _time.perf_counter()
        out = fn(*args, **kwargs)
        times.append(_time.perf_counter() - t0)
    return out, float(np.median(times))
