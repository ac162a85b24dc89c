"""Command-line driver for the end-to-end beam study.

Stages (each a subcommand, each resumable)::

    snapshots -> pod -> train -> evaluate -> morris / sobol / mcmc -> report

Configuration is one JSON document; command-line flags override its
fields (flag > config file > built-in default).  All randomness derives
from the study seed through named sub-streams, so any stage can be re-run
on its own and reproduce its outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import shutil
import sys
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .bayes import InverseProblem, McmcConfig, chain_summary, metropolis_hastings
from .fom import FomConfig, MaterialParams, Mesh, NewtonDivergenceError, SingularDeformationError, solve_fom
from .gpr import GpConfig
from .pod import build_basis, energy_rank, project
from .rom import error_metrics, load_rom, save_rom, train_global_rom, train_td_rom
from .sampling import ParameterSpace, beam_parameter_space, lhs_sample
from .uq import (
    minmax_scale,
    morris_design,
    morris_indices,
    saltelli_design,
    sobol_indices,
    time_integrated_sobol,
)

__all__ = [
    "StudyConfig",
    "Study",
    "FomQoiModel",
    "RomQoiModel",
    "substream_seed",
    "main",
]

log = logging.getLogger("podgpr")

SUBSTREAMS = ("fom-sampling", "split", "gp-starts", "morris", "sobol", "mcmc", "noise")

BEAM_TARGET = (6.2, 1.2, 2.8, 5.8, 5.8, 2.8, 27.0, 1.2, 0.0058)
BEAM_START = (8.0, 2.0, 2.0, 4.0, 4.0, 2.0, 50.0, 2.0, 0.004)


def substream_seed(seed, name):
    """Deterministic 32-bit seed for the named sub-stream of ``seed``."""
    if name not in SUBSTREAMS:
        raise KeyError(f"unknown sub-stream {name!r}")
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])


def _default_mesh():
    return {"box": {"nx": 10, "ny": 2, "nz": 2, "lengths": [1e-2, 1e-3, 1e-3]}}


@dataclass
class StudyConfig:
    """Every knob of the study; see README for the JSON schema."""

    out: str = "study"
    seed: int = 0
    space: dict | None = None  # None: the nine beam inputs
    mesh: dict = field(default_factory=_default_mesh)
    fom: dict = field(default_factory=dict)
    rho: float = 1.0e3
    n_samples: int = 50
    train_fraction: float = 0.8
    pod_tol: float | None = 5e-4
    pod_n_modes: int | None = None
    pod_table_tols: list = field(default_factory=lambda: [1e-1, 5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5])
    variant: str = "global"
    gp: dict = field(default_factory=dict)
    time_stride: int = 5
    eps_svd: float = 1e-2
    qoi: dict = field(default_factory=lambda: {"point": [1e-2, 5e-4, 5e-4], "component": "z", "steps": [10, 30, 50]})
    morris: dict = field(default_factory=lambda: {"r": 20, "levels": 6})
    sobol: dict = field(default_factory=lambda: {"n_samples": 1024})
    mcmc: dict = field(
        default_factory=lambda: {
            "n_mc": 10000,
            "n_burn_in": 500,
            "n_thin": 4,
            "proposal": "uniform",
            "step": None,
            "noise_variance": 1e-6,
            "add_noise": True,
            "target": list(BEAM_TARGET),
            "initial": list(BEAM_START),
            "lower": None,
            "upper": None,
        }
    )

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.variant not in ("global", "td"):
            raise ValueError("variant must be 'global' or 'td'")
        if (self.pod_tol is None) == (self.pod_n_modes is None):
            raise ValueError("set exactly one of pod_tol and pod_n_modes")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            default = getattr(base, k)
            merged[k] = {**default, **v} if isinstance(default, dict) and isinstance(v, dict) and k != "mesh" else v
        return cls(**merged)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return dataclasses.asdict(self)

    def section_hash(self, *names):
        d = self.to_dict()
        blob = json.dumps({n: d[n] for n in names}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def config_hash(self):
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    # derived objects
    def parameter_space(self):
        return beam_parameter_space() if self.space is None else ParameterSpace.from_dict(self.space)

    def build_mesh(self):
        return Mesh.from_dict(self.mesh)

    def fom_config(self):
        return FomConfig(**self.fom)

    def gp_config(self):
        return GpConfig(**self.gp)


# ---------------------------------------------------------------- model callables


class FomQoiModel:
    """mu -> probe displacements at the QoI steps, by a full forward solve."""

    def __init__(self, mesh, fom_config, rho, point, component, steps):
        self.mesh = mesh
        self.config = fom_config
        self.rho = rho
        v, _ = mesh.nearest_vertex(point)
        self.dof = 3 * v + {"x": 0, "y": 1, "z": 2}[component]
        self.steps = np.asarray(steps, dtype=int)

    def __call__(self, mu):
        traj = solve_fom(MaterialParams.from_vector(mu, self.rho), self.mesh, self.config)
        return traj.dofs_per_step[self.dof, self.steps - 1]


class RomQoiModel:
    """mu -> probe displacements at the QoI steps, from a trained ROM."""

    def __init__(self, rom, dof, times, steps):
        self.rom = rom
        self.dof = int(dof)
        self.steps = np.asarray(steps, dtype=int)
        self.times = np.asarray(times, dtype=float)[self.steps - 1]
        self.vrow = rom.basis.V[self.dof]

    def __call__(self, mu):
        return self.vrow @ self.rom.predict(self.times, mu).mean

    def batch(self, mus, chunk=2048):
        mus = np.atleast_2d(mus)
        out = [np.einsum("l,mlt->mt", self.vrow, self.rom.predict(self.times, mus[i : i + chunk]).mean)
               for i in range(0, len(mus), chunk)]
        return np.vstack(out)


def evaluate_model(model, points):
    batch = getattr(model, "batch", None)
    if batch is not None:
        return np.asarray(batch(points))
    return np.stack([np.atleast_1d(model(x)) for x in points])


# ---------------------------------------------------------------- study


class Study:
    """Stage runner bound to one configuration and output directory."""

    def __init__(self, config, solve=None):
        self.cfg = config
        self.root = Path(config.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self._solve = solve or solve_fom
        self._mesh = None

    @property
    def mesh(self):
        if self._mesh is None:
            self._mesh = self.cfg.build_mesh()
        return self._mesh

    def seed(self, name):
        return substream_seed(self.cfg.seed, name)

    def _stage_key(self, stage, sections, inputs=()):
        h = hashlib.sha256()
        h.update(stage.encode())
        h.update(self.cfg.section_hash("seed", *sections).encode())
        for p in inputs:
            h.update(io.file_digest(p).encode())
        return h.hexdigest()

    def _up_to_date(self, manifest_path, key):
        if not manifest_path.exists():
            return False
        try:
            m = io.read_json(manifest_path)
        except (OSError, ValueError):
            return False
        if m.get("key") != key:
            return False
        return all((manifest_path.parent / f).exists() for f in m.get("files", []))

    def _write_manifest(self, path, key, files, **extra):
        io.write_json(
            path,
            {"key": key, "seed": self.cfg.seed, "config_hash": self.cfg.config_hash, "files": sorted(files), **extra},
        )

    # -- snapshots
    def snapshots(self):
        cfg = self.cfg
        d = self.root / "snapshots"
        d.mkdir(exist_ok=True)
        key = self._stage_key("snapshots", ("space", "mesh", "fom", "rho", "n_samples"))
        mpath = d / "manifest.json"
        if self._up_to_date(mpath, key):
            log.info("snapshots up to date")
            return io.read_json(mpath)
        space = cfg.parameter_space()
        design = lhs_sample(space, cfg.n_samples, self.seed("fom-sampling"))
        io.write_csv(d / "design.csv", ["sample", *space.names], [[m, *row] for m, row in enumerate(design)])
        io.write_json(d / "design.csv.json", {"seed": cfg.seed, "substream": "fom-sampling", "n_samples": cfg.n_samples})
        fom_cfg = cfg.fom_config()
        samples, files, failures = [], ["design.csv"], []
        for m, mu in enumerate(design):
            fname = f"sample_{m:03d}.bin"
            path = d / fname
            sample_key = hashlib.sha256((key + repr(mu.tolist())).encode()).hexdigest()
            entry = {"index": m, "mu": mu.tolist(), "file": fname}
            if path.exists() and io.read_json(str(path) + ".json").get("key") == sample_key:
                entry.update(status="ok", seconds=io.read_json(str(path) + ".json").get("seconds"))
            else:
                t0 = time.perf_counter()
                try:
                    traj = self._solve(MaterialParams.from_vector(mu, cfg.rho), self.mesh, fom_cfg)
                except (NewtonDivergenceError, SingularDeformationError, np.linalg.LinAlgError) as exc:
                    log.warning("sample %d failed: %s", m, exc)
                    entry.update(status="failed", error=str(exc))
                    failures.append(m)
                    samples.append(entry)
                    continue
                secs = time.perf_counter() - t0
                io.write_container(
                    path,
                    traj.dofs_per_step,
                    dt=traj.dt,
                    meta={"key": sample_key, "mu": mu.tolist(), "seconds": secs, "seed": cfg.seed,
                          "mesh_digest": self.mesh.digest(), "times": traj.times.tolist(),
                          "newton_iterations": list(traj.newton_iterations)},
                )
                entry.update(status="ok", seconds=secs)
                log.info("sample %d/%d solved in %.2f s", m + 1, cfg.n_samples, secs)
            entry["digest"] = io.file_digest(path)
            files.append(fname)
            samples.append(entry)
        if failures:
            log.warning("%d of %d FOM solves failed; continuing with %d", len(failures), cfg.n_samples,
                        cfg.n_samples - len(failures))
        ok = [s for s in samples if s["status"] == "ok"]
        self._write_manifest(
            mpath, key, files,
            parameter_names=list(space.names), samples=samples, failures=failures,
            n_success=len(ok), n_failed=len(failures), times=fom_cfg.times.tolist(),
            fom_seconds_median=float(np.median([s["seconds"] for s in ok])) if ok else None,
        )
        return io.read_json(mpath)

    def _snapshot_files(self):
        # design and solved trajectories, not the manifest, which carries timings
        d = self.root / "snapshots"
        m = io.read_json(d / "manifest.json")
        return [d / "design.csv"] + [d / s["file"] for s in m["samples"] if s["status"] == "ok"]

    def _rom_files(self, variant):
        d = self.root / f"rom_{variant or self.cfg.variant}"
        return sorted(p for p in d.iterdir() if p.name != "train.json")

    def _snapshot_sets(self):
        m = io.read_json(self.root / "snapshots" / "manifest.json")
        ok = [s for s in m["samples"] if s["status"] == "ok"]
        perm = np.random.default_rng(self.seed("split")).permutation(len(ok))
        n_train = int(round(self.cfg.train_fraction * len(ok)))
        if not 1 <= n_train < len(ok):
            raise ValueError(f"split of {len(ok)} samples leaves an empty set")
        train = [ok[i] for i in sorted(perm[:n_train])]
        test = [ok[i] for i in sorted(perm[n_train:])]
        return train, test, np.asarray(m["times"])

    def _load_trajectories(self, entries):
        d = self.root / "snapshots"
        return [io.read_container(d / e["file"])[0] for e in entries]

    # -- pod
    def pod(self):
        d = self.root / "pod"
        d.mkdir(exist_ok=True)
        key = self._stage_key("pod", ("train_fraction", "pod_tol", "pod_n_modes", "pod_table_tols"),
                              self._snapshot_files())
        mpath = d / "manifest.json"
        if self._up_to_date(mpath, key):
            return io.read_json(mpath)
        train, test, times = self._snapshot_sets()
        S = np.hstack(self._load_trajectories(train))
        basis = build_basis(S, tol=self.cfg.pod_tol, n_modes=self.cfg.pod_n_modes)
        io.write_container(
            d / "basis.bin", basis.V,
            meta={"singular_values": basis.singular_values.tolist(), "tolerance": basis.tolerance, "N": basis.N},
        )
        rows = [[tol, energy_rank(basis.singular_values, tol)] for tol in sorted(self.cfg.pod_table_tols, reverse=True)]
        io.write_csv(d / "rank_table.csv", ["eps_pod", "N"], rows)
        self._write_manifest(
            mpath, key, ["basis.bin", "rank_table.csv"], N=basis.N,
            train=[e["index"] for e in train], test=[e["index"] for e in test],
            tail_energy=basis.tail_energy(),
        )
        return io.read_json(mpath)

    def _basis(self):
        from .pod import ReducedBasis

        V, _, meta = io.read_container(self.root / "pod" / "basis.bin")
        return ReducedBasis(V, np.asarray(meta["singular_values"]), meta["tolerance"])

    # -- train
    def train(self, variant=None):
        variant = variant or self.cfg.variant
        d = self.root / f"rom_{variant}"
        key = self._stage_key(
            f"train-{variant}", ("gp", "time_stride" if variant == "global" else "eps_svd"),
            [self.root / "pod" / "manifest.json", self.root / "pod" / "basis.bin"],
        )
        mpath = d / "train.json"
        if self._up_to_date(mpath, key):
            return io.read_json(mpath)
        train, _, times = self._snapshot_sets()
        basis = self._basis()
        U = self._load_trajectories(train)
        coeffs = project(basis, np.hstack(U), n_steps=len(times))
        params = np.array([e["mu"] for e in train])
        t0 = time.perf_counter()
        if variant == "global":
            rom = train_global_rom(basis, coeffs, times, params, self.cfg.gp_config(), self.seed("gp-starts"),
                                   self.cfg.time_stride)
        else:
            rom = train_td_rom(basis, coeffs, times, params, self.cfg.eps_svd, self.cfg.gp_config(),
                               self.seed("gp-starts"))
        secs = time.perf_counter() - t0
        if d.exists():
            shutil.rmtree(d)  # drop GP files of an older, possibly larger, model
        save_rom(rom, d, extra={"seed": self.cfg.seed, "config_hash": self.cfg.config_hash})
        files = sorted(p.name for p in d.iterdir() if p.name != "train.json")
        extra = {"ranks": rom.ranks} if variant == "td" else {"time_stride": rom.time_stride}
        self._write_manifest(mpath, key, files, variant=variant, N=rom.N, n_gps=rom.n_gps,
                             train_seconds=secs, **extra)
        log.info("%s ROM trained: %d GPs in %.1f s", variant, rom.n_gps, secs)
        return io.read_json(mpath)

    def rom(self, variant=None):
        return load_rom(self.root / f"rom_{variant or self.cfg.variant}")

    # -- evaluate
    def evaluate(self, variant=None):
        variant = variant or self.cfg.variant
        d = self.root / f"evaluate_{variant}"
        d.mkdir(exist_ok=True)
        rom_dir = self.root / f"rom_{variant}"
        key = self._stage_key(f"evaluate-{variant}", (), self._rom_files(variant) + self._snapshot_files())
        mpath = d / "manifest.json"
        if self._up_to_date(mpath, key):
            return io.read_json(mpath)
        rom = load_rom(rom_dir)
        _, test, times = self._snapshot_sets()
        U = self._load_trajectories(test)
        preds, online = [], []
        for e in test:
            ts = []
            for _ in range(3):
                t0 = time.perf_counter()
                q = rom.predict(times, np.asarray(e["mu"])).mean
                rom.basis.V @ q
                ts.append(time.perf_counter() - t0)
            online.append(float(np.median(ts)))
            preds.append(q)
        met = error_metrics(U, preds, rom.basis)
        proj = error_metrics(U, [rom.basis.V.T @ u for u in U], rom.basis)
        fom_s = float(np.median([e["seconds"] for e in test]))
        online_s = float(np.median(online))
        io.write_csv(
            d / "metrics.csv", ["sample", "tae", "tre", "projection_tae", "projection_tre"],
            [[e["index"], met["tae"][i], met["tre"][i], proj["tae"][i], proj["tre"][i]] for i, e in enumerate(test)],
        )
        io.write_csv(d / "coefficients.csv", ["ell", "mse", "rse"],
                     [[ell, met["mse"][ell], met["rse"][ell]] for ell in range(rom.N)])
        io.write_csv(
            d / "per_step.csv", ["step", "time", "mean_abs_error", "mean_rel_error", "projection_mean_rel_error"],
            [[n + 1, times[n], met["abs_error_per_step"][:, n].mean(), np.nanmean(met["rel_error_per_step"][:, n]),
              np.nanmean(proj["rel_error_per_step"][:, n])] for n in range(len(times))],
        )
        summary = {
            "variant": variant, "N": rom.N, "n_test": len(test),
            "mean_tae": met["mean_tae"], "mean_tre": met["mean_tre"],
            "projection_mean_tae": proj["mean_tae"], "projection_mean_tre": proj["mean_tre"],
            "fom_seconds": fom_s, "rom_online_seconds": online_s, "speedup": fom_s / online_s,
        }
        io.write_json(d / "summary.json", summary)
        self._write_manifest(mpath, key, ["metrics.csv", "coefficients.csv", "per_step.csv", "summary.json"], **summary)
        return io.read_json(mpath)

    # -- models for SA / MCMC
    def qoi_model(self, model, variant=None):
        q = self.cfg.qoi
        if model == "fom":
            return FomQoiModel(self.mesh, self.cfg.fom_config(), self.cfg.rho, q["point"], q["component"], q["steps"])
        rom = self.rom(variant)
        v, _ = self.mesh.nearest_vertex(q["point"])
        dof = 3 * v + {"x": 0, "y": 1, "z": 2}[q["component"]]
        return RomQoiModel(rom, dof, self.cfg.fom_config().times, q["steps"])

    def _model_tag(self, model, variant):
        return "fom" if model == "fom" else f"rom-{variant or self.cfg.variant}"

    def _model_inputs(self, model, variant):
        if model == "fom":
            return []
        return self._rom_files(variant)

    # -- morris
    def morris(self, model="rom", variant=None):
        tag = self._model_tag(model, variant)
        d = self.root / f"morris_{tag}"
        d.mkdir(exist_ok=True)
        sections = ("space", "morris", "qoi") + (("mesh", "fom", "rho") if model == "fom" else ())
        key = self._stage_key(f"morris-{tag}", sections, self._model_inputs(model, variant))
        mpath = d / "manifest.json"
        if self._up_to_date(mpath, key):
            return io.read_json(mpath)
        space = self.cfg.parameter_space()
        mc = self.cfg.morris
        design = morris_design(space, mc["r"], mc["levels"], self.seed("morris"))
        pts = design.flat_points()
        t0 = time.perf_counter()
        y = evaluate_model(self.qoi_model(model, variant), pts)
        secs = time.perf_counter() - t0
        res = morris_indices(design, y)
        steps = self.cfg.qoi["steps"]
        ms, ss = minmax_scale(res.mu_star), minmax_scale(res.sd)
        rows = []
        for k, step in enumerate(steps):
            for i, name in enumerate(space.names):
                rows.append([name, step, res.mu[i, k], res.mu_star[i, k], res.sd[i, k], ms[i, k], ss[i, k]])
        io.write_csv(d / "results.csv", ["input", "qoi_step", "m", "m_star", "sd", "m_star_scaled", "sd_scaled"], rows)
        io.write_csv(d / "design.csv", ["trajectory", "point", *space.names, *[f"y_{s}" for s in steps]],
                     [[j // (space.dim + 1), j % (space.dim + 1), *p, *np.atleast_1d(v)] for j, (p, v) in enumerate(zip(pts, y))])
        ranking = [[space.names[i] for i in np.argsort(-res.mu_star[:, k], kind="stable")] for k in range(len(steps))]
        self._write_manifest(mpath, key, ["results.csv", "design.csv"], model=tag, r=mc["r"], levels=mc["levels"],
                             delta=design.delta, n_runs=design.n_runs, seconds=secs, ranking=ranking)
        return io.read_json(mpath)

    # -- sobol
    def sobol(self, model="rom", variant=None):
        tag = self._model_tag(model, variant)
        d = self.root / f"sobol_{tag}"
        d.mkdir(exist_ok=True)
        sections = ("space", "sobol", "qoi") + (("mesh", "fom", "rho") if model == "fom" else ())
        key = self._stage_key(f"sobol-{tag}", sections, self._model_inputs(model, variant))
        mpath = d / "manifest.json"
        if self._up_to_date(mpath, key):
            return io.read_json(mpath)
        space = self.cfg.parameter_space()
        design = saltelli_design(space, self.cfg.sobol["n_samples"], self.seed("sobol"))
        qm = self.qoi_model(model, variant)
        steps = self.cfg.qoi["steps"]
        t0 = time.perf_counter()
        y = evaluate_model(qm, design.all_points())
        res = sobol_indices(design, y)
        rows = []
        for k, step in enumerate(steps):
            for i, name in enumerate(space.names):
                rows.append([name, step, res.first[i, k], res.total[i, k], res.first_se[i, k], res.total_se[i, k]])
        io.write_csv(d / "results.csv", ["input", "qoi_step", "S", "S_T", "S_se", "S_T_se"], rows)
        files = ["results.csv"]
        if isinstance(qm, RomQoiModel):
            # every step of the probe displacement, for the time-integrated indices
            all_steps = np.arange(1, len(self.cfg.fom_config().times) + 1)
            full = RomQoiModel(qm.rom, qm.dof, self.cfg.fom_config().times, all_steps)
            yt = evaluate_model(full, design.all_points())
            rt = sobol_indices(design, yt, allow_degenerate=True)
            gi, gt = time_integrated_sobol(full.times, rt)
            trows = [[name, n + 1, full.times[n], rt.first[i, n], rt.total[i, n], gi[i, n], gt[i, n]]
                     for i, name in enumerate(space.names) for n in range(len(all_steps))]
            io.write_csv(d / "timeseries.csv", ["input", "step", "time", "S", "S_T", "S_integrated", "S_T_integrated"],
                         trows)
            files.append("timeseries.csv")
        secs = time.perf_counter() - t0
        self._write_manifest(mpath, key, files, model=tag, n_samples=design.n_samples, n_runs=design.n_runs,
                             estimator="jansen", seconds=secs)
        return io.read_json(mpath)

    # -- mcmc
    def mcmc(self, model="rom", variant=None):
        tag = self._model_tag(model, variant)
        d = self.root / f"mcmc_{tag}"
        d.mkdir(exist_ok=True)
        sections = ("space", "mcmc", "qoi", "mesh", "fom", "rho")
        key = self._stage_key(f"mcmc-{tag}", sections, self._model_inputs(model, variant))
        mpath = d / "manifest.json"
        if self._up_to_date(mpath, key):
            return io.read_json(mpath)
        mc = self.cfg.mcmc
        space = self.cfg.parameter_space()
        q = self.cfg.qoi
        fom_model = FomQoiModel(self.mesh, self.cfg.fom_config(), self.cfg.rho, q["point"], q["component"], q["steps"])
        y_true = np.asarray(fom_model(np.asarray(mc["target"], dtype=float)))
        y_obs = y_true.copy()
        if mc.get("add_noise", True):
            y_obs = y_obs + np.sqrt(mc["noise_variance"]) * np.random.default_rng(self.seed("noise")).standard_normal(len(y_obs))
        lower = np.asarray(mc["lower"] if mc.get("lower") is not None else space.lower, dtype=float)
        upper = np.asarray(mc["upper"] if mc.get("upper") is not None else space.upper, dtype=float)
        problem = InverseProblem(self.qoi_model(model, variant), y_obs, mc["noise_variance"], lower, upper)
        config = McmcConfig(
            mc["n_mc"], mc["n_burn_in"], mc["n_thin"], mc["proposal"],
            None if mc.get("step") is None else tuple(mc["step"]), self.seed("mcmc"),
            None if mc.get("initial") is None else tuple(mc["initial"]),
        )
        t0 = time.perf_counter()
        chain = metropolis_hastings(problem, config)
        secs = time.perf_counter() - t0
        summ = chain_summary(chain, bounds=(lower, upper))
        names = space.names
        io.write_csv(d / "chain.csv", ["iteration", *names, "log_posterior", "accepted"],
                     [[j, *s, lp, int(a)] for j, (s, lp, a) in enumerate(zip(chain.samples, chain.log_post, chain.accepted))])
        io.write_csv(d / "kept.csv", list(names), chain.kept.tolist())
        io.write_csv(d / "kde.csv", ["input", "x", "density"],
                     [[names[i], x, p] for i in range(len(names)) for x, p in zip(summ.kde_grid[i], summ.kde_density[i])])
        summary = {
            "model": tag, "y_obs": y_obs.tolist(), "y_target": y_true.tolist(), "target": list(mc["target"]),
            "mean": summ.mean.tolist(), "std": summ.std.tolist(),
            "quantiles": {str(k): v.tolist() for k, v in summ.quantiles.items()},
            "acceptance_rate": summ.acceptance_rate, "n_kept": len(chain.kept), "seconds": secs,
            "prior_lower": lower.tolist(), "prior_upper": upper.tolist(), "config": config.to_dict(),
        }
        io.write_json(d / "summary.json", summary)
        self._write_manifest(mpath, key, ["chain.csv", "kept.csv", "kde.csv", "summary.json"], **summary)
        return io.read_json(mpath)

    # -- report
    def report(self):
        out = {"seed": self.cfg.seed, "config_hash": self.cfg.config_hash, "stages": {}}
        for p in sorted(self.root.glob("*/manifest.json")) + sorted(self.root.glob("rom_*/train.json")):
            m = io.read_json(p)
            m.pop("samples", None)
            m.pop("files", None)
            out["stages"][f"{p.parent.name}/{p.name}"] = m
        io.write_json(self.root / "report.json", out)
        return out


# ---------------------------------------------------------------- argparse


def _parser():
    ap = argparse.ArgumentParser(prog="podgpr", description="POD-GPR surrogate study of a hyperelastic beam.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("snapshots", "LHS design and full-order solves"),
        ("pod", "reduced basis from the training snapshots"),
        ("train", "train a ROM"),
        ("evaluate", "test-set errors and speed-up"),
        ("morris", "Morris screening"),
        ("sobol", "Sobol indices"),
        ("mcmc", "Bayesian parameter estimation"),
        ("report", "collect all stage summaries"),
        ("all", "run every stage in order"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, help="study JSON (flags override its fields)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=str, help="output directory")
        p.add_argument("--variant", choices=("global", "td"))
        p.add_argument("--model", choices=("fom", "rom"), default="rom")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def build_config(args):
    d = json.loads(args.config.read_text()) if args.config else {}
    for k in ("seed", "out", "variant"):
        v = getattr(args, k, None)
        if v is not None:
            d[k] = v
    return StudyConfig.from_dict(d)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    cfg = build_config(args)
    study = Study(cfg)
    io.write_json(study.root / "config.json", {**cfg.to_dict(), "config_hash": cfg.config_hash})
    cmd = args.command
    if cmd == "all":
        study.snapshots()
        study.pod()
        for v in ("global", "td"):
            study.train(v)
            study.evaluate(v)
        study.morris(args.model)
        study.sobol(args.model)
        study.mcmc(args.model)
        result = study.report()
    elif cmd in ("snapshots", "pod", "report"):
        result = getattr(study, cmd)()
    elif cmd in ("train", "evaluate"):
        result = getattr(study, cmd)(args.variant)
    else:
        result = getattr(study, cmd)(args.model, args.variant)
    slim = {k: v for k, v in result.items() if k not in ("samples", "files", "stages")} if isinstance(result, dict) else result
    json.dump(slim, sys.stdout, indent=1, default=str)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
