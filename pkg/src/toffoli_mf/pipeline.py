"""Experiment orchestration: fidelity ensembles over noisy couplings.

For each noise strength sigma, a shared ensemble of coupling realizations
is generated (seeds derived deterministically from the base seed and the
cell indices, identical across pulse sets), the fidelity time series of
every pulse set is computed, and each series is reduced to its
multifractal width.  Fidelity evaluation defaults to a certified cubic
interpolation table over the scalar coupling, since the propagator
depends on the noise only through that scalar; exact per-sample
propagation remains available for certification and small runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.interpolate import CubicSpline

from . import damf
from .control import fidelity_sweep
from .noise import NOISE_KINDS, coupling_series
from .quantum import DIM, CouplingConfig, PulseSet, propagate_batch, toffoli_target
from .validation import check_ascending

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

DEFAULT_SIGMA_GRID = np.round(np.arange(0.10, 0.50 + 1e-9, 0.01), 2)

TABLE_RANGE = (-0.5, 2.5)  # in units of jbar
TABLE_POINTS = 4001


def derive_seed(base_seed: int, sigma_index: int, realization: int) -> int:
    """Deterministic per-cell noise seed, shared across pulse sets."""
    ss = np.random.SeedSequence([int(base_seed), int(sigma_index), int(realization)])
    return int(ss.generate_state(1)[0])


def exact_fidelity(pulse: PulseSet, cfg: CouplingConfig, j_values, chunk: int = 4096):
    """Gate fidelity by exact propagation at every coupling value, chunked."""
    j_values = np.asarray(j_values, dtype=float)
    target = toffoli_target()
    out = np.empty(j_values.size)
    for lo in range(0, j_values.size, chunk):
        us = propagate_batch(pulse, cfg, j_values[lo : lo + chunk])
        out[lo : lo + chunk] = np.abs(np.einsum("jab,ab->j", us.conj(), target)) / DIM
    return out


class FidelityTable:
    """Cubic-interpolated gate fidelity as a function of the scalar coupling.

    The table is certified at build time against exact propagation on
    random off-grid probes; couplings outside the tabulated range fall
    back to exact evaluation per sample.
    """

    def __init__(self, pulse: PulseSet, cfg: CouplingConfig = CouplingConfig(),
                 j_range=TABLE_RANGE, points: int = TABLE_POINTS):
        self.pulse = pulse
        self.cfg = cfg
        self.j_min = j_range[0] * cfg.jbar
        self.j_max = j_range[1] * cfg.jbar
        self.grid = np.linspace(self.j_min, self.j_max, points)
        self._spline = CubicSpline(self.grid, self._exact(self.grid))
        self.certified_error = None

    def _exact(self, j_values):
        return exact_fidelity(self.pulse, self.cfg, j_values)

    def certify(self, n_probes: int = 1000, seed: int = 0, tol: float = 1e-6) -> float:
        """Max |interpolated - exact| over random off-grid probes; raises above tol."""
        rng = np.random.default_rng(seed)
        probes = rng.uniform(self.j_min, self.j_max, n_probes)
        err = float(np.max(np.abs(self._spline(probes) - self._exact(probes))))
        if err > tol:
            raise RuntimeError(
                f"interpolation table certification failed: error {err:.3e} > {tol:.1e}"
            )
        self.certified_error = err
        return err

    def __call__(self, j_values) -> np.ndarray:
        j_values = np.asarray(j_values, dtype=float)
        f = self._spline(j_values)
        outside = (j_values < self.j_min) | (j_values > self.j_max)
        if np.any(outside):
            f[outside] = self._exact(j_values[outside])
        return f


def fidelity_series(pulse: PulseSet, j, cfg: CouplingConfig = CouplingConfig(),
                    mode: str = "interpolated", table: FidelityTable = None) -> np.ndarray:
    """Gate fidelity at every sample of a coupling series."""
    j = np.asarray(j, dtype=float)
    if mode == "exact":
        return exact_fidelity(pulse, cfg, j)
    if mode != "interpolated":
        raise ValueError(f"unknown evaluation mode {mode!r}")
    if table is None:
        table = FidelityTable(pulse, cfg)
        table.certify()
    return table(j)


@dataclass
class ExperimentConfig:
    """Configuration of one fidelity-multifractality experiment."""

    pulse_files: list
    noise_kind: str = "pink"
    n_realizations: int = 100
    n_samples: int = 2 ** 15
    sigma_grid: np.ndarray = field(default_factory=lambda: DEFAULT_SIGMA_GRID.copy())
    base_seed: int = 2024
    evaluation: str = "interpolated"
    output_dir: str = "results"
    n_jobs: int = 1
    q_min: float = damf.DEFAULT_Q_MIN
    q_max: float = damf.DEFAULT_Q_MAX
    q_step: float = damf.DEFAULT_Q_STEP
    k_min: int = damf.DEFAULT_K_MIN
    k_max: int = damf.DEFAULT_K_MAX

    def __post_init__(self):
        if not self.pulse_files:
            raise ValueError("at least one pulse file is required")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        grid = check_ascending(self.sigma_grid, name="sigma_grid")
        if np.any(grid <= 0):
            raise ValueError("sigma_grid must be positive")
        self.sigma_grid = grid
        if self.evaluation not in ("exact", "interpolated"):
            raise ValueError(f"unknown evaluation mode {self.evaluation!r}")

    # Keys accepted in the TOML config file, with their coercions.
    _SCALARS = {
        "noise_kind": str,
        "n_realizations": int,
        "n_samples": int,
        "base_seed": int,
        "evaluation": str,
        "output_dir": str,
        "n_jobs": int,
        "q_min": float,
        "q_max": float,
        "q_step": float,
        "k_min": int,
        "k_max": int,
    }

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        known = set(cls._SCALARS) | {"pulse_files", "sigma_grid", "profile"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        if doc.get("profile") == "desk":
            kwargs.update(desk_profile())
        elif "profile" in doc and doc["profile"] != "full":
            raise ValueError(f"unknown profile {doc['profile']!r}")
        kwargs["pulse_files"] = list(doc["pulse_files"])
        if "sigma_grid" in doc:
            kwargs["sigma_grid"] = np.asarray(doc["sigma_grid"], dtype=float)
        for key, coerce in cls._SCALARS.items():
            if key in doc:
                kwargs[key] = coerce(doc[key])
        return cls(**kwargs)

    def to_json_dict(self):
        doc = {key: getattr(self, key) for key in self._SCALARS}
        doc["pulse_files"] = [str(p) for p in self.pulse_files]
        doc["sigma_grid"] = self.sigma_grid.tolist()
        return doc

    def config_hash(self):
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def desk_profile():
    """Reduced settings for CI-speed runs (documented desk-scale profile)."""
    return {
        "n_realizations": 20,
        "sigma_grid": np.array([0.1, 0.2, 0.3, 0.5]),
    }


@dataclass
class EnsembleResult:
    """Per (pulse set, sigma) multifractal-width ensemble."""

    pulse_name: str
    sigma: float
    widths: np.ndarray  # NaN marks analysis failures
    seeds: list

    @property
    def valid_widths(self):
        return self.widths[np.isfinite(self.widths)]

    @property
    def n_failures(self):
        return int(np.count_nonzero(~np.isfinite(self.widths)))

    @property
    def mean(self):
        return float(np.mean(self.valid_widths))

    @property
    def std(self):
        return float(np.std(self.valid_widths))


def _analyze_cell(cfg, sigma_index, realization, tables):
    """One (sigma, realization) cell: shared noise, one width per pulse set."""
    sigma = cfg.sigma_grid[sigma_index]
    seed = derive_seed(cfg.base_seed, sigma_index, realization)
    eps = NOISE_KINDS[cfg.noise_kind](cfg.n_samples, sigma, seed)
    j = coupling_series(eps, jbar=tables[0].cfg.jbar)
    widths, errors = [], []
    for table in tables:
        f = table(j) if cfg.evaluation == "interpolated" else table._exact(j)
        try:
            spectrum = damf.analyze(
                f,
                q_min=cfg.q_min,
                q_max=cfg.q_max,
                q_step=cfg.q_step,
                k_min=cfg.k_min,
                k_max=cfg.k_max,
                integrate=True,
            )
            widths.append(spectrum.width)
            errors.append(None)
        except ValueError as exc:
            widths.append(np.nan)
            errors.append(str(exc))
    return seed, widths, errors


def run_experiment(cfg: ExperimentConfig, pulses=None, progress=False):
    """Run the full (pulse set, sigma, realization) grid and persist results.

    Returns a dict mapping (pulse_name, sigma) -> EnsembleResult.  Analysis
    failures are recorded per cell (NaN width plus a logged message), never
    silently dropped.
    """
    if pulses is None:
        pulses = {os.path.basename(p): PulseSet.load(p) for p in cfg.pulse_files}
    names = list(pulses)
    qcfg = CouplingConfig()
    tables = [FidelityTable(pulses[name], qcfg) for name in names]
    for table in tables:
        table.certify()

    cells = [
        (si, r)
        for si in range(len(cfg.sigma_grid))
        for r in range(cfg.n_realizations)
    ]
    outputs = Parallel(n_jobs=cfg.n_jobs)(
        delayed(_analyze_cell)(cfg, si, r, tables) for si, r in cells
    )

    widths = {
        (name, float(cfg.sigma_grid[si])): np.full(cfg.n_realizations, np.nan)
        for name in names
        for si in range(len(cfg.sigma_grid))
    }
    seeds = {float(s): [None] * cfg.n_realizations for s in cfg.sigma_grid}
    failures = []
    for (si, r), (seed, cell_widths, cell_errors) in zip(cells, outputs):
        sigma = float(cfg.sigma_grid[si])
        seeds[sigma][r] = seed
        for name, width, err in zip(names, cell_widths, cell_errors):
            widths[(name, sigma)][r] = width
            if err is not None:
                failures.append(
                    {"pulse": name, "sigma": sigma, "realization": r, "error": err}
                )
    if failures and progress:
        print(f"{len(failures)} analysis failures recorded", file=sys.stderr)

    results = {
        key: EnsembleResult(
            pulse_name=key[0], sigma=key[1], widths=vals, seeds=seeds[key[1]]
        )
        for key, vals in widths.items()
    }
    persist_results(cfg, results, failures)
    return results


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def persist_results(cfg: ExperimentConfig, results, failures):
    """One JSON index plus one CSV per (pulse set, sigma) cell."""
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    index = {
        "config": cfg.to_json_dict(),
        "config_hash": cfg.config_hash(),
        "failures": failures,
        "cells": [],
    }
    for (name, sigma), res in sorted(results.items()):
        stem = f"{os.path.splitext(name)[0]}_sigma{sigma:.4g}.csv"
        lines = ["realization,seed,width"]
        for r, (seed, width) in enumerate(zip(res.seeds, res.widths)):
            w = "" if not np.isfinite(width) else f"{width:.12g}"
            lines.append(f"{r},{seed},{w}")
        _atomic_write(os.path.join(outdir, stem), "\n".join(lines) + "\n")
        index["cells"].append(
            {
                "pulse": name,
                "sigma": sigma,
                "file": stem,
                "mean": res.mean if res.valid_widths.size else None,
                "std": res.std if res.valid_widths.size else None,
                "n_failures": res.n_failures,
            }
        )
    _atomic_write(os.path.join(outdir, "index.json"), json.dumps(index, indent=2))


def load_results(results_dir):
    """Reload persisted ensembles as {(pulse, sigma): EnsembleResult}."""
    with open(os.path.join(results_dir, "index.json")) as fh:
        index = json.load(fh)
    results = {}
    for cell in index["cells"]:
        rows = np.genfromtxt(
            os.path.join(results_dir, cell["file"]),
            delimiter=",",
            skip_header=1,
            missing_values="",
            filling_values=np.nan,
        )
        rows = np.atleast_2d(rows)
        results[(cell["pulse"], cell["sigma"])] = EnsembleResult(
            pulse_name=cell["pulse"],
            sigma=cell["sigma"],
            widths=rows[:, 2],
            seeds=[int(s) for s in rows[:, 1]],
        )
    return results, index


FIGURES = ("fig1", "fig3", "fig4")


def emit_figure_data(results, which, out_path, pulses=None, j_grid=None,
                     scatter_pulse=None):
    """Write tidy CSV data for one of the reproduced figures.

    fig1: fidelity-vs-coupling sweeps (requires ``pulses``); fig3: width
    scatter with 1-std band columns for one pulse set; fig4: mean width
    versus sigma for every pulse set.
    """
    if which == "fig1":
        if not pulses:
            raise ValueError("fig1 needs pulse sets")
        if j_grid is None:
            j_grid = np.linspace(0.5, 1.5, 201)
        lines = ["# fidelity versus scalar coupling, one row per (pulse_set, point)",
                 "pulse_set,j_over_jbar,fidelity"]
        for name, pulse in pulses.items():
            f = fidelity_sweep(pulse, j_grid)
            lines += [f"{name},{j:.10g},{fi:.10g}" for j, fi in zip(j_grid, f)]
    elif which == "fig3":
        names = sorted({k[0] for k in results})
        name = scatter_pulse or names[0]
        cells = sorted(
            (k[1], v) for k, v in results.items() if k[0] == name
        )
        if not cells:
            raise ValueError(f"no results for pulse set {name!r}")
        lines = [
            f"# width scatter for {name}; band columns repeat the cell mean/std",
            "sigma,realization,width,band_mean,band_std",
        ]
        for sigma, res in cells:
            mean, std = res.mean, res.std
            for r, w in enumerate(res.widths):
                if np.isfinite(w):
                    lines.append(
                        f"{sigma:.10g},{r},{w:.10g},{mean:.10g},{std:.10g}"
                    )
    elif which == "fig4":
        lines = ["# mean multifractal width versus noise strength",
                 "pulse_set,sigma,mean_dalpha,std_dalpha"]
        missing = [k for k, v in results.items() if v.valid_widths.size == 0]
        if missing:
            raise ValueError(f"cells without valid widths: {sorted(missing)}")
        for (name, sigma), res in sorted(results.items()):
            lines.append(f"{name},{sigma:.10g},{res.mean:.10g},{res.std:.10g}")
    else:
        raise ValueError(f"unknown figure {which!r}; expected one of {FIGURES}")
    _atomic_write(out_path, "\n".join(lines) + "\n")
