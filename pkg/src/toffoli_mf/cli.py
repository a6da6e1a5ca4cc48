"""Command-line interface: pulse optimization, noise synthesis, decomposition,
multifractal analysis, and the ensemble experiment pipeline."""

from __future__ import annotations

import json
import os

import click
import numpy as np

from . import damf, noise, pipeline
from .control import ObjectiveSpec, optimize
from .emd import sift
from .quantum import LAYOUT_MATRICES, PulseSet


@click.group()
def main():
    """Toffoli-gate pulse synthesis and fidelity multifractality toolkit."""


@main.command("optimize")
@click.option("--kind", type=click.Choice(["plain", "interval", "flatten"]),
              required=True)
@click.option("--beta", type=float, default=None,
              help="Flattening weight (flatten kind only).")
@click.option("--restarts", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--layout", type=click.Choice(sorted(LAYOUT_MATRICES)),
              default="full", show_default=True)
@click.option("--nt", type=int, default=20, show_default=True)
@click.option("--tg", type=float, default=4.18, show_default=True)
@click.option("--max-iterations", type=int, default=2000, show_default=True)
@click.option("--n-jobs", type=int, default=-1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Destination pulse JSON; the optimization report is written beside it.")
def optimize_cmd(kind, beta, restarts, seed, layout, nt, tg, max_iterations,
                 n_jobs, out_path):
    """Search for control pulses maximizing the chosen objective."""
    spec = ObjectiveSpec(kind=kind, beta=beta)
    report = optimize(
        spec, restarts=restarts, seed=seed, layout=layout, nt=nt, tg=tg,
        max_iterations=max_iterations, n_jobs=n_jobs,
    )
    report.best.save(out_path)
    report_path = f"{os.path.splitext(out_path)[0]}.report.json"
    with open(report_path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    click.echo(
        f"best objective {report.objective_value:.6f} "
        f"(fidelity at nominal coupling {report.best.meta['fidelity_at_jbar']:.6f}), "
        f"{report.restarts} restarts in {report.wall_time:.1f}s -> {out_path}"
    )


def _write_series_csv(path, values, meta):
    lines = [f"# {key}: {value}" for key, value in meta.items()]
    lines.append("value")
    lines += [f"{v:.17g}" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series_csv(path):
    """Single-column CSV with '#' comment lines, as written by the noise command."""
    return np.genfromtxt(path, delimiter=",", comments="#", skip_header=0,
                         names=True)["value"]


@main.command("noise")
@click.option("--kind", type=click.Choice(sorted(noise.NOISE_KINDS)), required=True)
@click.option("--n", type=int, default=2 ** 15, show_default=True)
@click.option("--sigma", type=float, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def noise_cmd(kind, n, sigma, seed, out_path):
    """Generate one noise realization as a single-column CSV."""
    values = noise.NOISE_KINDS[kind](n, sigma, seed)
    _write_series_csv(
        out_path, values,
        {"kind": kind, "n": n, "sigma": sigma, "seed": seed},
    )
    click.echo(f"wrote {n} samples -> {out_path}")


@main.command("emd")
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def emd_cmd(in_path, out_path):
    """Decompose a series into intrinsic modes (wide CSV: t, c_k..., r, a_k...)."""
    series = read_series_csv(in_path)
    result = sift(series)
    k = result.n_imfs
    header = (
        ["t"]
        + [f"c_{i + 1}" for i in range(k)]
        + ["r"]
        + [f"a_{i + 1}" for i in range(k)]
    )
    columns = (
        [np.arange(series.size)]
        + list(result.imfs)
        + [result.residual]
        + list(result.envelopes)
    )
    table = np.column_stack(columns)
    np.savetxt(out_path, table, delimiter=",", header=",".join(header), comments="")
    click.echo(f"{k} modes -> {out_path}")


@main.command("mf")
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--qmin", type=float, default=damf.DEFAULT_Q_MIN, show_default=True)
@click.option("--qmax", type=float, default=damf.DEFAULT_Q_MAX, show_default=True)
@click.option("--qstep", type=float, default=damf.DEFAULT_Q_STEP, show_default=True)
@click.option("--kmin", type=int, default=damf.DEFAULT_K_MIN, show_default=True)
@click.option("--kmax", type=int, default=damf.DEFAULT_K_MAX, show_default=True)
@click.option("--no-integrate", is_flag=True,
              help="Analyze the series as-is instead of its integrated path.")
@click.option("--out", "out_path", type=click.Path(), required=True)
def mf_cmd(in_path, qmin, qmax, qstep, kmin, kmax, no_integrate, out_path):
    """Multifractal singularity spectrum of a series (JSON)."""
    series = read_series_csv(in_path)
    spectrum = damf.analyze(
        series, q_min=qmin, q_max=qmax, q_step=qstep, k_min=kmin, k_max=kmax,
        integrate=not no_integrate,
    )
    with open(out_path, "w") as fh:
        json.dump(spectrum.to_json_dict(), fh, indent=2)
    click.echo(f"width {spectrum.width:.4f} -> {out_path}")


@main.command("experiment")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def experiment_cmd(config_path):
    """Run the ensemble experiment described by a TOML config file."""
    cfg = pipeline.ExperimentConfig.from_toml(config_path)
    results = pipeline.run_experiment(cfg, progress=True)
    n_cells = len(results)
    click.echo(f"{n_cells} cells -> {cfg.output_dir}/index.json")


@main.command("figure")
@click.option("--which", type=click.Choice(pipeline.FIGURES), required=True)
@click.option("--in", "results_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--pulse", "pulse_files", type=click.Path(exists=True), multiple=True,
              help="Pulse JSON files (fig1 only).")
@click.option("--scatter-pulse", type=str, default=None,
              help="Pulse-set name for the fig3 scatter (defaults to the first).")
def figure_cmd(which, results_dir, out_path, pulse_files, scatter_pulse):
    """Emit tidy CSV data for one of the reproduced figures."""
    if which == "fig1":
        pulses = {os.path.basename(p): PulseSet.load(p) for p in pulse_files}
        pipeline.emit_figure_data({}, "fig1", out_path, pulses=pulses)
    else:
        results, _ = pipeline.load_results(results_dir)
        pipeline.emit_figure_data(
            results, which, out_path, scatter_pulse=scatter_pulse
        )
    click.echo(f"wrote {out_path}")
