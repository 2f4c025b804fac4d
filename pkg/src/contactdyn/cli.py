"""`engine` command line: run scenarios, benchmarks, and the session service."""

from __future__ import annotations

import time
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from .dynamics import step_scene
from .scenario import load_scenario


@click.group()
def main():
    """Frictional contact dynamics engine."""


@main.command()
@click.argument("scenario_file")
@click.option("--steps", default=300, show_default=True, help="steps to run")
@click.option("--out", default=None, help="per-step report CSV path")
@click.option("--seed", default=0, show_default=True)
def run(scenario_file, steps, out, seed):
    """Run a scenario headless and report per-step contact statistics."""
    np.random.seed(seed)
    scenario = load_scenario(scenario_file)
    scene = scenario.build()
    report = bench_mod.BenchmarkReport(columns=[
        "step", "time", "contacts", "iterations", "converged", "energy",
        "coupling_force_n", "wall_step_s",
    ])
    for _ in range(steps):
        t0 = time.perf_counter()
        nodal, wrench = scenario.script.apply(scene)
        snap = step_scene(scene, nodal_loads=nodal, wrenches=wrench)
        wall = time.perf_counter() - t0
        d = scene.last_diagnostics
        report.append(
            step=scene.step_index, time=scene.time, contacts=d.n_contacts,
            iterations=d.iterations, converged=d.converged,
            energy=scene.total_energy(),
            coupling_force_n=float(np.linalg.norm(snap.coupling_wrench[:3])),
            wall_step_s=wall,
        )
    last = report.rows[-1]
    click.echo(
        f"{scenario.name}: {steps} steps, t={last['time']:.3f}s, "
        f"{last['contacts']} contacts, energy {last['energy']:.4g} J"
    )
    if out:
        report.to_csv(out)
        click.echo(f"report written to {out}")


@main.group()
def bench():
    """Benchmarks reproducing the reference experiments."""


@bench.command("table-compare")
@click.option("--loads", default=30, show_default=True)
@click.option("--mu", default=0.1, show_default=True)
@click.option("--k-list", default="4,8,16,32", show_default=True)
@click.option("--cap", default=16, show_default=True, help="contact cap")
@click.option("--out", "out_dir", default="bench_out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--complexity/--no-complexity", default=True, show_default=True,
              help="also run the contact-count scaling sweep")
def table_compare(loads, mu, k_list, cap, out_dir, seed, complexity):
    """Pyramid-LCP vs exact-cone Gauss-Seidel on the table scene."""
    ks = tuple(int(k) for k in k_list.split(","))
    _, means = bench_mod.run_table_comparison(
        loads=loads, mu=mu, k_list=ks, seed=seed, out_dir=out_dir, cap=cap,
    )
    for k in ks:
        click.echo(f"k={k:3d}: mean gamma = {means[k]:.3f} %")
    if complexity:
        _, summary = bench_mod.run_complexity(seed=seed, out_dir=out_dir)
        click.echo(
            f"Gauss-Seidel wall-time exponent {summary['exponent']:.2f}; "
            f"pyramid/GS time ratio at m=64: {summary['crossover_ratio']:.1f}"
        )
    click.echo(f"reports and figures in {Path(out_dir).resolve()}")


@bench.command()
@click.option("--contacts", default=30, show_default=True)
@click.option("--mu", default=0.0, show_default=True)
@click.option("--steps", default=500, show_default=True)
@click.option("--out", "out_dir", default="bench_out", show_default=True)
@click.option("--seed", default=0, show_default=True)
def timing(contacts, mu, steps, out_dir, seed):
    """Per-step contact-solve wall time at a sustained contact count."""
    _, stats = bench_mod.run_timing(
        contacts=contacts, mu=mu, steps=steps, seed=seed, out_dir=out_dir,
    )
    click.echo(
        f"{contacts} contacts, mu={mu}: mean solve "
        f"{stats['mean_s'] * 1e3:.3f} ms, cv {stats['cv']:.3f}, "
        f"mean iterations {stats['mean_iterations']:.1f}"
    )
    click.echo(f"reports and figures in {Path(out_dir).resolve()}")


@bench.command()
@click.option("--out", "out_dir", default="bench_out", show_default=True)
@click.option("--seed", default=0, show_default=True)
def delassus(out_dir, seed):
    """Delassus-operator structure of the plain and reinforced tables."""
    _, stats = bench_mod.run_delassus_visualization(out_dir=out_dir)
    click.echo(
        f"same-leg/cross-leg dominance: {stats['dominance_ratio']:.1f}x"
    )
    click.echo(
        "cross-leg x-tangential coupling: plain "
        f"{stats['plain_cross_x_tangential']:.3e} -> reinforced "
        f"{stats['reinforced_cross_x_tangential']:.3e}"
    )
    click.echo(f"reports and figures in {Path(out_dir).resolve()}")


@bench.command("snap-in")
@click.option("--pipe", type=click.Choice(["rigid", "deformable"]),
              default="rigid", show_default=True)
@click.option("--withdraw/--no-withdraw", default=True, show_default=True)
@click.option("--withdraw-mu", default=0.8, show_default=True)
@click.option("--out", "out_dir", default="bench_out", show_default=True)
@click.option("--seed", default=0, show_default=True)
def snap_in(pipe, withdraw, withdraw_mu, out_dir, seed):
    """Scripted clip insertion (and snap-out) with force logging."""
    _, sig = bench_mod.run_snap_in(
        pipe=pipe, withdraw=withdraw, withdraw_mu=withdraw_mu, seed=seed,
        out_dir=out_dir,
    )
    click.echo(
        f"insertion peak {sig['peak']:.2f} N at t={sig['peak_time']:.2f}s, "
        f"post-peak drop {sig['drop_fraction'] * 100:.0f}% "
        f"(signature {'ok' if sig['signature_ok'] else 'ABSENT'})"
    )
    if withdraw:
        click.echo(
            f"withdrawal peak {sig['withdrawal_peak']:.2f} N "
            f"(exceeds insertion: {sig['withdrawal_exceeds_insertion']}), "
            f"released: {sig['released']}"
        )
    click.echo(f"reports and figures in {Path(out_dir).resolve()}")


@main.command()
@click.argument("scenario_file")
@click.option("--port", default=8765, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--decimation", default=2, show_default=True,
              help="send every Nth snapshot")
@click.option("--seed", default=0, show_default=True)
def serve(scenario_file, port, host, decimation, seed):
    """Serve an interactive session for the viewer."""
    from .session import serve_session

    scenario = load_scenario(scenario_file)
    click.echo(f"serving {scenario.name!r} on ws://{host}:{port} "
               f"(ctrl-c to stop)")
    serve_session(scenario, port, host=host, decimation=decimation)


if __name__ == "__main__":
    main()
