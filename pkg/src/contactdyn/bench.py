"""Benchmark drivers: solver comparison, Delassus structure, snap-in, timing.

Every driver is deterministic under its seed, writes a CSV report, and
renders the matching figures next to it. Wall-time columns are the only
run-to-run variation; report comparisons exclude them.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import plots
from .dynamics import step_scene
from .scenario import Script, load_scenario, step_scripted
from .solvers import (
    SolverConfig,
    SolverError,
    gap_metric,
    solve_nlgs,
    solve_pyramid,
)

# columns excluded from determinism comparisons
VOLATILE_PREFIXES = ("wall_", "timestamp")


@dataclass
class BenchmarkReport:
    columns: list
    rows: list = field(default_factory=list)

    def append(self, **kw):
        row = {c: kw.get(c) for c in self.columns}
        row["timestamp"] = kw.get("timestamp", time.time())
        self.rows.append(row)

    def all_columns(self):
        return list(self.columns) + ["timestamp"]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.all_columns())
            for row in self.rows:
                writer.writerow([_format(row[c]) for c in self.all_columns()])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = []
            for raw in reader:
                rows.append({c: _parse(v) for c, v in zip(header, raw)})
        rep = cls(columns=[c for c in header if c != "timestamp"])
        rep.rows = rows
        return rep

    def stable_bytes(self) -> bytes:
        """Report serialization excluding wall-time columns."""
        keep = [c for c in self.all_columns()
                if not any(c.startswith(p) for p in VOLATILE_PREFIXES)]
        out = [",".join(keep)]
        for row in self.rows:
            out.append(",".join(_format(row[c]) for c in keep))
        return ("\n".join(out) + "\n").encode()

    def __eq__(self, other):
        if not isinstance(other, BenchmarkReport):
            return NotImplemented
        return (self.all_columns() == other.all_columns()
                and len(self.rows) == len(other.rows)
                and all(
                    ra[c] == rb[c]
                    for ra, rb in zip(self.rows, other.rows)
                    for c in self.all_columns()
                ))


def _format(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse(v):
    if v == "":
        return None
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def extract_subproblem(problem, indices):
    """Contact subset of an assembled problem (rows/cols of the W blocks)."""
    from .contact_space import ContactProblem

    indices = np.asarray(indices, dtype=int)
    comp = (3 * indices[:, None] + np.arange(3)).ravel()
    return ContactProblem(
        m=len(indices),
        W=problem.W[np.ix_(comp, comp)].copy(),
        delta_free=problem.delta_free[comp].copy(),
        mu=problem.mu[indices].copy(),
        group_id=problem.group_id,
        keys=[problem.keys[i] for i in indices],
        pairs=[problem.pairs[i] for i in indices],
        frames=[problem.frames[i] for i in indices],
    )


def _set_friction(scene, mu):
    for body in scene.bodies.values():
        if hasattr(body, "fem"):
            body.fem.material = replace(body.fem.material, friction=mu)
        else:
            body.material = replace(body.material, friction=mu)


def _tabletop_load(table, force):
    fem = table.fem
    mdiag = fem.mass.diagonal()
    load = np.zeros(fem.n_dofs)
    for k in range(3):
        load[k::3] = force[k] * mdiag[k::3] / mdiag[k::3].sum()
    return load


def run_table_comparison(loads=30, mu=0.1, k_list=(4, 8, 16, 32), seed=0,
                         out_dir=None, cap=16, settle_steps=80):
    """Pyramid-vs-exact-cone force gap on random table load cases.

    Each case applies a random tangential push plus a random press to the
    settled table for one step and solves the identical ContactProblem with
    the Gauss-Seidel reference and each k-sided pyramid LCP.
    """
    rng = np.random.default_rng(seed)
    scenario = load_scenario("table")
    scene = scenario.build()
    scene.contact_cap = cap
    _set_friction(scene, mu)
    for _ in range(settle_steps):
        step_scene(scene)
    table = scene.body("table")
    tight = SolverConfig(eps1=1e-9, eps2=1e-10, max_iters=30000)
    report = BenchmarkReport(columns=[
        "case", "m", "solver", "k", "gamma_pct", "iterations", "converged",
        "wall_solve_s",
    ])
    gammas = {k: [] for k in k_list}
    for case in range(loads):
        ang = rng.uniform(0, 2 * np.pi)
        press = rng.uniform(20.0, 120.0)
        shear = rng.uniform(5.0, 40.0)
        force = np.array([shear * np.cos(ang), shear * np.sin(ang), -press])
        step_scene(scene, nodal_loads={"table": _tabletop_load(table, force)})
        problem = scene.last_diagnostics.problems[0]
        t0 = time.perf_counter()
        ref = solve_nlgs(problem, tight)
        t_ref = time.perf_counter() - t0
        report.append(case=case, m=problem.m, solver="nlgs", k=0,
                      gamma_pct=0.0, iterations=ref.iterations,
                      converged=ref.converged, wall_solve_s=t_ref)
        for k in k_list:
            t0 = time.perf_counter()
            try:
                pyr = solve_pyramid(problem, k)
                gamma = gap_metric(pyr.f, ref.f)
                ok = True
            except SolverError:
                gamma, ok = None, False
            t_k = time.perf_counter() - t0
            if ok:
                gammas[k].append(gamma)
            report.append(case=case, m=problem.m, solver="pyramid", k=k,
                          gamma_pct=gamma, iterations=0, converged=ok,
                          wall_solve_s=t_k)
        for _ in range(5):
            step_scene(scene)
    means = {k: float(np.mean(gammas[k])) for k in k_list if gammas[k]}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "table_compare.csv")
        plots.save_gamma_curve(
            out / "table_compare_gamma.png", list(k_list),
            [means[k] for k in k_list], [gammas[k] for k in k_list],
        )
    return report, means


def run_complexity(m_list=(8, 16, 32, 64), seed=0, sweeps=3000, repeats=5,
                   pyramid_k=8, out_dir=None):
    """Wall-time scaling of the Gauss-Seidel sweeps vs the pyramid LCP.

    The Gauss-Seidel runs a fixed number of sweeps per solve with all
    contacts active, so the fitted log-log slope measures per-iteration
    work; the pyramid side is the full build-plus-Lemke time.
    """
    scenario = load_scenario("table_fine")
    scene = scenario.build()
    for _ in range(60):
        step_scene(scene)
    table = scene.body("table")
    press = _tabletop_load(table, np.array([5.0, 3.0, -400.0]))
    # quasi-static pressed state with the full contact set, then slice
    # sub-problems of the requested sizes out of the one assembled operator
    for _ in range(15):
        step_scene(scene, nodal_loads={"table": press})
    full = scene.last_diagnostics.problems[0]
    if full.m < max(m_list):
        raise RuntimeError(
            f"scene sustains only {full.m} contacts, need {max(m_list)}"
        )
    fixed_cfg = SolverConfig(eps1=1e-9, eps2=1e-300, max_iters=sweeps)
    report = BenchmarkReport(columns=[
        "m", "solver", "k", "sweeps", "active_fraction", "wall_solve_s",
    ])
    gs_times, pyr_times = [], []
    for m in m_list:
        problem = extract_subproblem(
            full, np.unique(np.linspace(0, full.m - 1, m).round().astype(int))
        )
        if problem.m != m:
            raise RuntimeError(f"expected {m} contacts, got {problem.m}")
        ref = solve_nlgs(problem, SolverConfig(eps2=1e-8, max_iters=20000))
        active = float(np.mean(ref.f[0::3] > 1e-9))
        best = np.inf
        for _ in range(repeats):
            f0 = ref.f.copy()
            t0 = time.perf_counter()
            solve_nlgs(problem, fixed_cfg, f0=f0)
            best = min(best, time.perf_counter() - t0)
        gs_times.append(best)
        report.append(m=m, solver="nlgs", k=0, sweeps=sweeps,
                      active_fraction=active, wall_solve_s=best)
        t0 = time.perf_counter()
        try:
            solve_pyramid(problem, pyramid_k)
            t_p = time.perf_counter() - t0
        except SolverError:
            t_p = None
        pyr_times.append(t_p)
        report.append(m=m, solver="pyramid", k=pyramid_k, sweeps=0,
                      active_fraction=active, wall_solve_s=t_p)
    fit = np.polyfit(np.log(np.array(m_list, float)), np.log(gs_times), 1)
    exponent = float(fit[0])
    summary = {
        "exponent": exponent,
        "gs_times": gs_times,
        "pyramid_times": pyr_times,
        "crossover_ratio": (pyr_times[-1] / gs_times[-1]
                            if pyr_times[-1] else None),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "complexity.csv")
        plots.save_time_curves(
            out / "complexity_times.png", list(m_list),
            {"exact cone (GS)": gs_times, f"pyramid k={pyramid_k}": pyr_times},
        )
    return report, summary


def _leg_labels(problem):
    return np.array([
        (pr.point_p[0] > 0) * 2 + (pr.point_p[1] > 0) for pr in problem.pairs
    ])


def _assembled_table_problem(name, settle_steps=60):
    scenario = load_scenario(name)
    scene = scenario.build()
    for _ in range(settle_steps):
        step_scene(scene)
    return scene.last_diagnostics.problems[0]


def run_delassus_visualization(out_dir=None, settle_steps=60):
    """W structure of the plain and reinforced tables (heatmaps + stats)."""
    plain = _assembled_table_problem("table", settle_steps)
    reinforced = _assembled_table_problem("table_reinforced", settle_steps)

    def dominance(problem):
        m = problem.m
        legs = _leg_labels(problem)
        blocks = np.abs(problem.W).reshape(m, 3, m, 3).transpose(0, 2, 1, 3)
        bmax = blocks.max(axis=(2, 3))
        same = max(bmax[i, j] for i in range(m) for j in range(m)
                   if i != j and legs[i] == legs[j])
        cross = max(bmax[i, j] for i in range(m) for j in range(m)
                    if legs[i] != legs[j])
        return same, cross

    def cross_leg_tangential_x(problem):
        m = problem.m
        legs = _leg_labels(problem)
        best = 0.0
        for i in range(m):
            for j in range(m):
                if (legs[i] >= 2) != (legs[j] >= 2) and legs[i] % 2 == legs[j] % 2:
                    best = max(best, abs(problem.W[3 * i + 1, 3 * j + 1]))
        return best

    same, cross = dominance(plain)
    stats = {
        "same_leg_max": same,
        "cross_leg_max": cross,
        "dominance_ratio": same / cross,
        "plain_cross_x_tangential": cross_leg_tangential_x(plain),
        "reinforced_cross_x_tangential": cross_leg_tangential_x(reinforced),
    }
    report = BenchmarkReport(columns=["scene", "m", "quantity", "value"])
    for scene_name, problem in (("table", plain),
                                ("table_reinforced", reinforced)):
        s, c = dominance(problem)
        report.append(scene=scene_name, m=problem.m,
                      quantity="same_leg_block_max", value=s)
        report.append(scene=scene_name, m=problem.m,
                      quantity="cross_leg_block_max", value=c)
        report.append(scene=scene_name, m=problem.m,
                      quantity="cross_leg_x_tangential",
                      value=cross_leg_tangential_x(problem))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "delassus.csv")
        from .contact_space import dump_contact_problem

        for scene_name, problem in (("table", plain),
                                    ("table_reinforced", reinforced)):
            dump_contact_problem(problem, out / f"{scene_name}_w.csv",
                                 out / f"{scene_name}_gaps.csv")
            grids = {
                "normal nn": np.abs(problem.W[0::3, 0::3]),
                "tangential t1": np.abs(problem.W[1::3, 1::3]),
                "tangential t2": np.abs(problem.W[2::3, 2::3]),
            }
            plots.save_delassus_heatmaps(
                out / f"{scene_name}_delassus.png", grids,
                f"Delassus operator, {scene_name}",
            )
    return report, stats


def extract_snap_signature(times, forces, smooth_window=15):
    """Phase markers of a snap force profile.

    Returns dict with peak force/time, the post-peak minimum within 0.2 s,
    the drop fraction, and the worst drawdown during the rise (0 = strictly
    monotone after smoothing).
    """
    times = np.asarray(times)
    forces = np.asarray(forces)
    w = smooth_window
    sm = np.convolve(forces, np.ones(w) / w, mode="same")
    peak_i = int(np.argmax(sm))
    peak = float(sm[peak_i])
    baseline = float(np.median(sm[: max(peak_i // 4, 8)]))
    rise_start = peak_i
    thresh = baseline + 0.15 * (peak - baseline)
    while rise_start > 0 and sm[rise_start - 1] > thresh:
        rise_start -= 1
    rise = sm[rise_start:peak_i + 1]
    drawdown = 0.0
    if len(rise) > 1:
        running = np.maximum.accumulate(rise)
        drawdown = float((running - rise).max() / max(peak, 1e-12))
    dt = times[1] - times[0] if len(times) > 1 else 1.0
    horizon = peak_i + int(round(0.2 / dt))
    after_min = float(sm[peak_i:horizon].min()) if horizon > peak_i else peak
    return {
        "baseline": baseline,
        "peak": peak,
        "peak_time": float(times[peak_i]),
        "post_min_0p2s": after_min,
        "drop_fraction": 1.0 - after_min / peak if peak > 0 else 0.0,
        "rise_drawdown": drawdown,
        "rise_start_time": float(times[rise_start]),
    }


def run_snap_in(pipe="rigid", insertion_steps=600, withdraw=True,
                withdraw_mu=0.8, seed=0, out_dir=None):
    """Scripted snap-in (and optional snap-out) with force logging.

    Insertion follows the scenario's scripted descent; the withdrawal phase
    raises the friction coefficient to withdraw_mu and pulls the target
    back up. Returns (report, summary) with the phase signature; the
    signature check failing is reported, not raised.
    """
    name = "snap_in" if pipe == "rigid" else "snap_in_deformable"
    scenario = load_scenario(name)
    scene = scenario.build()
    clip = scene.body("clip")
    pipe_body = scene.body("pipe")
    pipe_rest = pipe_body.world_vertices().copy()
    report = BenchmarkReport(columns=[
        "phase", "step", "time", "force_n", "fx", "fy", "fz", "clip_z",
        "contacts", "converged", "wall_step_s",
    ])
    times, forces = [], []
    pipe_disp = 0.0
    for i in range(insertion_steps):
        t0 = time.perf_counter()
        snap = step_scripted(scene, scenario.script)
        wall = time.perf_counter() - t0
        f = snap.coupling_wrench[:3]
        times.append(scene.time)
        forces.append(float(np.linalg.norm(f)))
        pipe_disp = max(pipe_disp, float(np.abs(
            pipe_body.world_vertices() - pipe_rest).max()))
        report.append(phase="insertion", step=scene.step_index,
                      time=scene.time, force_n=forces[-1], fx=f[0], fy=f[1],
                      fz=f[2], clip_z=clip.frame.position[2],
                      contacts=len(snap.contacts),
                      converged=scene.last_diagnostics.converged,
                      wall_step_s=wall)
    signature = extract_snap_signature(times, forces)
    signature["pipe_max_displacement"] = pipe_disp
    signature["seated_z"] = float(clip.frame.position[2])
    signature["signature_ok"] = bool(
        signature["peak"] > 2.0 * signature["baseline"]
        and signature["drop_fraction"] >= 0.5
        and signature["rise_drawdown"] <= 0.10
    )

    if withdraw:
        _set_friction(scene, withdraw_mu)
        t0 = scene.time
        anchor_target = scenario.script.targets[-1][1]
        up = anchor_target + np.array([0, 0, 0.040])
        wd = Script()
        wd.targets = [(t0, anchor_target, None), (t0 + 1.2, up, None),
                      (t0 + 2.0, up, None)]
        wtimes, wforces = [], []
        for i in range(700):
            t1 = time.perf_counter()
            snap = step_scripted(scene, wd)
            wall = time.perf_counter() - t1
            f = snap.coupling_wrench[:3]
            wtimes.append(scene.time)
            wforces.append(float(np.linalg.norm(f)))
            pipe_disp = max(pipe_disp, float(np.abs(
                pipe_body.world_vertices() - pipe_rest).max()))
            report.append(phase="withdrawal", step=scene.step_index,
                          time=scene.time, force_n=wforces[-1], fx=f[0],
                          fy=f[1], fz=f[2], clip_z=clip.frame.position[2],
                          contacts=len(snap.contacts),
                          converged=scene.last_diagnostics.converged,
                          wall_step_s=wall)
        wsm = np.convolve(wforces, np.ones(15) / 15, mode="same")
        signature["withdrawal_peak"] = float(wsm.max())
        signature["withdrawal_exceeds_insertion"] = bool(
            wsm.max() > signature["peak"]
        )
        signature["released"] = bool(report.rows[-1]["contacts"] == 0)
        signature["pipe_max_displacement"] = pipe_disp
        times = times + wtimes
        forces = forces + wforces

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / f"snap_in_{pipe}.csv")
        markers = {"peak": signature["peak_time"]}
        plots.save_force_profile(
            out / f"snap_in_{pipe}_profile.png", times, forces,
            markers=markers, title=f"snap-in force profile ({pipe} pipe)",
        )
    return report, signature


def run_timing(scenario_name="table_fine", contacts=30, mu=0.0, steps=500,
               settle_steps=80, seed=0, out_dir=None):
    """Per-step contact-solve wall time at a sustained contact count."""
    scenario = load_scenario(scenario_name)
    scene = scenario.build()
    scene.contact_cap = contacts
    _set_friction(scene, mu)
    for _ in range(settle_steps):
        step_scene(scene)
    report = BenchmarkReport(columns=[
        "step", "m", "iterations", "converged", "wall_solve_s",
    ])
    solve_times = []
    iters = []
    for _ in range(steps):
        step_scene(scene)
        d = scene.last_diagnostics
        solve_times.append(d.solve_seconds)
        iters.append(d.iterations)
        report.append(step=scene.step_index, m=d.n_contacts,
                      iterations=d.iterations, converged=d.converged,
                      wall_solve_s=d.solve_seconds)
    solve_times = np.array(solve_times)
    stats = {
        "mean_s": float(solve_times.mean()),
        "cv": float(solve_times.std() / solve_times.mean()),
        "mean_iterations": float(np.mean(iters)),
        "contacts": contacts,
        "mu": mu,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / f"timing_m{contacts}_mu{mu}.csv")
        plots.save_timing_series(
            out / f"timing_m{contacts}_mu{mu}.png", solve_times * 1e3,
            title=f"solve time, {contacts} contacts, mu={mu}",
        )
    return report, stats
