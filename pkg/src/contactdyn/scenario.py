"""Scenario files: the single source of truth for every experiment.

Structured text with repeated sections: `[scene]` (globals), `[body]` (one
per body), `[solver]`, `[coupling]`, `[script]`. Keys are lowercase snake
case, values SI. Bodies reference either a mesh file (`mesh = path`) or a
procedural shape (`shape = table|box|bar|clip|cylinder|floor` with
`shape_args = k=v ...`). Scripts hold timed coupling targets, attach and
detach events, and load programs.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import shapes
from .coupling import VirtualCoupling
from .dynamics import (
    FixedBody,
    SceneState,
    attach_coupling,
    detach_coupling,
    make_corotational_body,
    make_deformable_body,
    make_rigid_body,
)
from .fem import Material
from .mesh import load_mesh
from .solvers import SolverConfig


class ScenarioError(ValueError):
    pass


SHAPES = {
    "box": shapes.box_mesh,
    "bar": shapes.bar_mesh,
    "table": shapes.table_mesh,
    "clip": shapes.clip_mesh,
    "cylinder": shapes.cylinder_mesh,
    "floor": shapes.floor_mesh,
}


def _parse_value(raw: str):
    parts = raw.split()
    if len(parts) > 1:
        return [_parse_value(p) for p in parts]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_scenario_text(text: str, base_dir: Path = None) -> "Scenario":
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = (line[1:-1].strip().lower(), [])
            sections.append(current)
            continue
        if current is None:
            raise ScenarioError(f"line {lineno}: key outside any section")
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        current[1].append((key.lower(), val))
    return Scenario.from_sections(sections, base_dir=base_dir)


def load_scenario(path_or_name) -> "Scenario":
    """Load a scenario file; bare names resolve to packaged scenarios."""
    path = Path(path_or_name)
    if not path.exists():
        candidate = importlib.resources.files("contactdyn").joinpath(
            "scenarios", f"{path_or_name}.scene"
        )
        if candidate.is_file():
            return parse_scenario_text(candidate.read_text(), base_dir=None)
        raise ScenarioError(f"scenario {path_or_name!r} not found")
    return parse_scenario_text(path.read_text(), base_dir=path.parent)


@dataclass
class BodySpec:
    name: str
    kind: str
    material: Material
    mesh_source: object      # ("file", path) | ("shape", name, kwargs)
    position: np.ndarray
    orientation: np.ndarray
    mass: float = None
    anchor_boxes: list = field(default_factory=list)

    def build_mesh(self, base_dir=None):
        tag = self.mesh_source[0]
        if tag == "file":
            path = Path(self.mesh_source[1])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if not path.exists():
                raise ScenarioError(f"mesh file {path} does not exist")
            return load_mesh(path)
        name, kwargs = self.mesh_source[1], self.mesh_source[2]
        return SHAPES[name](**kwargs)


@dataclass
class ScriptEvent:
    time: float
    kind: str                # attach | detach | target | force | wrench
    data: dict


@dataclass
class Script:
    """Timed inputs: coupling targets (interpolated), events, load windows."""

    events: list = field(default_factory=list)
    targets: list = field(default_factory=list)   # (t, pos, quat|None)
    loads: list = field(default_factory=list)     # (body, t0, t1, F, tau)
    _fired: set = field(default_factory=set)

    def reset(self):
        self._fired = set()

    def target_at(self, t):
        if not self.targets:
            return None
        ts = [tp[0] for tp in self.targets]
        if t <= ts[0]:
            sel = self.targets[0]
            return sel[1], sel[2]
        if t >= ts[-1]:
            sel = self.targets[-1]
            return sel[1], sel[2]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        t0, p0, q0 = self.targets[i]
        t1, p1, q1 = self.targets[i + 1]
        a = (t - t0) / (t1 - t0)
        pos = (1 - a) * np.asarray(p0) + a * np.asarray(p1)
        quat = q1 if q1 is not None else q0
        return pos, quat

    def apply(self, scene: SceneState):
        """Fire due events and return (nodal_loads, wrenches) for this step."""
        t = scene.time
        for i, ev in enumerate(self.events):
            if ev.time <= t and i not in self._fired:
                self._fired.add(i)
                if ev.kind == "attach":
                    attach_coupling(scene, ev.data["body"], ev.data["point"],
                                    radius=ev.data.get("radius"))
                elif ev.kind == "detach":
                    detach_coupling(scene)
        if (scene.coupling is not None
                and scene.coupling.attached_body is not None):
            tgt = self.target_at(t)
            if tgt is not None:
                scene.coupling.set_target(tgt[0], tgt[1])
        nodal_loads = {}
        wrenches = {}
        for body, t0, t1, force, torque in self.loads:
            if not (t0 <= t < t1):
                continue
            b = scene.body(body)
            if b.kind in ("deformable", "corotational") and torque is None:
                fem = b.fem
                mdiag = fem.mass.diagonal()
                load = np.zeros(fem.n_dofs)
                for k in range(3):
                    load[k::3] = force[k] * mdiag[k::3] / mdiag[k::3].sum()
                nodal_loads[body] = nodal_loads.get(body, 0) + load
            else:
                f0, tau0 = wrenches.get(body, (np.zeros(3), np.zeros(3)))
                wrenches[body] = (f0 + np.asarray(force),
                                  tau0 + (np.zeros(3) if torque is None
                                          else np.asarray(torque)))
        return nodal_loads, wrenches


@dataclass
class Scenario:
    name: str
    bodies: list
    gravity: np.ndarray
    dt: float
    cd_threshold: float
    contact_cap: int
    seed: int
    solver: SolverConfig
    coupling_spec: dict
    script: Script
    base_dir: Path = None

    @classmethod
    def from_sections(cls, sections, base_dir=None):
        scene_kv = {}
        solver_kv = {}
        coupling_kv = {}
        bodies = []
        script = Script()
        for name, entries in sections:
            if name == "scene":
                scene_kv.update({k: _parse_value(v) for k, v in entries})
            elif name == "solver":
                solver_kv.update({k: _parse_value(v) for k, v in entries})
            elif name == "coupling":
                coupling_kv.update({k: _parse_value(v) for k, v in entries})
            elif name == "body":
                bodies.append(cls._parse_body(entries))
            elif name == "script":
                cls._parse_script(entries, script)
            else:
                raise ScenarioError(f"unknown section [{name}]")
        names = [b.name for b in bodies]
        if len(set(names)) != len(names):
            raise ScenarioError("body names must be unique")
        solver = SolverConfig(
            eps1=float(solver_kv.get("eps1", 1e-9)),
            eps2=float(solver_kv.get("eps2", 1e-4)),
            max_iters=int(solver_kv.get("max_iters", 500)),
            warm_start=bool(solver_kv.get("warm_start", True)),
            time_budget=solver_kv.get("time_budget"),
        )
        return cls(
            name=str(scene_kv.get("name", "scene")),
            bodies=bodies,
            gravity=np.asarray(scene_kv.get("gravity", [0, 0, -9.81]), float),
            dt=float(scene_kv.get("dt", 0.003)),
            cd_threshold=float(scene_kv.get("cd_threshold", 0.002)),
            contact_cap=(int(scene_kv["contact_cap"])
                         if "contact_cap" in scene_kv else None),
            seed=int(scene_kv.get("seed", 0)),
            solver=solver,
            coupling_spec=coupling_kv,
            script=script,
            base_dir=base_dir,
        )

    @staticmethod
    def _parse_body(entries) -> BodySpec:
        kv = {}
        anchors = []
        shape_args = {}
        for k, v in entries:
            if k == "anchor_box":
                vals = [float(x) for x in v.split()]
                if len(vals) != 6:
                    raise ScenarioError("anchor_box needs 6 numbers")
                anchors.append((np.array(vals[:3]), np.array(vals[3:])))
            elif k == "shape_args":
                for item in v.split():
                    sk, sv = item.split("=", 1)
                    shape_args[sk] = _parse_value(sv)
            else:
                kv[k] = v
        if "name" not in kv or "kind" not in kv:
            raise ScenarioError("[body] needs name and kind")
        kind = kv["kind"].strip()
        if kind not in ("fixed", "rigid", "deformable", "corotational"):
            raise ScenarioError(f"unknown body kind {kind!r}")
        if "mesh" in kv:
            source = ("file", kv["mesh"])
        elif "shape" in kv:
            shape = kv["shape"].strip()
            if shape not in SHAPES:
                raise ScenarioError(f"unknown shape {shape!r}")
            source = ("shape", shape, shape_args)
        else:
            raise ScenarioError("[body] needs mesh or shape")
        mat = Material(
            young_modulus=float(kv.get("young_modulus", 1e6)),
            poisson_ratio=float(kv.get("poisson_ratio", 0.3)),
            density=float(kv.get("density", 1000.0)),
            rayleigh_mass=float(kv.get("rayleigh_mass", 0.1)),
            rayleigh_stiffness=float(kv.get("rayleigh_stiffness", 0.01)),
            friction=float(kv.get("friction", 0.3)),
        )
        position = np.asarray(_parse_value(kv.get("position", "0 0 0")), float)
        orientation = np.asarray(
            _parse_value(kv.get("orientation", "1 0 0 0")), float
        )
        mass = float(kv["mass"]) if "mass" in kv else None
        return BodySpec(
            name=kv["name"].strip(), kind=kind, material=mat,
            mesh_source=source, position=position.reshape(3),
            orientation=orientation.reshape(4), mass=mass,
            anchor_boxes=anchors,
        )

    @staticmethod
    def _parse_script(entries, script: Script):
        for k, v in entries:
            parts = v.split()
            if k == "attach":
                script.events.append(ScriptEvent(
                    time=float(parts[0]), kind="attach",
                    data={"body": parts[1],
                          "point": np.array([float(x) for x in parts[2:5]]),
                          "radius": float(parts[5]) if len(parts) > 5 else None},
                ))
            elif k == "detach":
                script.events.append(
                    ScriptEvent(time=float(parts[0]), kind="detach", data={})
                )
            elif k == "target":
                pos = np.array([float(x) for x in parts[1:4]])
                quat = (np.array([float(x) for x in parts[4:8]])
                        if len(parts) >= 8 else None)
                script.targets.append((float(parts[0]), pos, quat))
            elif k == "force":
                body = parts[0]
                t0, t1 = float(parts[1]), float(parts[2])
                force = np.array([float(x) for x in parts[3:6]])
                script.loads.append((body, t0, t1, force, None))
            elif k == "wrench":
                body = parts[0]
                t0, t1 = float(parts[1]), float(parts[2])
                force = np.array([float(x) for x in parts[3:6]])
                torque = np.array([float(x) for x in parts[6:9]])
                script.loads.append((body, t0, t1, force, torque))
            else:
                raise ScenarioError(f"unknown script key {k!r}")
        script.targets.sort(key=lambda t: t[0])
        script.events.sort(key=lambda e: e.time)

    def build(self) -> SceneState:
        """Instantiate the scene; the script is reset and ready to apply."""
        bodies = {}
        for spec in self.bodies:
            mesh = spec.build_mesh(self.base_dir)
            mat = spec.material
            if spec.mass is not None:
                volume = mesh.tet_volumes().sum()
                mat = Material(
                    mat.young_modulus, mat.poisson_ratio, spec.mass / volume,
                    rayleigh_mass=mat.rayleigh_mass,
                    rayleigh_stiffness=mat.rayleigh_stiffness,
                    friction=mat.friction,
                )
            if spec.kind == "fixed":
                bodies[spec.name] = FixedBody(
                    name=spec.name, mesh=mesh, material=mat,
                    position=spec.position,
                )
            elif spec.kind == "rigid":
                bodies[spec.name] = make_rigid_body(
                    spec.name, mesh, mat, spec.position, spec.orientation,
                )
            elif spec.kind == "deformable":
                shifted = type(mesh)(
                    mesh.vertices + spec.position, mesh.tets, mesh.surface_tris
                )
                anchored = _anchored_nodes(shifted, spec.anchor_boxes)
                body = make_deformable_body(
                    spec.name, shifted, mat, self.dt, dirichlet_nodes=anchored
                )
                bodies[spec.name] = body
            else:
                body = make_corotational_body(
                    spec.name, mesh, mat, self.dt, spec.position,
                    spec.orientation,
                )
                bodies[spec.name] = body
        coupling = None
        if self.coupling_spec or any(e.kind == "attach"
                                     for e in self.script.events):
            kv = self.coupling_spec
            coupling = VirtualCoupling(
                k_t=float(kv.get("k_t", 200.0)),
                b_t=float(kv.get("b_t", 2.0)),
                k_r=float(kv.get("k_r", 1.0)),
                b_r=float(kv.get("b_r", 0.01)),
                f_max=float(kv.get("f_max", 20.0)),
                tau_max=float(kv.get("tau_max", 5.0)),
            )
        self.script.reset()
        return SceneState(
            bodies=bodies, gravity=self.gravity, dt=self.dt,
            cd_threshold=self.cd_threshold, solver=self.solver,
            coupling=coupling, contact_cap=self.contact_cap,
        )

    def run(self, steps: int, on_step=None):
        """Build and advance the scenario; on_step(scene, snapshot) per step."""
        from .dynamics import step_scene

        scene = self.build()
        for _ in range(steps):
            nodal, wrench = self.script.apply(scene)
            snap = step_scene(scene, nodal_loads=nodal, wrenches=wrench)
            if on_step is not None:
                on_step(scene, snap)
        return scene


def step_scripted(scene: SceneState, script: Script):
    """One scripted step of an already-built scene."""
    from .dynamics import step_scene

    nodal, wrench = script.apply(scene)
    return step_scene(scene, nodal_loads=nodal, wrenches=wrench)


def _anchored_nodes(mesh, boxes):
    nodes = set()
    for lo, hi in boxes:
        inside = np.all((mesh.vertices >= lo) & (mesh.vertices <= hi), axis=1)
        nodes.update(int(i) for i in np.nonzero(inside)[0])
    return nodes
