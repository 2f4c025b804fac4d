"""Scene time stepping: free motion, contact correction, corotational split.

Pipeline per step: free motion for every body, proximity detection on the
free configurations, contact grouping, Delassus assembly (deformable
compliance, rigid inertia scaling, or their corotational sum), Gauss-Seidel
solve per group, and corrective displacement/velocity updates. Contact
forces have force units; rigid corrections use A^-1 J^T f dt so the dt^2
scaling of the assembled operator and the applied impulses agree.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .collision import detect_proximities
from .contact_space import (
    BodyContactMap,
    DeformableSource,
    RigidSource,
    assemble_delassus,
    assemble_H,
    build_frame,
    free_gaps,
    group_contacts,
)
from .coupling import VirtualCoupling, integrate_coupled_frame
from .fem import FemBody, Material, free_motion_solve
from .mesh import TetMesh
from .rigid import (
    RigidFrame,
    build_contact_jacobian,
    integrate_pose,
    mesh_inertia,
    rigid_free_step,
)
from .solvers import SolverConfig, solve_nlgs


class SceneError(RuntimeError):
    pass


@dataclass
class FixedBody:
    """Immovable environment geometry (zero compliance)."""

    name: str
    mesh: TetMesh
    material: Material
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    kind = "fixed"

    def world_vertices(self) -> np.ndarray:
        return self.mesh.vertices + self.position

    def grabbable(self) -> bool:
        return False


@dataclass
class DeformableBody:
    """Linear FEM body whose displacement field lives in world axes."""

    name: str
    fem: FemBody
    rest_world: np.ndarray

    kind = "deformable"

    @property
    def material(self) -> Material:
        return self.fem.material

    @property
    def mesh(self) -> TetMesh:
        return self.fem.mesh

    def world_vertices(self, u=None) -> np.ndarray:
        u = self.fem.u if u is None else u
        return self.rest_world + u.reshape(-1, 3)

    def grabbable(self) -> bool:
        return False


@dataclass
class RigidBody:
    name: str
    mesh: TetMesh          # local coordinates, COM at the origin
    material: Material
    frame: RigidFrame

    kind = "rigid"

    def world_vertices(self, frame=None) -> np.ndarray:
        frame = self.frame if frame is None else frame
        return frame.transform(self.mesh.vertices)

    def grabbable(self) -> bool:
        return True


@dataclass
class CorotationalBody:
    """Rigid frame carrying a linear deformable displacement field.

    The FEM state u is expressed in the body frame; global motion is owned
    by the frame, which keeps the mass/stiffness ratio decoupled from the
    time step.
    """

    name: str
    fem: FemBody           # mesh in body frame, COM at the origin
    frame: RigidFrame
    grab_nodes: frozenset = frozenset()
    _fem_unpinned: FemBody = None

    kind = "corotational"

    @property
    def material(self) -> Material:
        return self.fem.material

    @property
    def mesh(self) -> TetMesh:
        return self.fem.mesh

    def world_vertices(self, frame=None, u=None) -> np.ndarray:
        frame = self.frame if frame is None else frame
        u = self.fem.u if u is None else u
        return frame.transform(self.mesh.vertices + u.reshape(-1, 3))

    def grabbable(self) -> bool:
        return True


def make_deformable_body(name, mesh, material, dt,
                         dirichlet_nodes=()) -> DeformableBody:
    fem = FemBody.assemble(mesh, material, dt, dirichlet_nodes=dirichlet_nodes)
    return DeformableBody(name=name, fem=fem, rest_world=mesh.vertices.copy())


def make_rigid_body(name, mesh, material, position, orientation=(1, 0, 0, 0),
                    mass_override=None) -> RigidBody:
    """Rigid body from a mesh; local coordinates are re-centered on the COM."""
    mass, com, inertia = mesh_inertia(mesh, material.density)
    if mass_override is not None:
        scale = mass_override / mass
        mass *= scale
        inertia = inertia * scale
    local = TetMesh(mesh.vertices - com, mesh.tets, mesh.surface_tris)
    frame = RigidFrame(
        position=np.asarray(position, dtype=np.float64) + com,
        orientation=np.asarray(orientation, dtype=np.float64),
        mass=mass, inertia_body=inertia,
    )
    return RigidBody(name=name, mesh=local, material=material, frame=frame)


def make_corotational_body(name, mesh, material, dt, position,
                           orientation=(1, 0, 0, 0)) -> CorotationalBody:
    mass, com, inertia = mesh_inertia(mesh, material.density)
    local = TetMesh(mesh.vertices - com, mesh.tets, mesh.surface_tris)
    # rigid modes are deflated out of the deformable field: the frame owns
    # the global motion, the field is pure deformation about it
    fem = FemBody.assemble(local, material, dt, deflate_rigid_modes=True)
    frame = RigidFrame(
        position=np.asarray(position, dtype=np.float64) + com,
        orientation=np.asarray(orientation, dtype=np.float64),
        mass=mass, inertia_body=inertia,
    )
    body = CorotationalBody(name=name, fem=fem, frame=frame)
    body._fem_unpinned = fem
    return body


def set_grab(body: CorotationalBody, grab_point_world, radius=None):
    """Pin the deformable field to the frame around the grabbed spot.

    Nodes within radius of the grab point become Dirichlet-fixed at their
    current displacement; the implicit system is refactorized. Returns the
    pinned node set.
    """
    local = body.frame.world_to_local(np.asarray(grab_point_world, float))
    if radius is None:
        radius = 2.0 * body.fem.mesh.mean_edge_length()
    d = np.linalg.norm(body.fem.mesh.vertices - local, axis=1)
    nodes = frozenset(int(i) for i in np.nonzero(d <= radius)[0])
    if not nodes:
        raise SceneError(
            f"grab radius {radius:.4g} m captures no node of {body.name!r}"
        )
    pinned = body._fem_unpinned.with_dirichlet(nodes)
    pinned.dirichlet_values = body.fem.u.copy()
    body.fem = pinned
    body.grab_nodes = nodes
    return nodes


def release_grab(body: CorotationalBody):
    """Restore the cached unpinned factorization (bit-for-bit)."""
    body.fem = body._fem_unpinned
    body.grab_nodes = frozenset()


def _contact_map(body, rotation=None) -> BodyContactMap:
    nodes = body.fem.surface_nodes
    node_col = {int(n): i for i, n in enumerate(nodes)}
    return BodyContactMap(
        body=body.name, tris=body.mesh.surface_tris, node_col=node_col,
        n_nodes=len(nodes), rotation=rotation,
    )


def corotational_compliance(body: CorotationalBody, dt: float, pairs, frames,
                            signs, points_world, frame=None):
    """Contact compliance contributions H C H^T + J (A/dt^2)^-1 J^T."""
    frame = body.frame if frame is None else frame
    axes = [f.axes() for f in frames]
    jac = build_contact_jacobian(frame, points_world, axes, signs)
    return [
        DeformableSource(_contact_map(body, rotation=frame.rotation),
                         body.fem.c_surf),
        RigidSource(jac, frame.generalized_inertia(), dt),
    ]


@dataclass
class ContactRecord:
    """Per-contact snapshot entry: world point, frame, force, status."""

    point: np.ndarray
    normal: np.ndarray
    force_world: np.ndarray
    force_contact: np.ndarray
    status: str
    body_a: str
    body_b: str
    feature: tuple
    gap: float


@dataclass
class Snapshot:
    step: int
    time: float
    bodies: dict            # name -> {"pose": (pos, quat), "vertices": (n,3)}
    contacts: list
    coupling_wrench: np.ndarray


@dataclass
class StepDiagnostics:
    n_contacts: int = 0
    groups: int = 0
    iterations: int = 0
    converged: bool = True
    solve_seconds: float = 0.0
    problems: list = field(default_factory=list)
    forces: list = field(default_factory=list)


@dataclass
class SceneState:
    """One simulation's bodies, configuration, and accumulated state.

    Owned by exactly one stepper; external inputs arrive as step_scene
    arguments (and the coupling target, written by the session side and
    read once per step).
    """

    bodies: dict
    gravity: np.ndarray
    dt: float
    cd_threshold: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    coupling: VirtualCoupling = None
    contact_cap: int = None
    step_index: int = 0
    time: float = 0.0
    warm_forces: dict = field(default_factory=dict)
    last_contacts: list = field(default_factory=list)
    last_diagnostics: StepDiagnostics = None
    frame_acc: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=np.float64)
        if self.dt <= 0:
            raise SceneError("dt must be > 0")

    def body(self, name):
        return self.bodies[name]

    def total_energy(self) -> float:
        """Kinetic + strain + gravitational potential over all bodies."""
        e = 0.0
        for body in self.bodies.values():
            if body.kind == "fixed":
                continue
            if body.kind in ("deformable", "corotational"):
                e += body.fem.kinetic_energy() + body.fem.strain_energy()
            if body.kind in ("rigid", "corotational"):
                e += body.frame.kinetic_energy()
                e -= body.frame.mass * float(self.gravity @ body.frame.position)
            else:
                mdiag = body.fem.mass.diagonal()[0::3]
                e -= float(mdiag @ (body.world_vertices() @ self.gravity))
        return e


def gravity_nodal_load(fem: FemBody, gravity) -> np.ndarray:
    f = np.zeros(fem.n_dofs)
    mdiag = fem.mass.diagonal()
    for k in range(3):
        f[k::3] = mdiag[k::3] * gravity[k]
    return f


def _pair_friction(scene, pair) -> float:
    mu_a = scene.body(pair.body_a).material.friction
    mu_b = scene.body(pair.body_b).material.friction
    return float(np.sqrt(mu_a * mu_b))


def _coupled(scene, name) -> bool:
    return scene.coupling is not None and scene.coupling.attached_body == name


def _cap_pairs(scene, pairs):
    """Deterministic contact thinning that prefers temporal coherence.

    Contacts that carried force last step keep their slot (stabilizes the
    active set, and with it the warm start); the remaining budget is spread
    evenly over the feature-sorted rest.
    """
    cap = scene.contact_cap
    if cap is None or len(pairs) <= cap:
        return pairs
    keep = []
    rest = []
    for p in pairs:
        key = (p.body_a, p.body_b, p.feature)
        f = scene.warm_forces.get(key)
        if f is not None and abs(f[0]) > scene.solver.eps1:
            keep.append(p)
        else:
            rest.append(p)
    keep.sort(key=lambda p: (str(p.body_a), str(p.body_b), p.feature))
    keep = keep[:cap]
    slots = cap - len(keep)
    if slots > 0 and rest:
        rest.sort(key=lambda p: (str(p.body_a), str(p.body_b), p.feature))
        idx = np.unique(np.linspace(0, len(rest) - 1, slots).round().astype(int))
        keep.extend(rest[i] for i in idx)
    keep.sort(key=lambda p: (str(p.body_a), str(p.body_b), p.feature))
    return keep


def step_scene(scene: SceneState, nodal_loads=None, wrenches=None) -> Snapshot:
    """Advance the scene by one step; returns the post-step snapshot.

    nodal_loads: extra world-frame nodal force fields by body name
    (deformable and corotational bodies); wrenches: extra (force, torque)
    world wrenches by body name (rigid and corotational bodies).
    """
    dt = scene.dt
    nodal_loads = nodal_loads or {}
    wrenches = wrenches or {}
    prev_world = {n: b.world_vertices() for n, b in scene.bodies.items()}

    # 1. free motion
    free_u = {}
    free_frames = {}
    for name, body in scene.bodies.items():
        if body.kind == "fixed":
            continue
        if body.kind in ("rigid", "corotational"):
            force = body.frame.mass * scene.gravity
            torque = np.zeros(3)
            if name in wrenches:
                force = force + np.asarray(wrenches[name][0], float)
                torque = torque + np.asarray(wrenches[name][1], float)
            if _coupled(scene, name):
                frame, _ = integrate_coupled_frame(
                    body.frame, scene.coupling, force, torque, dt
                )
            else:
                frame = rigid_free_step(body.frame, force, torque, dt)
            free_frames[name] = frame
        if body.kind == "deformable":
            f_ext = gravity_nodal_load(body.fem, scene.gravity)
            if name in nodal_loads:
                f_ext = f_ext + nodal_loads[name]
            free_u[name] = free_motion_solve(body.fem, f_ext, dt)
        elif body.kind == "corotational":
            # the frame carries its own mean acceleration; the deformable
            # part sees the residual gravity (zero in free fall, full
            # gravity when supported), expressed in body axes
            resid = scene.gravity - scene.frame_acc.get(name, scene.gravity)
            rot = body.frame.rotation
            load = np.zeros(body.fem.n_dofs)
            mdiag = body.fem.mass.diagonal()
            g_body = rot.T @ resid
            for k in range(3):
                load[k::3] = mdiag[k::3] * g_body[k]
            if name in nodal_loads:
                load += (nodal_loads[name].reshape(-1, 3) @ rot).ravel()
            free_u[name] = free_motion_solve(body.fem, load, dt)

    # 2. detection on the free configurations
    free_world = {}
    for name, body in scene.bodies.items():
        if body.kind == "fixed":
            free_world[name] = prev_world[name]
        elif body.kind == "deformable":
            free_world[name] = body.world_vertices(u=free_u[name][0])
        elif body.kind == "rigid":
            free_world[name] = body.world_vertices(frame=free_frames[name])
        else:
            free_world[name] = body.world_vertices(
                frame=free_frames[name], u=free_u[name][0]
            )
    surfaces = [
        (name, body.mesh.surface_tris, free_world[name])
        for name, body in scene.bodies.items()
    ]
    pairs = detect_proximities(surfaces, scene.cd_threshold)
    pairs = _cap_pairs(scene, pairs)

    # 3./4./5. group, assemble, solve
    groups = group_contacts(pairs)
    diag = StepDiagnostics(n_contacts=len(pairs), groups=len(groups))
    records = []
    nodal_force = {}     # body -> surface-DOF contact force (body axes)
    gen_impulse = {}     # body -> generalized J^T f

    def disp_increment(body_name, pair, side):
        tri = pair.tri_a if side == "p" else pair.tri_b
        bary = pair.bary_p if side == "p" else pair.bary_q
        body = scene.body(body_name)
        tri_nodes = body.mesh.surface_tris[tri]
        return bary @ (free_world[body_name][tri_nodes]
                       - prev_world[body_name][tri_nodes])

    for gi, group in enumerate(groups):
        gpairs = [pairs[i] for i in group.contact_indices]
        frames = [build_frame(p.normal) for p in gpairs]
        dfree = free_gaps(gpairs, frames, disp_increment)
        mu = np.array([_pair_friction(scene, p) for p in gpairs])

        sources = []
        maps = {}
        jacs = {}
        for name in sorted(group.bodies, key=str):
            body = scene.body(name)
            if body.kind == "fixed":
                continue
            signs = np.zeros(len(gpairs))
            points = []
            for c, p in enumerate(gpairs):
                if p.body_a == name:
                    signs[c] = +1.0
                    points.append(p.point_p)
                elif p.body_b == name:
                    signs[c] = -1.0
                    points.append(p.point_q)
                else:
                    points.append(p.point_p)
            if body.kind == "deformable":
                maps[name] = _contact_map(body)
                sources.append(DeformableSource(maps[name], body.fem.c_surf))
            elif body.kind == "rigid":
                axes = [f.axes() for f in frames]
                jacs[name] = build_contact_jacobian(
                    free_frames[name], points, axes, signs
                )
                sources.append(RigidSource(
                    jacs[name], free_frames[name].generalized_inertia(), dt
                ))
            else:
                maps[name] = _contact_map(
                    body, rotation=free_frames[name].rotation
                )
                sources.append(DeformableSource(maps[name], body.fem.c_surf))
                axes = [f.axes() for f in frames]
                jacs[name] = build_contact_jacobian(
                    free_frames[name], points, axes, signs
                )
                sources.append(RigidSource(
                    jacs[name], free_frames[name].generalized_inertia(), dt
                ))
        problem = assemble_delassus(gpairs, frames, sources, dfree, mu,
                                    group_id=gi)

        f0 = None
        if scene.solver.warm_start and scene.warm_forces:
            f0 = np.zeros(3 * problem.m)
            for c, p in enumerate(gpairs):
                key = (p.body_a, p.body_b, p.feature)
                if key in scene.warm_forces:
                    f0[3 * c:3 * c + 3] = scene.warm_forces[key]
        t0 = _time.perf_counter()
        forces = solve_nlgs(problem, scene.solver, f0=f0)
        diag.solve_seconds += _time.perf_counter() - t0
        diag.iterations += forces.iterations
        diag.converged = diag.converged and forces.converged
        diag.problems.append(problem)
        diag.forces.append(forces)

        if maps:
            hops = assemble_H(gpairs, frames, maps)
            for name, h in hops.items():
                nodal_force[name] = h.apply_transpose(forces.f)
        for name, jac in jacs.items():
            gen_impulse[name] = jac.T @ forces.f

        for c, (p, fr) in enumerate(zip(gpairs, frames)):
            fvec = forces.f[3 * c:3 * c + 3]
            fw = fvec[0] * fr.n + fvec[1] * fr.t1 + fvec[2] * fr.t2
            records.append(ContactRecord(
                point=p.point_p.copy(), normal=fr.n.copy(), force_world=fw,
                force_contact=fvec.copy(), status=forces.status[c],
                body_a=p.body_a, body_b=p.body_b, feature=p.feature,
                gap=p.gap,
            ))
            scene.warm_forces[(p.body_a, p.body_b, p.feature)] = fvec.copy()

    # 6. commit corrected states
    for name, body in scene.bodies.items():
        if body.kind == "fixed":
            continue
        if body.kind == "deformable":
            u_free, v_free = free_u[name]
            du = np.zeros(body.fem.n_dofs)
            if name in nodal_force:
                full = np.zeros(body.fem.n_dofs)
                full[body.fem.surface_dofs()] = nodal_force[name]
                du = body.fem.solve(full, increment=True)
            body.fem.u = u_free + du
            body.fem.u_dot = v_free + du / dt
        elif body.kind == "rigid":
            frame = free_frames[name]
            if name in gen_impulse:
                dv = np.linalg.solve(
                    frame.generalized_inertia(), gen_impulse[name]
                ) * dt
                frame = integrate_pose(
                    body.frame, frame.velocity + dv[:3], frame.omega + dv[3:],
                    dt,
                )
            scene.frame_acc[name] = (frame.velocity - body.frame.velocity) / dt
            body.frame = frame
        elif body.kind == "corotational":
            u_free, v_free = free_u[name]
            frame = free_frames[name]
            if name in gen_impulse:
                dv = np.linalg.solve(
                    frame.generalized_inertia(), gen_impulse[name]
                ) * dt
                frame = integrate_pose(
                    body.frame, frame.velocity + dv[:3], frame.omega + dv[3:],
                    dt,
                )
            u_new, v_new = u_free, v_free
            if name in nodal_force:
                full = np.zeros(body.fem.n_dofs)
                full[body.fem.surface_dofs()] = nodal_force[name]
                du = body.fem.solve(full, increment=True)
                u_new = u_free + du
                v_new = v_free + du / dt
            scene.frame_acc[name] = (frame.velocity - body.frame.velocity) / dt
            body.frame = frame
            body.fem.u = u_new
            body.fem.u_dot = v_new

    # 7. advance time
    scene.step_index += 1
    scene.time += dt
    scene.last_contacts = records
    scene.last_diagnostics = diag

    bodies_out = {}
    for name, body in scene.bodies.items():
        if body.kind in ("rigid", "corotational"):
            pose = (body.frame.position.copy(), body.frame.orientation.copy())
        elif body.kind == "fixed":
            pose = (np.asarray(body.position, float), np.array([1.0, 0, 0, 0]))
        else:
            pose = (np.zeros(3), np.array([1.0, 0, 0, 0]))
        bodies_out[name] = {"pose": pose, "vertices": body.world_vertices()}
    return Snapshot(
        step=scene.step_index, time=scene.time, bodies=bodies_out,
        contacts=records,
        coupling_wrench=(scene.coupling.operator_feedback()
                         if scene.coupling is not None else np.zeros(6)),
    )


def attach_coupling(scene: SceneState, body_name: str, grab_point_world,
                    radius=None) -> VirtualCoupling:
    """Anchor the coupling at a grab point; pins corotational grab nodes."""
    if scene.coupling is None:
        raise SceneError("scene has no coupling configured")
    if scene.coupling.attached_body is not None:
        raise SceneError("coupling already attached")
    body = scene.body(body_name)
    if not body.grabbable():
        raise SceneError(f"body {body_name!r} is not grabbable")
    grab = np.asarray(grab_point_world, dtype=np.float64)
    if body.kind == "corotational":
        set_grab(body, grab, radius=radius)  # may raise; coupling untouched
    scene.coupling.attached_body = body_name
    scene.coupling.anchor_local = body.frame.world_to_local(grab)
    scene.coupling.set_target(
        body.frame.position + body.frame.rotation @ scene.coupling.anchor_local,
        body.frame.orientation,
    )
    return scene.coupling


def detach_coupling(scene: SceneState) -> None:
    if scene.coupling is None or scene.coupling.attached_body is None:
        return
    body = scene.body(scene.coupling.attached_body)
    if body.kind == "corotational":
        release_grab(body)
    scene.coupling.attached_body = None
    scene.coupling.anchor_local = None
    scene.coupling.last_applied = None
