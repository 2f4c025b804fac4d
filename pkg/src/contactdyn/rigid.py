"""Generalized rigid dynamics: quaternion frames, inertia, contact Jacobians.

State convention: world-frame linear velocity, body-frame angular velocity,
so the 6x6 generalized inertia A = diag(m I3, I_body) is constant and the
gyroscopic force is b = (0, omega x I omega). Integration is semi-implicit
(symplectic) Euler with a quaternion exponential update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import TetMesh


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q):
    return q / np.linalg.norm(q)


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_exp(rotvec):
    """Unit quaternion of a rotation vector (exponential map)."""
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        return quat_normalize(np.array([1.0, *(0.5 * rotvec)]))
    axis = rotvec / angle
    half = angle / 2
    return np.array([np.cos(half), *(np.sin(half) * axis)])


def quat_log(q):
    """Rotation vector theta * axis of a unit quaternion (geodesic)."""
    q = quat_normalize(q)
    if q[0] < 0:
        q = -q
    s = np.linalg.norm(q[1:])
    if s < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(s, q[0])
    return angle * q[1:] / s


def quat_rotate(q, v):
    return quat_to_matrix(q) @ v


def skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def mesh_inertia(mesh: TetMesh, density: float):
    """Mass, center of mass, and inertia about the COM of a solid tet mesh."""
    x = mesh.vertices[mesh.tets]
    d = x[:, 1:] - x[:, :1]
    vols = np.linalg.det(d) / 6.0
    mass = density * vols.sum()
    centroids = x.mean(axis=1)
    com = density * (vols[:, None] * centroids).sum(axis=0) / mass
    # second moment: integral of x x^T over a tet is V/20 (S + s s^T)
    cov = np.zeros((3, 3))
    for t in range(x.shape[0]):
        v = x[t]
        s = v.sum(axis=0)
        cov += density * vols[t] / 20.0 * (v.T @ v + np.outer(s, s))
    cov -= mass * np.outer(com, com)
    inertia = np.trace(cov) * np.eye(3) - cov
    return mass, com, inertia


@dataclass
class RigidFrame:
    """Generalized rigid state: pose (position + unit quaternion) and
    velocity (world linear, body angular)."""

    position: np.ndarray
    orientation: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mass: float = 1.0
    inertia_body: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.orientation = quat_normalize(
            np.asarray(self.orientation, dtype=np.float64)
        )
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.inertia_body = np.asarray(self.inertia_body, dtype=np.float64)
        if self.mass <= 0 or np.linalg.det(self.inertia_body) <= 0:
            raise ValueError("rigid frame needs positive mass and SPD inertia")

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def generalized_inertia(self) -> np.ndarray:
        a = np.zeros((6, 6))
        a[:3, :3] = self.mass * np.eye(3)
        a[3:, 3:] = self.inertia_body
        return a

    def gyroscopic(self) -> np.ndarray:
        return np.concatenate(
            [np.zeros(3), np.cross(self.omega, self.inertia_body @ self.omega)]
        )

    def transform(self, local_points: np.ndarray) -> np.ndarray:
        return local_points @ self.rotation.T + self.position

    def world_to_local(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p) - self.position)

    def kinetic_energy(self) -> float:
        return 0.5 * float(
            self.mass * self.velocity @ self.velocity
            + self.omega @ (self.inertia_body @ self.omega)
        )


def integrate_pose(frame: RigidFrame, velocity, omega, dt: float) -> RigidFrame:
    """New pose from the given end-of-step velocities (symplectic update)."""
    return replace(
        frame,
        position=frame.position + dt * velocity,
        orientation=quat_normalize(
            quat_mul(frame.orientation, quat_exp(dt * omega))
        ),
        velocity=np.asarray(velocity, dtype=np.float64),
        omega=np.asarray(omega, dtype=np.float64),
    )


def rigid_free_step(frame: RigidFrame, force_world, torque_world,
                    dt: float) -> RigidFrame:
    """Semi-implicit step under an external wrench, no contact forces."""
    torque_body = frame.rotation.T @ np.asarray(torque_world, dtype=np.float64)
    v_new = frame.velocity + dt * np.asarray(force_world) / frame.mass
    gyro = np.cross(frame.omega, frame.inertia_body @ frame.omega)
    w_new = frame.omega + dt * np.linalg.solve(
        frame.inertia_body, torque_body - gyro
    )
    return integrate_pose(frame, v_new, w_new, dt)


def build_contact_jacobian(frame: RigidFrame, points_world, axes_list,
                           signs=None) -> np.ndarray:
    """J mapping (v_world, omega_body) to contact-frame velocities.

    One row per (contact, axis): v_contact = J qdot and Gamma = J^T f.
    axes_list holds per-contact (3, 3) world axes rows (n, t1, t2).
    """
    m = len(points_world)
    if signs is None:
        signs = np.ones(m)
    r_mat = frame.rotation
    j = np.zeros((3 * m, 6))
    for c in range(m):
        r = np.asarray(points_world[c]) - frame.position
        for k in range(3):
            axis = axes_list[c][k]
            j[3 * c + k, :3] = signs[c] * axis
            j[3 * c + k, 3:] = signs[c] * (r_mat.T @ np.cross(r, axis))
    return j
