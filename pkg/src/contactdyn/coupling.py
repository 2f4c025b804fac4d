"""6D virtual coupling between an operator target pose and a grabbed body.

A translational spring-damper anchored at the grab point plus a rotational
spring-damper on the geodesic orientation error. The wrench it produces is
applied to the body's rigid frame and its negation is reported as operator
feedback. Inside the stepper the spring is integrated semi-implicitly
(evaluated at the end-of-step state) so stiff gains stay stable at haptic
time steps; the reported wrench is always the one actually applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rigid import (
    RigidFrame,
    integrate_pose,
    quat_conj,
    quat_log,
    quat_mul,
    quat_normalize,
    skew,
)


class CouplingError(RuntimeError):
    pass


def _clamp(vec: np.ndarray, limit: float) -> np.ndarray:
    n = np.linalg.norm(vec)
    if n > limit:
        return vec * (limit / n)
    return vec


@dataclass
class VirtualCoupling:
    """Gains, saturation limits, and attach state of the 6D coupling."""

    k_t: float = 200.0    # N/m
    b_t: float = 2.0      # N s/m
    k_r: float = 1.0      # N m/rad
    b_r: float = 0.01     # N m s/rad
    f_max: float = 20.0   # N
    tau_max: float = 5.0  # N m
    target_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    target_orientation: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0])
    )
    attached_body: str = None
    anchor_local: np.ndarray = None
    last_applied: np.ndarray = None  # generalized wrench (force, torque) world

    def __post_init__(self):
        if min(self.k_t, self.b_t, self.k_r, self.b_r) < 0:
            raise ValueError("coupling gains must be >= 0")
        if self.f_max <= 0 or self.tau_max <= 0:
            raise ValueError("saturation limits must be > 0")

    def set_target(self, position, orientation=None):
        self.target_position = np.asarray(position, dtype=np.float64)
        if orientation is not None:
            self.target_orientation = quat_normalize(
                np.asarray(orientation, dtype=np.float64)
            )

    def operator_feedback(self) -> np.ndarray:
        """Wrench returned to the operator: the negation of what was applied."""
        if self.last_applied is None:
            return np.zeros(6)
        return -self.last_applied


def coupling_wrench(coupling: VirtualCoupling, anchor_position, anchor_velocity,
                    orientation, omega_world):
    """Spring-damper wrench for the given body state.

    force = clamp(k_t (p_target - p_anchor) - b_t v_anchor, f_max);
    torque = clamp(k_r theta axis - b_r omega, tau_max) with theta axis the
    quaternion-log orientation error.
    """
    if coupling.attached_body is None:
        raise CouplingError("coupling is not attached to a body")
    force = coupling.k_t * (
        coupling.target_position - np.asarray(anchor_position)
    ) - coupling.b_t * np.asarray(anchor_velocity)
    err = quat_log(
        quat_mul(coupling.target_orientation, quat_conj(orientation))
    )
    torque = coupling.k_r * err - coupling.b_r * np.asarray(omega_world)
    return _clamp(force, coupling.f_max), _clamp(torque, coupling.tau_max)


def integrate_coupled_frame(frame: RigidFrame, coupling: VirtualCoupling,
                            ext_force, ext_torque_world, dt: float):
    """One semi-implicit step of a frame driven by the coupling.

    The translational spring is evaluated at the end-of-step anchor state
    (position extrapolated by dt, damping on the new velocity), which keeps
    stiff gains stable; saturated wrenches fall back to an explicit step
    with the clamped constant wrench. Returns (new_frame, applied_wrench)
    with applied_wrench the generalized (force, torque-about-COM) world
    wrench actually added to the body's momentum.
    """
    r_mat = frame.rotation
    r_w = r_mat @ coupling.anchor_local
    anchor = frame.position + r_w
    b_mat = skew(r_w) @ r_mat  # anchor velocity = v - B omega_body
    c_v = coupling.k_t * dt + coupling.b_t
    c_r = coupling.b_r + coupling.k_r * dt
    f0 = coupling.k_t * (coupling.target_position - anchor)
    err = quat_log(
        quat_mul(coupling.target_orientation, quat_conj(frame.orientation))
    )
    tau0_body = r_mat.T @ (coupling.k_r * err + np.asarray(ext_torque_world))
    gyro = np.cross(frame.omega, frame.inertia_body @ frame.omega)

    a11 = (frame.mass + dt * c_v) * np.eye(3)
    a12 = -dt * c_v * b_mat
    a21 = dt * c_v * r_mat.T @ skew(r_w)
    a22 = (
        frame.inertia_body
        - dt * c_v * r_mat.T @ skew(r_w) @ b_mat
        + dt * c_r * np.eye(3)
    )
    lhs = np.block([[a11, a12], [a21, a22]])
    rhs = np.concatenate([
        frame.mass * frame.velocity + dt * (f0 + np.asarray(ext_force)),
        frame.inertia_body @ frame.omega + dt * (
            r_mat.T @ np.cross(r_w, f0) + tau0_body - gyro
        ),
    ])
    sol = np.linalg.solve(lhs, rhs)
    v_new, w_new = sol[:3], sol[3:]

    f_applied = f0 - c_v * (v_new - b_mat @ w_new)
    tau_applied = r_mat @ (coupling.k_r * (r_mat.T @ err) - c_r * w_new)

    saturated = (np.linalg.norm(f_applied) > coupling.f_max
                 or np.linalg.norm(tau_applied) > coupling.tau_max)
    if saturated:
        f_applied = _clamp(f_applied, coupling.f_max)
        tau_applied = _clamp(tau_applied, coupling.tau_max)
        force = f_applied + np.asarray(ext_force)
        torque_b = r_mat.T @ (np.cross(r_w, f_applied) + tau_applied
                              + np.asarray(ext_torque_world))
        v_new = frame.velocity + dt * force / frame.mass
        w_new = frame.omega + dt * np.linalg.solve(
            frame.inertia_body, torque_b - gyro
        )

    new_frame = integrate_pose(frame, v_new, w_new, dt)
    applied = np.concatenate([
        f_applied, np.cross(r_w, f_applied) + tau_applied
    ])
    coupling.last_applied = applied
    return new_frame, applied
