import numpy as np
import pytest
from scipy.integrate import solve_ivp

from contactdyn import shapes
from contactdyn.contact_space import build_frame
from contactdyn.rigid import (
    RigidFrame,
    build_contact_jacobian,
    mesh_inertia,
    quat_exp,
    quat_log,
    quat_mul,
    quat_rotate,
    quat_to_matrix,
    rigid_free_step,
)


def test_quat_exp_log_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(30):
        v = rng.normal(size=3) * 0.8
        assert np.allclose(quat_log(quat_exp(v)), v, atol=1e-12)


def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(1)
    q = quat_exp(rng.normal(size=3))
    v = rng.normal(size=3)
    assert np.allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-12)
    # composition
    q2 = quat_exp(rng.normal(size=3))
    assert np.allclose(
        quat_to_matrix(quat_mul(q, q2)),
        quat_to_matrix(q) @ quat_to_matrix(q2), atol=1e-12,
    )


def test_box_inertia_analytic():
    a, b, c = 0.1, 0.2, 0.3
    mesh = shapes.box_mesh(size=(a, b, c), divisions=(2, 3, 4))
    rho = 1200.0
    mass, com, inertia = mesh_inertia(mesh, rho)
    assert np.isclose(mass, rho * a * b * c)
    assert np.allclose(com, 0, atol=1e-12)
    expect = mass / 12 * np.array([b * b + c * c, a * a + c * c, a * a + b * b])
    assert np.allclose(np.diag(inertia), expect, rtol=1e-10)
    assert np.allclose(inertia - np.diag(np.diag(inertia)), 0, atol=1e-10)


def frame(inertia=np.eye(3), mass=1.0):
    return RigidFrame(position=np.zeros(3), orientation=[1, 0, 0, 0],
                      mass=mass, inertia_body=np.asarray(inertia, float))


def test_free_fall_velocity_increment():
    fr = frame(mass=2.0)
    g = np.array([0, 0, -9.81])
    dt = 0.01
    out = rigid_free_step(fr, 2.0 * g, np.zeros(3), dt)
    assert np.allclose(out.velocity, g * dt, atol=1e-14)
    assert np.allclose(out.position, g * dt * dt, atol=1e-14)


def test_principal_axis_spin_constant():
    fr = frame(inertia=np.diag([1.0, 2.0, 3.0]))
    fr.omega = np.array([0.0, 5.0, 0.0])
    for _ in range(1000):
        fr = rigid_free_step(fr, np.zeros(3), np.zeros(3), 1e-3)
    assert np.allclose(fr.omega, [0, 5.0, 0], atol=1e-9)


def test_torque_free_asymmetric_energy_drift():
    inertia = np.diag([1.0, 2.0, 3.0])
    fr = frame(inertia=inertia)
    fr.omega = np.array([1.0, 2.0, 0.5])
    dt = 1e-3

    def ke(w):
        return 0.5 * w @ (inertia @ w)

    e_prev = ke(fr.omega)
    e0 = e_prev
    omegas = [fr.omega.copy()]
    for _ in range(1000):
        fr = rigid_free_step(fr, np.zeros(3), np.zeros(3), dt)
        e = ke(fr.omega)
        assert abs(e - e_prev) / e0 < 1e-3
        e_prev = e
        omegas.append(fr.omega.copy())

    # oracle: high-accuracy integration of Euler's equations
    inv = np.linalg.inv(inertia)

    def euler_eq(t, w):
        return inv @ (-np.cross(w, inertia @ w))

    sol = solve_ivp(euler_eq, (0, 1.0), omegas[0], rtol=1e-11, atol=1e-12,
                    dense_output=True)
    w_ref = sol.sol(1.0)
    assert np.linalg.norm(omegas[-1] - w_ref) < 5e-3


def test_jacobian_contact_at_com():
    fr = frame()
    axes = [np.eye(3)]
    j = build_contact_jacobian(fr, [fr.position], axes)
    assert np.allclose(j[:, :3], np.eye(3))
    assert np.allclose(j[:, 3:], 0)


def test_jacobian_lever_arm_torque():
    fr = frame()
    r = np.array([0.1, -0.05, 0.2])
    axes = [np.eye(3)]
    j = build_contact_jacobian(fr, [fr.position + r], axes)
    f = np.array([1.0, 2.0, -0.5])
    gamma = j.T @ f
    assert np.allclose(gamma[:3], f)
    assert np.allclose(gamma[3:], np.cross(r, f), atol=1e-12)


def test_jacobian_adjoint_random():
    rng = np.random.default_rng(5)
    fr = RigidFrame(position=rng.normal(size=3),
                    orientation=quat_exp(rng.normal(size=3)),
                    mass=2.0, inertia_body=np.diag([1.0, 2.0, 3.0]))
    pts = [fr.position + rng.normal(size=3) * 0.2 for _ in range(4)]
    frames = [build_frame(v / np.linalg.norm(v))
              for v in rng.normal(size=(4, 3))]
    axes = [f.axes() for f in frames]
    j = build_contact_jacobian(fr, pts, axes, signs=np.array([1, -1, 1, -1.0]))
    for _ in range(100):
        qdot = rng.normal(size=6)
        f = rng.normal(size=12)
        assert abs((j @ qdot) @ f - qdot @ (j.T @ f)) < 1e-12


def test_singular_inertia_rejected():
    with pytest.raises(ValueError):
        RigidFrame(position=np.zeros(3), orientation=[1, 0, 0, 0],
                   mass=1.0, inertia_body=np.zeros((3, 3)))
