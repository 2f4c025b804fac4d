"""Linear-tetrahedron elasticity: assembly, implicit system, condensation.

The deformable model is small-displacement linear elasticity integrated
with implicit Euler in displacement form,

    (M/dt^2 + D/dt + K) u_t = f_t + (M/dt^2 + D/dt) u_prev + (M/dt) v_prev,

so the factorized left-hand matrix doubles as the stiffness whose inverse,
condensed on surface DOFs, is the body's contact-space compliance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import DEGENERATE_VOLUME, TetMesh


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class Material:
    """Isotropic material with Rayleigh damping and a Coulomb coefficient."""

    young_modulus: float
    poisson_ratio: float
    density: float
    rayleigh_mass: float = 0.1    # 1/s
    rayleigh_stiffness: float = 0.01  # s
    friction: float = 0.3

    def __post_init__(self):
        if self.young_modulus <= 0:
            raise ValueError("young_modulus must be > 0")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must be in [0, 0.5)")
        if self.density <= 0:
            raise ValueError("density must be > 0")
        if self.friction < 0 or self.rayleigh_mass < 0 or self.rayleigh_stiffness < 0:
            raise ValueError("friction and damping coefficients must be >= 0")

    def elasticity_matrix(self) -> np.ndarray:
        """6x6 isotropic constitutive matrix in Voigt notation."""
        e, nu = self.young_modulus, self.poisson_ratio
        c = e / ((1 + nu) * (1 - 2 * nu))
        mat = np.zeros((6, 6))
        mat[:3, :3] = c * nu
        mat[np.arange(3), np.arange(3)] = c * (1 - nu)
        mat[np.arange(3, 6), np.arange(3, 6)] = c * (1 - 2 * nu) / 2
        return mat


def _shape_gradients(mesh: TetMesh):
    """Constant shape-function gradients and volumes for every tet.

    Returns (grads, volumes) with grads[t, a] the gradient of node a's
    shape function in tet t.
    """
    x = mesh.vertices[mesh.tets]
    d = x[:, 1:] - x[:, :1]
    vols = np.linalg.det(d) / 6.0
    bad = np.nonzero(np.abs(vols) <= DEGENERATE_VOLUME)[0]
    if bad.size:
        raise AssemblyError(f"degenerate tet {bad[0]} (volume {vols[bad[0]]:.3e})")
    dinv = np.linalg.inv(d)
    grads = np.empty((mesh.n_tets, 4, 3))
    grads[:, 1:, :] = np.transpose(dinv, (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return grads, vols


def assemble_stiffness(mesh: TetMesh, mat: Material) -> sp.csr_matrix:
    """Global stiffness, 3n x 3n, summed from per-element B^T E B V."""
    grads, vols = _shape_gradients(mesh)
    nt = mesh.n_tets
    b = np.zeros((nt, 6, 12))
    for a in range(4):
        gx, gy, gz = grads[:, a, 0], grads[:, a, 1], grads[:, a, 2]
        c = 3 * a
        b[:, 0, c] = gx
        b[:, 1, c + 1] = gy
        b[:, 2, c + 2] = gz
        b[:, 3, c] = gy
        b[:, 3, c + 1] = gx
        b[:, 4, c + 1] = gz
        b[:, 4, c + 2] = gy
        b[:, 5, c] = gz
        b[:, 5, c + 2] = gx
    emat = mat.elasticity_matrix()
    ke = np.einsum("tia,ij,tjb,t->tab", b, emat, b, vols, optimize=True)
    dof = (3 * mesh.tets[:, :, None] + np.arange(3)[None, None, :]).reshape(nt, 12)
    rows = np.repeat(dof, 12, axis=1).ravel()
    cols = np.tile(dof, (1, 12)).ravel()
    n = 3 * mesh.n_vertices
    k = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return (k + k.T) * 0.5


def assemble_mass_damping(mesh: TetMesh, mat: Material, stiffness=None):
    """Lumped diagonal mass and Rayleigh damping D = a_d M + b_d K.

    Returns (M, D) as sparse matrices; M's diagonal sums to total mass per axis.
    """
    _, vols = _shape_gradients(mesh)
    node_mass = np.zeros(mesh.n_vertices)
    share = mat.density * vols / 4.0
    for a in range(4):
        np.add.at(node_mass, mesh.tets[:, a], share)
    m = sp.diags(np.repeat(node_mass, 3)).tocsr()
    if mat.rayleigh_stiffness > 0:
        if stiffness is None:
            stiffness = assemble_stiffness(mesh, mat)
        d = mat.rayleigh_mass * m + mat.rayleigh_stiffness * stiffness
    else:
        d = (mat.rayleigh_mass * m).tocsr()
    return m, d.tocsr()


def build_implicit_system(m, d, k, dt: float):
    """K_tilde = M/dt^2 + D/dt + K."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return (m / dt**2 + d / dt + k).tocsr()


def barycentric_eval(tri, weights, fields) -> np.ndarray:
    """Interpolate a per-node field at barycentric weights of a triangle."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be barycentric (nonnegative, sum 1)")
    tri = np.asarray(tri)
    return w @ np.asarray(fields)[tri]


@dataclass
class FemBody:
    """Assembled deformable body for a fixed time step.

    Holds the system matrices, the factorized implicit matrix restricted to
    free DOFs, the surface-condensed compliance, and the current state
    (u, u_dot), which is owned by exactly one stepper.
    """

    mesh: TetMesh
    material: Material
    dt: float
    mass: sp.csr_matrix
    damping: sp.csr_matrix
    stiffness: sp.csr_matrix
    k_tilde: sp.csr_matrix
    dirichlet_nodes: frozenset
    surface_nodes: np.ndarray
    u: np.ndarray = field(repr=False, default=None)
    u_dot: np.ndarray = field(repr=False, default=None)
    dirichlet_values: np.ndarray = field(repr=False, default=None)
    deflate_rigid_modes: bool = False
    _lu: object = field(repr=False, default=None)
    _c_surf: np.ndarray = field(repr=False, default=None)
    _fixed_dofs: np.ndarray = field(repr=False, default=None)
    _rigid_modes: np.ndarray = field(repr=False, default=None)
    _rigid_gram_inv: np.ndarray = field(repr=False, default=None)

    @classmethod
    def assemble(cls, mesh: TetMesh, mat: Material, dt: float,
                 dirichlet_nodes=(), deflate_rigid_modes=False) -> "FemBody":
        k = assemble_stiffness(mesh, mat)
        m, d = assemble_mass_damping(mesh, mat, stiffness=k)
        kt = build_implicit_system(m, d, k, dt)
        body = cls(
            mesh=mesh, material=mat, dt=dt, mass=m, damping=d, stiffness=k,
            k_tilde=kt, dirichlet_nodes=frozenset(int(i) for i in dirichlet_nodes),
            surface_nodes=mesh.surface_nodes(),
            u=np.zeros(3 * mesh.n_vertices), u_dot=np.zeros(3 * mesh.n_vertices),
            deflate_rigid_modes=deflate_rigid_modes,
        )
        body._factorize()
        return body

    def _build_rigid_modes(self):
        """Mass-orthogonal deflation basis: 3 translations + 3 rotations
        about the mass center. Deformation is the motion orthogonal (in the
        mass inner product) to these modes; a separate rigid frame owns them."""
        n = self.mesh.n_vertices
        mdiag = self.mass.diagonal()[0::3]
        com = (mdiag[:, None] * self.mesh.vertices).sum(0) / mdiag.sum()
        rel = self.mesh.vertices - com
        modes = np.zeros((3 * n, 6))
        for k in range(3):
            modes[k::3, k] = 1.0
            axis = np.zeros(3)
            axis[k] = 1.0
            modes[:, 3 + k] = np.cross(np.broadcast_to(axis, rel.shape),
                                       rel).ravel()
        mr = self.mass @ modes
        self._rigid_modes = modes
        self._rigid_gram_inv = np.linalg.inv(modes.T @ mr)

    @property
    def n_dofs(self) -> int:
        return 3 * self.mesh.n_vertices

    def surface_dofs(self) -> np.ndarray:
        return (3 * self.surface_nodes[:, None] + np.arange(3)).ravel()

    def _factorize(self):
        fixed = sorted(self.dirichlet_nodes)
        dofs = np.array([3 * n + i for n in fixed for i in range(3)], dtype=np.int64)
        self._fixed_dofs = dofs
        if self.deflate_rigid_modes and self._rigid_modes is None:
            self._build_rigid_modes()
        if dofs.size:
            # symmetric row/column elimination: zero fixed rows and columns,
            # unit diagonal at fixed DOFs
            keep = np.ones(self.n_dofs)
            keep[dofs] = 0.0
            proj = sp.diags(keep)
            kt = (proj @ self.k_tilde @ proj + sp.diags(1.0 - keep)).tocsc()
        else:
            kt = self.k_tilde.tocsc()
        try:
            self._lu = splu(kt)
        except RuntimeError as exc:
            raise AssemblyError(f"singular implicit system: {exc}") from None
        self._c_surf = None

    def _deflation_active(self) -> bool:
        return self.deflate_rigid_modes and not self._fixed_dofs.size

    def _project_force(self, rhs):
        r = self._rigid_modes
        coef = self._rigid_gram_inv @ (r.T @ rhs)
        return rhs - self.mass @ (r @ coef)

    def _project_motion(self, x):
        r = self._rigid_modes
        coef = self._rigid_gram_inv @ (r.T @ (self.mass @ x))
        return x - r @ coef

    def solve(self, rhs: np.ndarray, increment: bool = False) -> np.ndarray:
        """K_tilde^-1 rhs with Dirichlet DOFs pinned.

        State solves pin fixed DOFs to their stored values; increment solves
        (contact corrections) pin them to zero. With rigid-mode deflation
        the load's resultant wrench and the solution's rigid content are
        removed, so the field stays pure deformation.
        """
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.n_dofs:
            raise ValueError(
                f"force field has {rhs.shape[0]} entries, body has {self.n_dofs} DOFs"
            )
        if self._fixed_dofs.size:
            rhs = rhs.copy()
            if increment or self.dirichlet_values is None:
                rhs[self._fixed_dofs] = 0.0
            else:
                rhs[self._fixed_dofs] = self.dirichlet_values[self._fixed_dofs]
        elif self._deflation_active():
            rhs = self._project_force(rhs)
            return self._project_motion(self._lu.solve(rhs))
        return self._lu.solve(rhs)

    @property
    def c_surf(self) -> np.ndarray:
        if self._c_surf is None:
            self._c_surf = condense_compliance(self)
        return self._c_surf

    def with_dirichlet(self, nodes) -> "FemBody":
        """Same assembly with a different fixed-node set (shares matrices)."""
        body = FemBody(
            mesh=self.mesh, material=self.material, dt=self.dt, mass=self.mass,
            damping=self.damping, stiffness=self.stiffness, k_tilde=self.k_tilde,
            dirichlet_nodes=frozenset(int(i) for i in nodes),
            surface_nodes=self.surface_nodes, u=self.u, u_dot=self.u_dot,
            deflate_rigid_modes=self.deflate_rigid_modes,
        )
        body._rigid_modes = self._rigid_modes
        body._rigid_gram_inv = self._rigid_gram_inv
        body._factorize()
        return body

    def strain_energy(self) -> float:
        return 0.5 * float(self.u @ (self.stiffness @ self.u))

    def kinetic_energy(self) -> float:
        return 0.5 * float(self.u_dot @ (self.mass @ self.u_dot))


def condense_compliance(body: FemBody) -> np.ndarray:
    """Surface block of K_tilde^-1 over free DOFs.

    Computed by back-substituting unit loads at every surface DOF; rows and
    columns of Dirichlet-fixed DOFs are zero (a fixed DOF admits no motion).
    """
    sdofs = body.surface_dofs()
    rhs = np.zeros((body.n_dofs, sdofs.size))
    rhs[sdofs, np.arange(sdofs.size)] = 1.0
    if body._fixed_dofs.size:
        rhs[body._fixed_dofs, :] = 0.0
        sol = body._lu.solve(rhs)
    elif body._deflation_active():
        r = body._rigid_modes
        g = body._rigid_gram_inv
        rhs = rhs - body.mass @ (r @ (g @ (r.T @ rhs)))
        sol = body._lu.solve(rhs)
        sol = sol - r @ (g @ (r.T @ (body.mass @ sol)))
    else:
        sol = body._lu.solve(rhs)
    c = sol[sdofs, :]
    if body._fixed_dofs.size:
        fixed_set = set(body._fixed_dofs.tolist())
        local_fixed = [i for i, dof in enumerate(sdofs) if dof in fixed_set]
        c[local_fixed, :] = 0.0
        c[:, local_fixed] = 0.0
    return (c + c.T) * 0.5


def free_motion_solve(body: FemBody, f_ext: np.ndarray, dt: float):
    """One implicit-Euler step with no contact forces.

    Returns (u_free, u_dot_free); the body's stored state is not touched.
    """
    if abs(dt - body.dt) > 1e-15:
        raise ValueError("body was assembled for a different dt")
    f_ext = np.asarray(f_ext, dtype=np.float64)
    if f_ext.shape[0] != body.n_dofs:
        raise ValueError(
            f"force field has {f_ext.shape[0]} entries, body has {body.n_dofs} DOFs"
        )
    rhs = (
        f_ext
        + (body.mass / dt**2 + body.damping / dt) @ body.u
        + (body.mass / dt) @ body.u_dot
    )
    u_free = body.solve(rhs)
    return u_free, (u_free - body.u) / dt
