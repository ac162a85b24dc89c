"""Finite-element assembly for trilinear hexahedra.

The fully discrete residual at time t^n is

    R(u) = rho/dt^2 M (u - 2 u_prev + u_prev2) + N(u) - F_ext(u, t^n),

where F_ext is the follower pressure -p(t) J F^{-T} nu on the pressure
faces, p(t) = p_tilde t / T. Forces are in kN (stresses in kPa, lengths in
m), so the density enters the mass matrix in t/m^3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .material import SingularDeformationError, piola_stress_and_tangent
from .mesh import HEX_REF, PRESSURE

__all__ = [
    "FomConfig",
    "assemble_system",
    "internal_force",
    "pressure_load",
    "mass_matrix",
    "reference_jacobians",
]

# kg/m^3 -> t/m^3, so that rho * acceleration * volume is in kN
DENSITY_TO_KN = 1.0e-3


@dataclass(frozen=True)
class FomConfig:
    """Time stepping and solver settings.

    ``newton_tol`` is relative to the residual norm at the start of each
    step; ``newton_atol`` is an absolute floor in kN.
    """

    dt: float = 0.005
    t_final: float = 0.25
    newton_tol: float = 1.0e-8
    newton_atol: float = 1.0e-20
    newton_max_iter: int = 25
    quadrature_order: int = 2

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        n = self.t_final / self.dt
        if not self.t_final > 0.0 or abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("t_final must be a positive integer multiple of dt")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if self.quadrature_order < 1:
            raise ValueError("quadrature_order must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def times(self):
        return self.dt * np.arange(1, self.n_steps + 1)

    def to_dict(self):
        return {
            "dt": self.dt,
            "t_final": self.t_final,
            "newton_tol": self.newton_tol,
            "newton_atol": self.newton_atol,
            "newton_max_iter": self.newton_max_iter,
            "quadrature_order": self.quadrature_order,
        }


def _gauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _hex_shape(xi):
    """Shape values (q, 8) and reference gradients (q, 8, 3) at points xi (q, 3)."""
    s = 1.0 + xi[:, None, :] * HEX_REF[None, :, :]  # (q, 8, 3)
    N = 0.125 * np.prod(s, axis=2)
    dN = np.empty(s.shape)
    for d in range(3):
        others = [e for e in range(3) if e != d]
        dN[:, :, d] = 0.125 * HEX_REF[None, :, d] * s[:, :, others[0]] * s[:, :, others[1]]
    return N, dN


def _quad_shape(st):
    ref = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    s = 1.0 + st[:, None, :] * ref[None, :, :]
    N = 0.25 * s[:, :, 0] * s[:, :, 1]
    dN = np.stack([0.25 * ref[None, :, 0] * s[:, :, 1], 0.25 * ref[None, :, 1] * s[:, :, 0]], axis=2)
    return N, dN


class _Context:
    """Per-mesh precomputed geometric quantities."""

    def __init__(self, mesh, order):
        g, w = _gauss(order)
        xi = np.array([[a, b, c] for c in g for b in g for a in g])
        wq = np.array([wa * wb * wc for wc in w for wb in w for wa in w])
        self.N, dNref = _hex_shape(xi)
        X = mesh.vertices[mesh.hexahedra]  # (E, 8, 3)
        J0 = np.einsum("eai,qaj->eqij", X, dNref)  # dX_i/dxi_j
        self.detJ0 = np.linalg.det(J0)
        if np.any(self.detJ0 <= 0.0):
            bad = int(np.argwhere(self.detJ0 <= 0.0)[0, 0])
            raise ValueError(f"element {bad} has non-positive reference Jacobian")
        invJ0 = np.linalg.inv(J0)
        self.dNdX = np.einsum("qaj,eqji->eqai", dNref, invJ0)  # (E, q, 8, 3)
        self.wdet = self.detJ0 * wq[None, :]
        # gradient operator: grad(u)[i, J] = G[(i, J), (a, k)] u[a, k]
        nq = len(wq)
        G = np.zeros((len(mesh.hexahedra), nq, 3, 3, 8, 3))
        for i in range(3):
            G[:, :, i, :, :, i] = np.swapaxes(self.dNdX, 2, 3)
        self.G = G.reshape(len(mesh.hexahedra), nq, 9, 24)
        self.GT = np.ascontiguousarray(np.swapaxes(self.G, 2, 3))
        self.hexes = mesh.hexahedra
        self.edofs = (3 * mesh.hexahedra[:, :, None] + np.arange(3)).reshape(len(mesh.hexahedra), 24)
        ne = len(mesh.hexahedra)
        self.rows = np.repeat(self.edofs, 24, axis=1).ravel()
        self.cols = np.tile(self.edofs, (1, 24)).ravel()
        self.n_dofs = mesh.n_dofs

        # unit-density consistent mass
        Me = np.einsum("eq,qa,qb->eab", self.wdet, self.N, self.N)
        rows = np.repeat(mesh.hexahedra, 8, axis=1).ravel()
        cols = np.tile(mesh.hexahedra, (1, 8)).ravel()
        Ms = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2).tocsr()
        self.mass = sp.kron(Ms, sp.eye(3), format="csr")
        self.n_elements = ne

        faces = mesh.face_vertices(PRESSURE)
        self.faces = faces
        st = np.array([[a, b] for b in g for a in g])
        self.fw = np.array([wa * wb for wb in w for wa in w])
        self.fN, self.fdN = _quad_shape(st)
        self.fdofs = (3 * faces[:, :, None] + np.arange(3)).reshape(len(faces), 12)
        self.frows = np.repeat(self.fdofs, 12, axis=1).ravel()
        self.fcols = np.tile(self.fdofs, (1, 12)).ravel()


def _context(mesh, order):
    key = ("assembly", order)
    if key not in mesh._cache:
        mesh._cache[key] = _Context(mesh, order)
    return mesh._cache[key]


def reference_jacobians(mesh, order=2):
    """det(dX/dxi) at every quadrature point, shape (n_elements, order**3)."""
    g, _ = _gauss(order)
    xi = np.array([[a, b, c] for c in g for b in g for a in g])
    _, dNref = _hex_shape(xi)
    X = mesh.vertices[mesh.hexahedra]
    return np.linalg.det(np.einsum("eai,qaj->eqij", X, dNref))


def mass_matrix(mesh, rho=1.0, order=2):
    """Consistent mass matrix (sparse, N_h x N_h) scaled by ``rho``."""
    return rho * _context(mesh, order).mass


def _deformation_gradients(ctx, u):
    ue = u[ctx.edofs].reshape(ctx.n_elements, 8, 3)
    return np.eye(3) + np.einsum("eai,eqaj->eqij", ue, ctx.dNdX)


def internal_force(u, mat, mesh, order=2, tangent=True):
    """Internal force vector N(u) and, optionally, its sparse Jacobian."""
    ctx = _context(mesh, order)
    F = _deformation_gradients(ctx, u)
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        e = int(np.argwhere(J <= 0.0)[0, 0])
        raise SingularDeformationError(f"inverted element {e} (det F = {J.min():.3e})", element=e)
    P, A = piola_stress_and_tangent(F, mat)
    fe = np.einsum("eq,eqiJ,eqaJ->eai", ctx.wdet, P, ctx.dNdX).reshape(ctx.n_elements, 24)
    f = np.bincount(ctx.edofs.ravel(), weights=fe.ravel(), minlength=ctx.n_dofs)
    if not tangent:
        return f, None
    A9 = A.reshape(A.shape[:2] + (9, 9)) * ctx.wdet[:, :, None, None]
    Ke = (ctx.GT @ A9 @ ctx.G).sum(axis=1)
    K = sp.coo_matrix((Ke.ravel(), (ctx.rows, ctx.cols)), shape=(ctx.n_dofs,) * 2).tocsr()
    return f, K


def _cross_matrix(v):
    """Matrices [v]x with [v]x w = v x w, for v of shape (..., 3)."""
    z = np.zeros(v.shape[:-1])
    return np.stack(
        [
            np.stack([z, -v[..., 2], v[..., 1]], -1),
            np.stack([v[..., 2], z, -v[..., 0]], -1),
            np.stack([-v[..., 1], v[..., 0], z], -1),
        ],
        -2,
    )


def pressure_load(u, pressure, mesh, order=2, tangent=True):
    """Follower pressure load vector and its Jacobian w.r.t. ``u``.

    The nodal force is -p * int N_a (x_s x x_t) ds dt over each pressure
    face, which equals -p int N_a J F^{-T} nu dA_0.
    """
    ctx = _context(mesh, order)
    f = np.zeros(ctx.n_dofs)
    if len(ctx.faces) == 0 or pressure == 0.0:
        return f, (sp.csr_matrix((ctx.n_dofs,) * 2) if tangent else None)
    x = mesh.vertices[ctx.faces] + u[ctx.fdofs].reshape(-1, 4, 3)  # (nf, 4, 3)
    xs = np.einsum("qa,fai->fqi", ctx.fdN[:, :, 0], x)
    xt = np.einsum("qa,fai->fqi", ctx.fdN[:, :, 1], x)
    n = np.cross(xs, xt)
    fe = -pressure * np.einsum("q,qa,fqi->fai", ctx.fw, ctx.fN, n).reshape(-1, 12)
    f = np.bincount(ctx.fdofs.ravel(), weights=fe.ravel(), minlength=ctx.n_dofs)
    if not tangent:
        return f, None
    # d(xs x xt)/du_b = -dN_b/ds [xt]x + dN_b/dt [xs]x
    Xs = _cross_matrix(xs)
    Xt = _cross_matrix(xt)
    dn = -np.einsum("qb,fqij->fqbij", ctx.fdN[:, :, 0], Xt) + np.einsum("qb,fqij->fqbij", ctx.fdN[:, :, 1], Xs)
    Ke = -pressure * np.einsum("q,qa,fqbij->faibj", ctx.fw, ctx.fN, dn).reshape(-1, 12, 12)
    K = sp.coo_matrix((Ke.ravel(), (ctx.frows, ctx.fcols)), shape=(ctx.n_dofs,) * 2).tocsr()
    return f, K


def assemble_system(u, u_prev, u_prev2, mat, mesh, config, t, tangent=True):
    """Residual and consistent tangent of the fully discrete equations.

    Vectors are full length (Dirichlet DOFs included); the solver
    eliminates constrained rows and columns.

    Returns
    -------
    residual : ndarray, shape (N_h,)
    tangent : scipy.sparse.csr_matrix or None
    """
    order = config.quadrature_order
    ctx = _context(mesh, order)
    c = mat.rho * DENSITY_TO_KN / config.dt**2
    fint, Kint = internal_force(u, mat, mesh, order, tangent)
    pressure = mat.p_tilde * t / config.t_final
    fext, Kext = pressure_load(u, pressure, mesh, order, tangent)
    R = c * (ctx.mass @ (u - 2.0 * u_prev + u_prev2)) + fint - fext
    if not tangent:
        return R, None
    return R, (c * ctx.mass + Kint - Kext).tocsr()
