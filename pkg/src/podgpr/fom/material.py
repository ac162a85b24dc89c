"""Guccione-type transversely anisotropic hyperelastic law.

The strain energy is

    W(F) = C/2 (exp(Q(E)) - 1) + K/2 (J - 1) ln J,

with E = (F^T F - I)/2 and Q = sum_ij B_ij E_ij^2, where B is the symmetric
matrix of stiffness exponents laid out in the (fiber, sheet, normal) frame,
which coincides with the (x, y, z) axes of the reference configuration.

All functions broadcast over leading batch dimensions of ``F``.
Stresses are in kPa.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "MaterialParams",
    "SingularDeformationError",
    "strain_energy",
    "volumetric_energy",
    "piola_stress",
    "piola_stress_and_tangent",
    "PARAMETER_NAMES",
]

#: Ordering used everywhere a parameter vector is flattened.
PARAMETER_NAMES = ("b_f", "b_s", "b_n", "b_fs", "b_fn", "b_sn", "K", "C", "p_tilde")


class SingularDeformationError(ValueError):
    """Raised when det(F) <= 0 somewhere."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True)
class MaterialParams:
    """Material constants and load slope for one forward solve.

    Parameters
    ----------
    b_f, b_s, b_n, b_fs, b_fn, b_sn : float
        Dimensionless exponents of the Guccione law.
    K : float
        Bulk modulus [kPa].
    C : float
        Scaling constant [kPa].
    p_tilde : float
        Slope of the pressure load [kPa]; the pressure is p_tilde * t / T.
    rho : float
        Density [kg/m^3].
    """

    b_f: float = 8.0
    b_s: float = 2.0
    b_n: float = 2.0
    b_fs: float = 4.0
    b_fn: float = 4.0
    b_sn: float = 2.0
    K: float = 50.0
    C: float = 2.0
    p_tilde: float = 0.004
    rho: float = 1.0e3

    def __post_init__(self):
        for name in ("b_f", "b_s", "b_n", "b_fs", "b_fn", "b_sn"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not self.C > 0.0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.K >= 0.0:
            raise ValueError(f"K must be non-negative, got {self.K}")
        if not self.rho > 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    @classmethod
    def from_vector(cls, mu, rho=1.0e3):
        """Build from a vector ordered as :data:`PARAMETER_NAMES`."""
        mu = np.asarray(mu, dtype=float).ravel()
        if mu.size != len(PARAMETER_NAMES):
            raise ValueError(f"expected {len(PARAMETER_NAMES)} parameters, got {mu.size}")
        return cls(**{k: float(v) for k, v in zip(PARAMETER_NAMES, mu)}, rho=rho)

    def to_vector(self):
        return np.array([getattr(self, k) for k in PARAMETER_NAMES])

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def exponents(self):
        """Symmetric 3x3 matrix B with Q = sum(B * E**2)."""
        return np.array(
            [
                [self.b_f, self.b_fs, self.b_fn],
                [self.b_fs, self.b_s, self.b_sn],
                [self.b_fn, self.b_sn, self.b_n],
            ]
        )


def _check_det(J):
    bad = ~(J > 0.0)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise SingularDeformationError(
            f"non-positive det(F) = {np.asarray(J)[tuple(idx)]:.3e} at index {tuple(idx)}"
        )


def _green_lagrange(F):
    C_right = np.einsum("...ki,...kj->...ij", F, F)
    return 0.5 * (C_right - np.eye(3))


def volumetric_energy(F, mat):
    """Penalty term K/2 (J-1) ln J."""
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    _check_det(J)
    return 0.5 * mat.K * (J - 1.0) * np.log(J)


def strain_energy(F, mat):
    """Strain energy density W(F) [kPa]."""
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    _check_det(J)
    E = _green_lagrange(F)
    Q = np.einsum("ij,...ij->...", mat.exponents, E * E)
    return 0.5 * mat.C * np.expm1(Q) + 0.5 * mat.K * (J - 1.0) * np.log(J)


def _stress_parts(F, mat):
    J = np.linalg.det(F)
    _check_det(J)
    B = mat.exponents
    E = _green_lagrange(F)
    BE = B * E
    Q = np.einsum("...ij,...ij->...", BE, E)
    ceq = mat.C * np.exp(Q)
    S = ceq[..., None, None] * BE
    H = np.swapaxes(np.linalg.inv(F), -1, -2)
    # g(J) = J dW_vol/dJ
    g = 0.5 * mat.K * (J * np.log(J) + J - 1.0)
    P = F @ S + g[..., None, None] * H
    return P, S, BE, ceq, H, J, g


def piola_stress(F, mat):
    """First Piola-Kirchhoff stress P = dW/dF."""
    P = _stress_parts(np.asarray(F, dtype=float), mat)[0]
    return P


def piola_stress_and_tangent(F, mat):
    """First Piola-Kirchhoff stress and its derivative.

    Returns
    -------
    P : ndarray, shape (..., 3, 3)
    A : ndarray, shape (..., 3, 3, 3, 3)
        ``A[..., i, J, k, L] = dP_iJ / dF_kL``.
    """
    F = np.asarray(F, dtype=float)
    P, S, BE, ceq, H, J, g = _stress_parts(F, mat)
    B = mat.exponents
    eye = np.eye(3)

    c4 = (Ellipsis, None, None, None, None)
    G = F @ BE
    St = np.swapaxes(S, -1, -2)
    Ft = np.swapaxes(F, -1, -2)
    Ht = np.swapaxes(H, -1, -2)
    # A[..., i, J, k, L]
    A = eye[:, None, :, None] * St[..., None, :, None, :]
    A = A + 2.0 * ceq[c4] * (G[..., :, :, None, None] * G[..., None, None, :, :])
    FBt = np.swapaxes(F[..., :, :, None] * B, -1, -2)  # [i, J, L] = F_iL B_LJ
    FBF = np.einsum("...iI,IL,...kI->...ikL", F, B, F)
    A = A + 0.5 * ceq[c4] * (
        FBt[..., :, :, None, :] * Ft[..., None, :, :, None]
        + eye[None, :, None, :] * FBF[..., :, None, :, :]
    )

    gp = 0.5 * mat.K * (np.log(J) + 2.0)
    A = A + (gp * J)[c4] * (H[..., :, :, None, None] * H[..., None, None, :, :])
    A = A - g[c4] * (H[..., :, None, None, :] * Ht[..., None, :, :, None])
    return P, A
