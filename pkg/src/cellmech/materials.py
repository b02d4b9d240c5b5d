"""Compressible Neo-Hookean base material in 2D, with closed-form derivatives.

Energy density (per unit rest area, unit thickness):

    psi(F) = mu/2 (tr(F^T F) - 2) - mu ln J + lam/2 (ln J)^2,   J = det F

All stress measures and tangents below are exact algebraic consequences of
this psi and double as oracles for the FEM and for analytic training data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MaterialParams:
    """Base material constants. Lame parameters use the plane-strain convention."""

    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3
    mu: float = field(init=False)
    lam: float = field(init=False)

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("youngs_modulus must be > 0")
        if not (0.0 <= self.poisson_ratio < 0.5):
            raise ValueError("poisson_ratio must be in [0, 0.5)")
        e, nu = self.youngs_modulus, self.poisson_ratio
        object.__setattr__(self, "mu", e / (2.0 * (1.0 + nu)))
        object.__setattr__(self, "lam", e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))

    def to_dict(self) -> dict:
        return {"youngs_modulus": self.youngs_modulus, "poisson_ratio": self.poisson_ratio}

    @staticmethod
    def from_dict(d: dict) -> "MaterialParams":
        return MaterialParams(float(d["youngs_modulus"]), float(d["poisson_ratio"]))


def psi(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """Energy density at deformation gradient(s) F, shape (..., 2, 2)."""
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(J <= 0):
        raise ValueError("non-positive Jacobian in psi")
    I_C = np.einsum("...ij,...ij->...", F, F)
    lnJ = np.log(J)
    return 0.5 * mat.mu * (I_C - 2.0) - mat.mu * lnJ + 0.5 * mat.lam * lnJ**2


def _inv22(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    inv = np.empty_like(F)
    inv[..., 0, 0] = F[..., 1, 1]
    inv[..., 0, 1] = -F[..., 0, 1]
    inv[..., 1, 0] = -F[..., 1, 0]
    inv[..., 1, 1] = F[..., 0, 0]
    return inv / J[..., None, None], J


def piola(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """First Piola-Kirchhoff stress P = mu F + (lam ln J - mu) F^{-T}."""
    Finv, J = _inv22(F)
    FinvT = np.swapaxes(Finv, -1, -2)
    lnJ = np.log(J)
    return mat.mu * F + (mat.lam * lnJ - mat.mu)[..., None, None] * FinvT


def piola_tangent(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """dP/dF as a (..., 2, 2, 2, 2) tensor: A[i,j,k,l] = dP_ij / dF_kl."""
    Finv, J = _inv22(F)
    FinvT = np.swapaxes(Finv, -1, -2)
    lnJ = np.log(J)
    eye = np.eye(2)
    A = mat.mu * np.einsum("ik,jl->ijkl", eye, eye)
    A = A + mat.lam * np.einsum("...ij,...kl->...ijkl", FinvT, FinvT)
    # d(F^{-T})_ij/dF_kl = -Finv_jk Finv_li
    A = A - (mat.lam * lnJ - mat.mu)[..., None, None, None, None] * np.einsum(
        "...jk,...li->...ijkl", Finv, Finv
    )
    return A


def pk2_from_green(E: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """Second Piola-Kirchhoff stress S(E) = mu (I - C^{-1}) + lam ln J C^{-1}, C = 2E + I."""
    C = 2.0 * np.asarray(E) + np.eye(2)
    Cinv, detC = _inv22(C)
    if np.any(detC <= 0):
        raise ValueError("2E + I must be positive definite")
    lnJ = 0.5 * np.log(detC)
    return mat.mu * (np.eye(2) - Cinv) + mat.lam * lnJ[..., None, None] * Cinv


def energy_from_green(E: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """psi as a function of Green strain: F-independent via I_C = tr C, J = sqrt(det C)."""
    C = 2.0 * np.asarray(E) + np.eye(2)
    detC = C[..., 0, 0] * C[..., 1, 1] - C[..., 0, 1] * C[..., 1, 0]
    if np.any(detC <= 0):
        raise ValueError("2E + I must be positive definite")
    I_C = C[..., 0, 0] + C[..., 1, 1]
    lnJ = 0.5 * np.log(detC)
    return 0.5 * mat.mu * (I_C - 2.0) - mat.mu * lnJ + 0.5 * mat.lam * lnJ**2


def tangent_from_green(E: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """Material tangent C_ijkl = dS_ij/dE_kl at Green strain E, minor-symmetric."""
    C = 2.0 * np.asarray(E) + np.eye(2)
    Cinv, detC = _inv22(C)
    lnJ = 0.5 * np.log(detC)
    a = mat.mu - mat.lam * lnJ
    CC = np.einsum("...ik,...jl->...ijkl", Cinv, Cinv) + np.einsum(
        "...il,...jk->...ijkl", Cinv, Cinv
    )
    return a[..., None, None, None, None] * CC + mat.lam * np.einsum(
        "...ij,...kl->...ijkl", Cinv, Cinv
    )


def cauchy_from_f(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """Cauchy stress sigma = (mu (F F^T - I) + lam ln J I) / J."""
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    B = np.einsum("...ik,...jk->...ij", F, F)
    lnJ = np.log(J)
    return (mat.mu * (B - np.eye(2)) + mat.lam * lnJ[..., None, None] * np.eye(2)) / J[
        ..., None, None
    ]


def uniaxial_green_state(axial: float, mat: MaterialParams, direction: float = 0.0,
                         tol: float = 1e-12) -> np.ndarray:
    """Green strain of the energy-minimizing uniaxial state at directional magnitude `axial`.

    Solves S_nn(E) = 0 for the lateral Green component with the axial component
    pinned at `axial`, in the frame of the loading direction, then rotates back.
    """
    # bisection on the lateral stretch; S_lat is monotone in it
    lo, hi = 0.2, 3.0
    d = np.array([np.cos(direction), np.sin(direction)])
    n = np.array([-np.sin(direction), np.cos(direction)])
    R = np.stack([d, n], axis=1)  # columns

    def s_lat(lam_lat):
        E_loc = np.diag([axial, 0.5 * (lam_lat**2 - 1.0)])
        S = pk2_from_green(E_loc, mat)
        return S[1, 1]

    flo, fhi = s_lat(lo), s_lat(hi)
    if flo * fhi > 0:
        raise RuntimeError("uniaxial lateral solve not bracketed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = s_lat(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < tol:
            break
    lam_lat = 0.5 * (lo + hi)
    E_loc = np.diag([axial, 0.5 * (lam_lat**2 - 1.0)])
    return R @ E_loc @ R.T
