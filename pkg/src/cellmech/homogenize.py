"""Macroscale quantities extracted from a converged periodic solve.

F comes from the two lattice translations against their rest offsets; the
averaged Cauchy stress column b is the total elastic force transmitted across
cut b divided by the deformed cut area vector. That force equals the gradient
of the elastic energy w.r.t. translation b (chain rule over the slave
vertices), which at equilibrium is exactly the boundary reaction and needs no
per-vertex corner bookkeeping. Green strain / 2nd Piola-Kirchhoff stress and
the energy density follow by pull-back and division by rest area.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import NonPositiveJacobian, SingularNormals, SingularRestOffsets
from .fem import LoadCase, ReducedState, SolveReport
from .geometry import PeriodicMesh, TilingParams
from .materials import MaterialParams


@dataclass(frozen=True)
class StrainState:
    exx: float
    eyy: float
    exy: float

    def tensor(self) -> np.ndarray:
        return np.array([[self.exx, self.exy], [self.exy, self.eyy]])

    def as_vector(self) -> np.ndarray:
        """Independent components (exx, eyy, exy) as fed to the energy network."""
        return np.array([self.exx, self.eyy, self.exy])

    @staticmethod
    def from_tensor(E: np.ndarray) -> "StrainState":
        return StrainState(float(E[0, 0]), float(E[1, 1]), float(0.5 * (E[0, 1] + E[1, 0])))


@dataclass(frozen=True)
class StressState:
    sxx: float
    syy: float
    sxy: float

    def tensor(self) -> np.ndarray:
        return np.array([[self.sxx, self.sxy], [self.sxy, self.syy]])

    def norm(self) -> float:
        return float(np.sqrt(self.sxx**2 + self.syy**2 + 2.0 * self.sxy**2))

    @staticmethod
    def from_tensor(S: np.ndarray) -> "StressState":
        return StressState(float(S[0, 0]), float(S[1, 1]), float(0.5 * (S[0, 1] + S[1, 0])))


@dataclass
class HomogenizedSample:
    params: tuple
    strain: StrainState
    stress: StressState
    energy_density: float
    load_meta: dict

    def to_record(self) -> dict:
        return {
            "t": list(self.params),
            "exx": self.strain.exx,
            "eyy": self.strain.eyy,
            "exy": self.strain.exy,
            "sxx": self.stress.sxx,
            "syy": self.stress.syy,
            "sxy": self.stress.sxy,
            "psi": self.energy_density,
            **self.load_meta,
        }

    @staticmethod
    def from_record(rec: dict) -> "HomogenizedSample":
        meta = {
            k: rec[k]
            for k in ("alpha", "load_kind", "axial", "lateral")
            if k in rec
        }
        return HomogenizedSample(
            tuple(rec["t"]),
            StrainState(rec["exx"], rec["eyy"], rec["exy"]),
            StressState(rec["sxx"], rec["syy"], rec["sxy"]),
            float(rec["psi"]),
            meta,
        )


def deformation_gradient(mesh: PeriodicMesh, state: ReducedState) -> np.ndarray:
    """F = [t1 | t2] [T1 | T2]^{-1}; raises on colinear rest offsets or det <= 0."""
    B = np.column_stack([mesh.offset_x, mesh.offset_y])
    if abs(np.linalg.det(B)) < 1e-12:
        raise SingularRestOffsets("rest translation vectors are colinear")
    F = np.column_stack([state.t1, state.t2]) @ np.linalg.inv(B)
    if np.linalg.det(F) <= 0:
        raise NonPositiveJacobian("deformation gradient with det <= 0")
    return F


def _rot_minus90(v):
    return np.array([v[1], -v[0]])


def _rot_plus90(v):
    return np.array([-v[1], v[0]])


def cauchy_stress(mesh: PeriodicMesh, state: ReducedState, material: MaterialParams,
                  return_asymmetry: bool = False):
    """Boundary-averaged Cauchy stress of a converged state (unit thickness)."""
    _, g = fem.elastic_energy(mesh, state, material, order=1)
    f1, f2 = g[-4:-2], g[-2:]
    # deformed area vectors of the cuts crossed by t1 / t2 (Nanson, unit rest cuts)
    s1 = np.sign(_rot_minus90(mesh.offset_y) @ mesh.offset_x)
    s2 = np.sign(_rot_plus90(mesh.offset_x) @ mesh.offset_y)
    a1 = s1 * _rot_minus90(state.t2)
    a2 = s2 * _rot_plus90(state.t1)
    A = np.column_stack([a1, a2])
    if abs(np.linalg.det(A)) < 1e-14:
        raise SingularNormals("deformed boundary normals are singular")
    sigma = np.column_stack([f1, f2]) @ np.linalg.inv(A)
    sym = 0.5 * (sigma + sigma.T)
    asym = float(np.linalg.norm(sigma - sigma.T) / max(np.linalg.norm(sigma), 1e-300))
    if return_asymmetry:
        return sym, asym
    return sym


def pull_back(F: np.ndarray, sigma: np.ndarray) -> tuple[StrainState, StressState]:
    """Green strain and 2nd Piola-Kirchhoff stress from (F, Cauchy stress)."""
    J = np.linalg.det(F)
    if J <= 0:
        raise NonPositiveJacobian("det F <= 0 in pull_back")
    E = 0.5 * (F.T @ F - np.eye(2))
    Finv = np.linalg.inv(F)
    S = J * Finv @ sigma.T @ Finv.T
    return StrainState.from_tensor(E), StressState.from_tensor(S)


def push_forward(F: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Inverse of pull_back's stress map: sigma = F S F^T / J."""
    J = np.linalg.det(F)
    return (F @ S @ F.T / J).T


def energy_density(mesh: PeriodicMesh, report: SolveReport) -> float:
    """Elastic energy per unit rest cell area (enforcement terms excluded)."""
    return report.elastic_energy / mesh.rest_area


def enforcement_ratio(report: SolveReport) -> float:
    """(penalty + contact) / elastic; diagnostic for how clean a sample is."""
    if report.elastic_energy <= 0:
        return 0.0
    return (report.penalty_energy + report.contact_energy) / report.elastic_energy


def homogenize(mesh: PeriodicMesh, report: SolveReport, material: MaterialParams,
               params: TilingParams, load: LoadCase) -> HomogenizedSample:
    F = deformation_gradient(mesh, report.state)
    sigma = cauchy_stress(mesh, report.state, material)
    strain, stress = pull_back(F, sigma)
    meta = {
        "alpha": load.direction_angle,
        "load_kind": "biaxial" if load.biaxial else "uniaxial",
        "axial": load.axial_strain,
        "lateral": load.lateral_strain,
    }
    return HomogenizedSample(
        params=params.values,
        strain=strain,
        stress=stress,
        energy_density=energy_density(mesh, report),
        load_meta=meta,
    )
