"""Synthetic parametric material family with closed-form energy and stress.

Used by tests and the activation-study script: a Neo-Hookean base scaled by
the first parameter plus a parameter-weighted anisotropic quadratic term, so
energy, stress, stiffness and Poisson profiles all vary smoothly (and
non-trivially) with the two parameters:

    Psi(T, E) = (1 + 0.8 T0) Psi_NH(E) + 0.2 (T1 + 0.5) q(E)
    q(E) = c . (Exx^2, Eyy^2, Exy^2),  c = (0.9, 0.3, 0.8)

S = dPsi/dE stays exact, so network-side conservativity and sensitivity
checks have an analytic ground truth.
"""

from __future__ import annotations

import numpy as np

from .homogenize import HomogenizedSample, StrainState, StressState
from .materials import MaterialParams, energy_from_green, pk2_from_green, uniaxial_green_state
from .sampling import FORMAT_NAME, FORMAT_VERSION, Dataset

_QCOEF = np.array([0.9, 0.3, 0.8])


def _scales(t: np.ndarray) -> tuple[float, float]:
    return 1.0 + 0.8 * float(t[0]), 0.2 * (float(t[1]) + 0.5)


def family_energy(t, E: np.ndarray, material: MaterialParams) -> float:
    a, b = _scales(np.asarray(t, dtype=float))
    q = _QCOEF[0] * E[0, 0] ** 2 + _QCOEF[1] * E[1, 1] ** 2 + _QCOEF[2] * E[0, 1] ** 2
    return a * float(energy_from_green(E, material)) + b * q


def family_stress(t, E: np.ndarray, material: MaterialParams) -> np.ndarray:
    a, b = _scales(np.asarray(t, dtype=float))
    Sq = np.array(
        [
            [2.0 * _QCOEF[0] * E[0, 0], _QCOEF[2] * E[0, 1]],
            [_QCOEF[2] * E[0, 1], 2.0 * _QCOEF[1] * E[1, 1]],
        ]
    )
    return a * pk2_from_green(E, material) + b * Sq


def parametric_analytic_dataset(material: MaterialParams, n_params: int = 4,
                                n_directions: int = 8, uniaxial_points: int = 11,
                                uniaxial_range=(-0.15, 0.25), biaxial_grid: int = 4,
                                biaxial_range=(-0.08, 0.12)) -> Dataset:
    """(T, E, S, Psi) corpus over a grid of the 2-parameter family, T in [0,1]^2."""
    records = []
    tvals = np.linspace(0.0, 1.0, n_params)
    for t0 in tvals:
        for t1 in tvals:
            t = (float(t0), float(t1))
            for k in range(n_directions):
                alpha = k * np.pi / n_directions
                d = np.array([np.cos(alpha), np.sin(alpha)])
                n = np.array([-np.sin(alpha), np.cos(alpha)])
                R = np.stack([d, n], axis=1)
                for m in np.linspace(*uniaxial_range, uniaxial_points):
                    E = uniaxial_green_state(float(m), material, alpha)
                    records.append(_rec(t, E, material, alpha, "uniaxial", float(m), None))
                if biaxial_grid:
                    for ax in np.linspace(*biaxial_range, biaxial_grid):
                        for lat in np.linspace(*biaxial_range, biaxial_grid):
                            E = R @ np.diag([ax, lat]) @ R.T
                            records.append(
                                _rec(t, E, material, alpha, "biaxial", float(ax), float(lat))
                            )
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": {
            "family_id": "parametric-analytic",
            "param_count": 2,
            "t_min": [0.0, 0.0],
            "t_max": [1.0, 1.0],
        },
        "material": material.to_dict(),
        "plan": {"analytic": True},
    }
    ds = Dataset(header, records)
    ds.validate()
    return ds


def _rec(t, E, material, alpha, kind, axial, lateral):
    return HomogenizedSample(
        params=t,
        strain=StrainState.from_tensor(E),
        stress=StressState.from_tensor(family_stress(t, E, material)),
        energy_density=family_energy(t, E, material),
        load_meta={"alpha": float(alpha), "load_kind": kind, "axial": axial, "lateral": lateral},
    )
