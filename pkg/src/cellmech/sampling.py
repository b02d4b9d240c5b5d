"""Training-corpus generation: load enumeration, batch solves, dataset format.

The dataset is NDJSON: one JSON header line followed by one record per line
(keys sorted, shortest-roundtrip floats), which makes byte-identical reruns a
meaningful determinism check. Loads are ordered by direction, then magnitude
from zero outward so each solve can warm-start from its inward neighbour.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from . import fem, homogenize, materials
from .errors import CellmechError, TooManyFailures
from .fem import LoadCase, SolverConfig
from .geometry import FamilySpec, TilingParams, build_mesh
from .homogenize import HomogenizedSample, StrainState, StressState
from .materials import MaterialParams

FORMAT_NAME = "cellmech-dataset"
FORMAT_VERSION = 1


@dataclass
class SamplingPlan:
    n_directions: int = 8
    uniaxial_range: tuple = (-0.30, 0.50)
    uniaxial_points: int = 13
    biaxial_range: tuple = (-0.10, 0.20)
    biaxial_grid: int = 5
    param_grid: tuple = ()  # per-parameter sample counts
    seed: int = 0

    def __post_init__(self):
        if self.uniaxial_range[0] >= self.uniaxial_range[1]:
            raise ValueError("uniaxial_range must be ordered")
        if self.biaxial_range[0] >= self.biaxial_range[1]:
            raise ValueError("biaxial_range must be ordered")
        if self.n_directions < 1 or self.uniaxial_points < 1:
            raise ValueError("counts must be >= 1")
        if self.biaxial_grid < 0:
            raise ValueError("biaxial_grid must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_directions": self.n_directions,
            "uniaxial_range": list(self.uniaxial_range),
            "uniaxial_points": self.uniaxial_points,
            "biaxial_range": list(self.biaxial_range),
            "biaxial_grid": self.biaxial_grid,
            "param_grid": list(self.param_grid),
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "SamplingPlan":
        return SamplingPlan(
            n_directions=int(d.get("n_directions", 8)),
            uniaxial_range=tuple(d.get("uniaxial_range", (-0.30, 0.50))),
            uniaxial_points=int(d.get("uniaxial_points", 13)),
            biaxial_range=tuple(d.get("biaxial_range", (-0.10, 0.20))),
            biaxial_grid=int(d.get("biaxial_grid", 5)),
            param_grid=tuple(d.get("param_grid", ())),
            seed=int(d.get("seed", 0)),
        )


def paper_scale_plan() -> SamplingPlan:
    """18 directions x (25 uniaxial + 10x10 biaxial) = 2,250 loads per parameter set."""
    return SamplingPlan(
        n_directions=18,
        uniaxial_range=(-0.30, 0.50),
        uniaxial_points=25,
        biaxial_range=(-0.10, 0.20),
        biaxial_grid=10,
    )


def _outward(values: np.ndarray) -> list[float]:
    """Order magnitudes by |m| ascending, positives before negatives on ties."""
    return [float(v) for v in sorted(values, key=lambda m: (abs(m), m < 0))]


def enumerate_loads(plan: SamplingPlan, penalty_weight: float = 1e6) -> list[LoadCase]:
    """Deterministic load list: per direction, uniaxial then biaxial, zero outward."""
    loads = []
    for k in range(plan.n_directions):
        alpha = k * np.pi / plan.n_directions
        uni = _outward(np.linspace(*plan.uniaxial_range, plan.uniaxial_points))
        for m in uni:
            loads.append(LoadCase(alpha, m, None, penalty_weight))
        if plan.biaxial_grid > 0:
            grid = _outward(np.linspace(*plan.biaxial_range, plan.biaxial_grid))
            for ax in grid:
                for lat in grid:
                    loads.append(LoadCase(alpha, ax, lat, penalty_weight))
    return loads


def parameter_samples(spec: FamilySpec, plan: SamplingPlan) -> list[TilingParams]:
    """Regular grid over the parameter box, lexicographic order."""
    if spec.param_count == 0:
        return [TilingParams(())]
    counts = plan.param_grid
    if len(counts) != spec.param_count:
        raise ValueError("param_grid length must equal the family's param_count")
    axes = [
        np.linspace(lo, hi, int(c))
        for lo, hi, c in zip(spec.t_min, spec.t_max, counts)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([m.ravel() for m in mesh], axis=-1)
    return [TilingParams(tuple(row)) for row in flat]


@dataclass
class Dataset:
    header: dict
    records: list[HomogenizedSample]
    failures: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def param_groups(self) -> dict[tuple, list[int]]:
        groups: dict[tuple, list[int]] = {}
        for i, r in enumerate(self.records):
            groups.setdefault(tuple(r.params), []).append(i)
        return groups

    def arrays(self):
        """(T, E, S, psi) float64 arrays for training/evaluation."""
        n = len(self.records)
        p = len(self.records[0].params) if n else 0
        T = np.zeros((n, p))
        E = np.zeros((n, 3))
        S = np.zeros((n, 3))
        psi = np.zeros(n)
        for i, r in enumerate(self.records):
            T[i] = r.params
            E[i] = (r.strain.exx, r.strain.eyy, r.strain.exy)
            S[i] = (r.stress.sxx, r.stress.syy, r.stress.sxy)
            psi[i] = r.energy_density
        return T, E, S, psi

    def validate(self):
        for r in self.records:
            vals = [*r.params, r.strain.exx, r.strain.eyy, r.strain.exy,
                    r.stress.sxx, r.stress.syy, r.stress.sxy, r.energy_density]
            if not np.all(np.isfinite(vals)):
                raise ValueError("dataset contains non-finite fields")

    def save_ndjson(self, path: str):
        hdr = dict(self.header)
        hdr["records"] = len(self.records)
        with open(path, "w") as f:
            f.write(json.dumps(hdr, sort_keys=True) + "\n")
            for r in self.records:
                f.write(json.dumps(r.to_record(), sort_keys=True) + "\n")

    @staticmethod
    def load_ndjson(path: str) -> "Dataset":
        with open(path) as f:
            lines = [ln for ln in f.read().splitlines() if ln.strip()]
        header = json.loads(lines[0])
        if header.get("format") != FORMAT_NAME:
            raise ValueError(f"{path}: not a {FORMAT_NAME} file")
        records = [HomogenizedSample.from_record(json.loads(ln)) for ln in lines[1:]]
        return Dataset(header, records)


def _solve_param_sample(args):
    (spec, params, loads, material, resolution, solver_cfg) = args
    mesh = build_mesh(spec, params, resolution)
    records, failures, iters = [], [], []
    chains: dict[tuple, fem.ReducedState] = {}
    for li, load in enumerate(loads):
        if load.biaxial:
            key = (round(load.direction_angle, 12), "b",
                   load.axial_strain >= 0, load.lateral_strain >= 0)
        else:
            key = (round(load.direction_angle, 12), "u", load.axial_strain >= 0)
        init = chains.get(key)
        if init is None:
            init = fem.affine_init(mesh, load, material)
        try:
            rep = fem.static_solve(mesh, material, load, init=init, config=solver_cfg)
        except CellmechError as exc:
            failures.append(
                {"load_index": li, "error": type(exc).__name__,
                 "load": load.to_dict(), "t": list(params.values)}
            )
            chains.pop(key, None)
            continue
        chains[key] = rep.state
        iters.append(rep.newton_iterations)
        records.append(homogenize.homogenize(mesh, rep, material, params, load))
    return records, failures, iters


def generate_dataset(spec: FamilySpec, plan: SamplingPlan, material: MaterialParams,
                     workers: int = 1, resolution: int = 1,
                     solver_config: SolverConfig | None = None,
                     max_failure_fraction: float = 0.01) -> Dataset:
    """Sweep parameters x loads; warm-start along magnitude chains; log failures."""
    solver_cfg = solver_config or SolverConfig()
    loads = enumerate_loads(plan, penalty_weight=solver_cfg.penalty_weight)
    psamples = parameter_samples(spec, plan)
    tasks = [(spec, p, loads, material, resolution, solver_cfg) for p in psamples]

    if workers <= 1:
        results = [_solve_param_sample(t) for t in tasks]
    else:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_solve_param_sample, tasks)

    records: list[HomogenizedSample] = []
    failures: list[dict] = []
    iters: list[int] = []
    for pi, (recs, fails, its) in enumerate(results):
        records.extend(recs)
        for fl in fails:
            fl["param_index"] = pi
            failures.append(fl)
        iters.extend(its)

    total = len(records) + len(failures)
    if total and len(failures) > max_failure_fraction * total:
        raise TooManyFailures(
            f"{len(failures)}/{total} solves failed (> {max_failure_fraction:.0%})"
        )
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": spec.to_dict(),
        "material": material.to_dict(),
        "plan": plan.to_dict(),
        "resolution": resolution,
        "penalty_weight": solver_cfg.penalty_weight,
        "mean_newton_iterations": float(np.mean(iters)) if iters else 0.0,
    }
    ds = Dataset(header, records, failures)
    ds.validate()
    return ds


def split_dataset(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded split, stratified by parameter sample (no parameter point leaks).

    Falls back to a record-level split when the dataset has a single parameter
    point (analytic/solid corpora), where stratification is meaningless.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    groups = dataset.param_groups()
    target = int(round(test_fraction * len(dataset.records)))
    test_idx: set[int] = set()
    if len(groups) > 1:
        keys = list(groups.keys())
        order = rng.permutation(len(keys))
        for gi in order:
            if len(test_idx) >= target:
                break
            test_idx.update(groups[keys[gi]])
    else:
        order = rng.permutation(len(dataset.records))
        test_idx.update(int(i) for i in order[:target])

    def subset(idx_set, tag):
        hdr = dict(dataset.header)
        hdr["split"] = tag
        recs = [r for i, r in enumerate(dataset.records) if (i in idx_set) == (tag == "test")]
        return Dataset(hdr, recs)

    return subset(test_idx, "train"), subset(test_idx, "test")


def analytic_dataset(material: MaterialParams, n_directions: int = 16,
                     uniaxial_points: int = 25,
                     uniaxial_range: tuple = (-0.30, 0.50),
                     biaxial_grid: int = 8,
                     biaxial_range: tuple = (-0.10, 0.20),
                     green_magnitudes: bool = True) -> Dataset:
    """Closed-form Neo-Hookean corpus (no FEM): the activation-study fixture.

    Uniaxial rows use the energy-minimizing lateral strain; biaxial rows pin
    both Green components in the loading frame. Parameters are empty.
    """
    records = []
    for k in range(n_directions):
        alpha = k * np.pi / n_directions
        d = np.array([np.cos(alpha), np.sin(alpha)])
        n = np.array([-np.sin(alpha), np.cos(alpha)])
        R = np.stack([d, n], axis=1)
        for m in np.linspace(*uniaxial_range, uniaxial_points):
            E = materials.uniaxial_green_state(float(m), material, alpha)
            records.append(_analytic_record(E, material, alpha, "uniaxial", float(m), None))
        if biaxial_grid:
            for ax in np.linspace(*biaxial_range, biaxial_grid):
                for lat in np.linspace(*biaxial_range, biaxial_grid):
                    E_loc = np.diag([ax, lat])
                    E = R @ E_loc @ R.T
                    records.append(
                        _analytic_record(E, material, alpha, "biaxial", float(ax), float(lat))
                    )
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": {"family_id": "analytic", "param_count": 0, "t_min": [], "t_max": []},
        "material": material.to_dict(),
        "plan": {"analytic": True, "n_directions": n_directions},
    }
    ds = Dataset(header, records)
    ds.validate()
    return ds


def _analytic_record(E, material, alpha, kind, axial, lateral):
    S = materials.pk2_from_green(E, material)
    psi = float(materials.energy_from_green(E, material))
    return HomogenizedSample(
        params=(),
        strain=StrainState.from_tensor(E),
        stress=StressState.from_tensor(S),
        energy_density=psi,
        load_meta={"alpha": float(alpha), "load_kind": kind, "axial": axial, "lateral": lateral},
    )
