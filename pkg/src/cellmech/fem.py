"""Periodic microscale FEM: energies, derivatives, and the static equilibrium solver.

The reduced unknowns are u = (master vertex positions, t1, t2) where t1, t2 are
the two lattice translations; slave vertices on periodic pairs reconstruct as
x_slave = x_master + c1 t1 + c2 t2 with constant integer coefficients, so
periodicity is a hard constraint. The total potential is

    E_total = E_elastic + E_strain + E_contact

minimized by Newton's method with adaptive diagonal regularization and a
back-tracking line search that only accepts inversion- and intersection-free
steps. Imposed strain targets are Green-Lagrange directional magnitudes: the
penalty pins the translation stretch to sqrt(1 + 2 E) so the constrained
quantity is d^T E d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from . import materials as mat_mod
from .errors import (
    ElementInverted,
    InterpenetrationDetected,
    LineSearchFailed,
    MaxIterationsExceeded,
)
from .geometry import PeriodicMesh
from .materials import MaterialParams

# 3-point Gauss rule on the reference triangle (degree 2, weights sum to 1/2)
_QP = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
_QW = np.array([1 / 6, 1 / 6, 1 / 6])

_IMAGE_OFFSETS = [(0, 0), (1, 0), (0, 1), (1, 1), (-1, 0), (0, -1), (-1, -1), (1, -1), (-1, 1)]


def _shape_gradients(xi, eta):
    """Reference gradients of the 6 quadratic shape functions at (xi, eta)."""
    l1, l2, l3 = 1 - xi - eta, xi, eta
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # dL_k/d(xi,eta)
    g = np.zeros((6, 2))
    g[0] = (4 * l1 - 1) * dl[0]
    g[1] = (4 * l2 - 1) * dl[1]
    g[2] = (4 * l3 - 1) * dl[2]
    g[3] = 4 * (l2 * dl[0] + l1 * dl[1])
    g[4] = 4 * (l3 * dl[1] + l2 * dl[2])
    g[5] = 4 * (l1 * dl[2] + l3 * dl[0])
    return g


@dataclass
class LoadCase:
    """Imposed macroscopic strain. Magnitudes are Green-Lagrange directional values."""

    direction_angle: float
    axial_strain: float
    lateral_strain: float | None = None  # present only for biaxial loading
    penalty_weight: float = 1.0e6

    def __post_init__(self):
        if not (0.0 <= self.direction_angle < np.pi + 1e-12):
            raise ValueError("direction_angle must lie in [0, pi)")
        if self.penalty_weight <= 0:
            raise ValueError("penalty_weight must be > 0")
        if self.axial_strain <= -0.5:
            raise ValueError("axial Green strain must exceed -0.5")
        if self.lateral_strain is not None and self.lateral_strain <= -0.5:
            raise ValueError("lateral Green strain must exceed -0.5")

    @property
    def biaxial(self) -> bool:
        return self.lateral_strain is not None

    def direction(self) -> np.ndarray:
        return np.array([np.cos(self.direction_angle), np.sin(self.direction_angle)])

    def normal(self) -> np.ndarray:
        return np.array([-np.sin(self.direction_angle), np.cos(self.direction_angle)])

    def axial_stretch(self) -> float:
        return float(np.sqrt(1.0 + 2.0 * self.axial_strain))

    def lateral_stretch(self) -> float:
        assert self.lateral_strain is not None
        return float(np.sqrt(1.0 + 2.0 * self.lateral_strain))

    def to_dict(self) -> dict:
        return {
            "direction_angle": self.direction_angle,
            "axial_strain": self.axial_strain,
            "lateral_strain": self.lateral_strain,
            "penalty_weight": self.penalty_weight,
        }


@dataclass
class SolverConfig:
    tol_abs: float = 1e-8
    tol_rel: float = 1e-6
    max_iterations: int = 200
    penalty_weight: float = 1.0e6
    dhat: float = 1e-3  # contact barrier support, in units of cell size
    kappa0: float | None = None  # default: 100 * youngs_modulus
    contact: bool = True
    max_line_search: int = 40

    def to_dict(self) -> dict:
        return {
            "tol_abs": self.tol_abs,
            "tol_rel": self.tol_rel,
            "max_iterations": self.max_iterations,
            "penalty_weight": self.penalty_weight,
            "dhat": self.dhat,
            "kappa0": self.kappa0,
            "contact": self.contact,
            "max_line_search": self.max_line_search,
        }

    @staticmethod
    def from_dict(d: dict) -> "SolverConfig":
        cfg = SolverConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ValueError(f"unknown solver option '{k}'")
            setattr(cfg, k, v)
        return cfg


@dataclass
class ReducedState:
    """Master vertex positions plus the two lattice translations."""

    free_positions: np.ndarray  # (n_masters, 2)
    t1: np.ndarray  # (2,)
    t2: np.ndarray

    def copy(self) -> "ReducedState":
        return ReducedState(self.free_positions.copy(), self.t1.copy(), self.t2.copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.free_positions.ravel(), self.t1, self.t2])

    @staticmethod
    def from_vector(u: np.ndarray, n_masters: int) -> "ReducedState":
        return ReducedState(
            u[: 2 * n_masters].reshape(n_masters, 2).copy(),
            u[2 * n_masters : 2 * n_masters + 2].copy(),
            u[2 * n_masters + 2 :].copy(),
        )


@dataclass
class SolveReport:
    state: ReducedState
    elastic_energy: float
    penalty_energy: float
    contact_energy: float
    newton_iterations: int
    final_gradient_norm: float
    constraint_violation: float
    converged: bool = True

    @property
    def total_energy(self) -> float:
        return self.elastic_energy + self.penalty_energy + self.contact_energy


class _FemOps:
    """Per-mesh precomputation: quadrature shape gradients, periodic reduction."""

    def __init__(self, mesh: PeriodicMesh):
        self.mesh = mesh
        X = mesh.rest_positions
        el = mesh.elements
        n_el = len(el)

        # straight-sided elements: rest map affine, one Jacobian per element
        p1, p2, p3 = X[el[:, 0]], X[el[:, 1]], X[el[:, 2]]
        Jr = np.stack([p2 - p1, p3 - p1], axis=-1)  # (n_el, 2, 2) columns
        detJ = Jr[:, 0, 0] * Jr[:, 1, 1] - Jr[:, 0, 1] * Jr[:, 1, 0]
        JrinvT = np.empty_like(Jr)
        JrinvT[:, 0, 0] = Jr[:, 1, 1]
        JrinvT[:, 0, 1] = -Jr[:, 1, 0]
        JrinvT[:, 1, 0] = -Jr[:, 0, 1]
        JrinvT[:, 1, 1] = Jr[:, 0, 0]
        JrinvT /= detJ[:, None, None]

        gref = np.stack([_shape_gradients(*q) for q in _QP])  # (3, 6, 2)
        # dN_a/dX at each qp: same for all qp here (affine rest map) but keep per-qp
        self.G = np.einsum("qak,eik->eqai", gref, JrinvT)  # (n_el, 3, 6, 2)
        self.W = np.outer(detJ, _QW)  # (n_el, 3); weights sum to the element area

        # periodic reduction: resolve slave chains to (master, c1, c2)
        n_v = mesh.n_vertices
        parent = {}
        for i, j in mesh.pairs_x:
            parent[int(j)] = (int(i), 1, 0)
        for i, j in mesh.pairs_y:
            parent.setdefault(int(j), (int(i), 0, 1))
        master_of = np.arange(n_v)
        coeff = np.zeros((n_v, 2), dtype=np.int64)
        for v in range(n_v):
            m, c1, c2 = v, 0, 0
            seen = 0
            while m in parent:
                m, d1, d2 = parent[m]
                c1 += d1
                c2 += d2
                seen += 1
                if seen > 4:
                    raise ValueError("periodic pair chains do not terminate")
            master_of[v] = m
            coeff[v] = (c1, c2)
        masters = np.array(sorted(set(master_of.tolist())), dtype=np.int64)
        master_slot = -np.ones(n_v, dtype=np.int64)
        master_slot[masters] = np.arange(len(masters))
        self.masters = masters
        self.n_masters = len(masters)
        self.master_slot_of = master_slot[master_of]  # per full vertex
        self.coeff = coeff
        self.ndof = 2 * self.n_masters + 4

        # R_aug: (2 n_v + 4) x ndof mapping reduced dofs -> (full positions, t1, t2)
        rows, cols, vals = [], [], []
        tbase = 2 * self.n_masters
        for v in range(n_v):
            s = self.master_slot_of[v]
            for i in (0, 1):
                rows.append(2 * v + i)
                cols.append(2 * s + i)
                vals.append(1.0)
                if coeff[v, 0]:
                    rows.append(2 * v + i)
                    cols.append(tbase + i)
                    vals.append(float(coeff[v, 0]))
                if coeff[v, 1]:
                    rows.append(2 * v + i)
                    cols.append(tbase + 2 + i)
                    vals.append(float(coeff[v, 1]))
        for k in range(4):
            rows.append(2 * n_v + k)
            cols.append(tbase + k)
            vals.append(1.0)
        self.R_aug = sp.csr_matrix(
            (vals, (rows, cols)), shape=(2 * n_v + 4, self.ndof)
        )
        self.n_aug = 2 * n_v + 4

        # element dof indices in the augmented (full + t) space
        edof = np.empty((n_el, 12), dtype=np.int64)
        edof[:, 0::2] = 2 * el
        edof[:, 1::2] = 2 * el + 1
        self._erows = np.repeat(edof, 12, axis=1).ravel()
        self._ecols = np.tile(edof, (1, 12)).ravel()

        # contact surface: quadratic edges split at midside nodes into 2 segments
        fs = mesh.free_surface_edges
        if len(fs):
            segs = np.concatenate([fs[:, [0, 2]], fs[:, [2, 1]]], axis=0)
        else:
            segs = np.zeros((0, 2), dtype=np.int64)
        self.surface_segments = segs
        self.surface_nodes = np.unique(fs.ravel()) if len(fs) else np.zeros(0, dtype=np.int64)

    def rest_state(self) -> ReducedState:
        X = self.mesh.rest_positions
        return ReducedState(
            X[self.masters].copy(), self.mesh.offset_x.copy(), self.mesh.offset_y.copy()
        )

    def full_positions(self, state: ReducedState) -> np.ndarray:
        x = state.free_positions[self.master_slot_of]
        return x + np.outer(self.coeff[:, 0], state.t1) + np.outer(self.coeff[:, 1], state.t2)

    def reduce_vector(self, g_aug: np.ndarray) -> np.ndarray:
        return self.R_aug.T @ g_aug

    def reduce_matrix(self, H_aug: sp.spmatrix) -> sp.csr_matrix:
        return (self.R_aug.T @ (H_aug @ self.R_aug)).tocsr()


_OPS_ATTR = "_cellmech_fem_ops"


def ops_for(mesh: PeriodicMesh) -> _FemOps:
    ops = getattr(mesh, _OPS_ATTR, None)
    if ops is None:
        ops = _FemOps(mesh)
        object.__setattr__(mesh, _OPS_ATTR, ops)
    return ops


def rest_state(mesh: PeriodicMesh) -> ReducedState:
    return ops_for(mesh).rest_state()


def deformation_gradients(mesh: PeriodicMesh, state: ReducedState) -> np.ndarray:
    """F at every quadrature point, shape (n_el, 3, 2, 2)."""
    ops = ops_for(mesh)
    x = ops.full_positions(state)
    return np.einsum("eai,eqaj->eqij", x[mesh.elements], ops.G)


def elements_inverted(mesh: PeriodicMesh, state: ReducedState) -> bool:
    F = deformation_gradients(mesh, state)
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return bool(np.any(J <= 0.0))


def elastic_energy(mesh: PeriodicMesh, state: ReducedState, material: MaterialParams,
                   order: int = 0):
    """Neo-Hookean strain energy; order selects (E,), (E, grad), (E, grad, H)."""
    ops = ops_for(mesh)
    x = ops.full_positions(state)
    F = np.einsum("eai,eqaj->eqij", x[mesh.elements], ops.G)
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(J <= 0.0):
        raise ElementInverted("element Jacobian <= 0")
    energy = float(np.sum(ops.W * mat_mod.psi(F, material)))
    if order == 0:
        return (energy,)

    P = mat_mod.piola(F, material)
    g_el = np.einsum("eq,eqij,eqaj->eai", ops.W, P, ops.G)  # (n_el, 6, 2)
    g_aug = np.zeros(ops.n_aug)
    np.add.at(g_aug.reshape(-1, 2)[: mesh.n_vertices], mesh.elements, g_el)
    g = ops.reduce_vector(g_aug)
    if order == 1:
        return energy, g

    A = mat_mod.piola_tangent(F, material)  # (n_el, 3, 2,2,2,2)
    He = np.einsum("eq,eqijkl,eqaj,eqbl->eaibk", ops.W, A, ops.G, ops.G)
    H_aug = sp.coo_matrix(
        (He.reshape(len(mesh.elements), 144).ravel(), (ops._erows, ops._ecols)),
        shape=(ops.n_aug, ops.n_aug),
    ).tocsr()
    return energy, g, ops.reduce_matrix(H_aug)


def strain_penalty(mesh: PeriodicMesh, state: ReducedState, load: LoadCase,
                   order: int = 0):
    """Quadratic penalty pinning periodic-pair offsets to the target stretch."""
    ops = ops_for(mesh)
    d = load.direction()
    n = load.normal()
    s_ax = load.axial_stretch()
    terms = [(d, s_ax)]
    if load.biaxial:
        terms.append((n, load.lateral_stretch()))

    groups = [
        (float(len(mesh.pairs_x)), state.t1, mesh.offset_x, 0),
        (float(len(mesh.pairs_y)), state.t2, mesh.offset_y, 2),
    ]
    w = load.penalty_weight
    energy = 0.0
    g_t = np.zeros(4)
    H_t = np.zeros((4, 4))
    for count, t, T, slot in groups:
        if count == 0:
            continue
        for v, stretch in terms:
            r = float(t @ v - stretch * (T @ v))
            energy += w * count * r * r
            g_t[slot : slot + 2] += 2.0 * w * count * r * v
            H_t[slot : slot + 2, slot : slot + 2] += 2.0 * w * count * np.outer(v, v)
    if order == 0:
        return (energy,)
    g_aug = np.zeros(ops.n_aug)
    g_aug[-4:] = g_t
    g = ops.reduce_vector(g_aug)
    if order == 1:
        return energy, g
    rows, cols = np.nonzero(H_t)
    H_aug = sp.coo_matrix(
        (H_t[rows, cols], (ops.n_aug - 4 + rows, ops.n_aug - 4 + cols)),
        shape=(ops.n_aug, ops.n_aug),
    ).tocsr()
    return energy, g, ops.reduce_matrix(H_aug)


def constraint_violation(mesh: PeriodicMesh, state: ReducedState, load: LoadCase) -> float:
    """Mean relative deviation of the constrained offset projections."""
    d = load.direction()
    terms = [(d, load.axial_stretch())]
    if load.biaxial:
        terms.append((load.normal(), load.lateral_stretch()))
    viol = []
    for t, T in ((state.t1, mesh.offset_x), (state.t2, mesh.offset_y)):
        for v, stretch in terms:
            viol.append(abs(float(t @ v - stretch * (T @ v))) / (stretch * np.linalg.norm(T)))
    return float(np.mean(viol))


# ---------------------------------------------------------------------------
# contact barrier
# ---------------------------------------------------------------------------


def _barrier(d: np.ndarray, dhat: float, kappa: float):
    """b(d) = -kappa (d - dhat)^2 ln(d / dhat) on (0, dhat); returns (b, b', b'')."""
    r = d - dhat
    ln = np.log(d / dhat)
    b = -kappa * r * r * ln
    db = -kappa * (2.0 * r * ln + r * r / d)
    d2b = -kappa * (2.0 * ln + 4.0 * r / d - r * r / (d * d))
    return b, db, d2b


def _point_segment_sqdist(p, q0, q1):
    """Squared distance, its gradient and Hessian w.r.t. z = (p, q0, q1)."""
    a = q1 - q0
    r = p - q0
    denom = float(a @ a)
    t = float(r @ a) / denom
    if t <= 0.0 or t >= 1.0:
        q = q0 if t <= 0.0 else q1
        dd = p - q
        d2 = float(dd @ dd)
        g = np.zeros(6)
        g[0:2] = 2 * dd
        sl = slice(2, 4) if t <= 0.0 else slice(4, 6)
        g[sl] = -2 * dd
        H = np.zeros((6, 6))
        I2 = 2 * np.eye(2)
        H[0:2, 0:2] = I2
        H[sl, sl] = I2
        H[0:2, sl] = -I2
        H[sl, 0:2] = -I2
        return d2, g, H
    c = a[0] * r[1] - a[1] * r[0]
    u = denom
    d2 = c * c / u
    gc = np.array([-a[1], a[0], a[1] - r[1], r[0] - a[0], r[1], -r[0]])
    gu = np.concatenate([np.zeros(2), -2 * a, 2 * a])
    g = (2 * c / u) * gc - (c * c / (u * u)) * gu
    K = np.zeros((6, 6))  # constant Hessian of the bilinear c(z)
    for (i, j, s) in ((0, 3, 1.0), (0, 5, -1.0), (1, 2, -1.0), (1, 4, 1.0), (2, 5, 1.0), (3, 4, -1.0)):
        K[i, j] += s
        K[j, i] += s
    Hu = np.zeros((6, 6))
    Hu[2:4, 2:4] = 2 * np.eye(2)
    Hu[4:6, 4:6] = 2 * np.eye(2)
    Hu[2:4, 4:6] = -2 * np.eye(2)
    Hu[4:6, 2:4] = -2 * np.eye(2)
    H = (
        (2.0 / u) * np.outer(gc, gc)
        + (2 * c / u) * K
        - (2 * c / (u * u)) * (np.outer(gc, gu) + np.outer(gu, gc))
        + (2 * c * c / u**3) * np.outer(gu, gu)
        - (c * c / (u * u)) * Hu
    )
    return d2, g, H


def _contact_candidates(ops: _FemOps, x: np.ndarray, t1, t2, radius: float):
    """Candidate arrays (pv, si, o1, o2) of point/segment pairs within `radius`.

    Candidates pair unit-cell surface points against surface segments of the
    cell and its periodic images (linear map x + o1 t1 + o2 t2). A pair is
    skipped when the point and a segment endpoint are the same *material*
    point (same periodic master at a matching lattice shift); this covers both
    ordinary edge incidence and wall continuations across the cell boundary.
    """
    segs = ops.surface_segments
    if len(segs) == 0 or len(ops.surface_nodes) == 0:
        return None
    pts = x[ops.surface_nodes]
    ptree = cKDTree(pts)
    seg_half = 0.5 * np.abs(x[segs[:, 1]] - x[segs[:, 0]]).max()
    offsets = np.asarray(_IMAGE_OFFSETS, dtype=float)
    shifts = offsets @ np.stack([np.asarray(t1, dtype=float), np.asarray(t2, dtype=float)])
    base_mids = 0.5 * (x[segs[:, 0]] + x[segs[:, 1]])
    all_mids = (base_mids[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
    stree = cKDTree(all_mids)
    hits = stree.query_ball_tree(ptree, r=radius + seg_half)
    n_seg = len(segs)
    pv_l, si_l, o1_l, o2_l = [], [], [], []
    for flat, plist in enumerate(hits):
        if not plist:
            continue
        oi, si = divmod(flat, n_seg)
        pv_l.extend(ops.surface_nodes[plist])
        si_l.extend([si] * len(plist))
        o1_l.extend([_IMAGE_OFFSETS[oi][0]] * len(plist))
        o2_l.extend([_IMAGE_OFFSETS[oi][1]] * len(plist))
    if not pv_l:
        return None
    pv = np.asarray(pv_l, dtype=np.int64)
    si = np.asarray(si_l, dtype=np.int64)
    o1 = np.asarray(o1_l, dtype=np.int64)
    o2 = np.asarray(o2_l, dtype=np.int64)
    # drop same-material-point incidences
    mo, co = ops.master_slot_of, ops.coeff
    keep = np.ones(len(pv), dtype=bool)
    for col in (0, 1):
        e = segs[si, col]
        keep &= ~(
            (mo[pv] == mo[e]) & (co[pv, 0] == co[e, 0] + o1) & (co[pv, 1] == co[e, 1] + o2)
        )
    if not keep.any():
        return None
    return pv[keep], si[keep], o1[keep], o2[keep]


def _candidate_distances(ops: _FemOps, x: np.ndarray, t1, t2, cands):
    """Vectorized point-segment distances for candidate arrays."""
    pv, si, o1, o2 = cands
    segs = ops.surface_segments
    shift = np.outer(o1, t1) + np.outer(o2, t2)
    p = x[pv]
    q0 = x[segs[si, 0]] + shift
    q1 = x[segs[si, 1]] + shift
    a = q1 - q0
    r = p - q0
    t = np.clip(np.einsum("ij,ij->i", r, a) / np.einsum("ij,ij->i", a, a), 0.0, 1.0)
    diff = p - (q0 + t[:, None] * a)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def min_surface_distance(mesh: PeriodicMesh, state: ReducedState,
                         radius: float = 0.25) -> float:
    """Minimum point-segment distance over contact candidates (inf if none)."""
    ops = ops_for(mesh)
    x = ops.full_positions(state)
    cands = _contact_candidates(ops, x, state.t1, state.t2, radius)
    if cands is None:
        return np.inf
    return float(_candidate_distances(ops, x, state.t1, state.t2, cands).min())


def contact_barrier(mesh: PeriodicMesh, state: ReducedState, dhat: float, kappa: float,
                    order: int = 0):
    """Log-barrier contact energy over unit-cell/image point-segment pairs."""
    ops = ops_for(mesh)
    x = ops.full_positions(state)
    segs = ops.surface_segments
    cands = _contact_candidates(ops, x, state.t1, state.t2, radius=1.5 * dhat)
    if cands is None:
        active = np.zeros(0, dtype=np.int64)
        dists = np.zeros(0)
    else:
        dists = _candidate_distances(ops, x, state.t1, state.t2, cands)
        if np.any(dists <= 0.0):
            raise InterpenetrationDetected("zero point-edge distance")
        active = np.nonzero(dists < dhat)[0]
    energy = 0.0
    g_aug = np.zeros(ops.n_aug) if order >= 1 else None
    hrows, hcols, hvals = [], [], []
    tbase = 2 * mesh.n_vertices
    for ai in active:
        pv, si = int(cands[0][ai]), int(cands[1][ai])
        o1, o2 = int(cands[2][ai]), int(cands[3][ai])
        va, vb = int(segs[si, 0]), int(segs[si, 1])
        shift = o1 * state.t1 + o2 * state.t2
        d2, g2, H2 = _point_segment_sqdist(x[pv], x[va] + shift, x[vb] + shift)
        d = np.sqrt(d2)
        b, db, d2b = _barrier(np.array(d), dhat, kappa)
        energy += float(b)
        if order == 0:
            continue
        gd = g2 / (2.0 * d)  # d(d)/dz
        gz = float(db) * gd
        # augmented dofs touched: p, q0, q1 nodes and (via images) t1, t2
        dofs = [2 * pv, 2 * pv + 1, 2 * va, 2 * va + 1, 2 * vb, 2 * vb + 1,
                tbase, tbase + 1, tbase + 2, tbase + 3]
        # M maps z (6) -> aug dofs (10): identity on nodes, offsets on t slots
        M = np.zeros((10, 6))
        M[0, 0] = M[1, 1] = M[2, 2] = M[3, 3] = M[4, 4] = M[5, 5] = 1.0
        if o1:
            M[6, 2] = M[6, 4] = float(o1)
            M[7, 3] = M[7, 5] = float(o1)
        if o2:
            M[8, 2] = M[8, 4] = float(o2)
            M[9, 3] = M[9, 5] = float(o2)
        np.add.at(g_aug, dofs, M @ gz)
        if order >= 2:
            Hd = (H2 - 2.0 * np.outer(gd, gd)) / (2.0 * d)  # Hessian of d itself
            Hz = float(d2b) * np.outer(gd, gd) + float(db) * Hd
            Hloc = M @ Hz @ M.T
            for ii in range(10):
                for jj in range(10):
                    v = Hloc[ii, jj]
                    if v != 0.0:
                        hrows.append(dofs[ii])
                        hcols.append(dofs[jj])
                        hvals.append(v)
    if order == 0:
        return (energy,)
    g = ops.reduce_vector(g_aug)
    if order == 1:
        return energy, g
    H_aug = sp.coo_matrix((hvals, (hrows, hcols)), shape=(ops.n_aug, ops.n_aug)).tocsr()
    return energy, g, ops.reduce_matrix(H_aug)


# ---------------------------------------------------------------------------
# static solve
# ---------------------------------------------------------------------------


def _total(mesh, state, material, load, config, kappa, order):
    parts = [elastic_energy(mesh, state, material, order)]
    parts.append(strain_penalty(mesh, state, load, order))
    if config.contact and len(mesh.free_surface_edges):
        parts.append(contact_barrier(mesh, state, config.dhat, kappa, order))
    energy = sum(p[0] for p in parts)
    if order == 0:
        return (energy, parts)
    g = sum(p[1] for p in parts)
    if order == 1:
        return energy, g, parts
    H = parts[0][2]
    for p in parts[1:]:
        H = H + p[2]
    return energy, g, H, parts


def static_solve(mesh: PeriodicMesh, material: MaterialParams, load: LoadCase,
                 init: ReducedState | None = None,
                 config: SolverConfig | None = None) -> SolveReport:
    """Newton with back-tracking line search and adaptive diagonal regularization."""
    config = config or SolverConfig()
    ops = ops_for(mesh)
    state = (init or ops.rest_state()).copy()
    if elements_inverted(mesh, state):
        raise ElementInverted("initial state contains inverted elements")
    kappa = config.kappa0 if config.kappa0 is not None else 100.0 * material.youngs_modulus
    kappa_cap = 1e8 * material.youngs_modulus
    stiffen_below = 0.5 * config.dhat  # next distance threshold that doubles kappa
    has_contact = config.contact and len(mesh.free_surface_edges) > 0

    # pinned dofs remove the rigid-translation null space of the interior
    pin = np.array([0, 1], dtype=np.int64)
    free = np.setdiff1d(np.arange(ops.ndof), pin)

    n_m = ops.n_masters
    u = state.to_vector()

    def to_state(uv):
        return ReducedState.from_vector(uv, n_m)

    e0, g = _total(mesh, to_state(u), material, load, config, kappa, 1)[:2]
    gnorm0 = float(np.linalg.norm(g[free]))
    tol = config.tol_abs + config.tol_rel * gnorm0
    energy = e0
    gnorm = gnorm0
    iters = 0

    while gnorm > tol:
        if iters >= config.max_iterations:
            raise MaxIterationsExceeded(
                f"no convergence after {iters} Newton iterations (|g|={gnorm:.3e})"
            )
        _, g, H, _ = _total(mesh, to_state(u), material, load, config, kappa, 2)
        Hff = H[free][:, free].tocsc()
        gf = g[free]
        tau = 0.0
        mean_diag = float(np.abs(Hff.diagonal()).mean())
        step = None
        for _ in range(40):
            try:
                lu = spla.splu(Hff + tau * sp.identity(Hff.shape[0], format="csc"))
                p = lu.solve(-gf)
            except Exception:
                p = None
            if p is not None and np.all(np.isfinite(p)) and float(gf @ p) < 0:
                step = self_p = p
                # back-tracking: inversion-free, intersection-free, Armijo decrease.
                # conservative clamp: a step below 0.45 * current gap cannot tunnel,
                # which makes a per-trial crossing check redundant when it applies.
                alpha = 1.0
                crossing_safe = not has_contact
                if has_contact:
                    dmin = min_surface_distance(mesh, to_state(u))
                    pmax = float(np.abs(self_p).max())
                    if np.isfinite(dmin) and pmax > 0:
                        alpha = min(1.0, 0.45 * dmin / pmax)
                        crossing_safe = True
                accepted = False
                for _ls in range(config.max_line_search):
                    du = np.zeros(ops.ndof)
                    du[free] = alpha * self_p
                    trial = to_state(u + du)
                    if not elements_inverted(mesh, trial):
                        if crossing_safe or min_surface_distance(mesh, trial) > 0:
                            try:
                                et = _total(mesh, trial, material, load, config, kappa, 0)[0]
                            except (ElementInverted, InterpenetrationDetected):
                                et = np.inf
                            if et <= energy + 1e-4 * alpha * float(gf @ self_p):
                                accepted = True
                                break
                    alpha *= 0.5
                if accepted:
                    u = u + du
                    energy = et
                    break
            # regularize and retry
            tau = max(1e-8, 1e-6 * mean_diag) if tau == 0.0 else 10.0 * tau
            step = None
        if step is None:
            raise LineSearchFailed("regularized Newton step rejected by line search")
        iters += 1
        _, g = _total(mesh, to_state(u), material, load, config, kappa, 1)[:2]
        gnorm = float(np.linalg.norm(g[free]))
        if has_contact:
            # stiffen the barrier: double kappa each time the gap halves below dhat/2
            dmin = min_surface_distance(mesh, to_state(u))
            while dmin < stiffen_below and kappa < kappa_cap:
                kappa *= 2.0
                stiffen_below *= 0.5

    final = to_state(u)
    e_el = elastic_energy(mesh, final, material, 0)[0]
    e_pen = strain_penalty(mesh, final, load, 0)[0]
    e_con = (
        contact_barrier(mesh, final, config.dhat, kappa, 0)[0]
        if has_contact
        else 0.0
    )
    return SolveReport(
        state=final,
        elastic_energy=float(e_el),
        penalty_energy=float(e_pen),
        contact_energy=float(e_con),
        newton_iterations=iters,
        final_gradient_norm=gnorm,
        constraint_violation=constraint_violation(mesh, final, load),
        converged=True,
    )


def affine_init(mesh: PeriodicMesh, load: LoadCase,
                material: MaterialParams | None = None) -> ReducedState:
    """Affine warm start x = F X with the target axial stretch (and a Poisson guess)."""
    ops = ops_for(mesh)
    d, n = load.direction(), load.normal()
    s_ax = load.axial_stretch()
    if load.biaxial:
        s_lat = load.lateral_stretch()
    else:
        nu = material.poisson_ratio if material is not None else 0.3
        s_lat = 1.0 - nu * (s_ax - 1.0)
    F = s_ax * np.outer(d, d) + s_lat * np.outer(n, n)
    X = mesh.rest_positions
    return ReducedState(
        (X[ops.masters] @ F.T),
        F @ mesh.offset_x,
        F @ mesh.offset_y,
    )
