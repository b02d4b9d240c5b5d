"""Parametric periodic unit-cell families meshed with 6-node quadratic triangles.

Two built-in families:

* ``solid``     -- a fully filled unit square (0 parameters). Homogenizing it must
                   reproduce the base material, which makes it the main oracle.
* ``honeycomb`` -- a hexagonal wire network in a unit square cell with
                   params = (beam half-width w, junction offset delta).

Meshes have *fixed topology per (family, resolution)*: connectivity, pair lists
and node ordering never depend on the parameter values; only ``rest_positions``
move (smoothly) with the parameters. Beams are meshed as mapped quad strips
(two quadratic triangles per quad, straight sides, midside nodes at segment
midpoints); each three-way junction is a subdivided triangle spanned by the
wall/wall intersection corners of adjacent beams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, ParamOutOfBounds

SOLID = "solid"
HONEYCOMB = "honeycomb"

# honeycomb reference layout (unit cell [0,1]^2, wrapped junction positions)
_HC_Y_A1 = 1.0 / 3.0
_HC_Y_B1 = 2.0 / 3.0
_HC_Y_A2 = 5.0 / 6.0
_HC_Y_B2 = 1.0 / 6.0
_HC_TARGET_H = 0.13  # reference element length along beams


@dataclass(frozen=True)
class FamilySpec:
    family_id: str
    param_count: int
    t_min: tuple
    t_max: tuple
    base_cell_size: float = 1.0

    def __post_init__(self):
        if len(self.t_min) != self.param_count or len(self.t_max) != self.param_count:
            raise ValueError("bound lengths must equal param_count")
        if any(a >= b for a, b in zip(self.t_min, self.t_max)):
            raise ValueError("t_min must be < t_max componentwise")

    def midpoint(self) -> "TilingParams":
        return TilingParams(tuple(0.5 * (a + b) for a, b in zip(self.t_min, self.t_max)))

    def contains(self, params: "TilingParams") -> bool:
        v = params.values
        return len(v) == self.param_count and all(
            a - 1e-12 <= x <= b + 1e-12 for x, a, b in zip(v, self.t_min, self.t_max)
        )

    def to_dict(self) -> dict:
        return {
            "family_id": self.family_id,
            "param_count": self.param_count,
            "t_min": list(self.t_min),
            "t_max": list(self.t_max),
            "base_cell_size": self.base_cell_size,
        }

    @staticmethod
    def from_dict(d: dict) -> "FamilySpec":
        return FamilySpec(
            d["family_id"],
            int(d["param_count"]),
            tuple(float(x) for x in d["t_min"]),
            tuple(float(x) for x in d["t_max"]),
            float(d.get("base_cell_size", 1.0)),
        )


@dataclass(frozen=True)
class TilingParams:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def solid_cell_spec() -> FamilySpec:
    return FamilySpec(SOLID, 0, (), ())


def honeycomb_spec() -> FamilySpec:
    # w in [0.03, 0.10] keeps junction triangles clear of the cell boundary for
    # |delta| <= 0.04; wider bounds are possible but must pass validate_params.
    return FamilySpec(HONEYCOMB, 2, (0.03, -0.04), (0.10, 0.04))


def family_spec(family_id: str) -> FamilySpec:
    if family_id == SOLID:
        return solid_cell_spec()
    if family_id == HONEYCOMB:
        return honeycomb_spec()
    raise ValueError(f"unknown family '{family_id}'")


@dataclass
class PeriodicMesh:
    family_id: str
    resolution: int
    rest_positions: np.ndarray  # (n, 2)
    elements: np.ndarray  # (m, 6) int: corners 1,2,3 then midsides 12,23,31
    pairs_x: np.ndarray  # (px, 2) int, X[j] - X[i] == offset_x for all pairs
    pairs_y: np.ndarray
    offset_x: np.ndarray  # (2,)
    offset_y: np.ndarray
    free_surface_edges: np.ndarray  # (k, 3) int (corner, corner, mid); contact/UI surface
    cut_edges_x: np.ndarray  # boundary edges paired across the x-translation
    cut_edges_y: np.ndarray
    rest_area: float = field(init=False)

    def __post_init__(self):
        self.rest_positions = np.asarray(self.rest_positions, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        a = _element_areas(self.rest_positions, self.elements)
        if np.any(a <= 0):
            raise DegenerateGeometry("non-positive element rest area")
        self.rest_area = float(a.sum())

    @property
    def n_vertices(self) -> int:
        return self.rest_positions.shape[0]

    def topology_key(self) -> bytes:
        """Connectivity fingerprint; identical across parameter values."""
        return (
            self.elements.tobytes()
            + self.pairs_x.tobytes()
            + self.pairs_y.tobytes()
            + self.free_surface_edges.tobytes()
        )


def _element_areas(X: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p1, p2, p3 = X[elements[:, 0]], X[elements[:, 1]], X[elements[:, 2]]
    return 0.5 * ((p2[:, 0] - p1[:, 0]) * (p3[:, 1] - p1[:, 1]) - (p3[:, 0] - p1[:, 0]) * (p2[:, 1] - p1[:, 1]))


def _rot90(v):
    return np.array([-v[1], v[0]])


class _NodeRegistry:
    def __init__(self):
        self.ids = {}
        self.positions = []

    def get(self, key, pos) -> int:
        idx = self.ids.get(key)
        if idx is None:
            idx = len(self.positions)
            self.ids[key] = idx
            self.positions.append(np.asarray(pos, dtype=float))
        return idx

    def array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


def _check_bounds(spec: FamilySpec, params: TilingParams):
    if len(params.values) != spec.param_count:
        raise ParamOutOfBounds(
            f"expected {spec.param_count} parameters, got {len(params.values)}"
        )
    for k, (v, lo, hi) in enumerate(zip(params.values, spec.t_min, spec.t_max)):
        if not (lo - 1e-12 <= v <= hi + 1e-12):
            raise ParamOutOfBounds(f"param[{k}]={v} outside [{lo}, {hi}]")


# ---------------------------------------------------------------------------
# solid cell
# ---------------------------------------------------------------------------


def _build_solid(resolution: int) -> PeriodicMesh:
    n = resolution + 1  # quads per side
    m = 2 * n  # node lattice pitch
    nid = lambda i, j: i * (m + 1) + j
    xs = np.linspace(0.0, 1.0, m + 1)
    X = np.array([[xs[i], xs[j]] for i in range(m + 1) for j in range(m + 1)])

    elements = []
    for I in range(n):
        for J in range(n):
            i, j = 2 * I, 2 * J
            a, b, c, d = nid(i, j), nid(i + 2, j), nid(i + 2, j + 2), nid(i, j + 2)
            elements.append([a, b, c, nid(i + 1, j), nid(i + 2, j + 1), nid(i + 1, j + 1)])
            elements.append([a, c, d, nid(i + 1, j + 1), nid(i + 1, j + 2), nid(i, j + 1)])
    elements = np.asarray(elements, dtype=np.int64)

    pairs_x = np.array([[nid(0, j), nid(m, j)] for j in range(m + 1)], dtype=np.int64)
    pairs_y = np.array([[nid(i, 0), nid(i, m)] for i in range(m + 1)], dtype=np.int64)

    cut_x = []
    cut_y = []
    for j in range(0, m, 2):
        cut_x.append([nid(0, j), nid(0, j + 2), nid(0, j + 1)])
        cut_x.append([nid(m, j), nid(m, j + 2), nid(m, j + 1)])
    for i in range(0, m, 2):
        cut_y.append([nid(i, 0), nid(i + 2, 0), nid(i + 1, 0)])
        cut_y.append([nid(i, 1 * m), nid(i + 2, m), nid(i + 1, m)])

    return PeriodicMesh(
        family_id=SOLID,
        resolution=resolution,
        rest_positions=X,
        elements=elements,
        pairs_x=pairs_x,
        pairs_y=pairs_y,
        offset_x=np.array([1.0, 0.0]),
        offset_y=np.array([0.0, 1.0]),
        free_surface_edges=np.zeros((0, 3), dtype=np.int64),
        cut_edges_x=np.asarray(cut_x, dtype=np.int64),
        cut_edges_y=np.asarray(cut_y, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# honeycomb
# ---------------------------------------------------------------------------


def _hc_layout(delta: float) -> dict:
    """Wrapped junction positions and the 6 topological beams (with lattice offsets)."""
    pos = {
        "A1": np.array([0.25, _HC_Y_A1]),
        "B1": np.array([0.25, _HC_Y_B1 + delta]),
        "A2": np.array([0.75, _HC_Y_A2]),
        "B2": np.array([0.75, _HC_Y_B2 + delta]),
    }
    # beam: (start junction, end junction, lattice offset of the end, boundary crossing)
    beams = {
        "V1": ("A1", "B1", (0, 0), None),
        "V2": ("A2", "B2", (0, 1), "y"),
        "S1": ("B1", "A2", (0, 0), None),
        "S2": ("A2", "B1", (1, 0), "x"),
        "S3": ("B2", "A1", (0, 0), None),
        "S4": ("B2", "A1", (1, 0), "x"),
    }
    return {"pos": pos, "beams": beams}


# stubs per junction in CCW order at the reference geometry: (beam, end) where
# end is 0 if the junction is the beam start, 1 if it is the (offset) end.
_HC_STUBS = {
    "A1": [("V1", 0), ("S4", 1), ("S3", 1)],  # up, down-left, down-right
    "B1": [("S1", 0), ("S2", 1), ("V1", 1)],  # up-right, up-left, down
    "A2": [("V2", 0), ("S1", 1), ("S2", 0)],  # up, down-left, down-right
    "S_B2": None,  # placeholder; defined below for readability
}
_HC_STUBS["B2"] = [("S4", 0), ("S3", 0), ("V2", 1)]  # up-right, up-left, down
del _HC_STUBS["S_B2"]

# reference lengthwise subdivision per strip piece (scaled by resolution)
_HC_NLEN = {
    ("V1", 0): 3,
    ("V2", 0): 1,
    ("V2", 1): 1,
    ("S1", 0): 4,
    ("S2", 0): 2,
    ("S2", 1): 2,
    ("S3", 0): 4,
    ("S4", 0): 2,
    ("S4", 1): 2,
}


def _junction_geometry(layout: dict, w: float) -> dict:
    """Corner points of every junction triangle.

    corners[j][i] is the wall/wall intersection between CCW-consecutive stubs
    i and i+1; the chord of stub i runs from corners[i-1] (its CW wall) to
    corners[i] (its CCW wall).
    """
    pos, beams = layout["pos"], layout["beams"]
    out = {}
    for jname, stubs in _HC_STUBS.items():
        P = pos[jname]
        dirs = []
        for beam, end in stubs:
            ja, jb, off, _ = beams[beam]
            pa = pos[ja]
            pb = pos[jb] + np.asarray(off, dtype=float)
            u = (pb - pa) if end == 0 else (pa - pb)
            dirs.append(u / np.linalg.norm(u))
        corners = []
        for i in range(3):
            u0, u1 = dirs[i], dirs[(i + 1) % 3]
            m0, m1 = _rot90(u0), _rot90(u1)
            A = np.column_stack([u0, -u1])
            det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
            if abs(det) < 1e-10:
                raise DegenerateGeometry(f"parallel walls at junction {jname}")
            st = np.linalg.solve(A, -w * (m0 + m1))
            if st[0] < -1e-9 or st[1] < -1e-9:
                raise DegenerateGeometry(f"inverted junction corner at {jname}")
            corners.append(P + w * m0 + st[0] * u0)
        out[jname] = {"corners": corners, "dirs": dirs}
    return out


def _tri_lattice_pos(c0, c1, c2, i, j, n):
    return c0 + (i / n) * (np.asarray(c1) - c0) + (j / n) * (np.asarray(c2) - c0)


_TRI_EDGE_VERTS = {0: ((0, 0), (1, 0)), 1: ((1, 0), (0, 1)), 2: ((0, 1), (0, 0))}


def _junction_edge_key(jname: str, edge: int, k: int, n: int):
    """Lattice key of the k-th node (of n) along junction-triangle edge `edge`."""
    (a0, a1), (b0, b1) = _TRI_EDGE_VERTS[edge]
    i = (a0 + (b0 - a0) * k / n) * n
    j = (a1 + (b1 - a1) * k / n) * n
    return ("j", jname, int(round(i)), int(round(j)))


def _build_honeycomb(params: TilingParams, resolution: int) -> PeriodicMesh:
    w, delta = params.values
    layout = _hc_layout(delta)
    pos, beams = layout["pos"], layout["beams"]
    jgeo = _junction_geometry(layout, w)

    R = resolution
    n = 2 * R  # lattice pitch of junction triangles and strip cross-sections
    reg = _NodeRegistry()
    elements = []
    pairs = {"x": [], "y": []}

    # junction triangles: subdivided into R^2 quadratic sub-triangles
    for jname in _HC_STUBS:
        c0, c1, c2 = jgeo[jname]["corners"]
        area2 = np.cross(np.asarray(c1) - c0, np.asarray(c2) - c0)
        if area2 <= 0:
            raise DegenerateGeometry(f"inverted junction triangle at {jname}")

        def jn(i, j, jname=jname, c0=c0, c1=c1, c2=c2):
            return reg.get(("j", jname, i, j), _tri_lattice_pos(c0, c1, c2, i, j, n))

        for I in range(R):
            for J in range(R - I):
                i, j = 2 * I, 2 * J
                elements.append(
                    [jn(i, j), jn(i + 2, j), jn(i, j + 2),
                     jn(i + 1, j), jn(i + 1, j + 1), jn(i, j + 1)]
                )
                if J < R - I - 1:
                    elements.append(
                        [jn(i + 2, j), jn(i + 2, j + 2), jn(i, j + 2),
                         jn(i + 2, j + 1), jn(i + 1, j + 2), jn(i + 1, j + 1)]
                    )

    # strips: every beam is cut where its centreline crosses the cell boundary;
    # each resulting piece is a bilinear quad patch between its two end chords.
    surface = []
    for beam in ["V1", "V2", "S1", "S2", "S3", "S4"]:
        ja, jb, off, crossing = beams[beam]
        pa = pos[ja]
        pb = pos[jb] + np.asarray(off, dtype=float)
        u = pb - pa
        length = np.linalg.norm(u)
        u = u / length
        m = _rot90(u)

        def junction_chord(jname, end):
            """(right point, left point, stub index) of the beam chord at a junction."""
            stubs = _HC_STUBS[jname]
            i = stubs.index((beam, end))
            corners = jgeo[jname]["corners"]
            cw, ccw = corners[(i - 1) % 3], corners[i]
            if end == 0:  # stub dir == +u: right wall is the CW corner
                return cw, ccw, jname, i
            return ccw, cw, jname, i  # arriving end: walls swap sides

        # end descriptors: ("junction", right, left, jname, stub) or ("cut", right, left, tag)
        end_a = ("junction",) + junction_chord(ja, 0)
        end_b = ("junction",) + junction_chord(jb, 1)  # corners already wrapped
        if crossing is None:
            piece_ends = [(0, end_a, end_b)]
        else:
            axis = 0 if crossing == "x" else 1
            t_cut = (1.0 - pa[axis]) / (pb[axis] - pa[axis])
            q = pa + t_cut * (pb - pa)
            shift = np.zeros(2)
            shift[axis] = -1.0
            cut_hi = ("cut", q - w * m, q + w * m, beam)
            cut_lo = ("cut", q - w * m + shift, q + w * m + shift, beam)
            piece_ends = [(0, end_a, cut_hi), (1, cut_lo, end_b)]

        for piece_idx, e0, e1 in piece_ends:
            n_len = _HC_NLEN[(beam, piece_idx)] * R
            A0, A1 = np.asarray(e0[1]), np.asarray(e0[2])
            B0, B1 = np.asarray(e1[1]), np.asarray(e1[2])

            def node_key(iu, iv, e0=e0, e1=e1, beam=beam, piece_idx=piece_idx, n_len=n_len):
                if iu == 0 and e0[0] == "junction":
                    jname, stub = e0[3], e0[4]
                    # chord = triangle edge from vertex (stub-1) to vertex stub
                    return _junction_edge_key(jname, (stub - 1) % 3, iv, n)
                if iu == 2 * n_len and e1[0] == "junction":
                    jname, stub = e1[3], e1[4]
                    return _junction_edge_key(jname, (stub - 1) % 3, n - iv, n)
                if iu == 0 and e0[0] == "cut":
                    return ("c", beam, "lo", iv)
                if iu == 2 * n_len and e1[0] == "cut":
                    return ("c", beam, "hi", iv)
                return ("s", beam, piece_idx, iu, iv)

            def node(iu, iv):
                # junction-edge keys resolve to already-registered lattice nodes
                s, t = iu / (2 * n_len), iv / n
                p = (1 - s) * ((1 - t) * A0 + t * A1) + s * ((1 - t) * B0 + t * B1)
                return reg.get(node_key(iu, iv), p)

            for I in range(n_len):
                for J in range(R):
                    i, j = 2 * I, 2 * J
                    a, b, c, d = node(i, j), node(i + 2, j), node(i + 2, j + 2), node(i, j + 2)
                    elements.append([a, b, c, node(i + 1, j), node(i + 2, j + 1), node(i + 1, j + 1)])
                    elements.append([a, c, d, node(i + 1, j + 1), node(i + 1, j + 2), node(i, j + 1)])
            # strip side walls are free material surface
            for I in range(n_len):
                i = 2 * I
                surface.append([node(i, 0), node(i + 2, 0), node(i + 1, 0)])
                surface.append([node(i, n), node(i + 2, n), node(i + 1, n)])

        if crossing is not None:
            n_len_hi = _HC_NLEN[(beam, 0)] * R
            for iv in range(n + 1):
                lo = reg.ids[("c", beam, "lo", iv)]
                hi = reg.ids[("c", beam, "hi", iv)]
                pairs[crossing].append([lo, hi])

    X = reg.array()
    elements = np.asarray(elements, dtype=np.int64)
    pairs_x = np.asarray(pairs["x"], dtype=np.int64).reshape(-1, 2)
    pairs_y = np.asarray(pairs["y"], dtype=np.int64).reshape(-1, 2)

    cut_x, cut_y = [], []
    for beam, (ja, jb, off, crossing) in beams.items():
        if crossing is None:
            continue
        for J in range(R):
            j = 2 * J
            hi = [reg.ids[("c", beam, "hi", j)], reg.ids[("c", beam, "hi", j + 2)],
                  reg.ids[("c", beam, "hi", j + 1)]]
            lo = [reg.ids[("c", beam, "lo", j)], reg.ids[("c", beam, "lo", j + 2)],
                  reg.ids[("c", beam, "lo", j + 1)]]
            (cut_x if crossing == "x" else cut_y).append(hi)
            (cut_x if crossing == "x" else cut_y).append(lo)

    mesh = PeriodicMesh(
        family_id=HONEYCOMB,
        resolution=resolution,
        rest_positions=X,
        elements=elements,
        pairs_x=pairs_x,
        pairs_y=pairs_y,
        offset_x=np.array([1.0, 0.0]),
        offset_y=np.array([0.0, 1.0]),
        free_surface_edges=np.asarray(surface, dtype=np.int64),
        cut_edges_x=np.asarray(cut_x, dtype=np.int64).reshape(-1, 3),
        cut_edges_y=np.asarray(cut_y, dtype=np.int64).reshape(-1, 3),
    )
    return mesh


def build_mesh(spec: FamilySpec, params: TilingParams, resolution: int) -> PeriodicMesh:
    """Mesh the unit cell. Raises ParamOutOfBounds / DegenerateGeometry."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    _check_bounds(spec, params)
    if spec.family_id == SOLID:
        return _build_solid(resolution)
    if spec.family_id == HONEYCOMB:
        return _build_honeycomb(params, resolution)
    raise ValueError(f"unknown family '{spec.family_id}'")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _segment_distance(p0, p1, q0, q1) -> float:
    """Euclidean distance between two 2D segments."""
    def pt_seg(p, a, b):
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0 else np.clip((p - a) @ ab / denom, 0.0, 1.0)
        return float(np.linalg.norm(p - (a + t * ab)))

    d1, d2 = p1 - p0, q1 - q0
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(cross) > 1e-14:
        r = q0 - p0
        t = (r[0] * d2[1] - r[1] * d2[0]) / cross
        s = (r[0] * d1[1] - r[1] * d1[0]) / cross
        if 0 <= t <= 1 and 0 <= s <= 1:
            return 0.0
    return min(
        pt_seg(p0, q0, q1), pt_seg(p1, q0, q1), pt_seg(q0, p0, p1), pt_seg(q1, p0, p1)
    )


def validate_params(spec: FamilySpec, params: TilingParams) -> tuple[bool, list[str]]:
    """True iff params are in bounds and build_mesh would produce a valid cell."""
    diags: list[str] = []
    if len(params.values) != spec.param_count:
        return False, [f"BoundViolation: expected {spec.param_count} parameters"]
    for k, (v, lo, hi) in enumerate(zip(params.values, spec.t_min, spec.t_max)):
        if not (lo - 1e-12 <= v <= hi + 1e-12):
            diags.append(f"BoundViolation: param[{k}]={v} outside [{lo}, {hi}]")
    if diags:
        return False, diags

    if spec.family_id == SOLID:
        return True, []

    w, delta = params.values
    layout = _hc_layout(delta)
    pos, beams = layout["pos"], layout["beams"]
    # non-adjacent thickened centrelines must keep a positive gap (over the
    # 3x3 block of periodic images)
    segs = []
    for name, (ja, jb, off, _) in beams.items():
        pa = pos[ja]
        pb = pos[jb] + np.asarray(off, dtype=float)
        segs.append((name, frozenset([(ja, (0, 0)), (jb, off)]), pa, pb))
    for i in range(len(segs)):
        for j in range(i, len(segs)):
            for ox in (-1, 0, 1):
                for oy in (-1, 0, 1):
                    if i == j and ox == 0 and oy == 0:
                        continue
                    sh = np.array([ox, oy], dtype=float)
                    na, ea, pa0, pa1 = segs[i]
                    nb, eb, pb0, pb1 = segs[j]
                    shifted = frozenset([(jn, (o[0] + ox, o[1] + oy)) for jn, o in eb])
                    if ea & shifted:
                        continue  # beams sharing a junction meet there by design
                    d = _segment_distance(pa0, pa1, pb0 + sh, pb1 + sh)
                    if d <= 2 * w + 1e-9:
                        diags.append(
                            f"SelfIntersection: beams {na} and {nb} (image {ox},{oy}) "
                            f"gap {d:.4f} <= 2w"
                        )
    if diags:
        return False, diags

    try:
        build_mesh(spec, params, 1)
    except DegenerateGeometry as exc:
        return False, [f"DegenerateGeometry: {exc}"]
    return True, []


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def export_mesh_text(mesh: PeriodicMesh, params: TilingParams) -> str:
    """Plain-text mesh dump (counts header, vertex/element/pair lines)."""
    lines = ["cellmech-mesh 1"]
    lines.append(f"family {mesh.family_id} resolution {mesh.resolution}")
    lines.append("params " + " ".join(repr(v) for v in params.values))
    lines.append(f"vertices {mesh.n_vertices}")
    for p in mesh.rest_positions:
        lines.append(f"{p[0]!r} {p[1]!r}")
    lines.append(f"elements {len(mesh.elements)}")
    for e in mesh.elements:
        lines.append(" ".join(str(i) for i in e))
    for tag, pairs in (("pairs_x", mesh.pairs_x), ("pairs_y", mesh.pairs_y)):
        lines.append(f"{tag} {len(pairs)}")
        for i, j in pairs:
            lines.append(f"{i} {j}")
    lines.append(f"surface_edges {len(mesh.free_surface_edges)}")
    for e in mesh.free_surface_edges:
        lines.append(" ".join(str(i) for i in e))
    return "\n".join(lines) + "\n"


def surface_polylines(mesh: PeriodicMesh) -> list[list[list[float]]]:
    """Free-surface outline segments for rendering: [[x0,y0],[xm,ym],[x1,y1]] each."""
    out = []
    X = mesh.rest_positions
    for a, b, m in mesh.free_surface_edges:
        out.append([list(X[a]), list(X[m]), list(X[b])])
    return out
