"""Double-node triangulations of a box split by an interface chain.

Interface vertices are stored twice: the primary copy carries the lower
(plus) side, the duplicate carries the upper (minus) side. Both copies sit
at the same coordinates, so the mesh is geometrically conforming while the
P1 space is broken across the chain. `interface_pairs` lists the copies in
chain order; `interface_edges` tiles every chain segment exactly.

Two meshing modes:

* structured: crisscross grid (each cell split into four triangles through
  its center). Requires an axis-aligned chain whose vertices sit on the
  grid, which all box-confined rectangular prefractals satisfy when the
  mesh width divides the segment length.
* unstructured: Delaunay triangulation of a protected point set (chain
  subdivision + box boundary + interior hex lattice kept clear of the
  chain), for chains with oblique segments.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .fem import min_angle_degrees, triangle_geometry
from .geometry import (
    GeometryError,
    InterfaceFamily,
    Box,
    PolylineInterface,
    TwoSidedDomain,
    build_two_sided_domain,
    distance_to_segments,
    points_in_polygon,
)

MAX_DOF_ENV = "FRACTALFLUX_MAX_DOF"
_SNAP_RTOL = 1e-9
_LATTICE_CLEARANCE = 0.62  # in units of h, keeps diametral disks of forced edges empty
_DEFAULT_MIN_ANGLE = 20.0


class MeshError(ValueError):
    """Raised when a mesh cannot be built as requested."""


class MeshQualityError(MeshError):
    """Raised when the produced triangulation misses the angle floor."""


class MeshResourceError(MeshError):
    """Raised when the requested resolution exceeds the DOF budget."""


class MeshMode(str, Enum):
    STRUCTURED = "structured"
    UNSTRUCTURED = "unstructured"


@dataclass(eq=False)
class TwoSidedMesh:
    """Conforming triangulation with doubled interface vertices."""

    vertices: np.ndarray          # (n_v, 2) float, duplicates included
    triangles: np.ndarray         # (n_t, 3) int, CCW
    triangle_side: np.ndarray     # (n_t,) int8, +1 lower/plus, -1 upper/minus
    interface_pairs: np.ndarray   # (n_p, 2) int, columns (plus copy, minus copy)
    interface_edges: np.ndarray   # (n_e, 2) int, indices into interface_pairs
    edge_segment: np.ndarray      # (n_e,) int, chain segment owning each edge
    edge_lengths: np.ndarray      # (n_e,) float
    domain: TwoSidedDomain
    mode: MeshMode
    h: float
    merged_vertices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_pairs(self) -> int:
        return len(self.interface_pairs)

    @property
    def is_merged(self) -> bool:
        return len(self.merged_vertices) > 0

    @property
    def plus_triangles(self) -> np.ndarray:
        return self.triangles[self.triangle_side > 0]

    @property
    def minus_triangles(self) -> np.ndarray:
        return self.triangles[self.triangle_side < 0]

    @property
    def pair_points(self) -> np.ndarray:
        return self.vertices[self.interface_pairs[:, 0]]

    def side_dofs(self, side: int) -> np.ndarray:
        tris = self.plus_triangles if side > 0 else self.minus_triangles
        return np.unique(tris)

    def min_angle(self) -> float:
        return min_angle_degrees(self.vertices, self.triangles)

    def side_area(self, side: int) -> float:
        tris = self.plus_triangles if side > 0 else self.minus_triangles
        area, _ = triangle_geometry(self.vertices, tris)
        return float(area.sum())

    def summary(self) -> dict:
        return {
            "mode": self.mode.value,
            "h": self.h,
            "n_vertices": self.n_vertices,
            "n_triangles": self.n_triangles,
            "n_pairs": self.n_pairs,
            "n_edges": len(self.interface_edges),
            "min_angle_deg": self.min_angle(),
            "area_plus": self.side_area(+1),
            "area_minus": self.side_area(-1),
            "merged": self.is_merged,
        }


def _dof_budget(max_dof: int | None) -> int | None:
    if max_dof is not None:
        return max_dof
    env = os.environ.get(MAX_DOF_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise MeshResourceError(f"{MAX_DOF_ENV} must be an integer, got {env!r}") from exc
    return None


def triangulate(
    domain: TwoSidedDomain,
    h: float,
    mode: MeshMode | str = MeshMode.STRUCTURED,
    min_angle_floor: float = _DEFAULT_MIN_ANGLE,
    n_smooth: int = 2,
    max_dof: int | None = None,
) -> TwoSidedMesh:
    """Build a double-node mesh of the split box at target width ``h``."""
    if h <= 0:
        raise MeshError("mesh width h must be positive")
    mode = MeshMode(mode)
    budget = _dof_budget(max_dof)
    if mode is MeshMode.STRUCTURED:
        mesh = _triangulate_structured(domain, h, budget)
    else:
        mesh = _triangulate_unstructured(domain, h, budget, n_smooth)
    angle = mesh.min_angle()
    if angle < min_angle_floor - 1e-9:
        raise MeshQualityError(
            f"minimum triangle angle {angle:.3f} deg is below the floor "
            f"{min_angle_floor:.3f} deg; refine h or relax the floor"
        )
    return mesh


# ----------------------------------------------------------------- structured


def _snap_index(value: float, origin: float, h: float, what: str) -> int:
    t = (value - origin) / h
    k = int(round(t))
    if abs(t - k) > _SNAP_RTOL * max(1.0, abs(t)):
        raise MeshError(
            f"{what} at {value!r} does not sit on the h={h!r} grid "
            f"(offset {abs(t - k) * h:.3e}); pick h dividing the segment length"
        )
    return k


def _triangulate_structured(domain: TwoSidedDomain, h: float, budget: int | None) -> TwoSidedMesh:
    box = domain.box
    chain = domain.interface
    if not chain.is_axis_aligned():
        raise MeshError("structured meshing needs an axis-aligned chain; use unstructured mode")
    nx = _snap_index(box.xmax, box.xmin, h, "box width")
    ny = _snap_index(box.ymax, box.ymin, h, "box height")
    if nx < 1 or ny < 1:
        raise MeshError(f"h={h!r} leaves fewer than one cell across the box")

    n_grid = (nx + 1) * (ny + 1)
    n_cells = nx * ny
    ij = np.empty((len(chain.vertices), 2), dtype=np.int64)
    for r, (vx, vy) in enumerate(chain.vertices):
        ij[r, 0] = _snap_index(vx, box.xmin, h, f"chain vertex {r} x")
        ij[r, 1] = _snap_index(vy, box.ymin, h, f"chain vertex {r} y")

    # Walk the chain cell edge by cell edge, assigning a rank to every grid
    # node it visits; ranks are the interface pair order.
    ranks: dict[tuple[int, int], int] = {}
    edge_list: list[tuple[int, int]] = []
    edge_seg: list[int] = []
    for s in range(chain.n_segments):
        i0, j0 = ij[s]
        i1, j1 = ij[s + 1]
        if i0 != i1 and j0 != j1:
            raise MeshError(f"chain segment {s} is not axis-aligned on the grid")
        n_steps = abs(i1 - i0) + abs(j1 - j0)
        if n_steps == 0:
            raise MeshError(f"chain segment {s} has zero grid length")
        di = np.sign(i1 - i0)
        dj = np.sign(j1 - j0)
        prev = None
        for t in range(n_steps + 1):
            key = (int(i0 + di * t), int(j0 + dj * t))
            rank = ranks.setdefault(key, len(ranks))
            if prev is not None:
                edge_list.append((prev, rank))
                edge_seg.append(s)
            prev = rank
    n_pairs = len(ranks)

    n_total = n_grid + n_cells + n_pairs
    if budget is not None and n_total > budget:
        raise MeshResourceError(
            f"structured mesh needs {n_total} vertices, over the cap {budget} ({MAX_DOF_ENV})"
        )

    xs = np.linspace(box.xmin, box.xmax, nx + 1)
    ys = np.linspace(box.ymin, box.ymax, ny + 1)
    gx, gy = np.meshgrid(xs, ys)                       # row j (y), col i (x)
    grid_pts = np.column_stack([gx.ravel(), gy.ravel()])
    cx, cy = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]))
    center_pts = np.column_stack([cx.ravel(), cy.ravel()])

    rank_keys = sorted(ranks, key=ranks.get)
    pair_ij = np.array(rank_keys, dtype=np.int64)
    chain_gids = pair_ij[:, 1] * (nx + 1) + pair_ij[:, 0]
    dup_pts = grid_pts[chain_gids]
    vertices = np.vstack([grid_pts, center_pts, dup_pts])

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    ci = ci.ravel()
    cj = cj.ravel()
    bl = cj * (nx + 1) + ci
    br = bl + 1
    tl = bl + (nx + 1)
    tr = tl + 1
    cc = n_grid + cj * nx + ci
    tris = np.empty((n_cells, 4, 3), dtype=np.int64)
    tris[:, 0] = np.column_stack([bl, br, cc])
    tris[:, 1] = np.column_stack([br, tr, cc])
    tris[:, 2] = np.column_stack([tr, tl, cc])
    tris[:, 3] = np.column_stack([tl, bl, cc])
    triangles = tris.reshape(-1, 3)

    cell_plus = points_in_polygon(center_pts, domain.plus_ring)
    side = np.where(np.repeat(cell_plus, 4), 1, -1).astype(np.int8)

    minus_map = np.arange(n_total, dtype=np.int64)
    dup_ids = n_grid + n_cells + np.arange(n_pairs, dtype=np.int64)
    minus_map[chain_gids] = dup_ids
    minus_rows = side < 0
    triangles[minus_rows] = minus_map[triangles[minus_rows]]

    pairs = np.column_stack([chain_gids, dup_ids])
    edges = np.array(edge_list, dtype=np.int64).reshape(-1, 2)
    seg_ids = np.array(edge_seg, dtype=np.int64)
    pts = grid_pts[chain_gids]
    lengths = np.linalg.norm(pts[edges[:, 1]] - pts[edges[:, 0]], axis=1)

    return TwoSidedMesh(
        vertices=vertices,
        triangles=triangles,
        triangle_side=side,
        interface_pairs=pairs,
        interface_edges=edges,
        edge_segment=seg_ids,
        edge_lengths=lengths,
        domain=domain,
        mode=MeshMode.STRUCTURED,
        h=h,
    )


# --------------------------------------------------------------- unstructured


def _subdivide_chain(chain: PolylineInterface, h: float):
    """Chain-ordered points at spacing <= h plus per-edge segment ids."""
    pts: list[np.ndarray] = []
    edges: list[tuple[int, int]] = []
    seg_ids: list[int] = []
    for s in range(chain.n_segments):
        a = chain.vertices[s]
        b = chain.vertices[s + 1]
        k = max(1, int(np.ceil(chain.segment_lengths[s] / h - 1e-12)))
        t = np.arange(k + 1) / k
        locs = a[None, :] + t[:, None] * (b - a)[None, :]
        start = 0
        if pts and np.array_equal(pts[-1], locs[0]):
            prev = len(pts) - 1
            start = 1
        else:
            prev = None
        for row in locs[start:]:
            pts.append(row)
            if prev is not None:
                edges.append((prev, len(pts) - 1))
                seg_ids.append(s)
            prev = len(pts) - 1
    return np.array(pts), np.array(edges, dtype=np.int64), np.array(seg_ids, dtype=np.int64)


def _subdivide_run(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """Interior points of the run (a, b) at spacing <= h, endpoints excluded."""
    length = float(np.linalg.norm(b - a))
    k = max(1, int(np.ceil(length / h - 1e-12)))
    t = np.arange(1, k) / k
    return a[None, :] + t[:, None] * (b - a)[None, :]


def _box_boundary_points(domain: TwoSidedDomain, h: float, gamma_first: int, gamma_last: int):
    """Box boundary point cloud and forced boundary edges.

    The chain anchors already live in the gamma set, so the box walk refers
    to them by their gamma indices instead of duplicating the coordinates.
    Returned indices for fresh points are local (offset added by the caller).
    """
    box = domain.box
    a0 = domain.interface.vertices[0]      # on the left edge
    a1 = domain.interface.vertices[-1]     # on the right edge
    corners = [
        np.array([box.xmin, box.ymin]),
        np.array([box.xmax, box.ymin]),
        np.array([box.xmax, box.ymax]),
        np.array([box.xmin, box.ymax]),
    ]
    # Walk CCW, splitting the vertical edges at the anchors.
    stations: list[tuple[np.ndarray, int | None]] = [
        (corners[0], None),
        (corners[1], None),
        (a1, gamma_last),
        (corners[2], None),
        (corners[3], None),
        (a0, gamma_first),
    ]
    pts: list[np.ndarray] = []
    edges: list[tuple[int, int]] = []

    def station_index(entry) -> int:
        coord, gamma_id = entry
        if gamma_id is not None:
            return gamma_id
        pts.append(coord)
        return -len(pts)  # placeholder, fixed up by caller via offset

    idx = [station_index(e) for e in stations]
    for s in range(len(stations)):
        a_i = idx[s]
        b_i = idx[(s + 1) % len(stations)]
        interior = _subdivide_run(stations[s][0], stations[(s + 1) % len(stations)][0], h)
        prev = a_i
        for row in interior:
            pts.append(row)
            cur = -len(pts)
            edges.append((prev, cur))
            prev = cur
        edges.append((prev, b_i))
    return np.array(pts), edges


def _hex_lattice(domain: TwoSidedDomain, h: float) -> np.ndarray:
    box = domain.box
    chain = domain.interface
    margin = _LATTICE_CLEARANCE * h
    dy = h * np.sqrt(3.0) / 2.0
    rows = []
    r = 0
    y = box.ymin + dy
    while y < box.ymax - 0.5 * dy:
        offset = 0.5 * h if r % 2 else h
        xs = np.arange(box.xmin + offset, box.xmax - 0.25 * h, h)
        if len(xs):
            rows.append(np.column_stack([xs, np.full(len(xs), y)]))
        r += 1
        y += dy
    if not rows:
        return np.empty((0, 2))
    pts = np.vstack(rows)
    # Deterministic micro-jitter breaks the cocircular quadruples a perfect
    # lattice feeds the Delaunay code, without touching element quality.
    i = np.arange(len(pts))
    pts = pts + 1e-4 * h * np.column_stack([np.sin(137.5 * i), np.cos(251.3 * i)])
    inside = (
        (pts[:, 0] >= box.xmin + margin)
        & (pts[:, 0] <= box.xmax - margin)
        & (pts[:, 1] >= box.ymin + margin)
        & (pts[:, 1] <= box.ymax - margin)
    )
    pts = pts[inside]
    dist = distance_to_segments(pts, chain.segment_starts, chain.segment_ends)
    return pts[dist >= margin]


def _delaunay_edge_set(simplices: np.ndarray) -> set[tuple[int, int]]:
    edges: set[tuple[int, int]] = set()
    for a, b, c in simplices:
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    return edges


def _triangulate_unstructured(
    domain: TwoSidedDomain, h: float, budget: int | None, n_smooth: int
) -> TwoSidedMesh:
    from scipy.spatial import Delaunay

    chain = domain.interface
    gamma, gamma_edges, seg_ids = _subdivide_chain(chain, h)
    n_gamma = len(gamma)
    box_pts, box_edge_raw = _box_boundary_points(domain, h, 0, n_gamma - 1)
    n_box = len(box_pts)

    def resolve(i: int) -> int:
        return i if i >= 0 else n_gamma + (-i - 1)

    box_edges = [(resolve(a), resolve(b)) for a, b in box_edge_raw]
    lattice = _hex_lattice(domain, h)
    points = np.vstack([gamma, box_pts, lattice]) if len(lattice) else np.vstack([gamma, box_pts])
    n_fixed = n_gamma + n_box

    n_total = len(points) + n_gamma
    if budget is not None and n_total > budget:
        raise MeshResourceError(
            f"unstructured mesh needs about {n_total} vertices, over the cap {budget} ({MAX_DOF_ENV})"
        )

    required = [(min(a, b), max(a, b)) for a, b in gamma_edges] + [
        (min(a, b), max(a, b)) for a, b in box_edges
    ]

    def verified_delaunay(pts: np.ndarray):
        tri = Delaunay(pts)
        edge_set = _delaunay_edge_set(tri.simplices)
        missing = [e for e in required if e not in edge_set]
        return tri, missing

    tri, missing = verified_delaunay(points)
    if missing:
        raise MeshError(
            f"{len(missing)} forced chain/box edges are not Delaunay edges at h={h!r}; "
            "use a smaller h so the chain subdivision protects itself"
        )

    margin = _LATTICE_CLEARANCE * 0.9 * h
    for _ in range(max(0, n_smooth)):
        indptr, indices = tri.vertex_neighbor_vertices
        moved = points.copy()
        for p in range(n_fixed, len(points)):
            nbrs = indices[indptr[p]:indptr[p + 1]]
            if len(nbrs) == 0:
                continue
            cand = points[nbrs].mean(axis=0)
            d_chain = distance_to_segments(cand[None, :], chain.segment_starts, chain.segment_ends)[0]
            box = domain.box
            d_box = min(
                cand[0] - box.xmin, box.xmax - cand[0], cand[1] - box.ymin, box.ymax - cand[1]
            )
            if d_chain >= margin and d_box >= margin:
                moved[p] = cand
        tri2, missing2 = verified_delaunay(moved)
        if missing2:
            break
        points, tri = moved, tri2

    triangles = np.array(tri.simplices, dtype=np.int64)
    area, _ = triangle_geometry(points, triangles)
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    area = np.abs(area)
    if np.any(area < 1e-14 * h * h):
        raise MeshError("degenerate triangles in the Delaunay output; adjust h")

    centroids = points[triangles].mean(axis=1)
    plus = points_in_polygon(centroids, domain.plus_ring)
    side = np.where(plus, 1, -1).astype(np.int8)

    n_base = len(points)
    dup_ids = n_base + np.arange(n_gamma, dtype=np.int64)
    vertices = np.vstack([points, gamma])
    minus_map = np.arange(n_base + n_gamma, dtype=np.int64)
    minus_map[:n_gamma] = dup_ids
    minus_rows = side < 0
    triangles = triangles.copy()
    triangles[minus_rows] = minus_map[triangles[minus_rows]]

    pairs = np.column_stack([np.arange(n_gamma, dtype=np.int64), dup_ids])
    lengths = np.linalg.norm(gamma[gamma_edges[:, 1]] - gamma[gamma_edges[:, 0]], axis=1)

    return TwoSidedMesh(
        vertices=vertices,
        triangles=triangles,
        triangle_side=side,
        interface_pairs=pairs,
        interface_edges=gamma_edges,
        edge_segment=seg_ids,
        edge_lengths=lengths,
        domain=domain,
        mode=MeshMode.UNSTRUCTURED,
        h=h,
    )


# -------------------------------------------------------------------- merging


def merge_interface(mesh: TwoSidedMesh, segment_ids=None) -> TwoSidedMesh:
    """Glue the two sheets along the chosen chain segments (all by default).

    Every pair touched by a merged segment collapses onto its plus copy; the
    duplicate vertex disappears and the vertex numbering is compacted.
    Remaining segments keep their pairs and edges (reindexed).
    """
    if segment_ids is None:
        merge_edges = np.ones(len(mesh.interface_edges), dtype=bool)
    else:
        wanted = np.asarray(sorted(set(int(s) for s in segment_ids)), dtype=np.int64)
        n_seg = mesh.domain.interface.n_segments
        bad = wanted[(wanted < 0) | (wanted >= n_seg)]
        if len(bad):
            raise MeshError(f"segment ids {bad.tolist()} out of range [0, {n_seg})")
        merge_edges = np.isin(mesh.edge_segment, wanted)
    if not merge_edges.any():
        return mesh

    merge_pair = np.zeros(mesh.n_pairs, dtype=bool)
    merge_pair[mesh.interface_edges[merge_edges].ravel()] = True

    plus_ids = mesh.interface_pairs[:, 0]
    minus_ids = mesh.interface_pairs[:, 1]
    # Degenerate (plus, plus) rows left by an earlier merge own no duplicate
    # vertex, so there is nothing to drop for them.
    dropping = merge_pair & (minus_ids != plus_ids)
    redirect = np.arange(mesh.n_vertices, dtype=np.int64)
    redirect[minus_ids[dropping]] = plus_ids[dropping]

    keep = np.ones(mesh.n_vertices, dtype=bool)
    keep[minus_ids[dropping]] = False
    new_id = np.cumsum(keep) - 1

    triangles = new_id[redirect[mesh.triangles]]

    # A glued pair still referenced by a live segment's edge stays in the
    # table as a degenerate (plus, plus) row: its jump is identically zero.
    referenced = np.zeros(mesh.n_pairs, dtype=bool)
    kept_edge_rows = mesh.interface_edges[~merge_edges]
    if len(kept_edge_rows):
        referenced[kept_edge_rows.ravel()] = True
    keep_pair = ~merge_pair | referenced
    pairs = new_id[redirect[mesh.interface_pairs[keep_pair]]]
    pair_reindex = np.full(mesh.n_pairs, -1, dtype=np.int64)
    pair_reindex[np.flatnonzero(keep_pair)] = np.arange(keep_pair.sum())
    edges = pair_reindex[kept_edge_rows]

    merged_now = new_id[plus_ids[merge_pair]]
    prev = mesh.merged_vertices
    if len(prev):
        prev = new_id[redirect[prev]]
    merged_all = np.unique(np.concatenate([prev, merged_now])) if len(prev) else merged_now

    return TwoSidedMesh(
        vertices=mesh.vertices[keep],
        triangles=triangles,
        triangle_side=mesh.triangle_side.copy(),
        interface_pairs=pairs,
        interface_edges=edges,
        edge_segment=mesh.edge_segment[~merge_edges],
        edge_lengths=mesh.edge_lengths[~merge_edges],
        domain=mesh.domain,
        mode=mesh.mode,
        h=mesh.h,
        merged_vertices=np.asarray(merged_all, dtype=np.int64),
    )


# ------------------------------------------------------------------------ I/O


def write_mesh(mesh: TwoSidedMesh, path: str | Path, scenario: str | None = None) -> None:
    path = Path(path)
    chain = mesh.domain.interface
    box = mesh.domain.box
    lines = ["# fractalflux mesh v1"]
    if scenario:
        lines.append(f"# scenario {scenario}")
    lines.append(f"MODE {mesh.mode.value}")
    lines.append(f"H {mesh.h:.17g}")
    lines.append(f"BOX {box.xmin:.17g} {box.ymin:.17g} {box.xmax:.17g} {box.ymax:.17g}")
    lines.append(f"FAMILY {chain.family.value} {chain.generation} {chain.base_length:.17g}")
    lines.append(f"CHAIN {len(chain.vertices)}")
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in chain.vertices)
    lines.append(f"VERTICES {mesh.n_vertices}")
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in mesh.vertices)
    lines.append(f"TRIANGLES {mesh.n_triangles}")
    lines.extend(
        f"{a} {b} {c} {s}"
        for (a, b, c), s in zip(mesh.triangles, mesh.triangle_side)
    )
    lines.append(f"PAIRS {mesh.n_pairs}")
    lines.extend(f"{p} {m}" for p, m in mesh.interface_pairs)
    lines.append(f"EDGES {len(mesh.interface_edges)}")
    lines.extend(
        f"{a} {b} {s} {w:.17g}"
        for (a, b), s, w in zip(mesh.interface_edges, mesh.edge_segment, mesh.edge_lengths)
    )
    lines.append(f"MERGEDV {len(mesh.merged_vertices)}")
    lines.extend(str(v) for v in mesh.merged_vertices)
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> TwoSidedMesh:
    path = Path(path)
    raw = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    pos = 0

    def take() -> str:
        nonlocal pos
        line = raw[pos]
        pos += 1
        return line

    def expect(tag: str) -> list[str]:
        parts = take().split()
        if parts[0] != tag:
            raise MeshError(f"bad mesh file {path}: expected {tag}, got {parts[0]}")
        return parts[1:]

    mode = MeshMode(expect("MODE")[0])
    h = float(expect("H")[0])
    bx = [float(v) for v in expect("BOX")]
    fam_parts = expect("FAMILY")
    family = InterfaceFamily(fam_parts[0])
    generation = int(fam_parts[1])
    base_length = float(fam_parts[2])
    n_chain = int(expect("CHAIN")[0])
    chain_pts = np.array([[float(v) for v in take().split()] for _ in range(n_chain)])
    n_v = int(expect("VERTICES")[0])
    vertices = np.array([[float(v) for v in take().split()] for _ in range(n_v)])
    n_t = int(expect("TRIANGLES")[0])
    tri_rows = np.array([[int(v) for v in take().split()] for _ in range(n_t)], dtype=np.int64)
    n_p = int(expect("PAIRS")[0])
    pairs = np.array([[int(v) for v in take().split()] for _ in range(n_p)], dtype=np.int64).reshape(n_p, 2)
    n_e = int(expect("EDGES")[0])
    edges = np.empty((n_e, 2), dtype=np.int64)
    seg_ids = np.empty(n_e, dtype=np.int64)
    lengths = np.empty(n_e)
    for k in range(n_e):
        a, b, s, w = take().split()
        edges[k] = (int(a), int(b))
        seg_ids[k] = int(s)
        lengths[k] = float(w)
    n_m = int(expect("MERGEDV")[0])
    merged = np.array([int(take()) for _ in range(n_m)], dtype=np.int64)

    chain = PolylineInterface(
        vertices=chain_pts, family=family, generation=generation, base_length=base_length
    )
    try:
        domain = build_two_sided_domain(Box(*bx), chain)
    except GeometryError as exc:
        raise MeshError(f"mesh file {path} holds an invalid domain: {exc}") from exc
    return TwoSidedMesh(
        vertices=vertices,
        triangles=tri_rows[:, :3],
        triangle_side=tri_rows[:, 3].astype(np.int8),
        interface_pairs=pairs,
        interface_edges=edges,
        edge_segment=seg_ids,
        edge_lengths=lengths,
        domain=domain,
        mode=mode,
        h=h,
        merged_vertices=merged,
    )


def write_vtk(
    mesh: TwoSidedMesh,
    path: str | Path,
    point_data: dict[str, np.ndarray] | None = None,
    title: str = "fractalflux mesh",
) -> None:
    """Legacy ASCII VTK export with the side tag and optional nodal fields."""
    path = Path(path)
    out = [
        "# vtk DataFile Version 3.0",
        title[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    out.extend(f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices)
    out.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    out.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    out.append(f"CELL_TYPES {mesh.n_triangles}")
    out.extend("5" for _ in range(mesh.n_triangles))
    out.append(f"CELL_DATA {mesh.n_triangles}")
    out.append("SCALARS side int 1")
    out.append("LOOKUP_TABLE default")
    out.extend(str(int(s)) for s in mesh.triangle_side)
    if point_data:
        out.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_vertices,):
                raise MeshError(
                    f"point field {name!r} has shape {values.shape}, needs ({mesh.n_vertices},)"
                )
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(f"{v:.17g}" for v in values)
    path.write_text("\n".join(out) + "\n")
