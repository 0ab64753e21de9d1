"""Interface chains, two-sided box domains, and shape-class admissibility.

Chains are open polylines anchored on the left and right box edges. The
region below the chain is the "plus" (initially hot) side, the region above
is the "minus" side. Prefractal generators refine a base segment with a
fixed motif; the square-wave motif preserves the enclosed area exactly,
which the volume-constrained shape classes rely on.

Admissibility checks here are sampled audits, not proofs: they evaluate the
defining inequalities of the shape classes on deterministic or seeded
sample sets and report witnesses on failure. The soundness gap (finite
samples, heuristic path witnesses) is deliberate and documented per check.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

# Chains grow like 8**g segments; the cap keeps desk-scale budgets honest.
DEFAULT_MAX_GENERATION = 6

# Relative tolerance for exact-conservation checks on areas.
AREA_RTOL = 1e-10

# Snap tolerance (relative to base length) for axis alignment and anchors.
ALIGN_RTOL = 1e-12

# Strictly-inside margin used when sampling points for inclusion tests.
INSIDE_MARGIN = 1e-12


class GeometryError(ValueError):
    """Invalid chain, box, or anchor configuration."""


class GenerationLimitError(GeometryError):
    """Requested generation exceeds the configured recursion cap."""


class InterfaceFamily(str, Enum):
    FLAT = "flat"
    MINKOWSKI = "minkowski"
    KOCH = "koch"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle [xmin, xmax] x [ymin, ymax]."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise GeometryError("box must have positive width and height")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (
            (p[:, 0] >= self.xmin - tol)
            & (p[:, 0] <= self.xmax + tol)
            & (p[:, 1] >= self.ymin - tol)
            & (p[:, 1] <= self.ymax + tol)
        )


UNIT_BOX = Box(0.0, 0.0, 1.0, 1.0)


@dataclass(eq=False)
class PolylineInterface:
    """Open polyline chain splitting a box into two sides.

    vertices   : (n+1, 2) float array, ordered left anchor to right anchor
    family     : generator family tag
    generation : refinement depth (0 for flat/custom)
    base_length: length of the unrefined base segment
    """

    vertices: np.ndarray
    family: InterfaceFamily = InterfaceFamily.CUSTOM
    generation: int = 0
    base_length: float = 1.0

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            raise GeometryError("chain needs an (n+1, 2) array with n >= 1")
        if not np.all(np.isfinite(v)):
            raise GeometryError("chain vertices must be finite")
        lengths = np.linalg.norm(v[1:] - v[:-1], axis=1)
        if np.any(lengths <= 0.0):
            raise GeometryError("chain has a degenerate (zero length) segment")
        self.vertices = v
        self._segment_lengths = lengths

    @property
    def n_segments(self) -> int:
        return self.vertices.shape[0] - 1

    @property
    def segment_starts(self) -> np.ndarray:
        return self.vertices[:-1]

    @property
    def segment_ends(self) -> np.ndarray:
        return self.vertices[1:]

    @property
    def segment_lengths(self) -> np.ndarray:
        return self._segment_lengths

    @property
    def total_length(self) -> float:
        return float(self._segment_lengths.sum())

    @property
    def anchors(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices[0], self.vertices[-1]

    def is_axis_aligned(self, rtol: float = ALIGN_RTOL) -> bool:
        d = self.vertices[1:] - self.vertices[:-1]
        tol = rtol * max(self.base_length, 1.0)
        return bool(np.all((np.abs(d[:, 0]) <= tol) | (np.abs(d[:, 1]) <= tol)))

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[:-1] + self.vertices[1:])


def chain_length(interface: PolylineInterface) -> float:
    """Total arc length of the chain."""
    return interface.total_length


# --- prefractal generators -------------------------------------------------

# Eight-segment square wave at scale 1/4: excursion to the left of travel on
# the first half, mirrored to the right on the second half. The two lobes
# cancel, so refinement preserves the enclosed area exactly.
_MINKOWSKI_MOTIF = np.array(
    [
        (0.00, 0.00),
        (0.25, 0.00),
        (0.25, 0.25),
        (0.50, 0.25),
        (0.50, 0.00),
        (0.50, -0.25),
        (0.75, -0.25),
        (0.75, 0.00),
        (1.00, 0.00),
    ]
)

# Four-segment motif at scale 1/3 with an equilateral excursion to the left.
_KOCH_MOTIF = np.array(
    [
        (0.0, 0.0),
        (1.0 / 3.0, 0.0),
        (0.5, math.sqrt(3.0) / 6.0),
        (2.0 / 3.0, 0.0),
        (1.0, 0.0),
    ]
)


def _apply_motif(points: np.ndarray, motif: np.ndarray) -> np.ndarray:
    a = points[:-1]
    d = points[1:] - a
    left = np.stack([-d[:, 1], d[:, 0]], axis=1)
    t = motif[:-1, 0][None, :, None]
    s = motif[:-1, 1][None, :, None]
    sub = a[:, None, :] + t * d[:, None, :] + s * left[:, None, :]
    return np.concatenate([sub.reshape(-1, 2), points[-1:]], axis=0)


def _check_generation(generation: int, max_generation: int) -> None:
    if generation < 0:
        raise GeometryError("generation must be nonnegative")
    if generation > max_generation:
        raise GenerationLimitError(
            f"generation {generation} exceeds cap {max_generation}"
        )


def _generate(
    motif: np.ndarray,
    family: InterfaceFamily,
    generation: int,
    start,
    end,
    max_generation: int,
) -> PolylineInterface:
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(end, dtype=float)
    base_length = float(np.linalg.norm(p1 - p0))
    if base_length <= 0.0:
        raise GeometryError("base segment has zero length")
    points = np.stack([p0, p1])
    for _ in range(generation):
        points = _apply_motif(points, motif)
    fam = family if generation > 0 else family
    return PolylineInterface(points, fam, generation, base_length)


def flat_interface(start=(0.0, 0.5), end=(1.0, 0.5)) -> PolylineInterface:
    """Single straight segment between the two anchors."""
    return _generate(_MINKOWSKI_MOTIF, InterfaceFamily.FLAT, 0, start, end,
                     DEFAULT_MAX_GENERATION)


def minkowski_prefractal(
    generation: int,
    start=(0.0, 0.5),
    end=(1.0, 0.5),
    max_generation: int = DEFAULT_MAX_GENERATION,
) -> PolylineInterface:
    """Square-wave prefractal chain.

    Parameters
    ----------
    generation : refinement depth; the chain has 8**generation segments of
        length base/4**generation and total length base*2**generation.
    start, end : anchor points of the base segment.
    max_generation : recursion cap; beyond it a GenerationLimitError is
        raised rather than building an oversized chain.
    """
    _check_generation(generation, max_generation)
    fam = InterfaceFamily.FLAT if generation == 0 else InterfaceFamily.MINKOWSKI
    return _generate(_MINKOWSKI_MOTIF, fam, generation, start, end, max_generation)


def koch_prefractal(
    generation: int,
    start=(0.0, 0.5),
    end=(1.0, 0.5),
    max_generation: int = DEFAULT_MAX_GENERATION,
) -> PolylineInterface:
    """Triadic chain with equilateral excursions (4**generation segments)."""
    _check_generation(generation, max_generation)
    fam = InterfaceFamily.FLAT if generation == 0 else InterfaceFamily.KOCH
    return _generate(_KOCH_MOTIF, fam, generation, start, end, max_generation)


_FAMILY_GENERATORS = {
    InterfaceFamily.FLAT: lambda g, s, e, m: flat_interface(s, e),
    InterfaceFamily.MINKOWSKI: minkowski_prefractal,
    InterfaceFamily.KOCH: koch_prefractal,
}


def make_interface(
    family: InterfaceFamily | str,
    generation: int,
    start=(0.0, 0.5),
    end=(1.0, 0.5),
    max_generation: int = DEFAULT_MAX_GENERATION,
) -> PolylineInterface:
    """Dispatch on the family tag; flat ignores the generation."""
    fam = InterfaceFamily(family)
    if fam is InterfaceFamily.CUSTOM:
        raise GeometryError("custom chains are built directly from vertices")
    gen = _FAMILY_GENERATORS[fam]
    return gen(generation, start, end, max_generation)


# --- planar predicates ------------------------------------------------------


def shoelace_area(ring: np.ndarray) -> float:
    """Signed area of a polygon given as an open ring (first vertex not repeated)."""
    r = np.asarray(ring, dtype=float)
    x, y = r[:, 0], r[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def points_in_polygon(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd inclusion test, vectorized over points.

    Points on the boundary follow the half-open crossing rule and should not
    be fed to this predicate when the answer matters; callers sample strictly
    inside or strictly outside.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.asarray(ring, dtype=float)
    ax, ay = r[:, 0], r[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    inside = np.zeros(len(pts), dtype=bool)
    # Chunk to keep the (npts, nedges) intermediates bounded.
    chunk = max(1, int(8_000_000 // max(len(ax), 1)))
    for lo in range(0, len(pts), chunk):
        px = pts[lo:lo + chunk, 0][:, None]
        py = pts[lo:lo + chunk, 1][:, None]
        straddle = (ay[None, :] > py) != (by[None, :] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax[None, :] + (py - ay[None, :]) * (bx - ax)[None, :] / (by - ay)[None, :]
        hits = straddle & (px < xint)
        inside[lo:lo + chunk] = np.bitwise_xor.reduce(hits, axis=1)
    return inside


def distance_to_segments(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the given segments."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(starts, dtype=float)
    d = np.asarray(ends, dtype=float) - a
    dd = np.einsum("ij,ij->i", d, d)
    out = np.empty(len(p))
    chunk = max(1, int(4_000_000 // max(len(a), 1)))
    for lo in range(0, len(p), chunk):
        w = p[lo:lo + chunk, None, :] - a[None, :, :]
        t = np.einsum("pij,ij->pi", w, d) / dd[None, :]
        t = np.clip(t, 0.0, 1.0)
        closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
        diff = p[lo:lo + chunk, None, :] - closest
        out[lo:lo + chunk] = np.sqrt(np.einsum("pij,pij->pi", diff, diff).min(axis=1))
    return out


def closest_on_segments(points: np.ndarray, starts: np.ndarray, ends: np.ndarray):
    """Distance to and foot point on the nearest of the given segments."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(starts, dtype=float)
    d = np.asarray(ends, dtype=float) - a
    dd = np.einsum("ij,ij->i", d, d)
    w = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("pij,ij->pi", w, d) / dd[None, :], 0.0, 1.0)
    feet = a[None, :, :] + t[:, :, None] * d[None, :, :]
    diff = p[:, None, :] - feet
    dist = np.sqrt(np.einsum("pij,pij->pi", diff, diff))
    k = np.argmin(dist, axis=1)
    rows = np.arange(len(p))
    return dist[rows, k], feet[rows, k]


def segment_ball_clipped_fraction(
    starts: np.ndarray, ends: np.ndarray, center: np.ndarray, radius: float
) -> np.ndarray:
    """Fraction of each segment's parameter interval inside the ball.

    The clipped set differs between open and closed balls only on a length
    zero set (straight segments meet a circle in at most two points), so one
    routine serves both the upper and the lower regularity scans.
    """
    a = np.asarray(starts, dtype=float)
    d = np.asarray(ends, dtype=float) - a
    f = a - np.asarray(center, dtype=float)
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", f, d)
    qc = np.einsum("ij,ij->i", f, f) - radius * radius
    disc = qb * qb - 4.0 * qa * qc
    frac = np.zeros(len(a))
    hit = disc > 0.0
    if np.any(hit):
        root = np.sqrt(disc[hit])
        t0 = (-qb[hit] - root) / (2.0 * qa[hit])
        t1 = (-qb[hit] + root) / (2.0 * qa[hit])
        lo = np.clip(t0, 0.0, 1.0)
        hi = np.clip(t1, 0.0, 1.0)
        frac[hit] = np.maximum(hi - lo, 0.0)
    return frac


def _orient(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (
        q[..., 1] - p[..., 1]
    ) * (r[..., 0] - p[..., 0])


def _on_segment(p, q, r) -> np.ndarray:
    """Collinear r assumed; is r within the bounding box of pq."""
    return (
        (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
        & (r[..., 0] >= np.minimum(p[..., 0], q[..., 0]))
        & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1]))
        & (r[..., 1] >= np.minimum(p[..., 1], q[..., 1]))
    )


def segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """True where segment (p1,p2) shares any point with (q1,q2). Vectorized."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)
    touch = (
        ((d1 == 0) & _on_segment(q1, q2, p1))
        | ((d2 == 0) & _on_segment(q1, q2, p2))
        | ((d3 == 0) & _on_segment(p1, p2, q1))
        | ((d4 == 0) & _on_segment(p1, p2, q2))
    )
    return proper | touch


def segments_properly_cross(p1, p2, q1, q2) -> np.ndarray:
    """True where the open interiors cross transversally."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def chain_is_simple(interface: PolylineInterface, method: str = "auto") -> bool:
    """Self-intersection audit. Vertex touching counts as non-simple.

    method "sweep" is a brute-force pairwise check (the reference route);
    "shapely" delegates to GEOS; "auto" prefers shapely for speed.
    """
    if method not in ("auto", "sweep", "shapely"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "shapely"):
        try:
            from shapely.geometry import LineString
        except ImportError:
            if method == "shapely":
                raise
        else:
            return bool(LineString(interface.vertices).is_simple)
    v = interface.vertices
    n = interface.n_segments
    a, b = v[:-1], v[1:]
    # Adjacent segments share one endpoint; they overlap only if antiparallel
    # and collinear, which the zig-zag check below catches.
    d = b - a
    cross_adj = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
    dot_adj = np.einsum("ij,ij->i", d[:-1], d[1:])
    if np.any((cross_adj == 0) & (dot_adj < 0)):
        return False
    for i in range(n - 2):
        j = np.arange(i + 2, n)
        # The first and last segment of a closed ring would be adjacent; open
        # chains have no such wrap, so every j >= i+2 must stay disjoint.
        hit = segments_intersect(a[i], b[i], a[j], b[j])
        if np.any(hit):
            return False
    return True


# --- two-sided domain -------------------------------------------------------


@dataclass(eq=False)
class TwoSidedDomain:
    """Box split by a chain into a hot (plus, below) and cold (minus, above) side."""

    box: Box
    interface: PolylineInterface
    plus_ring: np.ndarray
    minus_ring: np.ndarray
    volume_plus: float
    volume_minus: float

    @property
    def plus_polygon(self) -> np.ndarray:
        return self.plus_ring

    @property
    def minus_polygon(self) -> np.ndarray:
        return self.minus_ring


def _ccw(ring: np.ndarray) -> np.ndarray:
    return ring if shoelace_area(ring) > 0 else ring[::-1]


def build_two_sided_domain(
    box: Box,
    interface: PolylineInterface,
    check_simple: bool = True,
) -> TwoSidedDomain:
    """Validate the chain against the box and build both side polygons.

    Volumes come from the shoelace formula; their sum must reproduce the box
    area to AREA_RTOL relative, which guards against mangled rings.
    """
    v = interface.vertices
    tol = ALIGN_RTOL * max(interface.base_length, box.width, box.height)
    left, right = v[0], v[-1]
    if abs(left[0] - box.xmin) > tol or abs(right[0] - box.xmax) > tol:
        raise GeometryError("chain anchors must sit on the left/right box edges")
    if np.any(v[:, 0] < box.xmin - tol) or np.any(v[:, 0] > box.xmax + tol):
        raise GeometryError("chain leaves the box horizontally")
    if np.any(v[:, 1] <= box.ymin + tol) or np.any(v[:, 1] >= box.ymax - tol):
        raise GeometryError("chain touches the top or bottom box edge")
    if check_simple and not chain_is_simple(interface):
        raise GeometryError("chain is not simple (self contact detected)")

    bottom = np.array([[box.xmax, box.ymin], [box.xmin, box.ymin]])
    top = np.array([[box.xmax, box.ymax], [box.xmin, box.ymax]])
    plus_ring = _ccw(np.concatenate([v, bottom], axis=0))
    minus_ring = _ccw(np.concatenate([v, top], axis=0))
    volume_plus = abs(shoelace_area(plus_ring))
    volume_minus = abs(shoelace_area(minus_ring))
    if abs(volume_plus + volume_minus - box.area) > AREA_RTOL * box.area:
        raise GeometryError("side volumes do not add up to the box area")
    return TwoSidedDomain(box, interface, plus_ring, minus_ring, volume_plus, volume_minus)


# --- chain text format -------------------------------------------------------


def write_polyline(path, interface: PolylineInterface, scenario_hash: str | None = None) -> None:
    """Plain text chain: header `# family generation base_length`, one x y per line."""
    lines = []
    if scenario_hash:
        lines.append(f"# scenario {scenario_hash}")
    lines.append(
        f"# {interface.family.value} {interface.generation} {interface.base_length:.17g}"
    )
    for x, y in interface.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_polyline(path) -> PolylineInterface:
    family = InterfaceFamily.CUSTOM
    generation = 0
    base_length = 1.0
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "scenario":
                    continue
                if len(parts) == 3:
                    family = InterfaceFamily(parts[0])
                    generation = int(parts[1])
                    base_length = float(parts[2])
                continue
            x, y = line.split()
            rows.append((float(x), float(y)))
    return PolylineInterface(np.array(rows), family, generation, base_length)


# --- sampling helpers ---------------------------------------------------------


def chain_sample_points(
    interface: PolylineInterface, n: int, include_vertices: bool = True
) -> np.ndarray:
    """Deterministic chain samples: all vertices (strided to the cap) plus
    arc-length stratified fill points."""
    pieces = []
    if include_vertices:
        v = interface.vertices
        stride = max(1, int(np.ceil(len(v) / max(n, 1))))
        pieces.append(v[::stride])
        if stride > 1:
            pieces.append(v[-1:])
    remaining = max(n - sum(len(p) for p in pieces), 0)
    if remaining > 0:
        cum = np.concatenate([[0.0], np.cumsum(interface.segment_lengths)])
        total = cum[-1]
        targets = (np.arange(remaining) + 0.5) / remaining * total
        seg = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0,
                      interface.n_segments - 1)
        local = (targets - cum[seg]) / interface.segment_lengths[seg]
        pts = interface.segment_starts[seg] + local[:, None] * (
            interface.segment_ends[seg] - interface.segment_starts[seg]
        )
        pieces.append(pts)
    return np.concatenate(pieces, axis=0)


def perimeter_density_scan(
    interface: PolylineInterface,
    centers: np.ndarray,
    radii: Iterable[float],
) -> float:
    """Largest sampled ratio arclength(chain within B_r(x)) / r."""
    starts = interface.segment_starts
    ends = interface.segment_ends
    lengths = interface.segment_lengths
    worst = 0.0
    for c in np.atleast_2d(centers):
        for r in radii:
            frac = segment_ball_clipped_fraction(starts, ends, c, float(r))
            worst = max(worst, float(np.dot(frac, lengths)) / float(r))
    return worst


# --- cone condition audit ------------------------------------------------------


@dataclass
class ConeCheckResult:
    ok: bool
    eps: float
    witness: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def _cone_points(y: np.ndarray, direction: np.ndarray, eps: float) -> np.ndarray:
    """Deterministic samples inside the truncated cone from apex y."""
    radii = np.array([0.25, 0.5, 0.75, 0.97]) * eps
    base = math.atan2(direction[1], direction[0])
    angles = base + np.array([-0.95, -0.5, 0.0, 0.5, 0.95]) * eps
    rays = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts = y[None, None, :] + radii[:, None, None] * rays[None, :, :]
    return pts.reshape(-1, 2)


def check_epsilon_cone(
    domain: TwoSidedDomain,
    eps: float,
    n_boundary_samples: int = 48,
    n_directions: int = 24,
    seed: int = 0,
) -> ConeCheckResult:
    """Sampled audit of the cone condition on the hot-side region.

    For each sampled chain point x a single direction must send truncated
    cones from every sampled y near x into the region. eps is used three
    ways, matching the class definition: ball radius around x, cone length,
    and cone half-angle in radians.
    """
    ring = domain.plus_ring
    chain = domain.interface
    xs = chain_sample_points(chain, n_boundary_samples)
    thetas = 2.0 * math.pi * np.arange(n_directions) / n_directions
    directions = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    rng = np.random.default_rng(seed)

    all_vertices = chain.vertices
    for x in xs:
        near = all_vertices[np.linalg.norm(all_vertices - x, axis=1) < eps]
        ring_pts = x + np.stack(
            [np.cos(2 * math.pi * rng.random(8)), np.sin(2 * math.pi * rng.random(8))],
            axis=1,
        ) * (eps * rng.random(8)[:, None])
        interior = ring_pts[points_in_polygon(ring_pts, ring)]
        candidates = [x[None, :], near]
        if len(interior):
            candidates.append(interior)
        ys = np.concatenate(candidates, axis=0)
        found = False
        first_violation = None
        for xi in directions:
            ok_dir = True
            for y in ys:
                zs = _cone_points(y, xi, eps)
                inside = points_in_polygon(zs, ring)
                if not np.all(inside):
                    ok_dir = False
                    if first_violation is None:
                        bad = zs[~inside][0]
                        first_violation = {
                            "x": x.tolist(),
                            "y": y.tolist(),
                            "z": bad.tolist(),
                            "direction": xi.tolist(),
                        }
                    break
            if ok_dir:
                found = True
                break
        if not found:
            return ConeCheckResult(False, eps, first_violation or {"x": x.tolist()})
    return ConeCheckResult(True, eps)


# --- uniform-domain audit --------------------------------------------------------


@dataclass
class UniformCheckResult:
    ok: bool
    eps: float
    worst_length_ratio: float
    worst_clearance_margin: float
    witness: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def _inside_or_on_boundary(pts: np.ndarray, ring: np.ndarray, nxt: np.ndarray) -> np.ndarray:
    inside = points_in_polygon(pts, ring)
    scale = 1.0 + float(np.abs(ring).max())
    on_bd = distance_to_segments(pts, ring, nxt) <= 1e-12 * scale
    return inside | on_bd


def _edge_stays_inside(p: np.ndarray, q: np.ndarray, ring: np.ndarray,
                       nxt: np.ndarray, feature: float) -> bool:
    """Spot checks for a candidate visibility edge.

    Besides fixed-fraction interior probes, probe just before and after any
    ring vertex the edge grazes: a segment threading exactly through a
    corner passes the proper-crossing test yet can dip outside next to it.
    """
    probes = [p * (1 - f) + q * f for f in (0.25, 0.5, 0.75)]
    d = q - p
    lsq = float(d @ d)
    if lsq > 0:
        t = np.clip(((ring - p) @ d) / lsq, 0.0, 1.0)
        feet = p + t[:, None] * d
        near = (np.linalg.norm(ring - feet, axis=1) < 0.26 * feature) & (t > 1e-12) & (t < 1 - 1e-12)
        if np.any(near):
            length = math.sqrt(lsq)
            for tt in t[near]:
                for off in (feature / 8.0, feature / 3.0):
                    for sgn in (-1.0, 1.0):
                        tp = min(max(tt + sgn * off / length, 0.0), 1.0)
                        probes.append(p + tp * d)
    pts = np.array(probes)
    return bool(np.all(_inside_or_on_boundary(pts, ring, nxt)))


def _ring_visibility(ring: np.ndarray) -> np.ndarray:
    """Pairwise in-closure visibility among ring vertices."""
    n = len(ring)
    nxt = np.roll(ring, -1, axis=0)
    feature = float(np.linalg.norm(nxt - ring, axis=1).min())
    vis = np.zeros((n, n), dtype=bool)
    for i in range(n):
        p = ring[i]
        q = ring
        cross = np.zeros(n, dtype=bool)
        for k in range(n):
            if k == i or (k + 1) % n == i:
                # Edges with p as an endpoint never properly cross p->q.
                continue
            c = segments_properly_cross(
                p[None, :], q, ring[k][None, :], nxt[k][None, :]
            )
            # Shared endpoint at q itself is not a proper crossing already.
            cross |= c
        cand = ~cross
        cand[i] = False
        for j in np.nonzero(cand)[0]:
            if not _edge_stays_inside(p, ring[j], ring, nxt, feature):
                cand[j] = False
        vis[i] = cand
        vis[i, (i - 1) % n] = True
        vis[i, (i + 1) % n] = True
    return vis | vis.T


def _point_visibility(ring: np.ndarray, p: np.ndarray) -> np.ndarray:
    n = len(ring)
    nxt = np.roll(ring, -1, axis=0)
    feature = float(np.linalg.norm(nxt - ring, axis=1).min())
    cross = np.zeros(n, dtype=bool)
    for k in range(n):
        c = segments_properly_cross(p[None, :], ring, ring[k][None, :], nxt[k][None, :])
        cross |= c
    cand = ~cross
    for j in np.nonzero(cand)[0]:
        if not _edge_stays_inside(p, ring[j], ring, nxt, feature):
            cand[j] = False
    return cand


def _dijkstra_path(weights: dict, n_nodes: int, src: int, dst: int):
    dist = [math.inf] * n_nodes
    prev = [-1] * n_nodes
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == dst:
            break
        if d > dist[u]:
            continue
        for v, w in weights.get(u, ()):
            nd = d + w
            if nd < dist[v] - 1e-18:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if not math.isfinite(dist[dst]):
        return None, math.inf
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1], dist[dst]


def _inward_bisectors(ring: np.ndarray) -> np.ndarray:
    e_prev = ring - np.roll(ring, 1, axis=0)
    e_next = np.roll(ring, -1, axis=0) - ring
    def left_normal(e):
        n = np.stack([-e[:, 1], e[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]
    n1 = left_normal(e_prev)
    n2 = left_normal(e_next)
    b = n1 + n2
    norms = np.linalg.norm(b, axis=1)
    flat = norms < 1e-12
    b[flat] = n1[flat]
    norms[flat] = 1.0
    return b / np.linalg.norm(b, axis=1)[:, None]


def check_uniform_domain(
    domain: TwoSidedDomain,
    eps: float,
    n_pairs: int = 120,
    n_edge_samples: int = 12,
    seed: int = 0,
) -> UniformCheckResult:
    """Sampled audit of the uniform (length + cigar clearance) condition.

    For seeded interior point pairs a witness arc is built from the shortest
    visibility-graph path; interior path vertices sit on reflex corners where
    the clearance vanishes, so they are pushed inward along the material
    bisector before the clearance inequality is sampled. Failure of a pushed
    witness is reported as failure of the pair; this is a heuristic audit,
    not a decision procedure, in both directions.
    """
    ring = _ccw(domain.plus_ring)
    nxt = np.roll(ring, -1, axis=0)
    n = len(ring)
    rng = np.random.default_rng(seed)
    box = domain.box

    inside_pts = []
    attempts = 0
    while len(inside_pts) < 2 * n_pairs and attempts < 400 * n_pairs:
        attempts += 1
        p = np.array(
            [
                box.xmin + box.width * rng.random(),
                box.ymin + box.height * rng.random(),
            ]
        )
        if points_in_polygon(p[None, :], ring)[0]:
            if distance_to_segments(p[None, :], ring, nxt)[0] > 1e-9:
                inside_pts.append(p)
    if len(inside_pts) < 2:
        raise GeometryError("could not sample interior points of the hot side")
    pts = np.array(inside_pts[: 2 * (len(inside_pts) // 2)])
    pairs = pts.reshape(-1, 2, 2)

    vis = _ring_visibility(ring)
    bis = _inward_bisectors(ring)
    seg_len = np.linalg.norm(ring[:, None, :] - ring[None, :, :], axis=2)
    core_edges: dict[int, list] = {i: [] for i in range(n + 2)}
    for i in range(n):
        for j in range(i + 1, n):
            if vis[i, j]:
                core_edges[i].append((j, seg_len[i, j]))
                core_edges[j].append((i, seg_len[i, j]))

    worst_ratio = 0.0
    worst_margin = math.inf
    for x, y in pairs:
        sx = n
        sy = n + 1
        edges = {k: list(vv) for k, vv in core_edges.items()}
        vx = _point_visibility(ring, x)
        vy = _point_visibility(ring, y)
        for j in range(n):
            if vx[j]:
                w = float(np.linalg.norm(ring[j] - x))
                edges[sx].append((j, w))
                edges[j].append((sx, w))
            if vy[j]:
                w = float(np.linalg.norm(ring[j] - y))
                edges[sy].append((j, w))
                edges[j].append((sy, w))
        direct = not np.any(
            segments_properly_cross(x[None, :], y[None, :], ring, nxt)
        )
        if direct:
            feature = float(np.linalg.norm(nxt - ring, axis=1).min())
            direct = _edge_stays_inside(x, y, ring, nxt, feature)
        if direct:
            w = float(np.linalg.norm(y - x))
            edges[sx].append((sy, w))
            edges[sy].append((sx, w))
        path_idx, _ = _dijkstra_path(edges, n + 2, sx, sy)
        dxy = float(np.linalg.norm(y - x))
        if path_idx is None:
            return UniformCheckResult(
                False, eps, math.inf, 0.0,
                {"x": x.tolist(), "y": y.tolist(), "reason": "no inside path found"},
            )

        def node_point(k: int) -> np.ndarray:
            if k == sx:
                return x
            if k == sy:
                return y
            return ring[k]

        raw = np.array([node_point(k) for k in path_idx])

        def required(zs: np.ndarray) -> np.ndarray:
            return (
                eps
                * np.linalg.norm(zs - x, axis=1)
                * np.linalg.norm(zs - y, axis=1)
                / max(dxy, 1e-300)
            )

        # Push reflex-corner path vertices into the material so the cigar
        # clearance has a chance; back off if the push leaves the region.
        pushed = raw.copy()
        for t, k in enumerate(path_idx):
            if k >= n:
                continue
            z = raw[t]
            req = float(required(z[None, :])[0])
            for scale in (1.3, 0.65, 0.3):
                trial = z + bis[k] * req * scale
                if points_in_polygon(trial[None, :], ring)[0]:
                    pushed[t] = trial
                    break
        # Resample the polyline and bow straight runs away from nearby
        # walls, mimicking the curved witness arc the class definition
        # allows. Pushes that would exit the region are shrunk; whatever
        # clearance deficit remains is an honest failure.
        ts = np.linspace(0.0, 1.0, n_edge_samples, endpoint=False)[1:]
        samples = [pushed[0][None, :]]
        for t in range(len(pushed) - 1):
            seg = pushed[t][None, :] * (1 - ts[:, None]) + pushed[t + 1][None, :] * ts[:, None]
            samples.append(seg)
            samples.append(pushed[t + 1][None, :])
        zs = np.concatenate(samples, axis=0)
        req = required(zs)
        dist, feet = closest_on_segments(zs, ring, nxt)
        for i in range(1, len(zs) - 1):
            need = 1.3 * req[i]
            if dist[i] >= need or dist[i] <= 1e-15:
                continue
            away = (zs[i] - feet[i]) / dist[i]
            for f in (1.0, 0.6, 0.3):
                trial = zs[i] + away * (need - dist[i]) * f
                if points_in_polygon(trial[None, :], ring)[0]:
                    zs[i] = trial
                    break
        length = float(np.sum(np.linalg.norm(np.diff(zs, axis=0), axis=1)))
        ratio = length / max(dxy, 1e-300)
        worst_ratio = max(worst_ratio, ratio)
        if length > dxy / eps * (1 + 1e-12):
            return UniformCheckResult(
                False, eps, worst_ratio, 0.0,
                {"x": x.tolist(), "y": y.tolist(), "length": length,
                 "bound": dxy / eps, "reason": "length bound violated"},
            )
        req = required(zs)
        clear = distance_to_segments(zs, ring, nxt)
        slack = clear - req
        margin = float(slack.min())
        worst_margin = min(worst_margin, margin)
        if margin < -1e-12:
            bad = zs[int(np.argmin(slack))]
            return UniformCheckResult(
                False, eps, worst_ratio, margin,
                {"x": x.tolist(), "y": y.tolist(), "z": bad.tolist(),
                 "reason": "cigar clearance violated"},
            )
    return UniformCheckResult(True, eps, worst_ratio, worst_margin)


# --- aggregate admissibility ------------------------------------------------------


class AdmissibilityMode(str, Enum):
    LIPSCHITZ = "lipschitz"
    UNIFORM = "uniform"


@dataclass
class AdmissibilityConstraints:
    """Shape-class constraints shared by the enumeration and optimization flows.

    volume        : prescribed hot-side volume (exact up to volume_rtol)
    confinement   : closed box that must contain the whole chain (None skips)
    eps           : cone parameter; also the uniform-domain parameter
    c_hat         : perimeter density bound, arclength(chain in B_r) <= c_hat*r
                    (gates the LIPSCHITZ class only)
    mode          : LIPSCHITZ checks volume/confinement/cone/density;
                    UNIFORM swaps the density gate for the cigar condition
                    and measure regularity (density kept as a diagnostic)
    d, s, c_d, c_s: measure regularity declaration for UNIFORM mode
    """

    volume: float
    confinement: Optional[Box] = None
    eps: float = 0.05
    c_hat: float = 3.0
    mode: AdmissibilityMode = AdmissibilityMode.LIPSCHITZ
    d: float = 1.0
    s: float = 1.0
    c_d: float = 4.0
    c_s: float = 0.25
    volume_rtol: float = 1e-9


@dataclass
class SamplingBudget:
    """Sample counts for the admissibility audits; all deterministic or seeded."""

    n_boundary_samples: int = 48
    n_directions: int = 24
    n_pairs: int = 80
    n_radii: int = 12
    r_min: float = 0.02
    r_max: float = 0.5
    seed: int = 0


@dataclass
class AdmissibilityReport:
    mode: AdmissibilityMode
    volume_ok: bool
    confinement_ok: bool
    cone_ok: bool
    perimeter_density_ok: bool
    uniform_ok: Optional[bool] = None
    measure_upper_ok: Optional[bool] = None
    measure_lower_ok: Optional[bool] = None
    volume_measured: float = math.nan
    cone_worst_eps: float = math.nan
    density_estimate: float = math.nan
    worst_length_ratio: float = math.nan
    worst_clearance_margin: float = math.nan
    c_d_estimate: float = math.nan
    c_s_estimate: float = math.nan
    witness: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        flags = [self.volume_ok, self.confinement_ok, self.cone_ok,
                 self.perimeter_density_ok]
        for extra in (self.uniform_ok, self.measure_upper_ok, self.measure_lower_ok):
            if extra is not None:
                flags.append(extra)
        return all(flags)


def check_admissible(
    domain: TwoSidedDomain,
    constraints: AdmissibilityConstraints,
    budget: SamplingBudget | None = None,
    measure=None,
) -> AdmissibilityReport:
    """Run the sampled audits for the requested shape class.

    In UNIFORM mode the measure regularity checks run against `measure`
    (defaults to the d-power weighting of the chain built on the fly).
    """
    budget = budget or SamplingBudget()
    chain = domain.interface
    witness: dict = {}

    volume_ok = abs(domain.volume_plus - constraints.volume) <= (
        constraints.volume_rtol * max(abs(constraints.volume), 1e-300)
    )
    if not volume_ok:
        witness["volume"] = {
            "measured": domain.volume_plus,
            "required": constraints.volume,
        }

    if constraints.confinement is None:
        confinement_ok = True
    else:
        # The band is convex, so vertex containment covers every segment.
        inside = constraints.confinement.contains(chain.vertices, tol=1e-12)
        confinement_ok = bool(np.all(inside))
        if not confinement_ok:
            witness["confinement"] = {
                "vertex": chain.vertices[~inside][0].tolist()
            }

    cone = check_epsilon_cone(
        domain,
        constraints.eps,
        n_boundary_samples=budget.n_boundary_samples,
        n_directions=budget.n_directions,
        seed=budget.seed,
    )
    cone_ok = cone.ok
    if not cone_ok:
        witness["cone"] = cone.witness
    cone_worst = math.nan
    for trial in (2 * constraints.eps, constraints.eps, 0.5 * constraints.eps,
                  0.25 * constraints.eps):
        if trial == constraints.eps:
            res = cone
        else:
            res = check_epsilon_cone(
                domain, trial,
                n_boundary_samples=budget.n_boundary_samples,
                n_directions=budget.n_directions,
                seed=budget.seed,
            )
        if res.ok:
            cone_worst = trial
            break

    centers = chain_sample_points(chain, budget.n_boundary_samples)
    radii = np.geomspace(budget.r_min, budget.r_max, budget.n_radii)
    density = perimeter_density_scan(chain, centers, radii)
    if constraints.mode is AdmissibilityMode.UNIFORM:
        # The arc-density cap defines the Lipschitz class only; the uniform
        # class constrains the measure instead. Keep the scan as a diagnostic.
        density_ok = True
    else:
        density_ok = density <= constraints.c_hat * (1 + 1e-12)
        if not density_ok:
            witness["perimeter_density"] = {
                "estimate": density, "bound": constraints.c_hat
            }

    report = AdmissibilityReport(
        mode=constraints.mode,
        volume_ok=volume_ok,
        confinement_ok=confinement_ok,
        cone_ok=cone_ok,
        perimeter_density_ok=density_ok,
        volume_measured=domain.volume_plus,
        cone_worst_eps=cone_worst,
        density_estimate=density,
        witness=witness,
    )

    if constraints.mode is AdmissibilityMode.UNIFORM:
        uni = check_uniform_domain(
            domain, constraints.eps, n_pairs=budget.n_pairs, seed=budget.seed
        )
        report.uniform_ok = uni.ok
        report.worst_length_ratio = uni.worst_length_ratio
        report.worst_clearance_margin = uni.worst_clearance_margin
        if not uni.ok:
            witness["uniform"] = uni.witness
        from fractalflux import measure as measure_mod

        mu = measure or measure_mod.hausdorff_like_measure(chain, constraints.d)
        up = measure_mod.upper_regularity_scan(
            mu, constraints.d, centers=centers, radii=radii
        )
        low = measure_mod.lower_regularity_scan(
            mu, constraints.s, centers=centers, radii=radii
        )
        report.c_d_estimate = up.constant
        report.c_s_estimate = low.constant
        report.measure_upper_ok = up.constant <= constraints.c_d * (1 + 1e-12)
        report.measure_lower_ok = low.constant >= constraints.c_s * (1 - 1e-12)
        if not report.measure_upper_ok:
            witness["measure_upper"] = {"estimate": up.constant, "bound": constraints.c_d}
        if not report.measure_lower_ok:
            witness["measure_lower"] = {"estimate": low.constant, "bound": constraints.c_s}
    return report
