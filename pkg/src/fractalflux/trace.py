"""Interface traces, extensions, and the weak conormal derivative.

All operations act on one sheet of a double-node mesh. The reference
operator throughout is (u, v) -> (grad u, grad v) + (u, v) on the sheet, so
the minimal extension of a trace is the discrete H1 extension and the trace
norm is the energy of that extension. The weak conormal derivative is the
interface-restricted residual of the same operator; pairing it with the
trace of the minimal extension reproduces the squared trace norm exactly
(Galerkin orthogonality), which is the isometry the tests pin down.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import assemble_mass, assemble_stiffness, triangle_geometry
from .io import write_csv
from .mesh import TwoSidedMesh


class TraceError(ValueError):
    """Raised for side/shape mismatches in trace operations."""


def _side_column(side: int) -> int:
    if side == 1:
        return 0
    if side == -1:
        return 1
    raise TraceError(f"side must be +1 or -1, got {side}")


def nodal_trace(mesh: TwoSidedMesh, u: np.ndarray, side: int) -> np.ndarray:
    """Values of the chosen sheet at the interface pairs, in chain order."""
    return u[mesh.interface_pairs[:, _side_column(side)]]


def jump_trace(mesh: TwoSidedMesh, u: np.ndarray) -> np.ndarray:
    """Plus-side trace minus minus-side trace per pair."""
    return u[mesh.interface_pairs[:, 0]] - u[mesh.interface_pairs[:, 1]]


def _sheet_operator(mesh: TwoSidedMesh, side: int) -> sp.csr_matrix:
    tris = mesh.plus_triangles if side == 1 else mesh.minus_triangles
    n = mesh.n_vertices
    return (
        assemble_stiffness(mesh.vertices, tris, n)
        + assemble_mass(mesh.vertices, tris, n)
    ).tocsr()


def one_harmonic_extension(
    mesh: TwoSidedMesh, trace_values: np.ndarray, side: int
) -> np.ndarray:
    """Minimal-energy sheet field with the given interface values.

    Solves (grad w, grad v) + (w, v) = 0 against all sheet hats vanishing on
    the interface, with w pinned to `trace_values` at the sheet's interface
    copies. The outer box boundary stays natural. Entries off the sheet are
    zero.
    """
    trace_values = np.asarray(trace_values, dtype=float)
    if trace_values.shape != (mesh.n_pairs,):
        raise TraceError(
            f"trace needs one value per pair ({mesh.n_pairs}), got {trace_values.shape}"
        )
    col = _side_column(side)
    pinned = mesh.interface_pairs[:, col]
    sheet = mesh.side_dofs(side)
    op = _sheet_operator(mesh, side)

    w = np.zeros(mesh.n_vertices)
    w[pinned] = trace_values
    interior = np.setdiff1d(sheet, pinned, assume_unique=False)
    if len(interior):
        a_ii = op[interior][:, interior].tocsc()
        rhs = -(op[interior][:, pinned] @ trace_values)
        w[interior] = spla.splu(a_ii).solve(rhs)
    return w


def extension_energy(mesh: TwoSidedMesh, w: np.ndarray, side: int) -> float:
    """Sheet H1 energy |grad w|^2 + |w|^2 of a field living on one sheet."""
    op = _sheet_operator(mesh, side)
    return float(w @ (op @ w))


def trace_norm(mesh: TwoSidedMesh, trace_values: np.ndarray, side: int) -> float:
    """Interface trace norm: the energy norm of the minimal extension."""
    w = one_harmonic_extension(mesh, trace_values, side)
    return float(np.sqrt(max(extension_energy(mesh, w, side), 0.0)))


def weak_normal_derivative(mesh: TwoSidedMesh, u: np.ndarray, side: int) -> np.ndarray:
    """Weak conormal derivative of a sheet field at the interface pairs.

    Computed as the interface-restricted residual of the sheet operator, so
    for any sheet field u and trace hat phi_k the dot product with nodal
    trace values realizes (grad u, grad E phi) + (u, E phi). The orientation
    is the sheet's own: each sheet reports the derivative along its outward
    conormal, which makes the pairing with its own trace positive.
    """
    if u.shape != (mesh.n_vertices,):
        raise TraceError(f"field has shape {u.shape}, mesh has {mesh.n_vertices} dofs")
    col = _side_column(side)
    residual = _sheet_operator(mesh, side) @ u
    return residual[mesh.interface_pairs[:, col]]


def trace_pairing(functional_values: np.ndarray, trace_values: np.ndarray) -> float:
    """Duality pairing of a weak interface functional with nodal trace data."""
    functional_values = np.asarray(functional_values, dtype=float)
    trace_values = np.asarray(trace_values, dtype=float)
    if functional_values.shape != trace_values.shape:
        raise TraceError("functional and trace sizes differ")
    return float(functional_values @ trace_values)


def interior_residual_gap(mesh: TwoSidedMesh, u: np.ndarray, side: int) -> float:
    """Largest conormal-derivative entry; zero for fields zero near the chain."""
    return float(np.abs(weak_normal_derivative(mesh, u, side)).max())


# ------------------------------------------------------------ averaged trace


def _regular_polygon(center: np.ndarray, radius: float, n_gon: int) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n_gon) / n_gon
    return center[None, :] + radius * np.column_stack([np.cos(ang), np.sin(ang)])


def _clip_convex(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Keep the part of a convex polygon left of the directed line a -> b."""
    if len(poly) == 0:
        return poly
    d = (b[0] - a[0]) * (poly[:, 1] - a[1]) - (b[1] - a[1]) * (poly[:, 0] - a[0])
    nxt = np.roll(np.arange(len(poly)), -1)
    out: list[np.ndarray] = []
    for i in range(len(poly)):
        j = nxt[i]
        if d[i] >= 0:
            out.append(poly[i])
            if d[j] < 0:
                t = d[i] / (d[i] - d[j])
                out.append(poly[i] + t * (poly[j] - poly[i]))
        elif d[j] >= 0:
            t = d[i] / (d[i] - d[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out) if out else np.empty((0, 2))


def _p1_polygon_integral(poly: np.ndarray, corner_xy: np.ndarray, corner_vals: np.ndarray):
    """Area and integral of the linear interpolant over a convex polygon."""
    if len(poly) < 3:
        return 0.0, 0.0
    a, b, c = corner_xy
    det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])

    def value(p):
        l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det
        l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det
        return (1.0 - l1 - l2) * corner_vals[0] + l1 * corner_vals[1] + l2 * corner_vals[2]

    area_total = 0.0
    integral = 0.0
    v0 = poly[0]
    f0 = value(v0)
    for i in range(1, len(poly) - 1):
        v1, v2 = poly[i], poly[i + 1]
        tri_area = 0.5 * abs(
            (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])
        )
        if tri_area == 0.0:
            continue
        area_total += tri_area
        integral += tri_area * (f0 + value(v1) + value(v2)) / 3.0
    return area_total, integral


def disk_average(
    mesh: TwoSidedMesh,
    u: np.ndarray,
    center: np.ndarray,
    radius: float,
    side: int,
    n_gon: int = 256,
) -> float:
    """Mean of a sheet field over (the sheet's part of) a disk."""
    tris = mesh.plus_triangles if side == 1 else mesh.minus_triangles
    corners = mesh.vertices[tris]
    centroids = corners.mean(axis=1)
    reach = np.linalg.norm(corners - centroids[:, None, :], axis=2).max(axis=1)
    near = np.linalg.norm(centroids - center[None, :], axis=1) <= radius + reach
    disk = _regular_polygon(np.asarray(center, dtype=float), radius, n_gon)
    area = 0.0
    integral = 0.0
    for t in np.flatnonzero(near):
        poly = disk
        xy = corners[t]
        for k in range(3):
            poly = _clip_convex(poly, xy[k], xy[(k + 1) % 3])
            if len(poly) == 0:
                break
        a, s = _p1_polygon_integral(poly, xy, u[tris[t]])
        area += a
        integral += s
    if area <= 0.0:
        raise TraceError(f"disk of radius {radius} around {center} misses the sheet")
    return integral / area


def averaged_trace(
    mesh: TwoSidedMesh,
    u: np.ndarray,
    side: int,
    radii: np.ndarray | None = None,
    n_gon: int = 256,
) -> np.ndarray:
    """Disk-averaged interface values, extrapolated to vanishing radius.

    For each interface pair the field is averaged over disks of the given
    radii (default 2h, 3h, 4h) intersected with the sheet, and a straight
    line in the radius is fit least-squares; the intercept is returned.
    """
    if radii is None:
        radii = mesh.h * np.array([2.0, 3.0, 4.0])
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 2:
        raise TraceError("need at least two radii to extrapolate")
    pts = mesh.pair_points
    box = mesh.domain.box
    out = np.empty(mesh.n_pairs)
    for k in range(mesh.n_pairs):
        # The fit needs the disk family to stay geometrically similar as the
        # radius shrinks. A box edge through the center keeps that (the cut
        # scales with the disk); an edge at a positive distance inside the
        # largest disk does not, so shrink the whole family below it.
        d_box = min(
            pts[k, 0] - box.xmin,
            box.xmax - pts[k, 0],
            pts[k, 1] - box.ymin,
            box.ymax - pts[k, 1],
        )
        scale = 1.0
        if 0.0 < d_box < radii.max():
            scale = d_box / radii.max()
        rk = radii * scale
        avgs = np.array(
            [disk_average(mesh, u, pts[k], r, side, n_gon=n_gon) for r in rk]
        )
        design = np.column_stack([np.ones(len(rk)), rk])
        coef, *_ = np.linalg.lstsq(design, avgs, rcond=None)
        out[k] = coef[0]
    return out


def write_interface_csv(
    mesh: TwoSidedMesh,
    fields: dict[str, np.ndarray],
    path,
    scenario: str | None = None,
) -> None:
    """Chain-ordered CSV of per-pair interface quantities."""
    for name, values in fields.items():
        if np.asarray(values).shape != (mesh.n_pairs,):
            raise TraceError(f"field {name!r} needs {mesh.n_pairs} per-pair values")
    pts = mesh.pair_points
    header = ["pair_index", "x", "y", *fields.keys()]
    rows = [
        [k, pts[k, 0], pts[k, 1], *(float(np.asarray(v)[k]) for v in fields.values())]
        for k in range(mesh.n_pairs)
    ]
    write_csv(path, header, rows, scenario=scenario)
