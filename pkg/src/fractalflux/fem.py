"""Vectorized P1 triangle kernels shared by the mesh, trace, and solver layers.

Everything here works on raw vertex/triangle arrays so it can serve both
sides of a double-node mesh: matrices are assembled on the full DOF range
with zero rows for vertices a triangle subset never touches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# Reference-element mass matrix times 12 (exact for P1 on any triangle).
_MASS_PATTERN = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def triangle_geometry(vertices: np.ndarray, triangles: np.ndarray):
    """Signed areas and barycentric gradients, (n_t,) and (n_t, 3, 2)."""
    x = vertices[triangles]
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    grads = np.empty((len(triangles), 3, 2))
    # grad of the hat at vertex i is the inward normal of the opposite edge
    # scaled by 1/(2 area); written out against the Jacobian determinant.
    grads[:, 0, 0] = x[:, 1, 1] - x[:, 2, 1]
    grads[:, 0, 1] = x[:, 2, 0] - x[:, 1, 0]
    grads[:, 1, 0] = x[:, 2, 1] - x[:, 0, 1]
    grads[:, 1, 1] = x[:, 0, 0] - x[:, 2, 0]
    grads[:, 2, 0] = x[:, 0, 1] - x[:, 1, 1]
    grads[:, 2, 1] = x[:, 1, 0] - x[:, 0, 0]
    grads /= det[:, None, None]
    return area, grads


def min_angle_degrees(vertices: np.ndarray, triangles: np.ndarray) -> float:
    """Smallest interior angle over all triangles."""
    x = vertices[triangles]
    angles = []
    for i in range(3):
        a = x[:, (i + 1) % 3] - x[:, i]
        b = x[:, (i + 2) % 3] - x[:, i]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        cosv = np.clip(np.einsum("ij,ij->i", a, b) / (na * nb), -1.0, 1.0)
        angles.append(np.degrees(np.arccos(cosv)))
    return float(np.min(np.stack(angles)))


def assemble_stiffness(
    vertices: np.ndarray,
    triangles: np.ndarray,
    n_dofs: int,
    weights: np.ndarray | float | None = None,
) -> sp.csr_matrix:
    """Global P1 stiffness; `weights` multiplies per triangle (diffusivity)."""
    if len(triangles) == 0:
        return sp.csr_matrix((n_dofs, n_dofs))
    area, grads = triangle_geometry(vertices, triangles)
    local = np.einsum("tik,tjk->tij", grads, grads) * area[:, None, None]
    if weights is not None:
        local = local * np.broadcast_to(np.asarray(weights, dtype=float), (len(triangles),))[:, None, None]
    return _scatter(local, triangles, n_dofs)


def assemble_mass(
    vertices: np.ndarray,
    triangles: np.ndarray,
    n_dofs: int,
    weights: np.ndarray | float | None = None,
    lumped: bool = False,
) -> sp.csr_matrix:
    """Global P1 mass matrix; row-sum lumping on request."""
    if len(triangles) == 0:
        return sp.csr_matrix((n_dofs, n_dofs))
    area, _ = triangle_geometry(vertices, triangles)
    scaled = area
    if weights is not None:
        scaled = area * np.broadcast_to(np.asarray(weights, dtype=float), (len(triangles),))
    local = _MASS_PATTERN[None, :, :] * scaled[:, None, None]
    if lumped:
        diag = np.zeros(n_dofs)
        np.add.at(diag, triangles.ravel(), (scaled[:, None] / 3.0).repeat(3, axis=1).ravel())
        return sp.dia_matrix((diag[None, :], [0]), shape=(n_dofs, n_dofs)).tocsr()
    return _scatter(local, triangles, n_dofs)


def _scatter(local: np.ndarray, triangles: np.ndarray, n_dofs: int) -> sp.csr_matrix:
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n_dofs, n_dofs))
    out = mat.tocsr()
    out.sum_duplicates()
    return out


@dataclass(eq=False)
class TriangleLocator:
    """Uniform-bin point location over a triangle subset."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        x = self.vertices[self.triangles]
        lo = x.min(axis=(0, 1))
        hi = x.max(axis=(0, 1))
        span = np.maximum(hi - lo, 1e-300)
        diam = np.linalg.norm(x.max(axis=1) - x.min(axis=1), axis=1)
        cell = max(float(np.median(diam)), 1e-12)
        nx = max(1, min(2048, int(np.ceil(span[0] / cell))))
        ny = max(1, min(2048, int(np.ceil(span[1] / cell))))
        self._lo, self._span, self._nx, self._ny = lo, span, nx, ny
        bins: dict[tuple[int, int], list[int]] = {}
        tmin = x.min(axis=1)
        tmax = x.max(axis=1)
        for t in range(len(self.triangles)):
            i0 = int((tmin[t, 0] - lo[0]) / span[0] * nx)
            i1 = int((tmax[t, 0] - lo[0]) / span[0] * nx)
            j0 = int((tmin[t, 1] - lo[1]) / span[1] * ny)
            j1 = int((tmax[t, 1] - lo[1]) / span[1] * ny)
            for i in range(max(i0, 0), min(i1, nx - 1) + 1):
                for j in range(max(j0, 0), min(j1, ny - 1) + 1):
                    bins.setdefault((i, j), []).append(t)
        self._bins = bins
        self._geom = triangle_geometry(self.vertices, self.triangles)

    def candidates(self, point: np.ndarray) -> list[int]:
        i = int((point[0] - self._lo[0]) / self._span[0] * self._nx)
        j = int((point[1] - self._lo[1]) / self._span[1] * self._ny)
        out: list[int] = []
        for di in (0, -1, 1):
            for dj in (0, -1, 1):
                out.extend(self._bins.get((i + di, j + dj), ()))
        return out

    def locate(self, points: np.ndarray, tol: float = 1e-10):
        """Triangle index and barycentric coordinates per point (-1 if outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.full(len(pts), -1, dtype=np.int64)
        bary = np.zeros((len(pts), 3))
        for p in range(len(pts)):
            best_t, best_b, best_m = -1, None, -np.inf
            for t in self.candidates(pts[p]):
                b = self._barycentric(t, pts[p])
                m = float(b.min())
                if m > best_m:
                    best_t, best_b, best_m = t, b, m
                if m >= 0.0:
                    break
            if best_t >= 0 and best_m >= -tol:
                idx[p] = best_t
                bary[p] = best_b
        return idx, bary

    def _barycentric(self, t: int, p: np.ndarray) -> np.ndarray:
        tri = self.triangles[t]
        a, b, c = self.vertices[tri]
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det
        l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det
        return np.array([1.0 - l1 - l2, l1, l2])


def interpolate_p1(
    vertices: np.ndarray,
    triangles: np.ndarray,
    field: np.ndarray,
    points: np.ndarray,
    locator: TriangleLocator | None = None,
) -> np.ndarray:
    """Evaluate a nodal P1 field at arbitrary points (NaN outside)."""
    loc = locator or TriangleLocator(vertices, triangles)
    idx, bary = loc.locate(points)
    out = np.full(len(np.atleast_2d(points)), np.nan)
    ok = idx >= 0
    tri = loc.triangles[idx[ok]]
    out[ok] = np.einsum("pi,pi->p", field[tri], bary[ok])
    return out
