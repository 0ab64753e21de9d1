"""Boundary measures supported on interface chains.

A measure is a nonnegative weight per chain segment, spread uniformly along
the segment (constant linear density). The canonical construction weights
each segment by its length to the power d, which reproduces the natural
self-similar mass distribution on the prefractal families: for the
square-wave family with d = 1.5 every generation has total mass exactly 1,
and for the triadic family the same holds with d = ln 4 / ln 3.

Regularity scans audit the two-sided ball bounds that the shape classes
declare: mass(B_r(x)) <= c_d * r**d from above (open balls) and
mass(B_r(x)) >= c_s * r**s from below (closed balls). Straight segments
meet a circle in at most two points, so the open/closed distinction is a
null set and one clipping routine serves both scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from fractalflux.geometry import (
    GeometryError,
    PolylineInterface,
    chain_sample_points,
    segment_ball_clipped_fraction,
)


class MeasureError(ValueError):
    """Invalid weights or scan parameters."""


@dataclass(eq=False)
class BoundaryMeasure:
    """Per-segment weights on a chain, uniform density within each segment."""

    interface: PolylineInterface
    weights: np.ndarray
    d: float = 1.0

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.interface.n_segments,):
            raise MeasureError("need one weight per chain segment")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise MeasureError("weights must be finite and nonnegative")
        self.weights = w

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def hausdorff_like_measure(interface: PolylineInterface, d: float) -> BoundaryMeasure:
    """Weight each segment by length**d."""
    if d < 0:
        raise MeasureError("dimension exponent d must be nonnegative")
    return BoundaryMeasure(interface, interface.segment_lengths**d, d)


def arc_length_measure(interface: PolylineInterface) -> BoundaryMeasure:
    return hausdorff_like_measure(interface, 1.0)


def normalized(measure: BoundaryMeasure) -> BoundaryMeasure:
    """Rescale to unit total mass."""
    mass = measure.total_mass
    if mass <= 0:
        raise MeasureError("cannot normalize a zero measure")
    return BoundaryMeasure(measure.interface, measure.weights / mass, measure.d)


def ball_mass(measure: BoundaryMeasure, center, radius: float) -> float:
    """Mass of the chain inside the ball, via exact segment clipping."""
    frac = segment_ball_clipped_fraction(
        measure.interface.segment_starts,
        measure.interface.segment_ends,
        np.asarray(center, dtype=float),
        float(radius),
    )
    return float(np.dot(frac, measure.weights))


def integrate_against(measure: BoundaryMeasure, phi: Callable) -> float:
    """Midpoint quadrature of phi against the measure.

    phi takes (x, y) arrays and returns values; each segment contributes
    weight * phi(midpoint).
    """
    mids = measure.interface.midpoints()
    vals = np.asarray(phi(mids[:, 0], mids[:, 1]), dtype=float)
    return float(np.dot(vals, measure.weights))


@dataclass
class RegularityScanResult:
    constant: float
    center: np.ndarray
    radius: float
    n_centers: int
    n_radii: int


def _resolve_centers(measure: BoundaryMeasure, centers) -> np.ndarray:
    if centers is None:
        return chain_sample_points(measure.interface, 200)
    if np.isscalar(centers):
        return chain_sample_points(measure.interface, int(centers))
    return np.atleast_2d(np.asarray(centers, dtype=float))


def geometric_radii(r_min: float, r_max: float, n: int) -> np.ndarray:
    if not (0 < r_min <= r_max <= 1.0):
        raise MeasureError("radii must satisfy 0 < r_min <= r_max <= 1")
    return np.geomspace(r_min, r_max, n)


def upper_regularity_scan(
    measure: BoundaryMeasure,
    d: float,
    centers=None,
    radii: Sequence[float] | None = None,
) -> RegularityScanResult:
    """Largest sampled ratio mass(B_r(x)) / r**d over centers x radii."""
    pts = _resolve_centers(measure, centers)
    rr = np.asarray(radii if radii is not None else geometric_radii(0.02, 0.5, 16))
    best = -math.inf
    arg = (pts[0], float(rr[0]))
    starts = measure.interface.segment_starts
    ends = measure.interface.segment_ends
    for c in pts:
        for r in rr:
            frac = segment_ball_clipped_fraction(starts, ends, c, float(r))
            ratio = float(np.dot(frac, measure.weights)) / float(r) ** d
            if ratio > best:
                best = ratio
                arg = (c, float(r))
    return RegularityScanResult(best, np.asarray(arg[0]), arg[1], len(pts), len(rr))


def lower_regularity_scan(
    measure: BoundaryMeasure,
    s: float,
    centers=None,
    radii: Sequence[float] | None = None,
) -> RegularityScanResult:
    """Smallest sampled ratio mass(B_r(x)) / r**s; centers must lie on the chain."""
    pts = _resolve_centers(measure, centers)
    rr = np.asarray(radii if radii is not None else geometric_radii(0.02, 0.5, 16))
    worst = math.inf
    arg = (pts[0], float(rr[0]))
    starts = measure.interface.segment_starts
    ends = measure.interface.segment_ends
    for c in pts:
        for r in rr:
            frac = segment_ball_clipped_fraction(starts, ends, c, float(r))
            ratio = float(np.dot(frac, measure.weights)) / float(r) ** s
            if ratio < worst:
                worst = ratio
                arg = (c, float(r))
    return RegularityScanResult(worst, np.asarray(arg[0]), arg[1], len(pts), len(rr))


def weak_convergence_gaps(
    measures: Sequence[BoundaryMeasure], phi: Callable
) -> np.ndarray:
    """Successive integral gaps |int phi d(mu_{m+1}) - int phi d(mu_m)|."""
    if len(measures) < 2:
        raise MeasureError("need at least two measures for gaps")
    vals = np.array([integrate_against(m, phi) for m in measures])
    return np.abs(np.diff(vals))


# --- measure text format -----------------------------------------------------


def write_measure(path, measure: BoundaryMeasure, scenario_hash: str | None = None) -> None:
    """Plain text: header `# d total_mass`, one `index weight` per line."""
    lines = []
    if scenario_hash:
        lines.append(f"# scenario {scenario_hash}")
    lines.append(f"# {measure.d:.17g} {measure.total_mass:.17g}")
    for i, w in enumerate(measure.weights):
        lines.append(f"{i} {w:.17g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_measure(path, interface: PolylineInterface) -> BoundaryMeasure:
    d = 1.0
    declared_mass = None
    weights = {}
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "scenario":
                    continue
                if len(parts) == 2:
                    d = float(parts[0])
                    declared_mass = float(parts[1])
                continue
            idx, w = line.split()
            weights[int(idx)] = float(w)
    if len(weights) != interface.n_segments:
        raise MeasureError(
            f"measure file has {len(weights)} weights, chain has "
            f"{interface.n_segments} segments"
        )
    arr = np.array([weights[i] for i in range(len(weights))])
    out = BoundaryMeasure(interface, arr, d)
    if declared_mass is not None and abs(out.total_mass - declared_mass) > 1e-9 * max(
        declared_mass, 1.0
    ):
        raise MeasureError("declared total mass does not match the weights")
    return out
