"""Trajectory energy functional and heat-content curves.

The shape functional integrates, over the run time, the hot-side Dirichlet
energy, the hot-side L2 mass, and the interface jump form:

    E_T = integral_0^T [ |grad u|_{plus}^2 + |u|_{plus}^2 + b(u, u) ] dt

evaluated with the trapezoid rule on the time grid. For a time-constant
field the trapezoid is exact and the functional reduces to T times the
static form, which the recovery experiments lean on.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from .io import write_csv
from .mesh import TwoSidedMesh
from .solver import (
    SystemMatrices,
    Trajectory,
    TransmissionProblem,
    assemble,
    solve_trajectory,
)

GRAD_PLUS = "grad_plus"
L2_PLUS = "l2_plus"
INTERFACE = "interface"


class EnergyError(ValueError):
    """Raised for inconsistent energy evaluations."""


def energy_forms(matrices: SystemMatrices) -> dict[str, sp.spmatrix]:
    """The three quadratic forms making up the functional's integrand."""
    return {
        GRAD_PLUS: matrices.stiffness_plus,
        L2_PLUS: matrices.mass_plus,
        INTERFACE: matrices.coupling,
    }


@dataclass
class EnergyReport:
    """Trapezoid-integrated pieces of the shape functional for one run."""

    grad_term: float
    l2_term: float
    boundary_term: float
    total: float
    t_final: float
    dt: float
    h: float
    generation: int
    coupling_summary: str

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list:
        return [getattr(self, f.name) for f in fields(self.__class__)]


def _trapezoid(values: np.ndarray, dt: float) -> float:
    if len(values) < 2:
        raise EnergyError("need at least two time points to integrate")
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


def coupling_summary(problem: TransmissionProblem, mesh: TwoSidedMesh) -> str:
    lam = np.asarray(problem.coupling, dtype=float)
    if lam.ndim == 0:
        if np.isinf(lam):
            return "merged"
        return f"{float(lam):.17g}"
    if np.all(lam == lam.flat[0]):
        return f"{float(lam.flat[0]):.17g}"
    return "per-segment"


def trajectory_energy(
    mesh: TwoSidedMesh,
    problem: TransmissionProblem,
    matrices: SystemMatrices | None = None,
    trajectory: Trajectory | None = None,
) -> EnergyReport:
    """Solve (or reuse a run that recorded the forms) and integrate."""
    mats = matrices if matrices is not None else assemble(mesh, problem)
    forms = energy_forms(mats)
    if trajectory is None:
        trajectory = solve_trajectory(mesh, problem, matrices=mats, quad_forms=forms)
    missing = [name for name in forms if name not in trajectory.quad_values]
    if missing:
        raise EnergyError(
            f"trajectory did not record {missing}; pass quad_forms=energy_forms(mats) "
            "to solve_trajectory or let trajectory_energy run the solve"
        )
    grad = _trapezoid(trajectory.quad_values[GRAD_PLUS], trajectory.dt)
    l2 = _trapezoid(trajectory.quad_values[L2_PLUS], trajectory.dt)
    boundary = _trapezoid(trajectory.quad_values[INTERFACE], trajectory.dt)
    return EnergyReport(
        grad_term=grad,
        l2_term=l2,
        boundary_term=boundary,
        total=grad + l2 + boundary,
        t_final=problem.t_final,
        dt=problem.dt,
        h=mesh.h,
        generation=mesh.domain.interface.generation,
        coupling_summary=coupling_summary(problem, mesh),
    )


def static_energy(
    mesh: TwoSidedMesh,
    problem: TransmissionProblem,
    u: np.ndarray,
    matrices: SystemMatrices | None = None,
) -> EnergyReport:
    """Functional of a field held constant in time: T times the static form."""
    if u.shape != (mesh.n_vertices,):
        raise EnergyError(f"field has shape {u.shape}, mesh has {mesh.n_vertices} dofs")
    mats = matrices if matrices is not None else assemble(mesh, problem)
    T = problem.t_final
    grad = T * float(u @ (mats.stiffness_plus @ u))
    l2 = T * float(u @ (mats.mass_plus @ u))
    boundary = T * float(u @ (mats.coupling @ u))
    return EnergyReport(
        grad_term=grad,
        l2_term=l2,
        boundary_term=boundary,
        total=grad + l2 + boundary,
        t_final=T,
        dt=problem.dt,
        h=mesh.h,
        generation=mesh.domain.interface.generation,
        coupling_summary=coupling_summary(problem, mesh),
    )


def transfer_curve(trajectory: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Times and cold-side heat content Q^-(t) along a run."""
    return trajectory.times, trajectory.mass_minus


def write_energy_csv(reports, path, scenario: str | None = None) -> None:
    reports = list(reports)
    write_csv(
        path,
        EnergyReport.csv_header(),
        (r.csv_row() for r in reports),
        scenario=scenario,
    )
