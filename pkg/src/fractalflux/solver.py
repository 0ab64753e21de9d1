"""Theta-scheme time stepping for the two-sheet transmission problem.

The spatial form is a(u, v) = sum_s D_s (grad u, grad v)_s + b(u, v), where
b integrates coupling * (jump u)(jump v) over the interface chain with the
trapezoid rule on each interface edge. Both sheets live in one DOF vector;
the interface pairs of the mesh are the only places the sides talk.

Infinite coupling is a mesh property here, not a coefficient: merge the
relevant segments with `mesh.merge_interface` first. On merged nodes the
default indicator initial state is 0 (the indicator of the open hot side),
which keeps the cold-side heat content exactly zero at t = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import assemble_mass, assemble_stiffness
from .mesh import TwoSidedMesh

INDICATOR_PLUS = "indicator_plus"
_CG_ITER_FACTOR = 20


class SolverError(ValueError):
    """Raised for inconsistent problem setups or failed linear solves."""


@dataclass(eq=False)
class TransmissionProblem:
    """Coefficients and discretization knobs for one parabolic run."""

    diffusivity_plus: float = 1.0
    diffusivity_minus: float = 1.0
    coupling: float | Sequence[float] | np.ndarray = 1.0
    initial: str | Callable | np.ndarray = INDICATOR_PLUS
    source: Callable | None = None          # source(x, y, t) -> nodal values
    t_final: float = 1.0
    dt: float = 1e-3
    theta: float = 1.0
    mass_lumping: bool = False
    linear_solver: str = "lu"
    cg_rtol: float = 1e-10

    def __post_init__(self) -> None:
        if self.diffusivity_plus <= 0 or self.diffusivity_minus <= 0:
            raise SolverError("diffusivities must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise SolverError(f"theta must lie in [0, 1], got {self.theta}")
        if self.dt <= 0 or self.t_final <= 0:
            raise SolverError("dt and t_final must be positive")
        if self.linear_solver not in ("lu", "cg"):
            raise SolverError(f"unknown linear solver {self.linear_solver!r}")
        lam = np.atleast_1d(np.asarray(self.coupling, dtype=float))
        if (lam < 0).any() or np.isnan(lam).any():
            raise SolverError("coupling values must be >= 0 (inf allowed on merged segments)")

    def n_steps(self) -> int:
        n = int(round(self.t_final / self.dt))
        if n < 1 or abs(n * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise SolverError(
                f"dt={self.dt!r} does not divide t_final={self.t_final!r} into whole steps"
            )
        return n


def coupling_per_edge(mesh: TwoSidedMesh, coupling) -> np.ndarray:
    """Finite coupling value for every live interface edge."""
    lam = np.asarray(coupling, dtype=float)
    n_edges = len(mesh.interface_edges)
    if lam.ndim == 0:
        if np.isinf(lam):
            if n_edges:
                raise SolverError(
                    "infinite coupling everywhere needs a fully merged mesh "
                    "(merge_interface); this mesh still has live interface edges"
                )
            return np.empty(0)
        return np.full(n_edges, float(lam))
    n_seg = mesh.domain.interface.n_segments
    if lam.shape != (n_seg,):
        raise SolverError(
            f"per-segment coupling needs shape ({n_seg},), got {lam.shape}"
        )
    per_edge = lam[mesh.edge_segment]
    if np.isinf(per_edge).any():
        bad = sorted(set(mesh.edge_segment[np.isinf(per_edge)].tolist()))
        raise SolverError(
            f"segments {bad} ask for infinite coupling but still have live edges; "
            "merge them first (merge_interface)"
        )
    return per_edge


def assemble_coupling(mesh: TwoSidedMesh, lam_per_edge: np.ndarray) -> sp.csr_matrix:
    """Interface jump form: trapezoid rule, each edge endpoint gets length/2."""
    n = mesh.n_vertices
    if len(mesh.interface_edges) == 0:
        return sp.csr_matrix((n, n))
    w = 0.5 * lam_per_edge * mesh.edge_lengths
    w2 = np.repeat(w, 2)                          # one weight per edge endpoint
    pair_idx = mesh.interface_edges.ravel()
    p = mesh.interface_pairs[pair_idx, 0]
    m = mesh.interface_pairs[pair_idx, 1]
    rows = np.concatenate([p, p, m, m])
    cols = np.concatenate([p, m, p, m])
    data = np.concatenate([w2, -w2, -w2, w2])
    mat = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat


@dataclass(eq=False)
class SystemMatrices:
    """Assembled sparse operators for one mesh/problem combination."""

    mass: sp.csr_matrix
    mass_plus: sp.csr_matrix
    mass_minus: sp.csr_matrix
    stiffness: sp.csr_matrix          # diffusivity-weighted, both sheets
    stiffness_plus: sp.csr_matrix     # unweighted, plus sheet only
    stiffness_minus: sp.csr_matrix    # unweighted, minus sheet only
    coupling: sp.csr_matrix

    @property
    def bilinear(self) -> sp.csr_matrix:
        return self.stiffness + self.coupling


def assemble(mesh: TwoSidedMesh, problem: TransmissionProblem) -> SystemMatrices:
    n = mesh.n_vertices
    lumped = problem.mass_lumping
    mass = assemble_mass(mesh.vertices, mesh.triangles, n, lumped=lumped)
    mass_plus = assemble_mass(mesh.vertices, mesh.plus_triangles, n, lumped=lumped)
    mass_minus = assemble_mass(mesh.vertices, mesh.minus_triangles, n, lumped=lumped)
    k_plus = assemble_stiffness(mesh.vertices, mesh.plus_triangles, n)
    k_minus = assemble_stiffness(mesh.vertices, mesh.minus_triangles, n)
    stiffness = problem.diffusivity_plus * k_plus + problem.diffusivity_minus * k_minus
    coupling = assemble_coupling(mesh, coupling_per_edge(mesh, problem.coupling))
    return SystemMatrices(
        mass=mass,
        mass_plus=mass_plus,
        mass_minus=mass_minus,
        stiffness=stiffness.tocsr(),
        stiffness_plus=k_plus,
        stiffness_minus=k_minus,
        coupling=coupling,
    )


def initial_state(mesh: TwoSidedMesh, problem: TransmissionProblem) -> np.ndarray:
    init = problem.initial
    if isinstance(init, str):
        if init != INDICATOR_PLUS:
            raise SolverError(f"unknown initial state {init!r}")
        u0 = np.zeros(mesh.n_vertices)
        u0[mesh.side_dofs(+1)] = 1.0
        if len(mesh.merged_vertices):
            u0[mesh.merged_vertices] = 0.0
        return u0
    if callable(init):
        vals = np.asarray(init(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
        if vals.shape != (mesh.n_vertices,):
            raise SolverError("initial callable must return one value per vertex")
        return vals
    vals = np.asarray(init, dtype=float)
    if vals.shape != (mesh.n_vertices,):
        raise SolverError(
            f"initial vector has shape {vals.shape}, mesh has {mesh.n_vertices} vertices"
        )
    return vals.copy()


class _StepSolver:
    """One factorized (or preconditioned) solve per time step."""

    def __init__(self, lhs: sp.csr_matrix, method: str, rtol: float):
        self._lhs = lhs
        self._method = method
        if method == "lu":
            self._lu = spla.splu(lhs.tocsc())
        else:
            diag = lhs.diagonal()
            if (diag <= 0).any():
                raise SolverError("diagonal preconditioner needs positive diagonal")
            inv = 1.0 / diag
            self._precond = spla.LinearOperator(lhs.shape, matvec=lambda x: inv * x)
            self._rtol = rtol
            self._maxiter = int(_CG_ITER_FACTOR * math.sqrt(lhs.shape[0])) + 1

    def solve(self, rhs: np.ndarray, x0: np.ndarray) -> np.ndarray:
        if self._method == "lu":
            return self._lu.solve(rhs)
        try:
            x, info = spla.cg(
                self._lhs, rhs, x0=x0, rtol=self._rtol, maxiter=self._maxiter, M=self._precond
            )
        except TypeError:  # older scipy spells the tolerance "tol"
            x, info = spla.cg(
                self._lhs, rhs, x0=x0, tol=self._rtol, maxiter=self._maxiter, M=self._precond
            )
        if info != 0:
            raise SolverError(f"CG did not converge within {self._maxiter} iterations")
        return x


@dataclass(eq=False)
class Trajectory:
    """Time series and per-step forms recorded while stepping."""

    times: np.ndarray
    final_state: np.ndarray
    mass: np.ndarray            # total content 1' M u per time point
    mass_plus: np.ndarray       # content of the lower sheet
    mass_minus: np.ndarray      # content of the upper sheet
    half_l2: np.ndarray         # (1/2) u' M u per time point
    form_next: np.ndarray       # a(u_{k+1}, u_{k+1}) per step
    increment_m2: np.ndarray    # |u_{k+1} - u_k|_M^2 per step
    source_work: np.ndarray     # dt * (f_theta, u_{k+1})_M per step
    theta: float
    dt: float
    had_source: bool
    max_residual: float
    snapshots: list = field(default_factory=list)
    quad_values: dict = field(default_factory=dict)   # name -> u' Q u per time point

    @property
    def n_steps(self) -> int:
        return len(self.form_next)

    def mass_drift(self) -> float:
        return float(np.abs(self.mass - self.mass[0]).max())


def solve_trajectory(
    mesh: TwoSidedMesh,
    problem: TransmissionProblem,
    matrices: SystemMatrices | None = None,
    snapshot_every: int | None = None,
    quad_forms: dict[str, sp.spmatrix] | None = None,
) -> Trajectory:
    """March the theta scheme from t = 0 to t_final.

    `quad_forms` maps names to symmetric sparse matrices Q; the value u' Q u
    is recorded at every time point under that name.
    """
    mats = matrices if matrices is not None else assemble(mesh, problem)
    n_steps = problem.n_steps()
    dt = problem.dt
    theta = problem.theta
    A = mats.bilinear
    M = mats.mass
    lhs = (M + theta * dt * A).tocsr()
    solver = _StepSolver(lhs, problem.linear_solver, problem.cg_rtol)

    u = initial_state(mesh, problem)
    ones = np.ones(mesh.n_vertices)
    m1 = M @ ones
    m1_plus = mats.mass_plus @ ones
    m1_minus = mats.mass_minus @ ones

    times = dt * np.arange(n_steps + 1)
    mass = np.empty(n_steps + 1)
    mass_p = np.empty(n_steps + 1)
    mass_m = np.empty(n_steps + 1)
    half_l2 = np.empty(n_steps + 1)
    form_next = np.empty(n_steps)
    inc_m2 = np.empty(n_steps)
    source_work = np.zeros(n_steps)
    snapshots: list = []
    quad_forms = quad_forms or {}
    quad_values = {name: np.empty(n_steps + 1) for name in quad_forms}

    def record(k: int, state: np.ndarray, m_state: np.ndarray) -> None:
        mass[k] = m1 @ state
        mass_p[k] = m1_plus @ state
        mass_m[k] = m1_minus @ state
        half_l2[k] = 0.5 * (state @ m_state)
        for name, Q in quad_forms.items():
            quad_values[name][k] = state @ (Q @ state)

    def eval_source(t: float) -> np.ndarray:
        return np.asarray(
            problem.source(mesh.vertices[:, 0], mesh.vertices[:, 1], t), dtype=float
        )

    Mu = M @ u
    record(0, u, Mu)
    if snapshot_every:
        snapshots.append((0.0, u.copy()))
    max_residual = 0.0

    for k in range(n_steps):
        rhs = Mu.copy()
        if theta < 1.0:
            rhs -= (1.0 - theta) * dt * (A @ u)
        mf = None
        if problem.source is not None:
            f_eff = theta * eval_source(times[k + 1])
            if theta < 1.0:
                f_eff = f_eff + (1.0 - theta) * eval_source(times[k])
            mf = M @ f_eff
            rhs += dt * mf
        try:
            u_next = solver.solve(rhs, x0=u)
        except SolverError as exc:
            raise SolverError(f"step {k + 1} of {n_steps}: {exc}") from exc
        res = lhs @ u_next - rhs
        max_residual = max(max_residual, float(np.abs(res).max()))

        du = u_next - u
        inc_m2[k] = du @ (M @ du)
        form_next[k] = u_next @ (A @ u_next)
        if mf is not None:
            source_work[k] = dt * (u_next @ mf)
        u = u_next
        Mu = M @ u
        record(k + 1, u, Mu)
        if snapshot_every and ((k + 1) % snapshot_every == 0 or k + 1 == n_steps):
            snapshots.append((float(times[k + 1]), u.copy()))

    return Trajectory(
        times=times,
        final_state=u,
        mass=mass,
        mass_plus=mass_p,
        mass_minus=mass_m,
        half_l2=half_l2,
        form_next=form_next,
        increment_m2=inc_m2,
        source_work=source_work,
        theta=theta,
        dt=dt,
        had_source=problem.source is not None,
        max_residual=max_residual,
        snapshots=snapshots,
        quad_values=quad_values,
    )


def energy_identity_residual(trajectory: Trajectory, paired_source: bool = False) -> float:
    """Defect of the discrete backward-Euler energy balance.

    For the implicit scheme with no source, testing each step against its own
    new state telescopes into

        (1/2)|u_N|_M^2 - (1/2)|u_0|_M^2
            + sum_k [ dt a(u_{k+1}, u_{k+1}) + (1/2)|u_{k+1} - u_k|_M^2 ] = 0.

    With `paired_source` the recorded per-step work dt (f, u_{k+1})_M moves to
    the right-hand side and the defect is measured against it.
    """
    if trajectory.theta != 1.0:
        raise SolverError("the energy balance check is defined for theta = 1 only")
    if trajectory.had_source and not paired_source:
        raise SolverError("trajectory has a source term; pass paired_source=True")
    total = trajectory.half_l2[-1] - trajectory.half_l2[0]
    total += trajectory.dt * trajectory.form_next.sum()
    total += 0.5 * trajectory.increment_m2.sum()
    if paired_source:
        total -= trajectory.source_work.sum()
    return float(abs(total))


def flux_norm(
    matrices: SystemMatrices,
    u: np.ndarray,
    diffusivity_plus: float,
    diffusivity_minus: float,
    variant: str = "printed",
) -> float:
    """Norm of the diffusive flux D grad u.

    The default squares the coefficient (the flux itself is D grad u); the
    "sqrt" variant weights the squared gradient by D once, giving the energy
    norm of the form instead.
    """
    if variant == "printed":
        wp, wm = diffusivity_plus**2, diffusivity_minus**2
    elif variant == "sqrt":
        wp, wm = diffusivity_plus, diffusivity_minus
    else:
        raise SolverError(f"unknown flux norm variant {variant!r}")
    val = wp * (u @ (matrices.stiffness_plus @ u)) + wm * (u @ (matrices.stiffness_minus @ u))
    return math.sqrt(max(val, 0.0))


def solve_single_side(mesh: TwoSidedMesh, problem: TransmissionProblem, side: int):
    """March one sheet alone (its own Neumann problem), ignoring the other.

    Returns the dof ids of the sheet and the final values on them. Used to
    cross-check that zero coupling decouples the sheets exactly.
    """
    if problem.source is not None:
        raise SolverError("single-side marching supports source-free problems only")
    ids = mesh.side_dofs(side)
    tris = mesh.plus_triangles if side > 0 else mesh.minus_triangles
    n = mesh.n_vertices
    local = np.full(n, -1, dtype=np.int64)
    local[ids] = np.arange(len(ids))
    tri_local = local[tris]
    verts = mesh.vertices[ids]
    diff = problem.diffusivity_plus if side > 0 else problem.diffusivity_minus
    M = assemble_mass(verts, tri_local, len(ids), lumped=problem.mass_lumping)
    K = assemble_stiffness(verts, tri_local, len(ids), weights=diff)
    n_steps = problem.n_steps()
    lhs = (M + problem.theta * problem.dt * K).tocsr()
    solver = _StepSolver(lhs, problem.linear_solver, problem.cg_rtol)
    u_full = initial_state(mesh, problem)
    u = u_full[ids]
    for k in range(n_steps):
        rhs = M @ u
        if problem.theta < 1.0:
            rhs -= (1.0 - problem.theta) * problem.dt * (K @ u)
        u = solver.solve(rhs, x0=u)
    return ids, u
