"""Per-step monitors: mass, max norm, total variation along a field,
entropy inequalities, dissipation sums, and error norms.

The discrete total variation along a vector field X evaluates the duality
definition exactly on piecewise-constant states:

    TV_X(u) = sum over faces of |u_K - u_Ke| * int_e |g(X, n_e)| dv_e,

the supremum over test functions being attained by phi = +/-1 per face.

Entropy diagnostics are phrased in the convex-decomposition variables
(utilde_{K,e}, u_{K,e}) produced by each solver step: the per-cell entropy
inequality, the dissipation estimate with the modulus of convexity of U, and
the cumulative dissipation bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import geometry
from .fvm import ConvexDecomposition, NumericalFlux, SolverState
from .mesh import SphereMesh, cell_averages


# ---------------------------------------------------------------------------
# total variation along a vector field
# ---------------------------------------------------------------------------

def tv_face_weights(mesh: SphereMesh, X: geometry.VectorField) -> np.ndarray:
    """Per-face weights int_e |g(X, n_e)| dv_e (orientation-independent)."""
    comp = np.empty((2, mesh.n_faces, 3))
    for f in range(mesh.n_faces):
        for q in range(3):
            comp[:, f, q] = X.at(np.array([mesh.face_q_phi[f, q],
                                           mesh.face_q_theta[f, q]]))
    st2 = np.sin(mesh.face_q_theta) ** 2
    integrand = np.abs(st2 * comp[0] * mesh.face_n_phi + comp[1] * mesh.face_n_theta)
    return np.sum(mesh.face_q_w * integrand, axis=-1)


def discrete_tv_x(state: SolverState, X, weights: Optional[np.ndarray] = None) -> float:
    """TV of the cell-average state along X (see module docstring)."""
    mesh = state.mesh
    if weights is None:
        weights = tv_face_weights(mesh, X)
    jumps = np.abs(state.u[mesh.face_left] - state.u[mesh.face_right])
    return float(np.sum(weights * jumps))


@dataclass(frozen=True)
class TVReport:
    """Evolution of TV_X over a trajectory.

    For compatible (flux, X) pairs any step increase beyond the relative
    tolerance is flagged.  For incompatible pairs the report carries the
    measured growth-budget terms instead (never asserted)."""

    tv_series: tuple
    max_relative_increase: float
    violating_steps: tuple
    compatible: bool
    bracket_sup: Optional[float] = None
    tv_time_integral: Optional[float] = None
    budget: Optional[float] = None


def check_tv_diminishing(tv_series: Sequence[float], tau: float,
                         compatible: bool, rel_tol: float = 1e-10,
                         bracket_sup: Optional[float] = None,
                         x_div_l1: float = 0.0) -> TVReport:
    """Analyze a recorded TV_X time series (one entry per step)."""
    tv = np.asarray(tv_series, dtype=float)
    scale = max(1.0, float(tv.max(initial=0.0)))
    increases = np.diff(tv)
    rel = increases / scale
    violating = tuple(int(i) + 1 for i in np.flatnonzero(rel > rel_tol))
    max_rel = float(rel.max()) if rel.size else 0.0
    budget = None
    tv_int = None
    if not compatible and bracket_sup is not None:
        tv_int = float(np.sum(tv[:-1]) * tau) if tv.size > 1 else 0.0
        budget = bracket_sup * tv_int + x_div_l1
    return TVReport(tv_series=tuple(float(v) for v in tv),
                    max_relative_increase=max_rel,
                    violating_steps=violating,
                    compatible=compatible,
                    bracket_sup=bracket_sup,
                    tv_time_integral=tv_int,
                    budget=budget)


# ---------------------------------------------------------------------------
# entropy diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropySpec:
    """An entropy to monitor: Kruzkov (kind='kruzkov', parameter k) or a
    smooth convex U given with its derivative."""

    kind: str                      # "kruzkov" | "smooth"
    name: str
    k: Optional[float] = None
    U: Optional[Callable] = None
    dU: Optional[Callable] = None

    def u_values(self, u):
        if self.kind == "kruzkov":
            return np.abs(np.asarray(u, dtype=float) - self.k)
        return self.U(np.asarray(u, dtype=float))

    def convexity_modulus(self, box, n: int = 1000) -> float:
        """alpha = inf U'' over the state box (0 for Kruzkov)."""
        if self.kind == "kruzkov":
            return 0.0
        grid = np.linspace(box[0], box[1], n)
        h = (box[1] - box[0]) / (n - 1)
        vals = self.U(grid)
        second = (vals[2:] - 2 * vals[1:-1] + vals[:-2]) / (h * h)
        return float(max(second.min(), 0.0))


def kruzkov_spec(k: float) -> EntropySpec:
    return EntropySpec(kind="kruzkov", name=f"kruzkov_{k:g}", k=k)


def square_spec() -> EntropySpec:
    return EntropySpec(kind="smooth", name="square",
                       U=lambda u: 0.5 * np.asarray(u, dtype=float) ** 2,
                       dU=lambda u: np.asarray(u, dtype=float))


@dataclass(frozen=True)
class EntropyStepRecord:
    """All entropy inequalities of one step, for one entropy."""

    name: str
    worst_pc10: float              # max residual of the per-face inequality
    worst_pc11: float              # same with u_{K,e} (bounded by R)
    max_abs_r: float               # max |R_{K,e}| = |U(u_{K,e}) - U(utilde_{K,e})|
    pc12_lhs: float
    pc12_rhs: float
    pc12_satisfied: bool
    alpha: float
    dissipation_increment: float   # sum (|e||K|/p_K) |u_{K,e} - u_new_K|^2
    entropy_mass_old: float
    entropy_mass_new: float


def _side_arrays(mesh: SphereMesh, decomp: ConvexDecomposition):
    fid = decomp.face_index
    sign = decomp.face_sign
    valid = decomp.valid
    safe = np.maximum(fid, 0)
    return fid, sign, valid, safe


def entropy_report(nf: NumericalFlux, decomp: ConvexDecomposition,
                   spec: EntropySpec) -> EntropyStepRecord:
    """Evaluate the discrete entropy inequalities for one step and entropy."""
    mesh = nf.table.mesh
    fid, sign, valid, safe = _side_arrays(mesh, decomp)
    a, b = decomp.u_left, decomp.u_right

    if spec.kind == "kruzkov":
        G = nf.kruzkov_values(spec.k, a, b)
        G_cons_l = nf.kruzkov_consistent(spec.k, a, decomp.s_left)
        G_cons_r = nf.kruzkov_consistent(spec.k, b, decomp.s_right)
    else:
        G = nf.smooth_values(spec.U, spec.dU, a, b)
        G_cons_l = nf.smooth_consistent(spec.dU, a)
        G_cons_r = nf.smooth_consistent(spec.dU, b)

    # F_{e,K}(u_K, u_Ke) - F_{e,K}(u_K, u_K) per (cell, face) slot
    Gdiff = np.where(valid,
                     np.where(sign > 0, G[safe] - G_cons_l[safe],
                              -G[safe] + G_cons_r[safe]),
                     0.0)
    U_old = spec.u_values(decomp.u_old)[:, None]
    mu = decomp.mu[:, None]
    pc10 = np.where(valid, spec.u_values(decomp.utilde) - U_old + mu * Gdiff, 0.0)
    R = np.where(valid, spec.u_values(decomp.u_ke) - spec.u_values(decomp.utilde), 0.0)
    pc11 = np.where(valid, spec.u_values(decomp.u_ke) - U_old + mu * Gdiff - R, 0.0)

    # dissipation estimate with the modulus of convexity
    area = mesh.cell_area[:, None]
    perim = mesh.cell_perimeter[:, None]
    measure = np.where(valid, mesh.face_measure[safe], 0.0)
    wKe = measure * area / perim
    u_new = decomp.u_new
    diss = np.sum(wKe * np.where(valid, (decomp.u_ke - u_new[:, None]) ** 2, 0.0))
    alpha = spec.convexity_modulus(nf.table.box)
    mass_old = float(np.sum(spec.u_values(decomp.u_old) * mesh.cell_area))
    mass_new = float(np.sum(spec.u_values(u_new) * mesh.cell_area))
    own_F = np.where(valid, np.where(sign > 0, G_cons_l[safe], -G_cons_r[safe]), 0.0)
    flux_term = float(np.sum(decomp.tau * measure * own_F))
    r_term = float(np.sum(wKe * R))
    lhs = mass_new + 0.5 * alpha * float(diss)
    rhs = mass_old + flux_term + r_term

    return EntropyStepRecord(
        name=spec.name,
        worst_pc10=float(pc10.max()),
        worst_pc11=float(pc11.max()),
        max_abs_r=float(np.abs(R).max()),
        pc12_lhs=lhs,
        pc12_rhs=rhs,
        pc12_satisfied=lhs <= rhs + 1e-10 * max(1.0, abs(rhs)),
        alpha=alpha,
        dissipation_increment=float(diss),
        entropy_mass_old=mass_old,
        entropy_mass_new=mass_new,
    )


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

def l1_error(state: SolverState, reference) -> float:
    """L1 distance between the state and a reference (callable or cell array)."""
    mesh = state.mesh
    if callable(reference):
        ref = cell_averages(mesh, reference)
    else:
        ref = np.asarray(reference, dtype=float)
    return float(np.sum(np.abs(state.u - ref) * mesh.cell_area))


# ---------------------------------------------------------------------------
# per-step record and monitor
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    """One row of the time series written to diag.csv."""

    step: int
    t: float
    mass: float
    linf: float
    tv: dict                       # name -> TV_X value
    entropy_mass: dict             # name -> sum U(u_K) |K|
    dissipation_increment: float   # square-entropy PC-dissipation of the step
    pc15_cumulative: float
    worst_pc10: float              # worst over all monitored entropies
    l1_error: Optional[float] = None


class Monitor:
    """Solver hook that accumulates DiagnosticsRecords.

    ``tv_fields`` maps names to precomputed face weight arrays (see
    :func:`tv_face_weights`); ``entropies`` is a list of EntropySpec.
    """

    def __init__(self, mesh: SphereMesh, nf: Optional[NumericalFlux] = None,
                 tv_fields: Optional[dict] = None,
                 entropies: Sequence[EntropySpec] = (),
                 reference: Optional[Callable] = None):
        self.mesh = mesh
        self.nf = nf
        self.tv_fields = tv_fields or {}
        self.entropies = list(entropies)
        self.reference = reference
        self.records: list = []
        self.pc15_cumulative = 0.0

    def record_initial(self, state: SolverState) -> None:
        self.records.append(self._base_record(state, dissipation=0.0, worst_pc10=0.0))

    def __call__(self, state: SolverState, decomp: ConvexDecomposition) -> None:
        dissipation = 0.0
        worst = -math.inf
        for spec in self.entropies:
            rec = entropy_report(self.nf, decomp, spec)
            worst = max(worst, rec.worst_pc10)
            if spec.kind == "smooth":
                dissipation = rec.dissipation_increment
        if not self.entropies:
            worst = 0.0
        self.pc15_cumulative += dissipation
        self.records.append(self._base_record(state, dissipation, worst))

    def _base_record(self, state, dissipation, worst_pc10) -> DiagnosticsRecord:
        u = state.u
        tv = {name: float(np.sum(w * np.abs(u[self.mesh.face_left]
                                            - u[self.mesh.face_right])))
              for name, w in self.tv_fields.items()}
        emass = {spec.name: float(np.sum(spec.u_values(u) * self.mesh.cell_area))
                 for spec in self.entropies}
        rec = DiagnosticsRecord(
            step=state.n, t=state.t,
            mass=float(np.sum(u * self.mesh.cell_area)),
            linf=float(np.abs(u).max()),
            tv=tv, entropy_mass=emass,
            dissipation_increment=dissipation,
            pc15_cumulative=self.pc15_cumulative,
            worst_pc10=worst_pc10,
            l1_error=(l1_error(state, self.reference)
                      if self.reference is not None else None),
        )
        return rec

    def column_names(self) -> list:
        cols = ["step", "t", "mass", "linf"]
        cols += [f"tv_{name}" for name in self.tv_fields]
        cols += [f"entropy_mass_{spec.name}" for spec in self.entropies]
        cols += ["dissipation_increment", "pc15_cumulative", "worst_pc10"]
        if self.reference is not None:
            cols.append("l1_error")
        return cols

    def write_csv(self, path: str) -> None:
        """Deterministic CSV (17 significant digits, fixed column order)."""
        with open(path, "w") as fh:
            fh.write(",".join(self.column_names()) + "\n")
            for r in self.records:
                row = [str(r.step), f"{r.t:.17g}", f"{r.mass:.17g}", f"{r.linf:.17g}"]
                row += [f"{r.tv[name]:.17g}" for name in self.tv_fields]
                row += [f"{r.entropy_mass[spec.name]:.17g}" for spec in self.entropies]
                row += [f"{r.dissipation_increment:.17g}",
                        f"{r.pc15_cumulative:.17g}", f"{r.worst_pc10:.17g}"]
                if self.reference is not None:
                    row.append(f"{r.l1_error:.17g}")
                fh.write(",".join(row) + "\n")
