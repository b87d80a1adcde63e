"""Linear Skorokhod problems: reflected linear drift in the orthant.

Given a drift theta and a reflection matrix R, find a nonnegative state Z and
a nondecreasing pushing process Y with Z(t) = Z0 + theta t + R Y(t), where Y_j
grows only while Z_j sits on the boundary.  Solvability for every drift is
equivalent to R being completely-S (every principal submatrix admits x >= 0
with Rx > 0), which is decided here by small LPs.

The solver steps with the same event-splitting scheme as the fluid dynamics:
per step the boundary push is the minimal-l1 rate, supported on the active
set, that keeps active components nonnegative through the step.  Minimality
fixes a deterministic selection among the generally non-unique solutions.
"""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._util import fmt, l1
from .errors import (
    DimensionMismatch,
    DimensionTooLarge,
    InfeasibleActiveSet,
    NotCompletelyS,
    PushBoundExceeded,
    StepTooLarge,
)

_ACTIVE_CAP = 8  # combinatorial push enumeration is C(2a, a) in the active count


def is_s_matrix(r_matrix, tol: float = 1e-10) -> bool:
    """LP test: does some x >= 0 with sum(x) <= 1 give R x uniformly positive?"""
    r = np.asarray(r_matrix, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DimensionMismatch("S-matrix test needs a square matrix")
    n = r.shape[0]
    if n == 0:
        return True
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.zeros((n + 1, n + 1))
    a_ub[:n, :n] = -r
    a_ub[:n, -1] = 1.0
    a_ub[n, :n] = 1.0
    b_ub = np.zeros(n + 1)
    b_ub[n] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub,
                  bounds=[(0, None)] * n + [(None, None)], method="highs")
    return bool(res.success and -res.fun > tol)


def is_completely_s(r_matrix, *, max_dim: int = 20) -> bool:
    """Every nonempty principal submatrix must be an S-matrix."""
    r = np.asarray(r_matrix, dtype=float)
    n = r.shape[0]
    if n > max_dim:
        raise DimensionTooLarge(f"{2 ** n - 1} principal submatrices exceeds the cap (J={n})")
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            idx = np.asarray(subset)
            if not is_s_matrix(r[np.ix_(idx, idx)]):
                return False
    return True


def _default_push_bound(theta: np.ndarray, r: np.ndarray) -> float:
    """Generous finite bound on the per-component push rate.

    The effective pushes of any solution are bounded, but not constructively;
    this uses 10 (1 + |theta|) kappa_1(R), falling back to a large constant
    when R is singular.
    """
    kappa = float(np.linalg.cond(r, 1))
    if not np.isfinite(kappa) or kappa > 1e12:
        kappa = 1e6
    return 10.0 * (1.0 + l1(theta)) * kappa


@dataclass(frozen=True, eq=False)
class LspInstance:
    theta: np.ndarray
    reflection: np.ndarray
    z0: np.ndarray
    push_bound: float | None = None

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        r = np.asarray(self.reflection, dtype=float)
        z0 = np.asarray(self.z0, dtype=float)
        j = theta.shape[0]
        if r.shape != (j, j) or z0.shape != (j,):
            raise DimensionMismatch(
                f"inconsistent shapes: theta {theta.shape}, R {r.shape}, Z0 {z0.shape}"
            )
        if np.any(z0 < 0):
            raise ValueError("initial state must be nonnegative")
        bound = self.push_bound
        if bound is None:
            bound = _default_push_bound(theta, r)
        if bound <= 0:
            raise ValueError("push bound must be positive")
        for name, val in (("theta", theta), ("reflection", r), ("z0", z0)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "push_bound", float(bound))

    @property
    def J(self) -> int:
        return int(self.theta.shape[0])


@dataclass(frozen=True, eq=False)
class LspSolution:
    grid: np.ndarray
    states: np.ndarray
    pushing: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        for name in ("grid", "states", "pushing", "controls"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def J(self) -> int:
        return int(self.states.shape[1])

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])


def _minimal_push(r: np.ndarray, active, c: np.ndarray, tol: float) -> np.ndarray:
    """Minimal-l1 u >= 0 supported on the active set with (R u)_active >= c.

    Exact combinatorial enumeration of the LP vertices: a vertex has support
    S and an equal-sized set T of tight rows with R[T, S] nonsingular.  Ties
    in the l1 value break to the lexicographically smallest vector.
    """
    a = list(active)
    if len(a) > _ACTIVE_CAP:
        raise DimensionTooLarge(f"{len(a)} simultaneously active components exceeds {_ACTIVE_CAP}")
    j_dim = r.shape[0]
    r_a = r[np.ix_(a, a)]
    best = None
    best_key = None
    for size in range(len(a) + 1):
        for s_cols in itertools.combinations(range(len(a)), size):
            for t_rows in itertools.combinations(range(len(a)), size):
                u_a = np.zeros(len(a))
                if size:
                    sub = r_a[np.ix_(t_rows, s_cols)]
                    if abs(np.linalg.det(sub)) < 1e-12:
                        continue
                    try:
                        u_s = np.linalg.solve(sub, c[list(t_rows)])
                    except np.linalg.LinAlgError:
                        continue
                    u_a[list(s_cols)] = u_s
                if np.any(u_a < -tol):
                    continue
                u_a = np.maximum(u_a, 0.0)
                if np.any(r_a @ u_a < c - tol):
                    continue
                key = (round(float(u_a.sum()), 12), tuple(np.round(u_a, 12)))
                if best_key is None or key < best_key:
                    best_key = key
                    best = u_a
    if best is None:
        raise InfeasibleActiveSet("no feasible boundary push; the step is inconsistent")
    u = np.zeros(j_dim)
    u[a] = best
    return u


def solve_lsp(inst: LspInstance, horizon: float, h: float,
              *, max_events: int = 1_000_000) -> LspSolution:
    """Complementarity time-stepping with event splitting at zero crossings.

    Refuses instances whose reflection matrix is not completely-S.  Raises
    PushBoundExceeded when the minimal admissible push tops the instance's
    bound (the configured bound was too low for this drift).
    """
    if not is_completely_s(inst.reflection):
        raise NotCompletelyS("reflection matrix is not completely-S")
    if h <= 0 or horizon < 0:
        raise ValueError("need h > 0 and horizon >= 0")
    theta, r = inst.theta, inst.reflection
    eps = 1e-9 * (1.0 + l1(inst.z0))
    tol = 1e-9 * (1.0 + l1(theta))

    z = inst.z0.copy()
    y = np.zeros(inst.J)
    t = 0.0
    grid = [0.0]
    states = [z.copy()]
    pushing = [y.copy()]
    controls = []
    events = 0
    end = horizon * (1 - 1e-15) - 1e-15

    while t < end:
        active = [j for j in range(inst.J) if z[j] < eps]
        if active:
            c = -theta[active] - z[active] / h
            u = _minimal_push(r, active, c, tol)
            if np.any(u > inst.push_bound * (1 + 1e-12)):
                raise PushBoundExceeded(
                    f"minimal push {u.max():.6g} exceeds bound {inst.push_bound:.6g}"
                )
        else:
            u = np.zeros(inst.J)
        v = theta + r @ u

        dt = min(h, horizon - t)
        crossing = []
        for j in range(inst.J):
            if j not in active and v[j] < -1e-14 and z[j] > 0.0:
                t_j = z[j] / -v[j]
                if t_j < dt * (1 - 1e-12):
                    dt = t_j
                    crossing = [j]
                elif t_j <= dt * (1 + 1e-12) and crossing:
                    crossing.append(j)
        z = z + v * dt
        y = y + u * dt
        t = t + dt
        for j in crossing:
            z[j] = 0.0
        np.maximum(z, 0.0, out=z)

        grid.append(t)
        states.append(z.copy())
        pushing.append(y.copy())
        controls.append(u)
        events += 1
        if events > max_events:
            raise StepTooLarge(f"more than {max_events} sub-steps; reduce h or horizon")

    return LspSolution(
        grid=np.asarray(grid),
        states=np.asarray(states),
        pushing=np.asarray(pushing),
        controls=np.asarray(controls) if controls else np.empty((0, inst.J)),
    )


def solution_residual(inst: LspInstance, sol: LspSolution) -> float:
    """Max over stamps of |Z - (Z0 + theta t + R Y)| in l1."""
    predicted = (
        inst.z0[None, :]
        + sol.grid[:, None] * inst.theta[None, :]
        + sol.pushing @ inst.reflection.T
    )
    return float(np.abs(sol.states - predicted).sum(axis=1).max())


def complementarity_residual(sol: LspSolution) -> float:
    """Discrete boundary-push-while-positive functional sum_j int Z_j dY_j,
    trapezoidal in Z per interval."""
    if sol.controls.shape[0] == 0:
        return 0.0
    z_mid = 0.5 * (sol.states[:-1] + sol.states[1:])
    dy = np.diff(sol.pushing, axis=0)
    return float(np.sum(z_mid * dy))


def lipschitz_bound(inst: LspInstance) -> float:
    """A priori slope bound |theta| + |R| * push_bound (induced l1 norm)."""
    r_norm = float(np.abs(inst.reflection).sum(axis=0).max())
    return l1(inst.theta) + r_norm * inst.push_bound


def observed_slope(sol: LspSolution) -> float:
    if sol.grid.shape[0] < 2:
        return 0.0
    dz = np.abs(np.diff(sol.states, axis=0)).sum(axis=1)
    dt = np.diff(sol.grid)
    return float((dz / dt).max())


def scale_solution(sol: LspSolution, r: float) -> LspSolution:
    """Time-space rescaling t -> Z(r t) / r; a solution from Z0 / r."""
    if r <= 0:
        raise ValueError("scale factor must be positive")
    return LspSolution(sol.grid / r, sol.states / r, sol.pushing / r, sol.controls)


def solution_csv(sol: LspSolution) -> str:
    """CSV export: t, Z1..ZJ, Y1..YJ, 17 significant digits."""
    j = sol.J
    header = ["t"] + [f"Z{i + 1}" for i in range(j)] + [f"Y{i + 1}" for i in range(j)]
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for i in range(sol.grid.shape[0]):
        row = [sol.grid[i], *sol.states[i], *sol.pushing[i]]
        out.write(",".join(fmt(v) for v in row) + "\n")
    return out.getvalue()
