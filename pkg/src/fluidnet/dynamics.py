"""Closed-loop dynamics of a fluid network.

Between control switches the fluid level moves with constant velocity
``alpha - outflow @ u``, so explicit Euler stepping with event splitting at
zero crossings integrates the dynamics exactly up to the control-switch
resolution ``h``.  Controls are re-selected at every boundary event and at
checkpoints spaced ``h`` apart; in between they are frozen.

At a boundary state the admissible polytope is intersected with the velocity
constraints that keep near-empty classes nonnegative, so any vertex the
selector picks yields a viable step.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._util import fmt, l1
from .errors import DimensionMismatch, StepTooLarge
from .model import (
    PRIORITY,
    WORK_CONSERVING,
    ControlPolytope,
    NetworkSpec,
    empty_threshold,
    enumerate_polytope_vertices,
    priority_constraints,
    work_conserving_constraints,
    boundary_configurations,
)

_EVENT_CAP = 1_000_000


def rhs(spec: NetworkSpec, u) -> np.ndarray:
    """Fluid velocity under allocation rates u: alpha - outflow @ u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.K,):
        raise DimensionMismatch(f"control has shape {u.shape}, expected ({spec.K},)")
    return spec.alpha - spec.outflow @ u


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled fluid solution.

    ``grid`` holds strictly increasing time stamps starting at 0; ``levels``
    and ``allocation`` hold the fluid level Q and cumulative allocation T at
    each stamp; ``controls`` holds the allocation rate on each inter-stamp
    interval.  ``drained_at`` is the first time the total mass stayed below
    the emptiness threshold, or None if the run never drained.
    """

    grid: np.ndarray
    levels: np.ndarray
    allocation: np.ndarray
    controls: np.ndarray
    spec: NetworkSpec | None = None
    drained_at: float | None = None

    def __post_init__(self):
        for name in ("grid", "levels", "allocation", "controls"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return int(self.levels.shape[1])

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def drained(self) -> bool:
        return self.drained_at is not None

    def level_at(self, t) -> np.ndarray:
        """Linear interpolation of Q; zero after the grid once drained."""
        return self._interp(self.levels, t)

    def allocation_at(self, t) -> np.ndarray:
        return self._interp(self.allocation, t, extend_last=True)

    def _interp(self, values, t, extend_last=False):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.K,))
        for k in range(self.K):
            out[..., k] = np.interp(t, self.grid, values[:, k])
        beyond = t > self.grid[-1]
        if np.any(beyond) and not (extend_last or self.drained):
            # holding the final value is only sound once the run drained
            # (the held state then sits below the emptiness threshold)
            raise ValueError("time beyond the sampled horizon of an undrained trajectory")
        return out

    def idle(self) -> np.ndarray:
        """Cumulative idle time per station (work-conserving) or unused
        capacity per class (priority) at every stamp."""
        if self.spec is None:
            raise ValueError("idle processes require the generating network")
        t = self.grid[:, None]
        if self.spec.discipline == WORK_CONSERVING:
            return t - self.allocation @ self.spec.constituency.T
        groups = self.spec.priority_groups
        cols = [t[:, 0] - self.allocation[:, list(g)].sum(axis=1) for g in groups]
        return np.column_stack(cols)


class ControlSelector:
    """Strategy mapping (time, state, polytope) to an admissible control."""

    name = "selector"

    def start_run(self) -> None:
        """Reset per-run state so repeated runs are reproducible."""

    def choose(self, t, q, polytope: ControlPolytope, velocities: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class FirstVertex(ControlSelector):
    """Always the lexicographically smallest vertex."""

    name = "first_vertex"

    def choose(self, t, q, polytope, velocities):
        return polytope.vertices[0]


class RandomVertex(ControlSelector):
    """Uniformly random vertex; reproducible for a fixed seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.name = f"random_vertex({self.seed})"
        self._rng = None

    def start_run(self):
        self._rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))

    def choose(self, t, q, polytope, velocities):
        if self._rng is None:
            self.start_run()
        return polytope.vertices[int(self._rng.integers(len(polytope)))]


class MaxDrain(ControlSelector):
    """Vertex minimizing d/dt of the total mass; ties to the first vertex."""

    name = "max_drain"

    def choose(self, t, q, polytope, velocities):
        totals = velocities.sum(axis=1)
        return polytope.vertices[int(np.argmin(np.round(totals, 12)))]


class MinDrain(ControlSelector):
    """Vertex maximizing d/dt of the total mass; ties to the first vertex."""

    name = "min_drain"

    def choose(self, t, q, polytope, velocities):
        totals = velocities.sum(axis=1)
        return polytope.vertices[int(np.argmax(np.round(totals, 12)))]


class FixedSequence(ControlSelector):
    """Vertex indices consumed in order, then the last index repeats.

    Indices are taken modulo the current vertex count, so the sequence is
    admissible whatever boundary configuration comes up.
    """

    def __init__(self, indices):
        self.indices = [int(i) for i in indices]
        if not self.indices:
            raise ValueError("FixedSequence needs at least one index")
        self.name = f"fixed_sequence({self.indices})"
        self._pos = 0

    def start_run(self):
        self._pos = 0

    def choose(self, t, q, polytope, velocities):
        idx = self.indices[min(self._pos, len(self.indices) - 1)]
        self._pos += 1
        return polytope.vertices[idx % len(polytope)]


def _active_sets(spec: NetworkSpec, q: np.ndarray, eps: float):
    """(empty set for the discipline, near-zero classes) at state q.

    A station is treated as empty as soon as every one of its classes is
    below the threshold; this keeps the viability-constrained polytope
    nonempty in all cases.
    """
    zero_classes = frozenset(int(k) for k in np.flatnonzero(q < eps))
    if spec.discipline == WORK_CONSERVING:
        empty = frozenset(
            j for j in range(spec.J)
            if all(k in zero_classes for k in spec.classes_at(j))
        )
    else:
        empty = zero_classes
    return empty, zero_classes


def _viable_polytope(spec: NetworkSpec, empty, zero_classes, floors, pinned=False):
    """Admissible polytope intersected with the viability half-spaces.

    For each near-zero class k the selected velocity must satisfy
    v_k >= -floors[k], i.e. (outflow @ u)_k <= alpha_k + floors[k]; a positive
    floor lets residual dust drain to exactly zero within one step.

    ``pinned`` additionally caps every velocity at zero.  It is applied when
    the whole state is below the emptiness threshold and the zero state can be
    held: growing mass from empty while capacity idles would violate the
    idling complementarity over any interval, so the only faithful directions
    at the drained state are the nonincreasing ones.
    """
    if spec.discipline == WORK_CONSERVING:
        a_eq, b_eq, a_ub, b_ub = work_conserving_constraints(spec, empty)
    else:
        a_eq, b_eq, a_ub, b_ub = priority_constraints(spec, empty)
    if zero_classes:
        idx = sorted(zero_classes)
        a_ub = np.vstack([a_ub, spec.outflow[idx]])
        b_ub = np.concatenate([b_ub, spec.alpha[idx] + np.asarray([floors[k] for k in idx])])
    if pinned:
        a_ub = np.vstack([a_ub, -spec.outflow])
        b_ub = np.concatenate([b_ub, -spec.alpha])
    verts = enumerate_polytope_vertices(spec.K, a_eq, b_eq, a_ub, b_ub)
    if verts.shape[0] == 0 and zero_classes:
        # cannot happen for a valid description (idling the near-zero classes is
        # always viable), but fall back to the raw polytope rather than crash
        if spec.discipline == WORK_CONSERVING:
            a_eq, b_eq, a_ub, b_ub = work_conserving_constraints(spec, empty)
        else:
            a_eq, b_eq, a_ub, b_ub = priority_constraints(spec, empty)
        verts = enumerate_polytope_vertices(spec.K, a_eq, b_eq, a_ub, b_ub)
    return ControlPolytope(verts, frozenset(empty), spec.discipline)


def zero_invariant(spec: NetworkSpec) -> bool:
    """True when the empty state can be held: the balancing allocation is admissible."""
    u = spec.nominal_allocation()
    if np.any(u < -1e-12):
        return False
    tol = 1 + 1e-9
    if spec.discipline == WORK_CONSERVING:
        return bool(np.all(spec.constituency @ u <= tol))
    return all(u[list(g)].sum() <= tol for g in spec.priority_groups)


def simulate(
    spec: NetworkSpec,
    x0,
    selector: ControlSelector,
    horizon: float,
    h: float,
    *,
    stop_on_drain: bool = True,
    max_events: int = _EVENT_CAP,
) -> Trajectory:
    """Integrate the closed-loop dynamics from x0.

    The selector is consulted at t=0, after every boundary event, and at
    checkpoints every ``h``.  Steps are cut at the earliest zero crossing so
    stamps land exactly on the boundary.  The run stops early once the total
    mass stays below the emptiness threshold for two consecutive stamps and
    the empty state can be held (unless ``stop_on_drain`` is False).
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.shape != (spec.K,):
        raise DimensionMismatch(f"initial state has shape {x0.shape}, expected ({spec.K},)")
    if np.any(x0 < -1e-9 * (1 + l1(x0))):
        raise ValueError(f"initial state must be nonnegative, got {x0.tolist()}")
    x0 = np.maximum(x0, 0.0)

    eps = empty_threshold(x0)
    selector.start_run()
    can_hold_zero = zero_invariant(spec)

    q = x0.copy()
    total_alloc = np.zeros(spec.K)
    t = 0.0
    grid = [0.0]
    levels = [q.copy()]
    allocation = [total_alloc.copy()]
    controls = []

    cache: dict = {}
    drained_at = None
    first_below = 0.0 if np.all(x0 < eps) else None
    below_streak = 1 if first_below is not None else 0
    events = 0
    end = horizon * (1 - 1e-15) - 1e-15

    while t < end:
        empty, zeros = _active_sets(spec, q, eps)
        pinned = can_hold_zero and len(zeros) == spec.K
        exact = all(q[k] == 0.0 for k in zeros)
        key = (empty, zeros, pinned) if exact else None
        if key is not None and key in cache:
            poly, velocities = cache[key]
        else:
            floors = {k: q[k] / h for k in zeros}
            poly = _viable_polytope(spec, empty, zeros, floors, pinned=pinned)
            velocities = poly.vertices @ (-spec.outflow.T) + spec.alpha
            if key is not None:
                cache[key] = (poly, velocities)

        u = np.asarray(selector.choose(t, q, poly, velocities), dtype=float)
        v = spec.alpha - spec.outflow @ u

        dt = min(h, horizon - t)
        crossing = []
        for k in range(spec.K):
            if v[k] < -1e-14 and q[k] > 0.0:
                t_k = q[k] / -v[k]
                if t_k < dt * (1 - 1e-12):
                    dt = t_k
                    crossing = [k]
                elif t_k <= dt * (1 + 1e-12) and crossing:
                    crossing.append(k)
        q = q + v * dt
        total_alloc = total_alloc + u * dt
        t = t + dt
        for k in crossing:
            q[k] = 0.0
        np.maximum(q, 0.0, out=q)

        grid.append(t)
        levels.append(q.copy())
        allocation.append(total_alloc.copy())
        controls.append(u)

        events += 1
        if events > max_events:
            raise StepTooLarge(f"more than {max_events} sub-steps; reduce h or horizon")

        if np.all(q < eps):
            if first_below is None:
                first_below = t
            below_streak += 1
            if below_streak >= 2 and can_hold_zero and drained_at is None:
                drained_at = first_below
                if stop_on_drain:
                    break
        else:
            first_below = None
            below_streak = 0

    return Trajectory(
        grid=np.asarray(grid),
        levels=np.asarray(levels),
        allocation=np.asarray(allocation),
        controls=np.asarray(controls) if controls else np.empty((0, spec.K)),
        spec=spec,
        drained_at=drained_at,
    )


def viability_check(spec: NetworkSpec, x) -> bool:
    """Can the state stay in the nonnegative orthant?

    True iff some convex combination of the admissible vertex velocities is
    nonnegative in every coordinate where x is (numerically) zero.  Decided by
    a small LP over the hull weights.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.K,):
        raise DimensionMismatch(f"state has shape {x.shape}, expected ({spec.K},)")
    eps = empty_threshold(x)
    zero = sorted(int(k) for k in np.flatnonzero(x < eps))
    if not zero:
        return True
    empty, _ = _active_sets(spec, x, eps)
    if spec.discipline == WORK_CONSERVING:
        a_eq, b_eq, a_ub, b_ub = work_conserving_constraints(spec, empty)
    else:
        a_eq, b_eq, a_ub, b_ub = priority_constraints(spec, empty)
    verts = enumerate_polytope_vertices(spec.K, a_eq, b_eq, a_ub, b_ub)
    if verts.shape[0] == 0:
        return False
    velocities = verts @ (-spec.outflow.T) + spec.alpha
    m = verts.shape[0]
    # maximize margin s: sum(lam * v)_k >= s on the zero set, lam a distribution
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub_lp = np.zeros((len(zero), m + 1))
    a_ub_lp[:, :m] = -velocities[:, zero].T
    a_ub_lp[:, -1] = 1.0
    a_eq_lp = np.zeros((1, m + 1))
    a_eq_lp[0, :m] = 1.0
    res = linprog(
        c,
        A_ub=a_ub_lp,
        b_ub=np.zeros(len(zero)),
        A_eq=a_eq_lp,
        b_eq=[1.0],
        bounds=[(0, None)] * m + [(None, None)],
        method="highs",
    )
    return bool(res.success and -res.fun >= -1e-9)


def flow_balance_residual(spec: NetworkSpec, traj: Trajectory) -> float:
    """Max over stamps of |Q(t) - (Q(0) + alpha t - outflow @ T(t))| in l1."""
    if traj.levels.shape[1] != spec.K:
        raise DimensionMismatch(
            f"trajectory has {traj.levels.shape[1]} classes, network has {spec.K}"
        )
    predicted = (
        traj.levels[0][None, :]
        + traj.grid[:, None] * spec.alpha[None, :]
        - traj.allocation @ spec.outflow.T
    )
    return float(np.abs(traj.levels - predicted).sum(axis=1).max())


def complementarity_residual(spec: NetworkSpec, traj: Trajectory) -> float:
    """Discrete idling-while-loaded functional, trapezoidal in the level.

    Work-conserving: sum over intervals of (C Q)^T (e - C u) dt.  Priority:
    sum over classes of the level times the growth of unused capacity at that
    class's priority level.
    """
    if traj.controls.shape[0] == 0:
        return 0.0
    dt = np.diff(traj.grid)
    q_mid = 0.5 * (traj.levels[:-1] + traj.levels[1:])
    if spec.discipline == WORK_CONSERVING:
        station_level = q_mid @ spec.constituency.T
        idle_rate = 1.0 - traj.controls @ spec.constituency.T
        return float(np.sum(station_level * idle_rate * dt[:, None]))
    total = 0.0
    for k, group in enumerate(spec.priority_groups):
        y_rate = 1.0 - traj.controls[:, list(group)].sum(axis=1)
        total += float(np.sum(q_mid[:, k] * y_rate * dt))
    return total


def lipschitz_constant(spec: NetworkSpec) -> float:
    """A priori slope bound: |alpha| + |outflow| * max vertex allocation mass.

    The max runs over the vertices of every boundary configuration; matrix
    norm is the induced l1 norm (max column sum).
    """
    u_max = 0.0
    for empty in boundary_configurations(spec):
        if spec.discipline == WORK_CONSERVING:
            a_eq, b_eq, a_ub, b_ub = work_conserving_constraints(spec, empty)
        else:
            a_eq, b_eq, a_ub, b_ub = priority_constraints(spec, empty)
        verts = enumerate_polytope_vertices(spec.K, a_eq, b_eq, a_ub, b_ub)
        if verts.shape[0]:
            u_max = max(u_max, float(np.abs(verts).sum(axis=1).max()))
    w_norm = float(np.abs(spec.outflow).sum(axis=0).max())
    return l1(spec.alpha) + w_norm * u_max


def trajectory_csv(traj: Trajectory) -> str:
    """CSV export: t, Q1..QK, T1..TK, u1..uK, 17 significant digits.

    The control columns give the rate on the interval starting at each stamp;
    the final stamp repeats the last interval's control.
    """
    k = traj.K
    header = (
        ["t"]
        + [f"Q{i + 1}" for i in range(k)]
        + [f"T{i + 1}" for i in range(k)]
        + [f"u{i + 1}" for i in range(k)]
    )
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    n = traj.grid.shape[0]
    for i in range(n):
        if traj.controls.shape[0] == 0:
            u = np.zeros(k)
        else:
            u = traj.controls[min(i, traj.controls.shape[0] - 1)]
        row = [traj.grid[i], *traj.levels[i], *traj.allocation[i], *u]
        out.write(",".join(fmt(v) for v in row) + "\n")
    return out.getvalue()


def check_trajectory(
    spec: NetworkSpec,
    traj: Trajectory,
    *,
    include_complementarity: bool = False,
    complementarity_tol: float | None = None,
) -> dict:
    """Invariant report for a trajectory against its generating network.

    Checks flow balance, nonnegativity, monotone allocation and idle
    processes.  The idling functional is only O(h) for arbitrary selectors,
    so it is reported but only enforced when explicitly requested.
    """
    scale = 1.0 + l1(traj.levels[0])
    flow = flow_balance_residual(spec, traj)
    q_min = float(traj.levels.min()) if traj.levels.size else 0.0
    alloc_steps = np.diff(traj.allocation, axis=0)
    alloc_monotone = bool(alloc_steps.size == 0 or alloc_steps.min() >= -1e-12)
    idle_steps = np.diff(traj.idle(), axis=0)
    idle_monotone = bool(idle_steps.size == 0 or idle_steps.min() >= -1e-10)
    comp = complementarity_residual(spec, traj)
    ok = (
        flow <= 1e-7 * scale
        and q_min >= -1e-9
        and alloc_monotone
        and idle_monotone
        and traj.grid[0] == 0.0
        and np.abs(traj.allocation[0]).max() <= 1e-12
        and bool(np.all(np.diff(traj.grid) > 0))
    )
    if include_complementarity:
        tol = complementarity_tol
        if tol is None:
            tol = 1e-6 * max(traj.horizon, 1e-12)
        ok = ok and comp <= tol
    return {
        "flow_balance_residual": flow,
        "min_level": q_min,
        "allocation_monotone": alloc_monotone,
        "idle_monotone": idle_monotone,
        "complementarity_residual": comp,
        "ok": ok,
    }
