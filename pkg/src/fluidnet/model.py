"""Network descriptions and admissible-control polytopes.

A fluid network moves mass between K classes served at J stations.  Class k
receives exogenous inflow at rate ``alpha[k]``, is drained at potential rate
``mu[k]`` while served, and a drained unit becomes class l with proportion
``routing[k, l]`` (the remainder leaves).  ``constituency[j, k] == 1`` says
class k is served at station j.

The admissible allocation rates u (one per class, u = dT/dt) form a polytope
that depends on which stations or classes are currently empty.  Polytopes are
represented by their vertex lists, enumerated exactly: problem dimensions here
are tiny, so combinatorial enumeration over active constraint subsets is both
fast and deterministic.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ._util import l1
from .errors import (
    BadPermutation,
    ConstituencyNotPartition,
    DimensionMismatch,
    DimensionTooLarge,
    InfeasibleActiveSet,
    NegativeRate,
    RoutingNotSubstochastic,
    SpectralRadiusTooLarge,
)

WORK_CONSERVING = "work_conserving"
PRIORITY = "priority"
DISCIPLINES = (WORK_CONSERVING, PRIORITY)

#: vertices must satisfy every inequality with at least this slack
VERTEX_SLACK = -1e-12


def empty_threshold(x0) -> float:
    """A class or station counts as empty below this level.

    Scales with the initial mass so that float drift on large states does not
    flip boundary decisions.
    """
    return 1e-9 * (1.0 + l1(x0))


def spectral_radius(P: np.ndarray, *, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Spectral radius by renormalized power iteration (repeated squaring).

    Tracks |P^(2^m)| in log scale, so the estimate |P^n|^(1/n) converges for
    every matrix, including nilpotent and defective routing chains where the
    plain vector iteration stalls.  Falls back to the Gershgorin row-sum
    bound if the iteration hits the cap without settling.
    """
    P = np.asarray(P, dtype=float)
    if P.shape[0] == 0:
        return 0.0
    norm = float(np.abs(P).sum(axis=0).max())
    if norm == 0.0:
        return 0.0
    b = P / norm
    log_coeff = np.log(norm)
    power = 1.0
    # 64 squarings reach |P^n|^(1/n) at n = 2^64, where the norm-vs-radius gap
    # log(poly(n))/n is far below double precision; plateaus (nilpotent chains
    # hold norm 1 for several squarings before collapsing) cannot fool a fixed
    # iteration count, so no early convergence exit is attempted.
    for _ in range(min(max_iter, 64)):
        b = b @ b
        norm = float(np.abs(b).sum(axis=0).max())
        if norm == 0.0:
            return 0.0  # nilpotent: all fluid leaves in finitely many hops
        b /= norm
        log_coeff = 2.0 * log_coeff + np.log(norm)
        power *= 2.0
    estimate = float(np.exp(log_coeff / power))
    if not np.isfinite(estimate):
        return float(P.sum(axis=1).max())
    return estimate


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Validated, immutable description of a fluid network.

    Construct through :func:`validate`; the constructor itself performs no
    checking.  ``priority`` holds one rank per class (lower rank = served
    first); it is None for work-conserving networks.
    """

    alpha: np.ndarray
    mu: np.ndarray
    routing: np.ndarray
    constituency: np.ndarray
    discipline: str
    priority: tuple[int, ...] | None = None
    # derived, filled in __post_init__
    outflow: np.ndarray = field(init=False, repr=False)
    station_of: np.ndarray = field(init=False, repr=False)
    priority_groups: tuple[tuple[int, ...], ...] | None = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _readonly(self.alpha))
        object.__setattr__(self, "mu", _readonly(self.mu))
        object.__setattr__(self, "routing", _readonly(self.routing))
        object.__setattr__(self, "constituency", _readonly(self.constituency))
        k = self.alpha.shape[0]
        w = (np.eye(k) - self.routing.T) @ np.diag(self.mu)
        object.__setattr__(self, "outflow", _readonly(w))
        object.__setattr__(
            self, "station_of", np.argmax(self.constituency, axis=0).astype(int)
        )
        groups = None
        if self.priority is not None:
            rank = self.priority
            groups = tuple(
                tuple(
                    l
                    for l in range(k)
                    if self.station_of[l] == self.station_of[m] and rank[l] <= rank[m]
                )
                for m in range(k)
            )
        object.__setattr__(self, "priority_groups", groups)

    @property
    def K(self) -> int:
        return int(self.alpha.shape[0])

    @property
    def J(self) -> int:
        return int(self.constituency.shape[0])

    def classes_at(self, station: int) -> tuple[int, ...]:
        return tuple(np.flatnonzero(self.constituency[station]).tolist())

    def nominal_allocation(self) -> np.ndarray:
        """Allocation rates that balance inflow exactly: solves outflow @ u = alpha."""
        return np.linalg.solve(self.outflow, self.alpha)

    def traffic_intensity(self) -> np.ndarray:
        """Per-station nominal load: constituency @ nominal_allocation."""
        return self.constituency @ self.nominal_allocation()


def validate(alpha, mu, routing, constituency, discipline, priority=None) -> NetworkSpec:
    """Check a raw network description and return an immutable spec.

    Raises the specific error type for each failure mode: NegativeRate,
    ConstituencyNotPartition, RoutingNotSubstochastic, SpectralRadiusTooLarge,
    BadPermutation, DimensionMismatch.
    """
    alpha = np.asarray(alpha, dtype=float)
    mu = np.asarray(mu, dtype=float)
    routing = np.asarray(routing, dtype=float)
    constituency = np.asarray(constituency, dtype=float)

    if alpha.ndim != 1 or mu.ndim != 1 or routing.ndim != 2 or constituency.ndim != 2:
        raise DimensionMismatch("alpha, mu must be vectors; routing, constituency matrices")
    k = alpha.shape[0]
    if mu.shape != (k,) or routing.shape != (k, k) or constituency.shape[1] != k:
        raise DimensionMismatch(
            f"inconsistent shapes for K={k}: mu {mu.shape}, routing {routing.shape}, "
            f"constituency {constituency.shape}"
        )
    if np.any(alpha < 0):
        raise NegativeRate(f"negative arrival rate: alpha={alpha.tolist()}")
    if np.any(mu <= 0):
        raise NegativeRate(f"service rates must be strictly positive: mu={mu.tolist()}")

    if not np.all((constituency == 0) | (constituency == 1)):
        raise ConstituencyNotPartition("constituency entries must be 0 or 1")
    if not np.all(constituency.sum(axis=0) == 1):
        raise ConstituencyNotPartition("every class must be served at exactly one station")
    if not np.all(constituency.sum(axis=1) >= 1):
        raise ConstituencyNotPartition("every station must serve at least one class")

    if np.any(routing < 0):
        raise RoutingNotSubstochastic("routing proportions must be nonnegative")
    if np.any(routing.sum(axis=1) > 1 + 1e-12):
        raise RoutingNotSubstochastic("routing row sums must not exceed one")
    rho = spectral_radius(routing)
    if rho >= 1 - 1e-12:
        raise SpectralRadiusTooLarge(f"routing spectral radius {rho:.12g} >= 1")

    if discipline not in DISCIPLINES:
        raise ValueError(f"unknown discipline {discipline!r}; expected one of {DISCIPLINES}")
    ranks = None
    if discipline == PRIORITY:
        if priority is None:
            raise BadPermutation("priority discipline requires a priority permutation")
        ranks = tuple(int(p) for p in priority)
        if sorted(ranks) != list(range(k)):
            raise BadPermutation(f"priority ranks must be a permutation of 0..{k - 1}")
    elif priority is not None:
        raise BadPermutation("priority order given for a work-conserving network")

    return NetworkSpec(alpha, mu, routing, constituency, discipline, ranks)


# ---------------------------------------------------------------------------
# polytopes


@dataclass(frozen=True, eq=False)
class ControlPolytope:
    """Vertex representation of an admissible allocation-rate set.

    ``vertices`` has one row per vertex, rows sorted lexicographically;
    ``active_set`` records the boundary configuration that produced it
    (empty stations for work-conserving, empty classes for priority).
    """

    vertices: np.ndarray
    active_set: frozenset
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(self.vertices))

    @property
    def dimension(self) -> int:
        return int(self.vertices.shape[1])

    def __len__(self) -> int:
        return int(self.vertices.shape[0])

    def contains(self, u, tol: float = 1e-10) -> bool:
        """Membership in the convex hull of the vertices, decided by LP."""
        u = np.asarray(u, dtype=float)
        verts = self.vertices
        m, dim = verts.shape
        if u.shape != (dim,):
            raise DimensionMismatch(f"point has shape {u.shape}, polytope dimension {dim}")
        # minimize t subject to |V^T lam - u| <= t, sum lam = 1, lam >= 0
        c = np.zeros(m + 1)
        c[-1] = 1.0
        a_ub = np.zeros((2 * dim, m + 1))
        a_ub[:dim, :m] = verts.T
        a_ub[dim:, :m] = -verts.T
        a_ub[:, -1] = -1.0
        b_ub = np.concatenate([u, -u])
        a_eq = np.zeros((1, m + 1))
        a_eq[0, :m] = 1.0
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                      bounds=[(0, None)] * m + [(0, None)], method="highs")
        return bool(res.success and res.fun <= tol)


def enumerate_polytope_vertices(dim, a_eq, b_eq, a_ub, b_ub) -> np.ndarray:
    """Exact vertex enumeration for a small polytope.

    A vertex makes some subset of the inequality rows active so that, stacked
    with the equalities, the active system has rank ``dim``.  All subsets of
    the right size are tried; candidates are kept when they satisfy every
    constraint with slack >= VERTEX_SLACK.  Output rows are deduplicated and
    sorted lexicographically, which fixes a reproducible vertex order.
    """
    a_eq = np.asarray(a_eq, dtype=float).reshape(-1, dim)
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    a_ub = np.asarray(a_ub, dtype=float).reshape(-1, dim)
    b_ub = np.asarray(b_ub, dtype=float).reshape(-1)

    rank_eq = np.linalg.matrix_rank(a_eq) if a_eq.size else 0
    n_active = dim - rank_eq
    if n_active < 0:
        return np.empty((0, dim))

    found = {}
    for subset in itertools.combinations(range(a_ub.shape[0]), n_active):
        mat = np.vstack([a_eq, a_ub[list(subset)]]) if a_eq.size else a_ub[list(subset)]
        rhs = np.concatenate([b_eq, b_ub[list(subset)]]) if a_eq.size else b_ub[list(subset)]
        if mat.shape[0] == 0:
            continue
        if np.linalg.matrix_rank(mat) < dim:
            continue
        if mat.shape[0] == dim:
            try:
                x = np.linalg.solve(mat, rhs)
            except np.linalg.LinAlgError:
                continue
        else:
            x, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
        if l1(mat @ x - rhs) > 1e-9 * (1.0 + l1(rhs)):
            continue  # active set inconsistent
        x[np.abs(x) < 1e-13] = 0.0
        if a_ub.size and np.min(b_ub - a_ub @ x) < VERTEX_SLACK:
            continue
        if a_eq.size and l1(a_eq @ x - b_eq) > 1e-9 * (1.0 + l1(b_eq)):
            continue
        found[tuple(np.round(x, 12))] = x
    if not found:
        return np.empty((0, dim))
    return np.array(sorted(found.values(), key=tuple))


def work_conserving_constraints(spec: NetworkSpec, empty_stations):
    """Constraint system of the admissible set for the given empty stations.

    Busy stations must allocate at full rate (equality); empty stations may
    idle (inequality); allocations are nonnegative.
    """
    empty = frozenset(int(j) for j in empty_stations)
    for j in empty:
        if not 0 <= j < spec.J:
            raise DimensionMismatch(f"station index {j} out of range for J={spec.J}")
    c = spec.constituency
    busy = [j for j in range(spec.J) if j not in empty]
    a_eq = c[busy] if busy else np.empty((0, spec.K))
    b_eq = np.ones(len(busy))
    rows = [-np.eye(spec.K)]
    rhs = [np.zeros(spec.K)]
    if empty:
        idx = sorted(empty)
        rows.append(c[idx])
        rhs.append(np.ones(len(idx)))
    return a_eq, b_eq, np.vstack(rows), np.concatenate(rhs)


def priority_constraints(spec: NetworkSpec, empty_classes):
    """Constraint system under a priority discipline for the given empty classes.

    For a nonempty class k the capacity at or above k's priority level is
    fully used (equality over its priority group); for an empty class the
    group sum is only bounded by one.
    """
    if spec.priority_groups is None:
        raise ValueError("priority constraints require a priority discipline")
    empty = frozenset(int(k) for k in empty_classes)
    for k in empty:
        if not 0 <= k < spec.K:
            raise DimensionMismatch(f"class index {k} out of range for K={spec.K}")
    k_n = spec.K
    indicators = np.zeros((k_n, k_n))
    for k, group in enumerate(spec.priority_groups):
        indicators[k, list(group)] = 1.0
    busy = [k for k in range(k_n) if k not in empty]
    a_eq = indicators[busy] if busy else np.empty((0, k_n))
    b_eq = np.ones(len(busy))
    rows = [-np.eye(k_n)]
    rhs = [np.zeros(k_n)]
    if empty:
        idx = sorted(empty)
        rows.append(indicators[idx])
        rhs.append(np.ones(len(idx)))
    return a_eq, b_eq, np.vstack(rows), np.concatenate(rhs)


def work_conserving_polytope(spec: NetworkSpec, empty_stations=()) -> ControlPolytope:
    """Admissible allocation rates when the given stations are empty."""
    if spec.discipline != WORK_CONSERVING:
        raise ValueError("work_conserving_polytope requires a work-conserving network")
    a_eq, b_eq, a_ub, b_ub = work_conserving_constraints(spec, empty_stations)
    verts = enumerate_polytope_vertices(spec.K, a_eq, b_eq, a_ub, b_ub)
    if verts.shape[0] == 0:
        raise InfeasibleActiveSet(
            f"no admissible allocation with empty stations {sorted(empty_stations)}"
        )
    return ControlPolytope(verts, frozenset(int(j) for j in empty_stations), WORK_CONSERVING)


def priority_polytope(spec: NetworkSpec, empty_classes=()) -> ControlPolytope:
    """Admissible allocation rates when the given classes are empty."""
    if spec.discipline != PRIORITY:
        raise ValueError("priority_polytope requires a priority network")
    a_eq, b_eq, a_ub, b_ub = priority_constraints(spec, empty_classes)
    verts = enumerate_polytope_vertices(spec.K, a_eq, b_eq, a_ub, b_ub)
    if verts.shape[0] == 0:
        raise InfeasibleActiveSet(
            f"no admissible allocation with empty classes {sorted(empty_classes)}"
        )
    return ControlPolytope(verts, frozenset(int(k) for k in empty_classes), PRIORITY)


def boundary_configurations(spec: NetworkSpec, *, max_size: int = 16):
    """All boundary configurations relevant to drift checks.

    Yields every proper subset of stations (work-conserving) or classes
    (priority) as a candidate empty set: properness means some class can hold
    fluid, so the configuration is realized by a nonzero state.
    """
    n = spec.J if spec.discipline == WORK_CONSERVING else spec.K
    if n > max_size:
        raise DimensionTooLarge(f"{2 ** n} boundary configurations exceeds cap 2^{max_size}")
    items = range(n)
    for size in range(n):
        yield from (frozenset(c) for c in itertools.combinations(items, size))
