"""Discrete-event queueing simulation and fluid scaling.

The simulator realizes a multiclass queueing network with exponential or
deterministic primitives under either preemptive-resume priority service or
an equal-share head-of-line rule (a concrete work-conserving selection).
Scaled sample paths t -> Q(rt) / r are compared against fluid trajectories
from a selector ensemble to exhibit the convergence of scaled queue lengths
to fluid solutions empirically.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ._util import fmt, parallel_map
from .dynamics import FirstVertex, MaxDrain, MinDrain, RandomVertex, Trajectory, simulate
from .errors import DimensionMismatch, EventBudgetExceeded
from .model import PRIORITY, NetworkSpec

EXPONENTIAL = "exponential"
DETERMINISTIC = "deterministic"
NONE = "none"

_EVENT_CAP = 100_000_000


def _broadcast_laws(kinds, k, allowed, what):
    if isinstance(kinds, str):
        kinds = [kinds] * k
    kinds = tuple(str(x) for x in kinds)
    if len(kinds) != k:
        raise DimensionMismatch(f"{what} laws: expected {k} entries, got {len(kinds)}")
    for kind in kinds:
        if kind not in allowed:
            raise ValueError(f"unknown {what} law {kind!r}; allowed: {sorted(allowed)}")
    return kinds


@dataclass(frozen=True, eq=False)
class QueueingSpec:
    """A fluid network plus the stochastic primitives that realize it.

    Law means are tied to the network rates: interarrival mean 1/alpha_k and
    service mean 1/mu_k, so scaled sample paths target the same fluid data.
    Classes without exogenous arrivals carry the 'none' interarrival law.
    """

    network: NetworkSpec
    interarrival: tuple[str, ...]
    service: tuple[str, ...]

    def __post_init__(self):
        k = self.network.K
        inter = _broadcast_laws(
            self.interarrival, k, {EXPONENTIAL, DETERMINISTIC, NONE}, "interarrival"
        )
        serv = _broadcast_laws(self.service, k, {EXPONENTIAL, DETERMINISTIC}, "service")
        fixed = []
        for kind, rate in zip(inter, self.network.alpha):
            if rate == 0:
                fixed.append(NONE)
            elif kind == NONE:
                raise ValueError("class with positive arrival rate cannot have law 'none'")
            else:
                fixed.append(kind)
        object.__setattr__(self, "interarrival", tuple(fixed))
        object.__setattr__(self, "service", serv)

    @property
    def arrival_classes(self) -> tuple[int, ...]:
        return tuple(k for k in range(self.network.K) if self.interarrival[k] != NONE)


def queueing_spec(network: NetworkSpec, interarrival=EXPONENTIAL, service=EXPONENTIAL):
    return QueueingSpec(network, interarrival, service)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Event-stamped queue lengths (right continuous) and cumulative busy times."""

    times: np.ndarray
    counts: np.ndarray
    busy: np.ndarray

    def __post_init__(self):
        for name in ("times", "counts", "busy"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return int(self.counts.shape[1])

    def count_at(self, t, side: str = "right") -> np.ndarray:
        """Queue lengths at time t; side='left' gives the pre-jump value."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side=side) - 1
        idx = np.clip(idx, 0, len(self.times) - 1)
        return self.counts[idx]


def _service_rates(qspec: QueueingSpec, q: np.ndarray) -> np.ndarray:
    net = qspec.network
    rates = np.zeros(net.K)
    for j in range(net.J):
        classes = [k for k in net.classes_at(j) if q[k] > 0]
        if not classes:
            continue
        if net.discipline == PRIORITY:
            top = min(classes, key=lambda k: net.priority[k])
            rates[top] = 1.0
        else:
            share = 1.0 / len(classes)
            for k in classes:
                rates[k] = share
    return rates


def simulate_queueing(
    qspec: QueueingSpec,
    q0,
    horizon: float,
    seed: int,
    *,
    residual_arrivals=None,
    residual_services=None,
    max_events: int = _EVENT_CAP,
) -> SamplePath:
    """Event-driven simulation from integer queue lengths q0.

    Residual interarrival and head-of-line service times may be supplied;
    fresh draws from the laws are used otherwise.  Runs are bit-reproducible
    for a fixed seed: a single counter-based generator drives every draw in
    event order.
    """
    net = qspec.network
    q = np.asarray(q0, dtype=np.int64).copy()
    if q.shape != (net.K,):
        raise DimensionMismatch(f"initial counts have shape {q.shape}, expected ({net.K},)")
    if np.any(q < 0):
        raise ValueError("queue lengths must be nonnegative integers")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    def draw_interarrival(k: int) -> float:
        if qspec.interarrival[k] == EXPONENTIAL:
            return float(rng.exponential(1.0 / net.alpha[k]))
        return 1.0 / float(net.alpha[k])

    def draw_service(k: int) -> float:
        if qspec.service[k] == EXPONENTIAL:
            return float(rng.exponential(1.0 / net.mu[k]))
        return 1.0 / float(net.mu[k])

    next_arrival = np.full(net.K, np.inf)
    for k in qspec.arrival_classes:
        if residual_arrivals is not None and np.isfinite(residual_arrivals[k]):
            next_arrival[k] = float(residual_arrivals[k])
        else:
            next_arrival[k] = draw_interarrival(k)

    head_work = np.zeros(net.K)
    for k in range(net.K):
        if q[k] > 0:
            if residual_services is not None and residual_services[k] > 0:
                head_work[k] = float(residual_services[k])
            else:
                head_work[k] = draw_service(k)

    t = 0.0
    busy = np.zeros(net.K)
    times = [0.0]
    counts = [q.copy()]
    busies = [busy.copy()]
    route_cum = np.cumsum(net.routing, axis=1)

    events = 0
    while True:
        rates = _service_rates(qspec, q)
        # earliest event; completions beat arrivals at exact ties, low class index first
        event_t = np.inf
        event = ("end", -1)
        for k in range(net.K):
            if q[k] > 0 and rates[k] > 0:
                when = t + head_work[k] / rates[k]
                if when < event_t:
                    event_t, event = when, ("done", k)
        for k in range(net.K):
            if next_arrival[k] < event_t:
                event_t, event = next_arrival[k], ("arrive", k)
        if event_t >= horizon:
            event, event_t = ("end", -1), horizon

        dt = event_t - t
        serving = (q > 0) & (rates > 0)
        head_work[serving] -= rates[serving] * dt
        busy += rates * dt
        t = event_t

        kind, k = event
        if kind == "end":
            times.append(t)
            counts.append(q.copy())
            busies.append(busy.copy())
            break
        if kind == "done":
            head_work[k] = 0.0
            q[k] -= 1
            draw = float(rng.random())
            dest = int(np.searchsorted(route_cum[k], draw, side="right"))
            if dest < net.K:
                q[dest] += 1
                if q[dest] == 1:
                    head_work[dest] = draw_service(dest)
            if q[k] > 0:
                head_work[k] = draw_service(k)
        else:  # arrival
            q[k] += 1
            if q[k] == 1:
                head_work[k] = draw_service(k)
            next_arrival[k] = t + draw_interarrival(k)

        times.append(t)
        counts.append(q.copy())
        busies.append(busy.copy())
        events += 1
        if events > max_events:
            raise EventBudgetExceeded(f"exceeded {max_events} events")

    return SamplePath(np.asarray(times), np.asarray(counts), np.asarray(busies))


@dataclass(frozen=True, eq=False)
class ScaledPath:
    """The sample path viewed at scale r: t -> Q(r t) / r, piecewise constant."""

    path: SamplePath
    r: float

    @property
    def jumps(self) -> np.ndarray:
        return self.path.times / self.r

    def value_at(self, t, side: str = "right") -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.path.count_at(t * self.r, side=side) / self.r


def scale_path(path: SamplePath, r: float, grid=None):
    """Scaled view of a sample path; with a grid, sampled values on it."""
    if r <= 0:
        raise ValueError("scale factor must be positive")
    scaled = ScaledPath(path, float(r))
    if grid is None:
        return scaled
    return scaled.value_at(np.asarray(grid, dtype=float))


def distance_to_fluid(scaled: ScaledPath, traj: Trajectory, horizon: float):
    """(sup gap, time-mean gap) between a scaled sample path and a trajectory.

    The sup is evaluated at all fluid stamps and scaled jump times, taking
    both one-sided values at jumps, which is exact for step-versus-linear.
    """
    jumps = scaled.jumps
    pts = np.unique(
        np.concatenate(
            [
                traj.grid[traj.grid <= horizon],
                jumps[jumps <= horizon],
                [0.0, float(horizon)],
            ]
        )
    )
    fluid = traj.level_at(pts)
    right = scaled.value_at(pts, side="right")
    left = scaled.value_at(pts, side="left")
    gap_right = np.abs(right - fluid).sum(axis=1)
    gap_left = np.abs(left - fluid).sum(axis=1)
    sup = float(np.maximum(gap_right, gap_left).max())
    if len(pts) >= 2 and horizon > 0:
        mean = float(np.sum(0.5 * (gap_right[:-1] + gap_right[1:]) * np.diff(pts)) / horizon)
    else:
        mean = sup
    return sup, mean


def default_fluid_ensemble(seed: int = 42, n_random: int = 8):
    selectors = [MaxDrain(), MinDrain(), FirstVertex()]
    children = np.random.SeedSequence(seed).spawn(n_random)
    selectors.extend(RandomVertex(int(c.generate_state(1)[0]) % (2**31)) for c in children)
    return selectors


def fluid_limit_compare(
    qspec: QueueingSpec,
    spec: NetworkSpec,
    q_direction,
    r_list,
    horizon: float,
    seeds,
    *,
    h: float = 0.01,
    ensemble=None,
) -> dict:
    """Distance table between scaled sample paths and their nearest fluid path.

    For each scale r the start is round(r * q_direction) customers with fresh
    residuals; each seeded run is scaled back and compared against every
    trajectory in the selector ensemble, keeping the best match.  Rows carry
    the per-seed time-mean and sup distances.
    """
    q_direction = np.asarray(q_direction, dtype=float)
    if ensemble is None:
        ensemble = default_fluid_ensemble()
    rows = []
    aggregate = {}
    for r in r_list:
        r = float(r)
        q_int = np.round(r * q_direction).astype(np.int64)
        x0 = q_int / r
        fluid_trajs = [simulate(spec, x0, sel, horizon, h) for sel in ensemble]

        def one_seed(seed, _q=q_int, _r=r, _trajs=fluid_trajs):
            path = simulate_queueing(qspec, _q, _r * horizon, int(seed))
            scaled = ScaledPath(path, _r)
            best = min(
                (distance_to_fluid(scaled, traj, horizon) for traj in _trajs),
                key=lambda pair: pair[0],
            )
            return best

        results = parallel_map(one_seed, list(seeds))
        sups = []
        for seed, (sup, mean) in zip(seeds, results):
            rows.append({"r": r, "seed": int(seed), "mean_dist": mean, "max_dist": sup})
            sups.append(sup)
        aggregate[r] = {
            "mean_of_max": float(np.mean(sups)),
            "worst": float(np.max(sups)),
        }
    return {"rows": rows, "aggregate": aggregate}


def distance_table_csv(table: dict) -> str:
    out = io.StringIO()
    out.write("r,seed,mean_dist,max_dist\n")
    for row in table["rows"]:
        out.write(
            ",".join(
                [fmt(row["r"]), str(row["seed"]), fmt(row["mean_dist"]), fmt(row["max_dist"])]
            )
            + "\n"
        )
    return out.getvalue()


@dataclass(frozen=True, eq=False)
class _SplicedScaledPath:
    """Scaled path following ``head`` before the cut and ``tail`` after."""

    head: ScaledPath
    tail: ScaledPath
    cut: float

    @property
    def jumps(self) -> np.ndarray:
        head_jumps = self.head.jumps
        tail_jumps = self.tail.jumps + self.cut
        return np.concatenate([head_jumps[head_jumps < self.cut], tail_jumps])

    def value_at(self, t, side: str = "right") -> np.ndarray:
        t = np.asarray(t, dtype=float)
        before = t < self.cut if side == "right" else t <= self.cut
        out = np.empty(t.shape + (self.head.path.K,))
        out[before] = self.head.value_at(t[before], side=side)
        out[~before] = self.tail.value_at(t[~before] - self.cut, side=side)
        return out


def concatenation_evidence(
    qspec: QueueingSpec,
    spec: NetworkSpec,
    q_direction,
    r: float,
    horizon: float,
    seeds,
    *,
    h: float = 0.01,
    cut_frac: float = 0.5,
    ensemble=None,
) -> dict:
    """Empirical probe: do spliced scaled sample paths still look like fluid paths?

    For every seed one sample path is cut at mid-window, a fresh run restarts
    from the customer counts observed at the cut, and the spliced scaled path
    is compared against the nearest fluid trajectory; the unspliced path gives
    the baseline.  This measures evidence only; nothing is decided about the
    closure property of the scaled-limit family.
    """
    q_direction = np.asarray(q_direction, dtype=float)
    if ensemble is None:
        ensemble = default_fluid_ensemble()
    r = float(r)
    cut = cut_frac * horizon
    q_int = np.round(r * q_direction).astype(np.int64)
    x0 = q_int / r
    fluid_trajs = [simulate(spec, x0, sel, horizon, h) for sel in ensemble]
    rows = []
    for seed in seeds:
        seed = int(seed)
        base = simulate_queueing(qspec, q_int, r * horizon, seed)
        scaled = ScaledPath(base, r)
        counts_at_cut = base.count_at(np.asarray([cut * r]))[0].astype(np.int64)
        tail = simulate_queueing(qspec, counts_at_cut, r * (horizon - cut), seed + 10_000)
        spliced = _SplicedScaledPath(scaled, ScaledPath(tail, r), cut)
        base_best = min(
            distance_to_fluid(scaled, traj, horizon)[0] for traj in fluid_trajs
        )
        spliced_best = min(
            distance_to_fluid(spliced, traj, horizon)[0] for traj in fluid_trajs
        )
        rows.append(
            {"seed": seed, "cut": cut, "baseline_dist": base_best,
             "spliced_dist": spliced_best}
        )
    return {
        "rows": rows,
        "mean_baseline": float(np.mean([row["baseline_dist"] for row in rows])),
        "mean_spliced": float(np.mean([row["spliced_dist"] for row in rows])),
    }
