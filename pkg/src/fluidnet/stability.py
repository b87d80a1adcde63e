"""Draining-time estimation, stability verdicts, and instability witnesses.

A network is judged stable when every sampled unit-mass start drains under
every tested selector; the verdict carries the largest observed draining
time.  It is judged unstable when some path keeps its mass at or above the
initial unit mass over the whole window.  Both verdicts are evidence over a
finite sample, not proofs; the evidence (seeds, sample counts, horizons) is
recorded in the verdict.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import l1, parallel_map, to_jsonable
from .dynamics import (
    ControlSelector,
    FirstVertex,
    MaxDrain,
    MinDrain,
    RandomVertex,
    Trajectory,
    simulate,
)
from .model import NetworkSpec

STABLE = "stable"
UNSTABLE = "unstable"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class Verdict:
    status: str
    tau: float | None = None
    witness: Trajectory | None = None
    evidence: dict = field(default_factory=dict)

    @property
    def is_stable(self) -> bool:
        return self.status == STABLE

    def to_report(self) -> dict:
        out = {"status": self.status, "tau": self.tau, "evidence": self.evidence}
        if self.witness is not None:
            out["witness"] = {
                "initial": self.witness.levels[0].tolist(),
                "final_mass": l1(self.witness.levels[-1]),
                "min_mass": float(np.abs(self.witness.levels).sum(axis=1).min()),
                "horizon": self.witness.horizon,
            }
        return to_jsonable(out)


def default_selectors() -> tuple[ControlSelector, ...]:
    return (FirstVertex(), MaxDrain(), MinDrain())


def unit_sphere_states(k: int, samples: int, seed: int) -> np.ndarray:
    """Basis vectors plus Dirichlet-uniform draws on the unit l1 simplex."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    rows = [np.eye(k)]
    if samples > 0:
        rows.append(rng.dirichlet(np.ones(k), size=samples))
    return np.vstack(rows)


def draining_time(
    spec: NetworkSpec,
    selectors: tuple[ControlSelector, ...] | None = None,
    *,
    samples: int = 16,
    horizon: float = 60.0,
    h: float = 0.01,
    seed: int = 42,
) -> Verdict:
    """Stability verdict from unit-sphere sampling.

    Stable when every (start, selector) run drains; tau is the max draining
    time observed.  Otherwise an instability witness is searched; absence of
    both gives Inconclusive.
    """
    if selectors is None:
        selectors = default_selectors()
    starts = unit_sphere_states(spec.K, samples, seed)
    jobs = [(x, sel) for x in starts for sel in selectors]
    results = parallel_map(
        lambda job: simulate(spec, job[0], job[1], horizon, h).drained_at, jobs
    )
    evidence = {
        "starts": int(starts.shape[0]),
        "selectors": [sel.name for sel in selectors],
        "horizon": horizon,
        "h": h,
        "seed": seed,
    }
    if all(d is not None for d in results):
        tau = float(max(results))
        return Verdict(STABLE, tau=tau, evidence=evidence)
    witness = instability_witness(spec, horizon=horizon, h=h, seed=seed)
    if witness is not None:
        return Verdict(UNSTABLE, witness=witness, evidence=evidence)
    evidence["undrained_runs"] = int(sum(1 for d in results if d is None))
    return Verdict(INCONCLUSIVE, evidence=evidence)


def instability_witness(
    spec: NetworkSpec,
    *,
    horizon: float = 60.0,
    h: float = 0.01,
    seed: int = 42,
    samples: int = 8,
    multistarts: int = 4,
) -> Trajectory | None:
    """Search for a unit-mass path whose mass never falls below one.

    Greedy growth-seeking selectors (slowest drain) plus random restarts run
    from basis vectors and random simplex starts; the best path by worst-case
    mass is returned when its infimum stays within 1e-6 of one.
    """
    starts = unit_sphere_states(spec.K, samples, seed)
    selectors: list[ControlSelector] = [MinDrain(), FirstVertex()]
    children = np.random.SeedSequence(seed).spawn(multistarts)
    selectors.extend(RandomVertex(int(c.generate_state(1)[0]) % (2**31)) for c in children)

    best_inf = -np.inf
    best_traj = None
    for x in starts:
        for sel in selectors:
            traj = simulate(spec, x, sel, horizon, h, stop_on_drain=True)
            if traj.drained:
                continue
            inf_mass = float(np.abs(traj.levels).sum(axis=1).min())
            if inf_mass > best_inf:
                best_inf, best_traj = inf_mass, traj
            if best_inf >= 1.0 - 1e-6:
                return best_traj
    return None


def scale_invariance_check(
    verdict: Verdict,
    spec: NetworkSpec,
    r_list,
    *,
    selector: ControlSelector | None = None,
    h: float = 0.01,
    states=None,
) -> dict:
    """Draining time from r*x must equal r times the draining time from x.

    Runs the comparison for every scale in r_list from basis starts (or the
    supplied states); tolerance is two control-switch intervals.
    """
    if not verdict.is_stable:
        raise ValueError("scale invariance check requires a stable verdict")
    if selector is None:
        selector = MaxDrain()
    if states is None:
        states = np.eye(spec.K)
    rows = []
    ok = True
    for x in np.asarray(states, dtype=float):
        horizon = 4.0 * (verdict.tau or 1.0) * max(1.0, max(float(r) for r in r_list)) + 1.0
        base = simulate(spec, x, selector, horizon, h).drained_at
        for r in r_list:
            r = float(r)
            scaled = simulate(spec, r * x, selector, horizon, h).drained_at
            row_ok = (
                base is not None
                and scaled is not None
                and abs(scaled - r * base) <= 2.0 * h * max(1.0, r)
            )
            rows.append(
                {
                    "state": x.tolist(),
                    "r": r,
                    "tau": base,
                    "tau_scaled": scaled,
                    "ok": row_ok,
                }
            )
            ok = ok and row_ok
    return {"rows": rows, "ok": ok}
