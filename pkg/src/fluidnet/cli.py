"""Command-line entry point.

Reads a network description file, dispatches one analysis command, and writes
a machine-readable JSON report plus CSV artifacts into the output directory.
Exit status: 0 on success, 2 when a stability verdict is unstable (so shell
scripts can branch on it), 1 on any error.

All randomness flows from the single --seed through counter-based child
streams, and outputs are written atomically, so rerunning a command with the
same inputs and seed reproduces every artifact byte for byte.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from ._util import atomic_write_text, to_jsonable
from .dynamics import (
    FirstVertex,
    MaxDrain,
    MinDrain,
    RandomVertex,
    check_trajectory,
    lipschitz_constant,
    simulate,
    trajectory_csv,
)
from .errors import FluidNetError, IoError, ParseError
from .fluidlimit import distance_table_csv, fluid_limit_compare, queueing_spec
from .gfn import axiom_report, network_family
from .lyapunov import (
    SearchBudget,
    approximate_V,
    check_sandwich,
    comparison_functions,
    linear_certificate_search,
)
from .skorokhod import (
    complementarity_residual,
    lipschitz_bound,
    observed_slope,
    solution_csv,
    solution_residual,
    solve_lsp,
)
from .specfile import parse_spec_file
from .stability import draining_time, unit_sphere_states

log = logging.getLogger("fluidnet")

COMMANDS = ("simulate", "stability", "lyapunov", "skorokhod", "fluidlimit", "gfn-check")


def emit_plot_data(artifact, path) -> None:
    """Write a trajectory, reflected-drift solution, or distance table as a
    plotting-ready CSV.  An empty trajectory yields a header-only file."""
    from .dynamics import Trajectory
    from .skorokhod import LspSolution

    if isinstance(artifact, Trajectory):
        text = trajectory_csv(artifact)
    elif isinstance(artifact, LspSolution):
        text = solution_csv(artifact)
    elif isinstance(artifact, dict) and "rows" in artifact:
        text = distance_table_csv(artifact)
    else:
        raise TypeError(f"cannot serialize {type(artifact)!r} as plot data")
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc

_SELECTORS = {
    "first_vertex": FirstVertex,
    "max_drain": MaxDrain,
    "min_drain": MinDrain,
}


@dataclass(frozen=True)
class RunConfig:
    input_path: str
    command: str
    out_dir: str = "out"
    seed: int = 42
    h: float = 0.01
    horizon: float = 50.0
    samples: int = 16
    depth: int = 0
    multistarts: int = 0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.h <= 0:
            raise ValueError("step must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


def _selector_from_name(name: str, seed: int):
    if name == "random_vertex":
        return RandomVertex(seed)
    try:
        return _SELECTORS[name]()
    except KeyError:
        raise ParseError(
            f"unknown selector {name!r}; choose from "
            f"{sorted(_SELECTORS) + ['random_vertex']}"
        ) from None


def _seeds_from(seed: int, n: int) -> list[int]:
    return [int(c.generate_state(1)[0]) % (2**31) for c in np.random.SeedSequence(seed).spawn(n)]


def _need_network(parsed):
    if parsed.network is None:
        raise ParseError("this command requires the network keys in the input file")
    return parsed.network


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    parsed = parse_spec_file(config.input_path)
    os.makedirs(config.out_dir, exist_ok=True)
    params = {
        "command": config.command,
        "seed": config.seed,
        "step": config.h,
        "horizon": config.horizon,
        "samples": config.samples,
        "depth": config.depth,
        "multistarts": config.multistarts,
    }
    log.info("resolved parameters: %s", params)
    report: dict = {"parameters": params}
    artifacts: dict[str, str] = {}
    status = 0

    if config.command == "simulate":
        spec = _need_network(parsed)
        sim_cfg = parsed.simulate or {}
        x0 = sim_cfg.get("x0") or (np.ones(spec.K) / spec.K).tolist()
        selector = _selector_from_name(sim_cfg.get("selector", "max_drain"), config.seed)
        traj = simulate(spec, x0, selector, config.horizon, config.h)
        artifacts["trajectory.csv"] = trajectory_csv(traj)
        report["simulate"] = {
            "x0": list(map(float, x0)),
            "selector": selector.name,
            "drained_at": traj.drained_at,
            "stamps": int(traj.grid.shape[0]),
            "final_mass": float(np.abs(traj.levels[-1]).sum()),
            "invariants": check_trajectory(spec, traj),
        }

    elif config.command == "stability":
        spec = _need_network(parsed)
        verdict = draining_time(
            spec,
            samples=config.samples,
            horizon=config.horizon,
            h=config.h,
            seed=config.seed,
        )
        report["stability"] = verdict.to_report()
        if verdict.witness is not None:
            artifacts["witness.csv"] = trajectory_csv(verdict.witness)
        if verdict.status == "unstable":
            status = 2

    elif config.command == "lyapunov":
        spec = _need_network(parsed)
        certificate = linear_certificate_search(spec)
        report["certificate"] = certificate.to_report()
        verdict = draining_time(
            spec, samples=config.samples, horizon=config.horizon,
            h=config.h, seed=config.seed,
        )
        report["stability"] = verdict.to_report()
        if verdict.is_stable:
            big_l = lipschitz_constant(spec)
            triple = comparison_functions(big_l, verdict.tau)
            family = network_family(spec, horizon=config.horizon, h=config.h)
            budget = SearchBudget(
                horizon=config.horizon, step=config.h,
                depth=config.depth, multistarts=config.multistarts, seed=config.seed,
            )
            states = unit_sphere_states(spec.K, min(config.samples, 8), config.seed)
            pairs = []
            for x in states:
                estimate = approximate_V(family, x, budget)
                if estimate.drained:
                    pairs.append((x, estimate.value))
            sandwich = check_sandwich(pairs, triple)
            sandwich.pop("rows", None)
            report["sandwich"] = sandwich
            report["lipschitz_constant"] = big_l

    elif config.command == "skorokhod":
        if parsed.skorokhod is None:
            raise ParseError("skorokhod command requires a 'skorokhod' section")
        inst = parsed.skorokhod
        sol = solve_lsp(inst, config.horizon, config.h)
        artifacts["solution.csv"] = solution_csv(sol)
        report["skorokhod"] = {
            "dimension": inst.J,
            "push_bound": inst.push_bound,
            "flow_residual": solution_residual(inst, sol),
            "complementarity_residual": complementarity_residual(sol),
            "lipschitz_bound": lipschitz_bound(inst),
            "observed_slope": observed_slope(sol),
            "final_state": sol.states[-1].tolist(),
        }

    elif config.command == "fluidlimit":
        spec = _need_network(parsed)
        qspec = parsed.queueing or queueing_spec(spec)
        cfg = parsed.fluidlimit or {}
        direction = cfg.get("direction") or (np.ones(spec.K) / spec.K).tolist()
        scales = cfg.get("scales") or [10.0, 100.0]
        seeds = _seeds_from(config.seed, min(config.samples, 10))
        table = fluid_limit_compare(
            qspec, spec, direction, scales, config.horizon, seeds, h=config.h
        )
        artifacts["distances.csv"] = distance_table_csv(table)
        report["fluidlimit"] = {
            "direction": direction,
            "scales": list(map(float, scales)),
            "seeds": seeds,
            "aggregate": {str(k): v for k, v in table["aggregate"].items()},
        }

    elif config.command == "gfn-check":
        spec = _need_network(parsed)
        report["gfn_check"] = axiom_report(
            spec,
            n_ops=max(100, config.samples * 25),
            seed=config.seed,
            horizon=min(config.horizon, 25.0),
            h=max(config.h, 0.02),
        )

    report["artifacts"] = sorted(artifacts)
    try:
        for name, text in artifacts.items():
            atomic_write_text(os.path.join(config.out_dir, name), text)
        atomic_write_text(
            os.path.join(config.out_dir, "report.json"),
            json.dumps(to_jsonable(report), indent=2, sort_keys=True) + "\n",
        )
    except OSError as exc:
        raise IoError(f"cannot write artifacts to {config.out_dir}: {exc}") from exc
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluidnet",
        description="Fluid network simulation, stability analysis, and reflected drifts.",
    )
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--input", required=True, help="network description file (YAML)")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--step", type=float, default=0.01, help="control-switch step h")
    parser.add_argument("--horizon", type=float, default=50.0)
    parser.add_argument("--samples", type=int, default=16)
    parser.add_argument("--depth", type=int, default=0)
    parser.add_argument("--multistarts", type=int, default=0)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    config = RunConfig(
        input_path=args.input,
        command=args.command,
        out_dir=args.out,
        seed=args.seed,
        h=args.step,
        horizon=args.horizon,
        samples=args.samples,
        depth=args.depth,
        multistarts=args.multistarts,
    )
    try:
        return run(config)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FluidNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
