"""Self-describing network description files.

A description file is a YAML key-value tree.  Core network keys::

    classes: 2                 # number of classes K
    stations: 2                # number of stations J
    alpha: [1.0, 0.0]          # exogenous inflow rate per class
    mu: [2.0, 3.0]             # potential outflow rate per class
    routing:                   # K x K proportions, row-major
      - [0.0, 1.0]
      - [0.0, 0.0]
    constituency:              # J x K, one station per class
      - [1, 0]
      - [0, 1]
    discipline: work_conserving   # or: priority
    priority_order: [0, 1]     # only for priority: classes, highest first

Classes and stations are indexed from zero everywhere.  Optional sections
``skorokhod`` (theta, reflection, z0, push_bound), ``queueing`` (interarrival,
service), ``simulate`` (x0, selector) and ``fluidlimit`` (direction, scales)
configure the matching commands.  Unknown keys are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ParseError
from .fluidlimit import QueueingSpec
from .model import PRIORITY, NetworkSpec, validate
from .skorokhod import LspInstance

_NETWORK_KEYS = {
    "classes",
    "stations",
    "alpha",
    "mu",
    "routing",
    "constituency",
    "discipline",
    "priority_order",
}
_SECTION_KEYS = {"skorokhod", "queueing", "simulate", "fluidlimit"}

_SKOROKHOD_KEYS = {"theta", "reflection", "z0", "push_bound"}
_QUEUEING_KEYS = {"interarrival", "service"}
_SIMULATE_KEYS = {"x0", "selector"}
_FLUIDLIMIT_KEYS = {"direction", "scales"}


@dataclass(frozen=True, eq=False)
class ParsedSpecFile:
    network: NetworkSpec | None
    skorokhod: LspInstance | None
    queueing: QueueingSpec | None
    simulate: dict | None
    fluidlimit: dict | None


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ParseError(f"unknown key {unknown[0]!r} in {where}")


def _require(mapping: dict, keys, where: str) -> None:
    missing = sorted(k for k in keys if k not in mapping)
    if missing:
        raise ParseError(f"missing key {missing[0]!r} in {where}")


def _parse_network(doc: dict) -> NetworkSpec | None:
    present = _NETWORK_KEYS & set(doc)
    if not present:
        return None
    required = {"classes", "stations", "alpha", "mu", "routing", "constituency", "discipline"}
    _require(doc, required, "network description")
    k = int(doc["classes"])
    j = int(doc["stations"])
    discipline = str(doc["discipline"])
    priority = None
    if discipline == PRIORITY:
        _require(doc, {"priority_order"}, "priority network description")
        order = [int(c) for c in doc["priority_order"]]
        if sorted(order) != list(range(k)):
            raise ParseError(f"priority_order must list every class exactly once, got {order}")
        ranks = [0] * k
        for rank, cls in enumerate(order):
            ranks[cls] = rank
        priority = tuple(ranks)
    elif "priority_order" in doc:
        raise ParseError("priority_order is only valid with the priority discipline")

    alpha = np.asarray(doc["alpha"], dtype=float)
    mu = np.asarray(doc["mu"], dtype=float)
    routing = np.asarray(doc["routing"], dtype=float)
    constituency = np.asarray(doc["constituency"], dtype=float)
    if alpha.shape != (k,) or mu.shape != (k,):
        raise ParseError(f"alpha and mu must have {k} entries")
    if routing.shape != (k, k):
        raise ParseError(f"routing must be {k}x{k}, got {routing.shape}")
    if constituency.shape != (j, k):
        raise ParseError(f"constituency must be {j}x{k}, got {constituency.shape}")
    return validate(alpha, mu, routing, constituency, discipline, priority)


def _parse_skorokhod(section) -> LspInstance:
    if not isinstance(section, dict):
        raise ParseError("skorokhod section must be a mapping")
    _reject_unknown(section, _SKOROKHOD_KEYS, "skorokhod section")
    _require(section, {"theta", "reflection", "z0"}, "skorokhod section")
    return LspInstance(
        np.asarray(section["theta"], dtype=float),
        np.asarray(section["reflection"], dtype=float),
        np.asarray(section["z0"], dtype=float),
        push_bound=float(section["push_bound"]) if "push_bound" in section else None,
    )


def parse_spec_text(text: str) -> ParsedSpecFile:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ParseError(
            f"invalid YAML: {exc.problem}",
            line=None if mark is None else mark.line + 1,
            column=None if mark is None else mark.column + 1,
        ) from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from exc
    if doc is None:
        raise ParseError("empty description file")
    if not isinstance(doc, dict):
        raise ParseError("description file must be a key-value mapping")
    _reject_unknown(doc, _NETWORK_KEYS | _SECTION_KEYS, "description file")

    network = _parse_network(doc)

    lsp = None
    if "skorokhod" in doc:
        lsp = _parse_skorokhod(doc["skorokhod"])

    queueing = None
    if "queueing" in doc:
        section = doc["queueing"]
        if not isinstance(section, dict):
            raise ParseError("queueing section must be a mapping")
        _reject_unknown(section, _QUEUEING_KEYS, "queueing section")
        if network is None:
            raise ParseError("queueing section requires the network keys")
        queueing = QueueingSpec(
            network,
            section.get("interarrival", "exponential"),
            section.get("service", "exponential"),
        )

    simulate_cfg = None
    if "simulate" in doc:
        section = doc["simulate"]
        if not isinstance(section, dict):
            raise ParseError("simulate section must be a mapping")
        _reject_unknown(section, _SIMULATE_KEYS, "simulate section")
        simulate_cfg = {
            "x0": [float(v) for v in section["x0"]] if "x0" in section else None,
            "selector": str(section.get("selector", "max_drain")),
        }

    fluidlimit_cfg = None
    if "fluidlimit" in doc:
        section = doc["fluidlimit"]
        if not isinstance(section, dict):
            raise ParseError("fluidlimit section must be a mapping")
        _reject_unknown(section, _FLUIDLIMIT_KEYS, "fluidlimit section")
        fluidlimit_cfg = {
            "direction": [float(v) for v in section.get("direction", [])] or None,
            "scales": [float(v) for v in section.get("scales", [])] or None,
        }

    return ParsedSpecFile(network, lsp, queueing, simulate_cfg, fluidlimit_cfg)


def parse_spec_file(path) -> ParsedSpecFile:
    try:
        with open(path, "r") as handle:
            text = handle.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_spec_text(text)


def network_to_dict(spec: NetworkSpec) -> dict:
    """Round-trippable plain mapping for a network description."""
    doc = {
        "classes": spec.K,
        "stations": spec.J,
        "alpha": spec.alpha.tolist(),
        "mu": spec.mu.tolist(),
        "routing": spec.routing.tolist(),
        "constituency": [[int(v) for v in row] for row in spec.constituency],
        "discipline": spec.discipline,
    }
    if spec.priority is not None:
        order = sorted(range(spec.K), key=lambda k: spec.priority[k])
        doc["priority_order"] = order
    return doc


def network_to_yaml(spec: NetworkSpec) -> str:
    return yaml.safe_dump(network_to_dict(spec), sort_keys=False)
