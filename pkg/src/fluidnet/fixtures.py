"""Built-in example networks and reflected-drift instances used in tests,
documentation, and the command line."""
from __future__ import annotations

import numpy as np

from .fluidlimit import DETERMINISTIC, EXPONENTIAL, QueueingSpec
from .model import PRIORITY, WORK_CONSERVING, NetworkSpec, validate
from .skorokhod import LspInstance


def single_queue(alpha: float = 0.5, mu: float = 1.0) -> NetworkSpec:
    """One class, one station, no routing."""
    return validate([alpha], [mu], [[0.0]], [[1]], WORK_CONSERVING)


def overloaded_queue(alpha: float = 2.0, mu: float = 1.0) -> NetworkSpec:
    return single_queue(alpha, mu)


def tandem(alpha: float = 1.0, mu=(2.0, 3.0)) -> NetworkSpec:
    """Two stations in series; all inflow enters the first class."""
    return validate(
        [alpha, 0.0], list(mu), [[0.0, 1.0], [0.0, 0.0]], [[1, 0], [0, 1]], WORK_CONSERVING
    )


def two_station_work_conserving() -> NetworkSpec:
    """Three classes on two stations; the first station splits its effort.

    Classes 0 and 2 share station 0; class 1 sits alone on station 1; flow
    runs 0 -> 1 -> 2 -> out.  Loads are light, the network is stable.
    """
    return validate(
        [0.3, 0.0, 0.0],
        [1.5, 1.0, 2.0],
        [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]],
        [[1, 0, 1], [0, 1, 0]],
        WORK_CONSERVING,
    )


def two_class_priority(alpha=(0.3, 0.2), mu=(2.0, 1.5)) -> NetworkSpec:
    """Two classes at one station, class 0 served first; light load."""
    return validate(
        list(alpha), list(mu), np.zeros((2, 2)), [[1, 1]], PRIORITY, priority=(0, 1)
    )


def reentrant_line(alpha: float = 0.2, mu=(1.0, 1.2, 1.5)) -> NetworkSpec:
    """Three steps over two stations: 0 (station 0) -> 1 (station 1) -> 2 (station 0)."""
    return validate(
        [alpha, 0.0, 0.0],
        list(mu),
        [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]],
        [[1, 0, 1], [0, 1, 0]],
        WORK_CONSERVING,
    )


def lu_kumar(arrival: float = 1.0, means=(0.1, 0.6, 0.1, 0.6)) -> NetworkSpec:
    """The classic four-class reentrant priority network.

    Route 0 -> 1 -> 2 -> 3 -> out; station 0 serves classes {0, 3} and
    station 1 serves {1, 2}; the exit-side classes 3 and 1 get priority.
    With the default means both station loads are 0.7, yet the mass of the
    fluid model grows without bound.
    """
    means = np.asarray(means, dtype=float)
    mu = 1.0 / means
    routing = np.zeros((4, 4))
    routing[0, 1] = routing[1, 2] = routing[2, 3] = 1.0
    constituency = [[1, 0, 0, 1], [0, 1, 1, 0]]
    # ranks: class 3 before class 0 at station 0, class 1 before class 2 at station 1
    priority = (1, 2, 3, 0)
    return validate([arrival, 0, 0, 0], mu, routing, constituency, PRIORITY, priority=priority)


def stable_fixture_set() -> dict[str, NetworkSpec]:
    """The five stable networks exercised by the verification suite."""
    return {
        "single_queue": single_queue(),
        "tandem": tandem(),
        "two_station_work_conserving": two_station_work_conserving(),
        "two_class_priority": two_class_priority(),
        "reentrant_line": reentrant_line(),
    }


# ---------------------------------------------------------------------------
# reflected-drift instances


def lsp_one_dimensional(theta: float = -1.0, z0: float = 1.0) -> LspInstance:
    return LspInstance([theta], [[1.0]], [z0])


def lsp_decoupled(theta=(-1.0, -2.0), z0=(1.0, 1.0)) -> LspInstance:
    return LspInstance(list(theta), np.eye(2), list(z0))


def lsp_chattering() -> LspInstance:
    """A coupled instance whose minimal-push selection chatters at the boundary.

    Pushing the cheap second component lifts it off the boundary while the
    first slides, and the drift pulls it straight back, so the discrete
    complementarity residual scales linearly with the step size.
    """
    return LspInstance([-1.0, -0.2], [[0.1, 0.8], [-0.5, 1.0]], [1.0, 0.5])


# ---------------------------------------------------------------------------
# queueing variants


def queueing_single_deterministic(mu: float = 1.0) -> QueueingSpec:
    """No arrivals, deterministic unit service: an exact staircase drain."""
    # a tiny positive arrival rate is not used: alpha stays zero, law 'none'
    net = single_queue(alpha=0.0, mu=mu)
    return QueueingSpec(net, "none", DETERMINISTIC)


def queueing_two_class_priority() -> QueueingSpec:
    """Exponential primitives over the stable two-class priority network."""
    return QueueingSpec(two_class_priority(), EXPONENTIAL, EXPONENTIAL)
