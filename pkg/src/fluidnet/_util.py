"""Small shared helpers: norms, RNG spawning, bounded parallel map, atomic IO."""
from __future__ import annotations

import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "FLUIDNET_THREADS"


def l1(x) -> float:
    """The l1 norm used throughout: sum of absolute component values."""
    return float(np.abs(np.asarray(x, dtype=float)).sum())


def rng_from(seed: int) -> np.random.Generator:
    """Counter-based generator so spawned streams are independent and reproducible."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent child generators derived from one top-level seed."""
    return [np.random.Generator(np.random.Philox(c))
            for c in np.random.SeedSequence(seed).spawn(n)]


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map preserving input order; worker count capped by FLUIDNET_THREADS."""
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def atomic_write_text(path, text: str) -> None:
    """Write-temp-rename so readers never observe a partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-fluidnet-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value: float) -> str:
    """17 significant digits: enough to round-trip a double exactly."""
    return f"{float(value):.17g}"


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts the object."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, frozenset):
        return sorted(to_jsonable(v) for v in obj)
    return obj
