import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "ORBITAL_HEAT_THREADS"


def thread_count(requested=None) -> int:
    """Resolve a worker count: explicit request, else env cap, else CPUs."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(ENV_THREADS)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def ordered_map(fn, items, threads=None):
    """Map preserving input order; results are identical for any thread count."""
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def chunk_bounds(n: int, size: int = 8192):
    """Contiguous chunks of range(n); boundaries never depend on thread count."""
    return [(i, min(n, i + size)) for i in range(0, n, size)]
