"""Small shared helpers."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def pmap(func, items, threads: int = 1) -> list:
    """Order-preserving map, threaded when ``threads > 1``."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
