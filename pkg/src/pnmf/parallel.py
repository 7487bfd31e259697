"""Deterministic thread fan-out.

Work items write into caller-owned slots keyed by index, and every
stochastic item draws from its own keyed stream, so results are
byte-identical at any worker count.
"""

from concurrent.futures import ThreadPoolExecutor


def thread_map(fn, n_items: int, threads: int):
    """Run fn(i) for i in range(n_items), possibly across threads.

    ``fn`` must only write to per-index state.  Returns nothing; the
    caller collects results from the slots it handed to ``fn``.
    """
    threads = max(1, int(threads))
    if threads == 1 or n_items <= 1:
        for i in range(n_items):
            fn(i)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, range(n_items)))
