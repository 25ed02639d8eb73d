"""Worker-count control.

SPLATFORGE_THREADS caps the numba thread pool. Kernels are written so their
results are bit-identical for any worker count: parallel loops only ever
write disjoint output slots, and cross-Gaussian reductions run serially in
fixed index order.
"""

import os

import numba

# omp is present everywhere we run; the tbb probe warns on older TBBs.
numba.config.THREADING_LAYER = "omp"

_applied = None


def thread_cap():
    """Requested worker count: SPLATFORGE_THREADS, else all available."""
    raw = os.environ.get("SPLATFORGE_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"SPLATFORGE_THREADS must be an integer, got {raw!r}")
        if n < 1:
            raise ValueError(f"SPLATFORGE_THREADS must be >= 1, got {n}")
        return min(n, numba.config.NUMBA_NUM_THREADS)
    return numba.config.NUMBA_NUM_THREADS


def apply_thread_cap():
    """Apply the cap to numba's pool; called lazily before kernel launches."""
    global _applied
    cap = thread_cap()
    if cap != _applied:
        numba.set_num_threads(cap)
        _applied = cap
    return cap
