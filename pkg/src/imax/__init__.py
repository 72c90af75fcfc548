"""Influence maximization with residual-capacity lazy greedy (RCELF) and baselines."""

import os

# numba reads these at import; the CLI may still adjust the thread count first
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
