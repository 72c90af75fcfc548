"""Seed-selection result shared by every algorithm."""

from __future__ import annotations

import hashlib
import resource
import sys
from dataclasses import dataclass, field

import numpy as np


def peak_rss_bytes() -> int:
    """Peak resident set size of this process so far."""
    # ru_maxrss survives exec on Linux, so a child would report its parent's peak
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # Linux reports KiB, macOS bytes
    return int(peak if sys.platform == "darwin" else peak * 1024)


def digest_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class SeedResult:
    """Ordered seeds (dense ids) with per-iteration gains and run metrics.

    ``delta[i]`` is the running sum of ``gains[:i+1]``.  ``spread`` is the
    algorithm's own estimate of the final spread, not an independent
    evaluation.
    """

    algorithm: str
    seeds: list[int] = field(default_factory=list)
    gains: list[float] = field(default_factory=list)
    delta: list[float] = field(default_factory=list)
    spread: float = 0.0
    exact_mg_computations: int = 0
    wall_time_s: float = 0.0
    peak_rss_bytes: int = 0
    truncated: bool = False
    extra: dict = field(default_factory=dict)
    trace: object = None

    def add(self, seed: int, gain: float) -> None:
        self.seeds.append(int(seed))
        self.gains.append(float(gain))
        self.delta.append((self.delta[-1] if self.delta else 0.0) + float(gain))

    @property
    def total(self) -> float:
        return self.delta[-1] if self.delta else 0.0
