"""Seeded Poisson vehicle arrivals per entry link."""

from __future__ import annotations

from typing import List, Sequence

import numpy as np


def arrival_times(rates: Sequence[float], duration: float, seed: int,
                  min_headway: float) -> List[np.ndarray]:
    """Arrival instants per entry link.

    Inter-arrival gaps are exponential with mean ``3600 / rate`` and never
    shorter than ``min_headway``. Each link draws from its own child stream
    of ``seed``, so changing one rate leaves the other links unchanged.
    """
    streams = np.random.SeedSequence(seed).spawn(len(rates))
    out = []
    for rate, ss in zip(rates, streams):
        rng = np.random.default_rng(ss)
        if rate <= 0:
            out.append(np.empty(0))
            continue
        mean = 3600.0 / rate
        n = int(duration / mean * 1.5) + 20
        times = []
        t = 0.0
        while True:
            gaps = np.maximum(rng.exponential(mean, n), min_headway)
            cum = t + np.cumsum(gaps)
            keep = cum[cum < duration]
            times.append(keep)
            if len(keep) < n:
                break
            t = cum[-1]
        out.append(np.concatenate(times))
    return out
