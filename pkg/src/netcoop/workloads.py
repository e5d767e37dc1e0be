"""Random single-intersection scheduling instances for solver tests and benchmarks.

Minimal arrival times are multiples of 1/16 s.  With the default gaps and
weights every forward-pass sum is then exact in binary floating point, so
two orders of equal true cost report bit-identical objectives.
"""

from __future__ import annotations

import numpy as np

from .network import single
from .scheduling import AREA, SEGMENT, Crossing, SafetyGaps, SchedulingInstance, SchedVehicle


def random_instance(rng: np.random.Generator, n: int, horizon: float = 12.0, lanes: int = 1,
                    segment_share: float = 0.3, gaps: SafetyGaps = SafetyGaps()) -> SchedulingInstance:
    node = single(lanes=lanes).intersection(1)
    moves = node.movements
    vehicles = []
    for vid in range(n):
        m = moves[int(rng.integers(len(moves)))]
        t_min = int(rng.integers(0, int(horizon * 16) + 1)) / 16.0
        zone = SEGMENT if rng.random() < segment_share else AREA
        vehicles.append(SchedVehicle(vid, (Crossing(1, m.lane_key, m.id, t_min),), zone))
    return SchedulingInstance(tuple(vehicles), {1: node.conflicts}, gaps, scope=1)
