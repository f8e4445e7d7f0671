"""Adaptive against fixed step sizes in the coordinate search.

The adaptive search scales each probe by how much hull overlap is still
missing, so it takes big steps far from the answer and small ones close
to it. This demo replays the hull pairs of a parked-car street through
both searches from a cold start and compares time and final overlap.
"""
import time

from hullodom import Odometer, OptimizerConfig, dataio
from hullodom.core import PoseDelta2D
from hullodom.odometry import coordinate_search

seq = dataio.gen_synthetic_sequence(dataio.parked_street(seed=3), seed=3)
odo = Odometer()
steps = [r.pairs for r in map(odo.process, seq.frames) if r.pairs]

for mode in ("adaptive", "fixed"):
    cfg = OptimizerConfig(step_mode=mode)
    t = time.perf_counter()
    results = [coordinate_search(pairs, PoseDelta2D(), cfg) for pairs in steps]
    dt = time.perf_counter() - t
    evals = sum(r.evaluations for r in results)
    cost = sum(r.cost for r in results)
    print(f"{mode:8s}  {dt * 1000:7.1f} ms  {evals:6d} evaluations  total overlap {cost:.4f}")
