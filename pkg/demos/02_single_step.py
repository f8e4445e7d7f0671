"""One frame-to-frame step, opened up.

Renders two scans of a small synthetic street, runs the odometer on them
and shows the matched landmarks, the layer picked for each, and how the
coordinate search closed in on the motion.
"""
import math

from hullodom import Odometer, dataio
from hullodom.core import PoseState

landmarks = [
    dataio.sedan((8, -3.5), yaw=0.05),
    dataio.sedan((-6, 3.5), yaw=math.pi),
    dataio.box((3, 7), 4, 2, 3, yaw=0.3),
    dataio.cylinder((-3, -6), 0.6, 4),
]
truth = [PoseState(), PoseState(0.9, 0.05, 0, math.radians(1.5), 0, 1)]
seq = dataio.gen_synthetic_sequence(dataio.SceneSpec(landmarks, truth, noise_sigma=0.01), seed=1)

odo = Odometer()
odo.process(seq.frames[0])
res = odo.process(seq.frames[1])

print(f"matched clusters {res.n_matches}, usable hull pairs {res.n_pairs}, layers {res.layers}")
for p in res.pairs:
    print(f"  pair {p.landmark_id}: {p.layer:5s} layer, score {p.sim_value:.4f}")
s = res.search
print(f"search: {s.rounds} rounds, {s.evaluations} cost evaluations, converged={s.converged}")
print(f"estimate dx={res.delta.dx:.4f} dy={res.delta.dy:.4f} dtheta={math.degrees(res.delta.dtheta):.3f} deg")
print(f"truth    dx=0.9000 dy=0.0500 dtheta=1.500 deg")
