"""Closing a loop and climbing a grade.

Runs the full pipeline over a 40 m landmark loop and a street that starts
climbing at 5% halfway along, then reports the position error metrics.
The loop should come home within a few centimetres. On the grade the
height estimate runs a little ahead of the truth because each step uses
the pitch measured at its end.
"""
from hullodom import Odometer, Trajectory, dataio, eval_ae_sd_pete

for name, spec in [("loop", dataio.landmark_loop()), ("grade", dataio.graded_street())]:
    seq = dataio.gen_synthetic_sequence(spec, seed=0)
    odo = Odometer()
    est = Trajectory(odo.process(f).pose for f in seq.frames)
    ae, sd, pete = eval_ae_sd_pete(est, seq.trajectory)
    line = f"{name:5s}  frames {len(est):3d}  AE {ae:.3f} m  SD {sd:.3f} m  final error {pete:.3f} m"
    if name == "grade":
        line += f"  climb est {est[-1].z:.3f} m vs true {seq.trajectory[-1].z:.3f} m"
    print(line)
