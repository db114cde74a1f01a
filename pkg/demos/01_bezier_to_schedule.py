"""
From a Bezier curve to per-layer scaling factors
================================================

A curve over the (layer, scale) plane is defined by a handful of control
points; sampling it yields one positional-encoding scaling factor per layer.
This is the whole parameterization trick: 4 points stand in for 30 numbers.
"""

import numpy as np

from layerscale import BezierCurve, de_casteljau, evaluate, sample_layer_scales

# a rise-then-fall curve on the 30-layer grid
curve = BezierCurve.from_pairs([(0, 1.2), (8, 1.8), (20, 1.6), (29, 1.1)])

print("control points:", curve.to_pairs())

# the two evaluation routes agree everywhere
for t in np.linspace(0, 1, 5):
    bern = evaluate(curve, t)
    cast = de_casteljau(curve, t)
    print(f"t={t:.2f}  bernstein=({bern[0]:6.3f}, {bern[1]:.4f})  "
          f"de casteljau=({cast[0]:6.3f}, {cast[1]:.4f})")

# uniform_t: slot k gets the y at t = k/(n-1)
sched_t = sample_layer_scales(curve, 30, "uniform_t")
# x_resolved: layer k gets the y where the curve crosses x = k
sched_x = sample_layer_scales(curve, 30, "x_resolved")

print("\nlayer  uniform_t  x_resolved")
for k in (0, 5, 10, 15, 20, 25, 29):
    print(f"{k:5d}  {sched_t.scales[k]:9.4f}  {sched_x.scales[k]:10.4f}")

print("\nschedule as JSON:", sched_t.to_json()[:80], "...")
