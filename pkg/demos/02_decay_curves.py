"""
Long-range decay and what position scaling does to it
=====================================================

Rotary attention scores between a probe and itself fall off with relative
distance. Dividing positions by a scale factor s > 1 compresses relative
distances, so the decay envelope at scale 1.5 sits above the unscaled one:
distant (middle-of-context) tokens keep more score mass.
"""

import numpy as np

from layerscale import RotaryConfig, decay_curve

MAX_DIST = 4096

curves = {}
for scale in (1.0, 1.5, 2.0):
    cfg = RotaryConfig(head_dim=64, base=10000.0, scale=scale)
    curves[scale] = decay_curve(cfg, MAX_DIST)

print("distance   env s=1.0   env s=1.5   env s=2.0")
for d in (0, 64, 128, 256, 512, 1024, 2048, 4096):
    row = [curves[s].envelope[d] for s in (1.0, 1.5, 2.0)]
    print(f"{d:8d}   {row[0]:9.2f}   {row[1]:9.2f}   {row[2]:9.2f}")

e10 = np.array(curves[1.0].envelope)
e15 = np.array(curves[1.5].envelope)
print("\nscale 1.5 envelope dominates scale 1.0 beyond one head_dim:",
      bool(np.all(e15[64:] >= e10[64:])))

curves[1.0].write_csv("decay_scale1.csv")
curves[1.5].write_csv("decay_scale1.5.csv")
print("wrote decay_scale1.csv / decay_scale1.5.csv (distance,score,envelope)")
