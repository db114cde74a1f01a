"""
Rise-then-fall schedules for context-window extension
=====================================================

Extending a pretrained window L to L' needs a base factor s = L'/L. Instead
of applying s uniformly, the layer schedule climbs from s to s + interval at
a peak layer and falls back: middle layers, whose attention entropy reacts
most to extension, get the largest factors. The base-scaling variant
(changing the rotary base instead of positions) is also shown.
"""

from layerscale import RotaryConfig, extrapolation_schedule, frequencies, ntk_base

L, L_PRIME = 4096, 8192
sched = extrapolation_schedule(32, L, L_PRIME, interval=0.3)

print(f"pretrained window {L}, target {L_PRIME}: base factor s = {L_PRIME / L}")
print("layer:scale  " + "  ".join(
    f"{k}:{sched.scales[k]:.3f}" for k in (0, 4, 8, 12, 16, 20, 24, 28, 31)
))
print(f"min {min(sched.scales)} at the ends, max {max(sched.scales):.1f} at layer "
      f"{sched.scales.index(max(sched.scales))}")

cfg = RotaryConfig(head_dim=128, base=10000.0)
for factor in (1.0, 2.0, 4.0):
    b = ntk_base(cfg, factor)
    slowest = frequencies(RotaryConfig(head_dim=128, base=b))[-1]
    print(f"extension factor {factor}: base {b:12.1f}, slowest plane freq {slowest:.3e}")
