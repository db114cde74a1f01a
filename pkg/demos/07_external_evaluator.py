"""
Talking to an out-of-process evaluator
======================================

Real fitness (a model harness scoring retrieval at first/middle/last
positions) lives in another process. The client speaks newline-delimited
JSON over stdio or TCP: one handshake line, then id-matched request/response
pairs. This demo spawns a tiny inline server; the bridge/ package ships the
production server with the same protocol.
"""

import sys
import textwrap

from layerscale import ScaleSchedule, subprocess_evaluator

SERVER = textwrap.dedent("""
    import json, sys
    def out(obj):
        sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\\n")
        sys.stdout.flush()
    handshake = json.loads(sys.stdin.readline())
    out({"ok": handshake.get("protocol") == "layerscale-eval"})
    for line in sys.stdin:
        req = json.loads(line)
        # score: reward schedules whose mean sits near 1.5
        mean = sum(req["scales"]) / len(req["scales"])
        mid = max(0.0, 100.0 - 80.0 * abs(mean - 1.5))
        out({"id": req["id"], "acc_first": 70.0, "acc_middle": round(mid, 2),
             "acc_last": 60.0, "sample_count": 64})
""")

evaluator = subprocess_evaluator([sys.executable, "-c", SERVER], n_layers=30)
try:
    for s in (1.0, 1.5, 2.0):
        triple = evaluator.evaluate(ScaleSchedule(tuple([s] * 30)))
        print(f"uniform {s}: first={triple.first} middle={triple.middle} "
              f"last={triple.last}")
finally:
    evaluator.close()

print("\nthe same conversation works against the TypeScript bridge:")
print("  node bridge/dist/main.js --stdio --stub 70,55.6,60.2 --n-layers 30")
print("or end to end through the CLI:")
print("  layerscale search --evaluator 'external-cmd:node bridge/dist/main.js"
      " --stdio --stub 70,55.6,60.2 --n-layers 30' --generations 2")
