import itertools
import json
import math
import socket
import sys
import threading

import pytest

from layerscale.curve import ScaleSchedule
from layerscale.evolution import UtilizationWeights, utilization
from layerscale.fitness import (
    AccuracyTriple,
    ConstantEvaluator,
    EvaluatorError,
    PlantedCurveEvaluator,
    ProtocolError,
    layer_thirds,
    subprocess_evaluator,
    tcp_evaluator,
)


def uniform(n, s=1.0):
    return ScaleSchedule(tuple([s] * n))


class TestAccuracyTriple:
    def test_range_check(self):
        with pytest.raises(ValueError):
            AccuracyTriple(101.0, 50.0, 50.0)
        with pytest.raises(ValueError):
            AccuracyTriple(0.5, 0.5, 1.5, unit="fraction")

    def test_round_trip(self):
        t = AccuracyTriple(70.0, 55.6, 60.2, sample_count=200)
        assert AccuracyTriple.from_dict(t.to_dict()) == t


class TestLayerThirds:
    def test_even_split(self):
        f, m, l = layer_thirds(30)
        assert (f.stop, m.stop, l.stop) == (10, 20, 30)

    def test_remainder_goes_last(self):
        f, m, l = layer_thirds(8)
        assert (f.stop - f.start, m.stop - m.start, l.stop - l.start) == (2, 2, 4)


class TestPlantedOracle:
    def test_hidden_schedule_is_perfect(self):
        hidden = ScaleSchedule((1.3, 1.7, 1.1))
        oracle = PlantedCurveEvaluator(hidden, sharpness=5.0)
        t = oracle.evaluate(hidden)
        assert (t.first, t.middle, t.last) == (100.0, 100.0, 100.0)

    def test_uniform_offset_closed_form(self):
        hidden = uniform(30, 1.5)
        off = uniform(30, 1.6)
        t = PlantedCurveEvaluator(hidden, sharpness=5.0).evaluate(off)
        expected = 100.0 * math.exp(-0.5)
        for v in (t.first, t.middle, t.last):
            assert v == pytest.approx(expected, rel=1e-12)

    def test_middle_error_monotonicity(self):
        import numpy as np

        hidden = uniform(30, 1.5)
        oracle = PlantedCurveEvaluator(hidden, sharpness=5.0)
        rng = np.random.default_rng(8)
        for _ in range(1000):
            e1, e2 = sorted(rng.uniform(0.0, 0.5, size=2))
            mid = slice(10, 20)
            s1 = list(hidden.scales)
            s2 = list(hidden.scales)
            for i in range(mid.start, mid.stop):
                s1[i] += e1
                s2[i] += e2
            a1 = oracle.evaluate(ScaleSchedule(tuple(s1))).middle
            a2 = oracle.evaluate(ScaleSchedule(tuple(s2))).middle
            if e2 > e1:
                assert a2 < a1

    def test_exhaustive_argmax_on_3_layer_grid(self):
        hidden = ScaleSchedule((1.3, 1.7, 1.1))
        oracle = PlantedCurveEvaluator(hidden, sharpness=5.0)
        weights = UtilizationWeights()
        ys = [round(1.0 + k / 10.0, 10) for k in range(11)]
        best_u, best_sched = -1.0, None
        count = 0
        for combo in itertools.product(ys, repeat=3):
            count += 1
            u = utilization(oracle.evaluate(ScaleSchedule(combo)), weights)
            if u > best_u:
                best_u, best_sched = u, combo
        assert count == 1331
        assert best_sched == hidden.scales

    def test_purity(self):
        hidden = uniform(9, 1.4)
        oracle = PlantedCurveEvaluator(hidden)
        s = ScaleSchedule((1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8))
        assert oracle.evaluate(s) == oracle.evaluate(s)

    def test_length_mismatch(self):
        with pytest.raises(EvaluatorError):
            PlantedCurveEvaluator(uniform(30)).evaluate(uniform(8))


STUB_SERVER = r"""
import json, sys

def out(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()

mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
hs = json.loads(sys.stdin.readline())
if hs.get("protocol") != "layerscale-eval" or hs.get("version") != 1:
    out({"ok": False, "reason": "bad handshake"})
    sys.exit(0)
if mode == "reject":
    out({"ok": False, "reason": "configured to reject"})
    sys.exit(0)
out({"ok": True})
n = 0
for line in sys.stdin:
    req = json.loads(line)
    n += 1
    if mode == "wrong_id":
        out({"id": req["id"] + 2, "acc_first": 1.0, "acc_middle": 1.0,
             "acc_last": 1.0, "sample_count": 1})
    elif mode == "error_field":
        out({"id": req["id"], "error": "model exploded"})
    else:
        out({"id": req["id"], "acc_first": 70.0, "acc_middle": 55.6,
             "acc_last": 60.2, "sample_count": 200})
"""


def stub_argv(mode="ok"):
    return [sys.executable, "-c", STUB_SERVER, mode]


class TestSubprocessEvaluator:
    def test_fixed_triple_passes_through(self):
        ev = subprocess_evaluator(stub_argv(), n_layers=30)
        try:
            t = ev.evaluate(uniform(30))
            assert (t.first, t.middle, t.last) == (70.0, 55.6, 60.2)
            assert t.sample_count == 200
        finally:
            ev.close()

    def test_many_requests_matched_in_order(self):
        ev = subprocess_evaluator(stub_argv(), n_layers=4)
        try:
            for _ in range(5):
                t = ev.evaluate(uniform(4))
                assert t.first == 70.0
        finally:
            ev.close()

    def test_id_mismatch_raises_after_retries(self):
        ev = subprocess_evaluator(stub_argv("wrong_id"), n_layers=4, retries=2)
        try:
            with pytest.raises(EvaluatorError):
                ev.evaluate(uniform(4))
        finally:
            ev.close()

    def test_handshake_rejection(self):
        ev = subprocess_evaluator(stub_argv("reject"), n_layers=4, retries=1)
        try:
            with pytest.raises(EvaluatorError):
                ev.evaluate(uniform(4))
        finally:
            ev.close()

    def test_server_error_field(self):
        ev = subprocess_evaluator(stub_argv("error_field"), n_layers=4, retries=2)
        try:
            with pytest.raises(EvaluatorError, match="model exploded"):
                ev.evaluate(uniform(4))
        finally:
            ev.close()

    def test_schedule_length_guard(self):
        ev = subprocess_evaluator(stub_argv(), n_layers=30)
        try:
            with pytest.raises(EvaluatorError):
                ev.evaluate(uniform(8))
        finally:
            ev.close()


def _tcp_stub_server(sock, triple=(70.0, 55.6, 60.2)):
    conn, _ = sock.accept()
    buf = b""

    def recv_line():
        nonlocal buf
        while b"\n" not in buf:
            chunk = conn.recv(4096)
            if not chunk:
                return None
            buf += chunk
        line, rest = buf.split(b"\n", 1)
        buf = rest
        return line

    def send(obj):
        conn.sendall((json.dumps(obj, separators=(",", ":")) + "\n").encode())

    hs = json.loads(recv_line())
    send({"ok": hs.get("protocol") == "layerscale-eval"})
    while True:
        line = recv_line()
        if line is None:
            break
        req = json.loads(line)
        send({
            "id": req["id"], "acc_first": triple[0], "acc_middle": triple[1],
            "acc_last": triple[2], "sample_count": 100,
        })
    conn.close()


class TestTcpEvaluator:
    def test_round_trip(self):
        srv = socket.socket()
        srv.bind(("127.0.0.1", 0))
        srv.listen(1)
        port = srv.getsockname()[1]
        thread = threading.Thread(target=_tcp_stub_server, args=(srv,), daemon=True)
        thread.start()
        ev = tcp_evaluator("127.0.0.1", port, n_layers=6, timeout=10.0)
        try:
            t = ev.evaluate(uniform(6))
            assert (t.first, t.middle, t.last) == (70.0, 55.6, 60.2)
        finally:
            ev.close()
            srv.close()


class TestConstantEvaluator:
    def test_ignores_schedule(self):
        ev = ConstantEvaluator(AccuracyTriple(70.0, 55.6, 60.2, 200))
        assert ev.evaluate(uniform(30)).middle == 55.6
        assert ev.evaluate(uniform(30, 2.0)).middle == 55.6
