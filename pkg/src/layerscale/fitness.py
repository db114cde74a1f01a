"""Fitness evaluators: the contract, built-in oracles, and the wire client.

An evaluator maps a per-layer scale schedule to three retrieval accuracies
(target content placed at the first, middle, and last part of the context).
Real model harnesses live out of process behind a newline-delimited JSON
protocol; two synthetic in-process oracles make search behavior testable
with known ground truth.
"""

from __future__ import annotations

import json
import math
import os
import select
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol

from .curve import ScaleSchedule

PROTOCOL_NAME = "layerscale-eval"
PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 300.0
DEFAULT_RETRIES = 3


class EvaluatorError(RuntimeError):
    """The evaluator backend failed to produce a usable answer."""


class ProtocolError(EvaluatorError):
    """The wire conversation violated the protocol (bad id, bad JSON, ...)."""


@dataclass(frozen=True)
class AccuracyTriple:
    first: float
    middle: float
    last: float
    sample_count: int = 0
    unit: str = "percent"

    def __post_init__(self) -> None:
        hi = 100.0 if self.unit == "percent" else 1.0
        for name, v in (("first", self.first), ("middle", self.middle), ("last", self.last)):
            if not 0.0 <= v <= hi:
                raise ValueError(f"{name} accuracy {v} outside [0, {hi}]")

    def to_dict(self) -> dict:
        return {
            "acc_first": self.first,
            "acc_middle": self.middle,
            "acc_last": self.last,
            "sample_count": self.sample_count,
            "unit": self.unit,
        }

    @staticmethod
    def from_dict(obj: dict) -> "AccuracyTriple":
        return AccuracyTriple(
            float(obj["acc_first"]),
            float(obj["acc_middle"]),
            float(obj["acc_last"]),
            int(obj.get("sample_count", 0)),
            str(obj.get("unit", "percent")),
        )


class Evaluator(Protocol):
    def evaluate(self, schedule: ScaleSchedule) -> AccuracyTriple: ...

    def close(self) -> None: ...


class ConstantEvaluator:
    """Returns a fixed triple regardless of the schedule."""

    def __init__(self, triple: AccuracyTriple):
        self.triple = triple

    def evaluate(self, schedule: ScaleSchedule) -> AccuracyTriple:
        return self.triple

    def close(self) -> None:
        pass


def layer_thirds(n_layers: int) -> tuple[slice, slice, slice]:
    """Partition layer indices into thirds; remainder goes to the last."""
    third = n_layers // 3
    return slice(0, third), slice(third, 2 * third), slice(2 * third, n_layers)


class PlantedCurveEvaluator:
    """Oracle with a known optimal schedule.

    Each positional accuracy is 100 * exp(-sharpness * d) where d is the
    mean absolute deviation from the hidden schedule over the corresponding
    third of the layers, so the hidden schedule is the unique maximizer.
    """

    def __init__(self, hidden: ScaleSchedule, sharpness: float = 5.0):
        if sharpness <= 0:
            raise ValueError("sharpness must be positive")
        self.hidden = hidden
        self.sharpness = sharpness

    def evaluate(self, schedule: ScaleSchedule) -> AccuracyTriple:
        if len(schedule) != len(self.hidden):
            raise EvaluatorError(
                f"schedule length {len(schedule)} != hidden length {len(self.hidden)}"
            )
        accs = []
        for part in layer_thirds(len(self.hidden)):
            hid = self.hidden.scales[part]
            got = schedule.scales[part]
            d = sum(abs(a - b) for a, b in zip(got, hid)) / max(1, len(hid))
            accs.append(100.0 * math.exp(-self.sharpness * d))
        return AccuracyTriple(accs[0], accs[1], accs[2], sample_count=len(self.hidden))

    def close(self) -> None:
        pass


def _dump_line(obj: dict) -> bytes:
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


class _LineChannel:
    """One request/response JSON line conversation over a byte stream."""

    def send(self, data: bytes) -> None:
        raise NotImplementedError

    def recv_line(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class _SubprocessChannel(_LineChannel):
    def __init__(self, argv: list[str], timeout: float = DEFAULT_TIMEOUT_S):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self.timeout = timeout
        self.buf = b""

    def send(self, data: bytes) -> None:
        assert self.proc.stdin is not None
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def recv_line(self) -> bytes:
        assert self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        while b"\n" not in self.buf:
            ready, _, _ = select.select([fd], [], [], self.timeout)
            if not ready:
                raise ProtocolError(f"evaluator silent for {self.timeout}s")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProtocolError("evaluator process closed its output stream")
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return line + b"\n"

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _TcpChannel(_LineChannel):
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.buf = b""

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv_line(self) -> bytes:
        while b"\n" not in self.buf:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ProtocolError("evaluator connection closed")
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return line + b"\n"

    def close(self) -> None:
        self.sock.close()


class ExternalEvaluator:
    """Client side of the newline-delimited JSON evaluation protocol.

    The first line is a handshake naming the protocol, its version, and the
    schedule geometry; the server acks with {"ok": true}. Each subsequent
    request carries a fresh id that the response must echo. Responses are
    matched to requests strictly by id; a mismatch is a protocol error and
    the request is retried (up to ``retries`` times).
    """

    def __init__(
        self,
        channel_factory,
        n_layers: int,
        first_scaled_layer: int = 0,
        retries: int = DEFAULT_RETRIES,
    ):
        self._factory = channel_factory
        self.n_layers = n_layers
        self.first_scaled_layer = first_scaled_layer
        self.retries = retries
        self._chan: _LineChannel | None = None
        self._next_id = 0
        # one conversation per connection: concurrent callers take turns
        self._lock = threading.Lock()

    def _handshake(self) -> _LineChannel:
        chan = self._factory()
        chan.send(
            _dump_line(
                {
                    "protocol": PROTOCOL_NAME,
                    "version": PROTOCOL_VERSION,
                    "n_layers": self.n_layers,
                    "first_scaled_layer": self.first_scaled_layer,
                }
            )
        )
        try:
            ack = json.loads(chan.recv_line())
        except json.JSONDecodeError as e:
            chan.close()
            raise ProtocolError(f"handshake reply is not JSON: {e}") from e
        if not isinstance(ack, dict) or not ack.get("ok"):
            chan.close()
            reason = ack.get("reason", "no reason given") if isinstance(ack, dict) else "bad ack"
            raise ProtocolError(f"handshake rejected: {reason}")
        return chan

    def _channel(self) -> _LineChannel:
        if self._chan is None:
            self._chan = self._handshake()
        return self._chan

    def _round_trip(self, schedule: ScaleSchedule) -> AccuracyTriple:
        req_id = self._next_id
        self._next_id += 1
        chan = self._channel()
        chan.send(
            _dump_line(
                {
                    "id": req_id,
                    "scales": list(schedule.scales),
                    "first_scaled_layer": schedule.first_scaled_layer,
                }
            )
        )
        try:
            reply = json.loads(chan.recv_line())
        except json.JSONDecodeError as e:
            raise ProtocolError(f"response is not JSON: {e}") from e
        if not isinstance(reply, dict):
            raise ProtocolError("response is not a JSON object")
        if reply.get("id") != req_id:
            raise ProtocolError(f"response id {reply.get('id')} does not match request {req_id}")
        if reply.get("error"):
            raise EvaluatorError(f"evaluator reported: {reply['error']}")
        return AccuracyTriple.from_dict(reply)

    def evaluate(self, schedule: ScaleSchedule) -> AccuracyTriple:
        if len(schedule) != self.n_layers:
            raise EvaluatorError(
                f"schedule length {len(schedule)} != handshake n_layers {self.n_layers}"
            )
        with self._lock:
            last_error: Exception | None = None
            for _ in range(self.retries):
                try:
                    return self._round_trip(schedule)
                except (ProtocolError, OSError) as e:
                    # drop the conversation and start a fresh one on retry
                    last_error = e
                    self._close_channel()
                except EvaluatorError as e:
                    last_error = e
            raise EvaluatorError(
                f"evaluation failed after {self.retries} attempts: {last_error}"
            )

    def _close_channel(self) -> None:
        if self._chan is not None:
            self._chan.close()
            self._chan = None

    def close(self) -> None:
        with self._lock:
            self._close_channel()


def subprocess_evaluator(
    argv: list[str],
    n_layers: int,
    first_scaled_layer: int = 0,
    timeout: float = DEFAULT_TIMEOUT_S,
    retries: int = DEFAULT_RETRIES,
) -> ExternalEvaluator:
    return ExternalEvaluator(
        lambda: _SubprocessChannel(argv, timeout), n_layers, first_scaled_layer, retries
    )


def tcp_evaluator(
    host: str,
    port: int,
    n_layers: int,
    first_scaled_layer: int = 0,
    timeout: float = DEFAULT_TIMEOUT_S,
    retries: int = DEFAULT_RETRIES,
) -> ExternalEvaluator:
    return ExternalEvaluator(
        lambda: _TcpChannel(host, port, timeout), n_layers, first_scaled_layer, retries
    )
