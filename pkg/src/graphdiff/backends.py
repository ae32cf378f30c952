"""Execution backends: reference precisions, perturbation wrapper, bridge.

run_case walks a test case in topological order on one backend. Crashes
(validity errors at run time, or library errors reported by a bridge) become
data: the crashing node gets a crash outcome, its descendants are skipped,
independent nodes still run.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import rng
from .generate import Concrete, Dependent, Scalar, TestCase
from .graphs import ComputationGraph, entry_nodes, topo_order
from .ops import ValidityError, execute_node
from .signatures import API_NAMES
from .tensors import TensorValue, decode_payload, encode_payload, from_numpy


class BackendError(Exception):
    pass


class BackendUnavailable(BackendError):
    """The backend cannot evaluate cases at all (e.g. bridge process died)."""


@dataclass(frozen=True)
class CrashOutcome:
    kind: str           # "crash" | "skipped"
    message: str
    source: int         # node id where the original crash happened

    @property
    def crashed(self) -> bool:
        return self.kind == "crash"


NodeOutcome = Union[TensorValue, CrashOutcome]


# ------------------------------------------------------------------ backend ids

@dataclass(frozen=True)
class RefBackend:
    precision: str  # "f32" | "f64"

    @property
    def name(self) -> str:
        return f"ref-{self.precision}"


@dataclass(frozen=True)
class PerturbBackend:
    base: "Backend"
    epsilon: float
    targets: Union[frozenset[int], str]  # node ids, or "entry" / "*"

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("perturbation epsilon must be >= 0")
        if isinstance(self.base, PerturbBackend):
            raise ValueError("perturb backends do not nest")

    @property
    def name(self) -> str:
        if isinstance(self.targets, str):
            spec = self.targets
        else:
            spec = ",".join(str(i) for i in sorted(self.targets))
        return f"perturb:{self.base.name}:{self.epsilon:g}:{spec}"

    def resolve_targets(self, pattern: ComputationGraph) -> frozenset[int]:
        if self.targets == "entry":
            return frozenset(entry_nodes(pattern))
        if self.targets == "*":
            return frozenset(pattern.node_ids())
        return frozenset(self.targets)


@dataclass
class BridgeBackend:
    command: str
    device: str
    _client: Optional["BridgeClient"] = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def name(self) -> str:
        return f"bridge:{self.command}:{self.device}"

    def client(self) -> "BridgeClient":
        if self._client is None or not self._client.alive():
            self._client = BridgeClient(self.command, self.device)
        return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None


Backend = Union[RefBackend, PerturbBackend, BridgeBackend]


def parse_backend(spec: str) -> Backend:
    """Parse a backend spec string.

    Accepted forms: ref-f32 | ref-f64 | perturb:EPS:NODESPEC |
    perturb:BASE:EPS:NODESPEC | bridge:CMD:DEVICE. NODESPEC is "entry", "*",
    or comma-separated node ids. The 3-part perturb form wraps ref-f64.
    """
    if spec in ("ref-f32", "ref-f64"):
        return RefBackend(spec.split("-", 1)[1])
    if spec.startswith("perturb:"):
        parts = spec.split(":")
        if len(parts) == 3:
            base, eps_s, nodespec = "ref-f64", parts[1], parts[2]
        elif len(parts) == 4:
            base, eps_s, nodespec = parts[1], parts[2], parts[3]
        else:
            raise BackendError(f"bad perturb spec {spec!r} "
                               f"(want perturb:[BASE:]EPS:NODESPEC)")
        try:
            eps = float(eps_s)
        except ValueError:
            raise BackendError(f"bad perturb epsilon {eps_s!r}") from None
        targets: Union[frozenset[int], str]
        if nodespec in ("entry", "*"):
            targets = nodespec
        else:
            try:
                targets = frozenset(int(t) for t in nodespec.split(",") if t)
            except ValueError:
                raise BackendError(f"bad perturb node spec {nodespec!r}") from None
            if not targets:
                raise BackendError("perturb node spec selects no nodes")
        return PerturbBackend(parse_backend(base), eps, targets)
    if spec.startswith("bridge:"):
        rest = spec[len("bridge:"):]
        cmd, sep, device = rest.rpartition(":")
        if not sep or not cmd or device not in ("cpu", "cuda"):
            raise BackendError(f"bad bridge spec {spec!r} (want bridge:CMD:DEVICE "
                               f"with DEVICE cpu or cuda)")
        return BridgeBackend(cmd, device)
    raise BackendError(f"unknown backend {spec!r}")


# ------------------------------------------------------------------ execution

def _perturb(out: TensorValue, case_seed: int, node_id: int, epsilon: float) -> TensorValue:
    """x + sign * eps * |x| with deterministic per-element signs."""
    key = rng.derive_key(case_seed, rng.CH_PERTURB, node_id)
    sign = rng.sign_stream(key, out.size).reshape(out.shape).astype(out.data.dtype)
    data = out.data + sign * out.data.dtype.type(epsilon) * np.abs(out.data)
    return from_numpy(data)


def run_case(case: TestCase, backend: Backend) -> dict[int, NodeOutcome]:
    """Execute every node of the case on one backend, wiring dependent inputs.

    Returns a map node id -> output tensor or crash outcome. Never raises for
    in-case failures; raises BackendUnavailable if the backend itself is gone.
    """
    if isinstance(backend, PerturbBackend):
        targets = backend.resolve_targets(case.pattern)
        return _walk(case, backend.base, targets, backend.epsilon)
    return _walk(case, backend, frozenset(), 0.0)


def _walk(case: TestCase, base: Backend, perturb_targets: frozenset[int],
          epsilon: float) -> dict[int, NodeOutcome]:
    outputs: dict[int, NodeOutcome] = {}
    for nid in topo_order(case.pattern):
        api = case.pattern.api_of(nid)
        bindings: dict[str, object] = {}
        blocked: Optional[CrashOutcome] = None
        for param, b in case.node_bindings(nid).items():
            if isinstance(b, Dependent):
                up = outputs[b.src]
                if isinstance(up, CrashOutcome):
                    blocked = CrashOutcome("skipped",
                                           f"upstream node {up.source} crashed",
                                           up.source)
                    break
                bindings[param] = up
            elif isinstance(b, Concrete):
                bindings[param] = b.tensor
            elif isinstance(b, Scalar):
                bindings[param] = b.value
        if blocked is not None:
            outputs[nid] = blocked
            continue

        try:
            if isinstance(base, RefBackend):
                ctx = {"dropout_key": rng.derive_key(case.seed, rng.CH_DROPOUT, nid)}
                out = execute_node(api, bindings, base.precision, ctx)
            elif isinstance(base, BridgeBackend):
                out = _bridge_node(base, case, nid, api, bindings)
            else:  # pragma: no cover - parse_backend prevents nesting
                raise BackendError(f"cannot execute on {base!r}")
        except ValidityError as exc:
            outputs[nid] = CrashOutcome("crash", str(exc), nid)
            continue

        if isinstance(out, CrashOutcome):
            outputs[nid] = out
            continue
        if nid in perturb_targets and epsilon > 0.0:
            out = _perturb(out, case.seed, nid, epsilon)
        outputs[nid] = out
    return outputs


# ------------------------------------------------------------- bridge protocol

class BridgeClient:
    """Line-delimited JSON over a child process's stdin/stdout."""

    PROTOCOL = 1

    def __init__(self, command: str, device: str):
        self.device = device
        try:
            self.proc = subprocess.Popen(
                shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise BackendUnavailable(f"cannot start bridge {command!r}: {exc}") from None
        hello = self.request({"kind": "hello", "protocol": self.PROTOCOL})
        if hello.get("kind") != "hello_ok" or hello.get("protocol") != self.PROTOCOL:
            self.close()
            raise BackendUnavailable(f"bridge handshake failed: {hello}")
        if device not in hello.get("devices", []):
            self.close()
            raise BackendUnavailable(
                f"bridge does not serve device {device!r} (has {hello.get('devices')})")
        missing = set(API_NAMES) - set(hello.get("ops", []))
        if missing:
            self.close()
            raise BackendUnavailable(f"bridge lacks ops: {sorted(missing)}")

    def alive(self) -> bool:
        return self.proc.poll() is None

    def request(self, msg: dict) -> dict:
        if not self.alive():
            raise BackendUnavailable("bridge process has exited")
        try:
            self.proc.stdin.write(json.dumps(msg) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BackendUnavailable(f"bridge pipe broke: {exc}") from None
        if not line:
            raise BackendUnavailable("bridge closed its output")
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            raise BackendUnavailable(f"bridge sent garbage: {line[:200]!r}") from None

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


def _bridge_node(backend: BridgeBackend, case: TestCase, nid: int, api: str,
                 bindings: dict) -> NodeOutcome:
    tensors, scalars = {}, {}
    for param, v in bindings.items():
        if isinstance(v, TensorValue):
            tensors[param] = encode_payload(v)
        elif v is not None:
            scalars[param] = list(v) if isinstance(v, tuple) else v
    msg = {
        "kind": "run_node",
        "api": api,
        "device": backend.device,
        "tensors": tensors,
        "scalars": scalars,
        "seed": rng.derive_key(case.seed, rng.CH_DROPOUT, nid) & 0x7FFFFFFF,
    }
    with backend._lock:
        resp = backend.client().request(msg)
    if resp.get("kind") == "node_result":
        if "ok" in resp:
            return decode_payload(resp["ok"])
        crash = resp.get("crash") or {}
        return CrashOutcome("crash", str(crash.get("message", "unknown error")), nid)
    raise BackendUnavailable(f"bridge error: {resp.get('message', resp)}")
