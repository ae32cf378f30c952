"""Bridge server: executes operator requests with PyTorch, one JSON line each.

Every request gets exactly one response line. Operator exceptions become
crash records, never server deaths; malformed requests get an error response
and the loop continues until stdin closes.
"""

from __future__ import annotations

import json
import sys
import traceback
from typing import Any

import numpy as np
import torch
import torch.nn.functional as F

from .protocol import PROTOCOL_VERSION, decode_tensor, encode_tensor

OPS = ("__add__", "__mul__", "adaptive_avg_pool2d", "batch_norm", "conv2d",
       "div", "dropout", "flatten", "gelu", "layer_norm", "linear", "matmul",
       "max_pool2d", "relu", "softmax")


def _tupled(v: Any) -> Any:
    return tuple(v) if isinstance(v, list) else v


def _pool_args(s: dict) -> dict:
    out = {k: _tupled(s[k]) for k in ("kernel_size", "stride", "padding",
                                      "dilation", "ceil_mode") if k in s}
    if out.get("stride") is None:
        out.pop("stride", None)
    return out


def run_op(api: str, tensors: dict[str, torch.Tensor], scalars: dict[str, Any]
           ) -> torch.Tensor:
    t, s = tensors, scalars
    if api == "__add__":
        return t["input"] + t["other"]
    if api == "__mul__":
        return t["input"] * t["other"]
    if api == "div":
        return torch.div(t["input"], t["other"])
    if api == "matmul":
        return torch.matmul(t["input"], t["other"])
    if api == "relu":
        return F.relu(t["input"])
    if api == "gelu":
        return F.gelu(t["input"])
    if api == "softmax":
        return F.softmax(t["input"], dim=int(s.get("dim", -1)))
    if api == "flatten":
        return torch.flatten(t["input"], int(s.get("start_dim", 1)),
                             int(s.get("end_dim", -1)))
    if api == "dropout":
        return F.dropout(t["input"], p=float(s.get("p", 0.5)),
                         training=bool(s.get("training", False)))
    if api == "conv2d":
        return F.conv2d(t["input"], t["weight"], t.get("bias"),
                        stride=_tupled(s.get("stride", 1)),
                        padding=_tupled(s.get("padding", 0)),
                        dilation=_tupled(s.get("dilation", 1)),
                        groups=int(s.get("groups", 1)))
    if api == "max_pool2d":
        return F.max_pool2d(t["input"], **_pool_args(s))
    if api == "adaptive_avg_pool2d":
        return F.adaptive_avg_pool2d(t["input"], _tupled(s["output_size"]))
    if api == "linear":
        return F.linear(t["input"], t["weight"], t.get("bias"))
    if api == "layer_norm":
        return F.layer_norm(t["input"], _tupled(s["normalized_shape"]),
                            t.get("weight"), t.get("bias"),
                            eps=float(s.get("eps", 1e-5)))
    if api == "batch_norm":
        return F.batch_norm(t["input"], t["running_mean"], t["running_var"],
                            weight=t.get("weight"), bias=t.get("bias"),
                            training=bool(s.get("training", False)),
                            momentum=float(s.get("momentum", 0.1)),
                            eps=float(s.get("eps", 1e-5)))
    raise ValueError(f"unsupported op {api!r}")


def _devices() -> list[str]:
    devices = ["cpu"]
    if torch.cuda.is_available():
        devices.append("cuda")
    return devices


def _to_device(payloads: dict[str, dict], device: str) -> dict[str, torch.Tensor]:
    out = {}
    for name, payload in payloads.items():
        arr = decode_tensor(payload)
        out[name] = torch.from_numpy(arr).to(device)
    return out


def _result_payload(value: torch.Tensor) -> dict:
    arr = value.detach().to("cpu").contiguous().numpy()
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return encode_tensor(arr)


def _exec_node(api: str, tensor_payloads: dict, scalars: dict, device: str,
               seed: int) -> dict:
    try:
        tensors = _to_device(tensor_payloads, device)
        torch.manual_seed(seed & 0x7FFFFFFF)
        with torch.no_grad():
            value = run_op(api, tensors, scalars)
        return {"ok": _result_payload(value)}
    except Exception as exc:  # crash containment: the op is the suspect
        return {"crash": {"message": f"{type(exc).__name__}: {exc}"}}


def handle(msg: dict) -> dict:
    kind = msg.get("kind")
    if kind == "hello":
        if msg.get("protocol") != PROTOCOL_VERSION:
            return {"kind": "error",
                    "message": f"protocol mismatch: server speaks {PROTOCOL_VERSION}"}
        return {"kind": "hello_ok", "protocol": PROTOCOL_VERSION,
                "devices": _devices(), "ops": list(OPS)}
    if kind == "run_node":
        api = msg.get("api")
        if api not in OPS:
            return {"kind": "error", "message": f"unsupported op {api!r}"}
        device = msg.get("device", "cpu")
        if device not in _devices():
            return {"kind": "error", "message": f"device {device!r} unavailable"}
        result = _exec_node(api, msg.get("tensors") or {}, msg.get("scalars") or {},
                            device, int(msg.get("seed", 0)))
        return {"kind": "node_result", **result}
    if kind == "run_case":
        return _run_case(msg)
    return {"kind": "error", "message": f"unknown request kind {kind!r}"}


def _run_case(msg: dict) -> dict:
    case = msg.get("case") or {}
    device = msg.get("device", "cpu")
    if device not in _devices():
        return {"kind": "error", "message": f"device {device!r} unavailable"}
    order = case.get("order") or []
    nodes = case.get("nodes") or {}
    seed = int(case.get("seed", 0))
    results: dict[str, dict] = {}
    outputs: dict[str, dict] = {}
    for nid in order:
        node = nodes.get(str(nid))
        if node is None:
            return {"kind": "error", "message": f"case order names unknown node {nid}"}
        payloads = dict(node.get("tensors") or {})
        blocked = None
        for param, src in (node.get("deps") or {}).items():
            up = outputs.get(str(src))
            if up is None:
                blocked = {"skipped": int(src)}
                break
            payloads[param] = up
        if blocked is not None:
            results[str(nid)] = blocked
            continue
        result = _exec_node(node.get("api"), payloads, node.get("scalars") or {},
                            device, seed + int(nid))
        results[str(nid)] = result
        if "ok" in result:
            outputs[str(nid)] = result["ok"]
    return {"kind": "case_result", "nodes": results}


def serve(stdin=None, stdout=None) -> None:
    """Serve until end-of-input. One JSON request per line, one response."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            resp = {"kind": "error", "message": f"bad json: {exc.msg}"}
        else:
            try:
                resp = handle(msg)
            except Exception:  # never die on a request
                resp = {"kind": "error",
                        "message": "internal: " + traceback.format_exc(limit=1)}
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()
