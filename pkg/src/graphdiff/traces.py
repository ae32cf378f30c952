"""Runtime input-feature records: ingestion, validation, and matching.

Trace files hold one record per line: the per-parameter features observed for
one real invocation of an operator (tensor dtype/shape/value-range, scalar
values). Generation later samples concrete inputs from these features.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Union

from .signatures import REGISTRY, ParamKind
from .tensors import DTYPES


class TraceFormatError(ValueError):
    """Raised when a trace file is not parseable as the trace format."""


SCALAR_KINDS = ("int", "float", "bool", "string", "int-tuple", "none")


@dataclass(frozen=True)
class TensorFeature:
    dtype: str
    shape: tuple[int, ...]
    vmin: float
    vmax: float

    def check(self) -> Optional[str]:
        if self.dtype not in DTYPES:
            return f"unsupported tensor dtype {self.dtype!r}"
        if not self.shape:
            return "tensor shape must be nonempty"
        if any(not isinstance(d, int) or d < 1 for d in self.shape):
            return f"tensor dims must be positive integers, got {list(self.shape)}"
        if not (math.isfinite(self.vmin) and math.isfinite(self.vmax)):
            return "value range must be finite"
        if self.vmin > self.vmax:
            return f"value range [{self.vmin}, {self.vmax}] has min > max"
        return None


@dataclass(frozen=True)
class ScalarFeature:
    kind: str
    value: Any

    def check(self) -> Optional[str]:
        k, v = self.kind, self.value
        if k not in SCALAR_KINDS:
            return f"unknown scalar kind {k!r}"
        ok = {
            "int": lambda: isinstance(v, int) and not isinstance(v, bool),
            "float": lambda: isinstance(v, (int, float)) and not isinstance(v, bool),
            "bool": lambda: isinstance(v, bool),
            "string": lambda: isinstance(v, str),
            "int-tuple": lambda: isinstance(v, (list, tuple))
            and all(isinstance(d, int) and not isinstance(d, bool) for d in v),
            "none": lambda: v is None,
        }[k]()
        return None if ok else f"value {v!r} does not conform to kind {k!r}"


# Scalar kinds acceptable for each signature param kind. Real traces record
# e.g. conv2d's stride as a plain int; kernels expand ints to pairs.
_KIND_COMPAT = {
    ParamKind.SCALAR_INT: {"int"},
    ParamKind.SCALAR_FLOAT: {"float", "int"},
    ParamKind.SCALAR_BOOL: {"bool"},
    ParamKind.INT_TUPLE: {"int-tuple", "int"},
    ParamKind.STRING: {"string"},
}


@dataclass(frozen=True)
class InputRecord:
    record_id: str
    api: str
    tensor_params: dict[str, TensorFeature]
    scalar_params: dict[str, ScalarFeature]

    def scalar_value(self, name: str) -> Any:
        v = self.scalar_params[name].value
        return tuple(v) if isinstance(v, list) else v


@dataclass
class Rejection:
    line: int
    record_id: Optional[str]
    reason: str


def _check_record(rec: InputRecord) -> Optional[str]:
    if rec.api not in REGISTRY:
        return f"unknown api name {rec.api!r}"
    sig = REGISTRY[rec.api]
    for name, feat in rec.tensor_params.items():
        try:
            spec = sig.param(name)
        except KeyError:
            return f"{rec.api} has no parameter {name!r}"
        if spec.kind is not ParamKind.TENSOR:
            return f"parameter {name!r} of {rec.api} is not tensor-kind"
        problem = feat.check()
        if problem:
            return f"parameter {name!r}: {problem}"
    for name, feat in rec.scalar_params.items():
        try:
            spec = sig.param(name)
        except KeyError:
            return f"{rec.api} has no parameter {name!r}"
        if spec.kind is ParamKind.TENSOR:
            return f"parameter {name!r} of {rec.api} is tensor-kind, got a scalar"
        problem = feat.check()
        if problem:
            return f"parameter {name!r}: {problem}"
        if feat.kind == "none":
            if not spec.optional:
                return f"parameter {name!r} of {rec.api} is required, got none"
        elif feat.kind not in _KIND_COMPAT[spec.kind]:
            return (f"parameter {name!r} of {rec.api} expects {spec.kind.value}, "
                    f"got {feat.kind}")
    for spec in sig.required_params():
        present = spec.name in rec.tensor_params or spec.name in rec.scalar_params
        if not present:
            return f"required parameter {spec.name!r} of {rec.api} is missing"
    return None


class TraceStore:
    """Validated records indexed by api name; immutable once built."""

    def __init__(self) -> None:
        self._by_api: dict[str, list[InputRecord]] = {}
        self._ids: set[str] = set()
        self.rejections: list[Rejection] = []

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_api.values())

    @property
    def apis(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_api))

    def query(self, api: str) -> list[InputRecord]:
        """All records for api, in stable record_id order."""
        return list(self._by_api.get(api, ()))

    def match_records(self, api: str,
                      dep_bindings: dict[str, tuple[str, tuple[int, ...]]]) -> list[InputRecord]:
        """Records whose features exactly equal the given (dtype, shape) per param."""
        sig = REGISTRY[api]
        for name in dep_bindings:
            if sig.param(name).kind is not ParamKind.TENSOR:
                raise ValueError(f"{api}.{name} is not a tensor parameter")
        out = []
        for rec in self._by_api.get(api, ()):
            ok = True
            for name, (dtype, shape) in dep_bindings.items():
                feat = rec.tensor_params.get(name)
                if feat is None or feat.dtype != dtype or feat.shape != tuple(shape):
                    ok = False
                    break
            if ok:
                out.append(rec)
        return out

    def _add(self, rec: InputRecord, line: int) -> None:
        problem = _check_record(rec)
        if problem is None and rec.record_id in self._ids:
            problem = f"duplicate record id {rec.record_id!r}"
        if problem is not None:
            self.rejections.append(Rejection(line, rec.record_id, problem))
            return
        self._ids.add(rec.record_id)
        self._by_api.setdefault(rec.api, []).append(rec)

    def _finish(self) -> "TraceStore":
        for recs in self._by_api.values():
            recs.sort(key=lambda r: r.record_id)
        return self

    def records(self) -> list[InputRecord]:
        return [r for api in self.apis for r in self._by_api[api]]


def _parse_line(obj: dict, line: int) -> InputRecord:
    where = f"line {line}"
    if not isinstance(obj, dict):
        raise TraceFormatError(f"{where}: record must be an object")
    rid, api = obj.get("id"), obj.get("api")
    if not isinstance(rid, str) or not rid:
        raise TraceFormatError(f"{where}: missing or non-string 'id'")
    if not isinstance(api, str) or not api:
        raise TraceFormatError(f"{where}: missing or non-string 'api'")
    tensors: dict[str, TensorFeature] = {}
    for name, t in (obj.get("tensors") or {}).items():
        if not isinstance(t, dict):
            raise TraceFormatError(f"{where}: tensors[{name!r}] must be an object")
        try:
            shape = tuple(int(d) for d in t["shape"])
            feat = TensorFeature(str(t["dtype"]), shape, float(t["min"]), float(t["max"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(
                f"{where}: tensors[{name!r}] needs dtype/shape/min/max ({exc})") from None
        tensors[name] = feat
    scalars: dict[str, ScalarFeature] = {}
    for name, s in (obj.get("scalars") or {}).items():
        if not isinstance(s, dict) or "kind" not in s or "value" not in s:
            raise TraceFormatError(f"{where}: scalars[{name!r}] needs kind/value")
        scalars[name] = ScalarFeature(str(s["kind"]), s["value"])
    return InputRecord(rid, api, tensors, scalars)


def ingest(paths: Union[str, Iterable[str]]) -> TraceStore:
    """Parse trace file(s); invalid records are rejected with diagnostics.

    Unparseable lines are format errors and raise; semantically invalid
    records (unknown api, kind mismatch, bad ranges) land in store.rejections.
    """
    if isinstance(paths, str):
        paths = [paths]
    store = TraceStore()
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    obj = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise TraceFormatError(f"{path}: line {line_no}: {exc.msg}") from None
                store._add(_parse_line(obj, line_no), line_no)
    return store._finish()


def _feature_obj(feat: TensorFeature) -> dict:
    return {"dtype": feat.dtype, "shape": list(feat.shape),
            "min": feat.vmin, "max": feat.vmax}


def record_obj(rec: InputRecord) -> dict:
    return {
        "id": rec.record_id,
        "api": rec.api,
        "tensors": {k: _feature_obj(v) for k, v in sorted(rec.tensor_params.items())},
        "scalars": {k: {"kind": v.kind, "value": v.value}
                    for k, v in sorted(rec.scalar_params.items())},
    }


def emit(store: TraceStore, path: str) -> None:
    """Write the store back in trace format (one record per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in store.records():
            fh.write(json.dumps(record_obj(rec), sort_keys=True) + "\n")
