"""Operator signatures: the registry of supported ops and their parameters.

Every module in the pipeline (graph validation, trace ingestion, input
generation, execution) consults this registry. Node labels in computation
graphs are operator names; parameter metadata lives here, not on the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional


class ParamKind(Enum):
    TENSOR = "tensor"
    SCALAR_INT = "scalar-int"
    SCALAR_FLOAT = "scalar-float"
    SCALAR_BOOL = "scalar-bool"
    INT_TUPLE = "int-tuple"
    STRING = "string"


@dataclass(frozen=True)
class ParamSpec:
    """One parameter of an operator signature.

    ``dependent_capable`` marks tensor parameters that may be wired to a
    predecessor's output. ``optional`` parameters may be absent from trace
    records (``default`` applies; None means "omitted").
    """

    name: str
    kind: ParamKind
    dependent_capable: bool = False
    optional: bool = False
    default: Any = None


@dataclass(frozen=True)
class ApiSignature:
    name: str
    params: tuple[ParamSpec, ...]

    def __post_init__(self) -> None:
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"{self.name}: duplicate parameter names in signature")
        for p in self.params:
            if p.dependent_capable and p.kind is not ParamKind.TENSOR:
                raise ValueError(
                    f"{self.name}.{p.name}: only tensor parameters may be dependent-capable"
                )

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(f"{self.name} has no parameter {name!r}")

    def param_ordinal(self, name: str) -> int:
        for i, p in enumerate(self.params):
            if p.name == name:
                return i
        raise KeyError(f"{self.name} has no parameter {name!r}")

    def tensor_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.kind is ParamKind.TENSOR)

    def required_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if not p.optional)


def _sig(name: str, *params: ParamSpec) -> ApiSignature:
    return ApiSignature(name=name, params=params)


def _t(name: str, dep: bool = False, optional: bool = False) -> ParamSpec:
    return ParamSpec(name, ParamKind.TENSOR, dependent_capable=dep, optional=optional)


K = ParamKind


def _build_registry() -> dict[str, ApiSignature]:
    sigs = [
        _sig("flatten", _t("input", dep=True),
             ParamSpec("start_dim", K.SCALAR_INT, optional=True, default=1),
             ParamSpec("end_dim", K.SCALAR_INT, optional=True, default=-1)),
        _sig("__mul__", _t("input", dep=True), _t("other", dep=True)),
        _sig("div", _t("input", dep=True), _t("other", dep=True)),
        _sig("softmax", _t("input", dep=True),
             ParamSpec("dim", K.SCALAR_INT, optional=True, default=-1)),
        _sig("adaptive_avg_pool2d", _t("input", dep=True),
             ParamSpec("output_size", K.INT_TUPLE)),
        _sig("matmul", _t("input", dep=True), _t("other", dep=True)),
        _sig("max_pool2d", _t("input", dep=True),
             ParamSpec("kernel_size", K.INT_TUPLE),
             ParamSpec("stride", K.INT_TUPLE, optional=True, default=None),
             ParamSpec("padding", K.INT_TUPLE, optional=True, default=0),
             ParamSpec("dilation", K.INT_TUPLE, optional=True, default=1),
             ParamSpec("ceil_mode", K.SCALAR_BOOL, optional=True, default=False)),
        _sig("batch_norm", _t("input", dep=True),
             _t("running_mean"), _t("running_var"),
             _t("weight", optional=True), _t("bias", optional=True),
             ParamSpec("training", K.SCALAR_BOOL, optional=True, default=False),
             ParamSpec("momentum", K.SCALAR_FLOAT, optional=True, default=0.1),
             ParamSpec("eps", K.SCALAR_FLOAT, optional=True, default=1e-5)),
        _sig("dropout", _t("input", dep=True),
             ParamSpec("p", K.SCALAR_FLOAT, optional=True, default=0.5),
             ParamSpec("training", K.SCALAR_BOOL, optional=True, default=False)),
        _sig("relu", _t("input", dep=True)),
        _sig("conv2d", _t("input", dep=True), _t("weight"),
             _t("bias", optional=True),
             ParamSpec("stride", K.INT_TUPLE, optional=True, default=1),
             ParamSpec("padding", K.INT_TUPLE, optional=True, default=0),
             ParamSpec("dilation", K.INT_TUPLE, optional=True, default=1),
             ParamSpec("groups", K.SCALAR_INT, optional=True, default=1)),
        _sig("gelu", _t("input", dep=True)),
        _sig("linear", _t("input", dep=True), _t("weight"), _t("bias", optional=True)),
        _sig("layer_norm", _t("input", dep=True),
             ParamSpec("normalized_shape", K.INT_TUPLE),
             _t("weight", optional=True), _t("bias", optional=True),
             ParamSpec("eps", K.SCALAR_FLOAT, optional=True, default=1e-5)),
        _sig("__add__", _t("input", dep=True), _t("other", dep=True)),
    ]
    return {s.name: s for s in sigs}


REGISTRY: dict[str, ApiSignature] = _build_registry()

API_NAMES: tuple[str, ...] = tuple(sorted(REGISTRY))


def signature(api: str) -> ApiSignature:
    try:
        return REGISTRY[api]
    except KeyError:
        raise KeyError(f"unknown operator {api!r}") from None
