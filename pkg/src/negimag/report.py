"""Structured outcomes shared by every check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signal import Signal

__all__ = ["VerdictReport", "STATUSES", "jsonable"]

STATUSES = ("pass", "fail", "inconclusive")


def jsonable(value):
    """Convert numpy scalars/arrays and tuples into plain JSON-friendly values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


@dataclass
class VerdictReport:
    """Outcome of one check.

    ``margins`` holds named measured quantities, ``witness`` an input signal
    demonstrating a failure (if any), and ``flags`` short notes such as
    discrepancies against reference claims.
    """

    check: str
    status: str
    margins: dict = field(default_factory=dict)
    witness: Signal | None = None
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {self.status!r}")

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self, witness_ref=None):
        out = {
            "check": self.check,
            "status": self.status,
            "margins": jsonable(self.margins),
            "details": jsonable(self.details),
            "flags": list(self.flags),
        }
        if self.witness is not None:
            out["witness"] = witness_ref or "present"
        return out
