"""Statistical report records and their canonical serialized form.

Every Monte Carlo experiment reduces to named quantities compared against
closed-form references under an explicit error budget.  This module fixes
that record shape once, together with a canonical JSON encoding
(17-significant-digit floats, sorted keys, deterministic bytes) that the
command-line layer writes to disk and hashes into run manifests.  The pass
rule is enforced at construction, so a record cannot claim success outside
its declared band.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .pathsim import SeedSpec

__all__ = [
    "QuantityRecord",
    "StatReport",
    "canonical_json",
    "content_hash",
    "format_float",
]


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (lossless round-trip)."""
    if math.isnan(x) or math.isinf(x):
        return "null"  # JSON has no non-finite literals
    return format(float(x), ".17g")


def _encode(obj) -> str:
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (int, np.integer)):  # bools already handled above
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, dict):
        items = sorted(obj.items())
        body = ",".join(f"{json.dumps(k)}:{_encode(v)}" for k, v in items)
        return "{" + body + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, 17-digit floats, no whitespace."""
    return _encode(obj)


def content_hash(obj) -> str:
    """SHA-256 hex digest of the canonical JSON encoding."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class QuantityRecord:
    """One estimated quantity with its reference and error budget.

    When a reference is present, the pass flag is forced to
    |estimate - reference| <= se_multiplier * standard_error + bias_budget
    (terms with value None drop out); reference-free records carry a pass
    flag decided by the experiment, e.g. a monotone-trend check.
    """

    name: str
    estimate: float
    standard_error: float | None
    reference: float | None
    reference_provenance: str
    passed: bool
    se_multiplier: float = 3.0
    bias_budget: float = 0.0

    def __post_init__(self) -> None:
        if self.bias_budget < 0.0:
            raise ValueError("bias_budget must be nonnegative")
        if self.reference is not None:
            tol = self.bias_budget
            if self.standard_error is not None:
                tol += self.se_multiplier * self.standard_error
            ok = abs(self.estimate - self.reference) <= tol
            if self.passed != ok:
                raise ValueError(
                    f"record {self.name!r}: pass flag {self.passed} "
                    f"contradicts |{self.estimate} - {self.reference}| "
                    f"vs tolerance {tol}")

    @classmethod
    def compare(cls, name, estimate, standard_error, reference, provenance,
                *, se_multiplier: float = 3.0, bias_budget: float = 0.0):
        """Build a record whose pass flag follows from the declared budget."""
        tol = bias_budget
        if standard_error is not None:
            tol += se_multiplier * standard_error
        return cls(name=name, estimate=float(estimate),
                   standard_error=standard_error, reference=float(reference),
                   reference_provenance=provenance,
                   passed=bool(abs(estimate - reference) <= tol),
                   se_multiplier=se_multiplier, bias_budget=bias_budget)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "standard_error": self.standard_error,
            "reference": self.reference,
            "reference_provenance": self.reference_provenance,
            "pass": self.passed,
            "se_multiplier": self.se_multiplier,
            "bias_budget": self.bias_budget,
        }


@dataclass(frozen=True)
class StatReport:
    """Outcome of one experiment: records plus provenance of the run."""

    experiment: str
    records: tuple[QuantityRecord, ...]
    config_hash: str
    seed: SeedSpec | None = None
    runtime_s: float | None = None
    diagnostics: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        """True when there is at least one record and none failed."""
        return bool(self.records) and all(r.passed for r in self.records)

    def to_dict(self, *, include_runtime: bool = False) -> dict:
        # wall-clock is excluded by default so a rerun with the same seed
        # serializes to identical bytes; the manifest records the timing
        seed = None
        if self.seed is not None:
            seed = {"master_seed": self.seed.master_seed,
                    "stream_index": self.seed.stream_index}
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "records": [r.to_dict() for r in self.records],
            "seed": seed,
            "runtime_s": self.runtime_s if include_runtime else None,
            "pass": self.passed,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self, *, include_runtime: bool = False) -> str:
        return canonical_json(self.to_dict(include_runtime=include_runtime))
