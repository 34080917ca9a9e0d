"""Calibrate-freeze-validate protocol for inequalities with unknown constants.

A constant is fitted as the largest ratio observed on a training set,
multiplied by a safety factor, and then frozen.  Validation asserts the
inequality with the frozen value on inputs that were not used for fitting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SAFETY = 2.0


@dataclass(frozen=True)
class FrozenConstant:
    name: str
    value: float
    training_max: float
    n_training: int
    safety: float
    log_scale: bool = False

    def as_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value),
                "training_max": float(self.training_max), "n_training": self.n_training,
                "safety": self.safety, "log_scale": self.log_scale}


@dataclass(frozen=True)
class ValidationResult:
    constant: FrozenConstant
    worst: float
    n_validation: int
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.n_validation > 0

    def as_dict(self) -> dict:
        return {"constant": self.constant.as_dict(), "worst": float(self.worst),
                "n_validation": self.n_validation, "violations": self.violations,
                "pass": self.passed}


def calibrate(name: str, ratios, safety: float = DEFAULT_SAFETY,
              log_scale: bool = False) -> FrozenConstant:
    """Freeze ``safety * max(ratios)``.

    With ``log_scale`` the ratios are base-10 logarithms and the safety factor
    is applied as ``+ log10(safety)``.
    """
    r = np.asarray(list(ratios), dtype=float)
    if r.size == 0:
        raise ValueError(f"no training data for {name}")
    if not np.all(np.isfinite(r)):
        raise ValueError(f"non-finite training ratio for {name}")
    top = float(r.max())
    value = top + np.log10(safety) if log_scale else safety * max(top, 0.0)
    return FrozenConstant(name, float(value), top, int(r.size), safety, log_scale)


def validate(constant: FrozenConstant, ratios) -> ValidationResult:
    r = np.asarray(list(ratios), dtype=float)
    bad = int(np.sum(~(r <= constant.value)))
    worst = float(r.max()) if r.size else float("nan")
    return ValidationResult(constant, worst, int(r.size), bad)


def drift(a: float, b: float) -> float:
    """Relative drift ``|a - b| / min(a, b)`` between two fitted constants."""
    lo = min(abs(a), abs(b))
    if lo == 0:
        return 0.0 if a == b else float("inf")
    return abs(a - b) / lo


def within_factor(values, factor: float) -> bool:
    v = np.abs(np.asarray(list(values), dtype=float))
    if v.size == 0 or v.min() == 0:
        return bool(v.size and v.max() == 0)
    return bool(v.max() / v.min() <= factor)
