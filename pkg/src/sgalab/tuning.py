"""Tuning configuration for the stochastic-gradient family.

A tuning names the polynomial-in-n schedules for step size, batch size and
inverse temperature through (exponent, constant) pairs::

    step size     h(n)    = c_h * n**(-frak_h)
    batch size    b(n)    = floor(c_b * n**frak_b)
    inverse temp  beta(n) = c_beta * n**frak_t      (infinite = no noise)

plus the preconditioner, the noise shape matrix, the batch sampling policy,
the algorithm variant (plain, momentum with a mass matrix, or
control-variate), an optional coordinate box, and the run seed.  Infinite
temperature is expressed either as ``frak_t = inf`` or ``c_beta = inf``;
both mean the Gaussian innovation term is omitted entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import ConfigError

WITH_REPLACEMENT = "with_replacement"
WITHOUT_REPLACEMENT = "without_replacement"
POLICIES = (WITH_REPLACEMENT, WITHOUT_REPLACEMENT)

PLAIN = "plain"
MOMENTUM = "momentum"
CONTROL_VARIATE = "control_variate"
VARIANTS = (PLAIN, MOMENTUM, CONTROL_VARIATE)


def _check_spd(name: str, m: np.ndarray, semi: bool = False) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-10 * (1.0 + np.abs(m).max())):
        raise ConfigError(f"{name} must be symmetric")
    vals = np.linalg.eigvalsh(0.5 * (m + m.T))
    floor_ = -1e-10 * max(vals[-1], 1.0) if semi else 1e-12
    if (vals[0] < floor_) if semi else (vals[0] <= 0.0):
        kind = "positive semi-definite" if semi else "positive definite"
        raise ConfigError(f"{name} must be {kind} (min eigenvalue {vals[0]:.3e})")
    return m


@dataclass
class TuningConfig:
    """Full description of one algorithm instance; validated on creation."""

    frak_h: float = 1.0
    frak_b: float = 0.0
    frak_t: float = math.inf
    c_h: float = 1.0
    c_b: float = 1.0
    c_beta: float = 1.0
    gamma: np.ndarray | None = None
    lam: np.ndarray | None = None
    policy: str = WITH_REPLACEMENT
    variant: str = PLAIN
    mass: np.ndarray | None = None
    boundary: tuple[np.ndarray, np.ndarray] | None = None
    seed: int = 0
    labels: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("frak_h", "frak_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if math.isnan(self.frak_t):
            raise ConfigError("frak_t must be a real number or +inf")
        for name in ("c_h", "c_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ConfigError(f"{name} must be finite and > 0, got {v}")
        if not self.c_beta > 0.0:
            raise ConfigError(f"c_beta must be > 0 (possibly inf), got {self.c_beta}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.gamma is not None:
            self.gamma = np.asarray(self.gamma, dtype=float)
            if self.gamma.ndim != 2 or self.gamma.shape[0] != self.gamma.shape[1]:
                raise ConfigError("gamma must be a square matrix")
        if self.lam is not None:
            self.lam = _check_spd("lambda (noise shape)", self.lam, semi=True)
        if self.mass is not None:
            self.mass = _check_spd("mass matrix", self.mass)
        if self.mass is not None and self.variant != MOMENTUM:
            raise ConfigError("a mass matrix is only meaningful for the momentum variant")
        if self.boundary is not None:
            lo = np.asarray(self.boundary[0], dtype=float)
            hi = np.asarray(self.boundary[1], dtype=float)
            if lo.shape != hi.shape or lo.ndim != 1:
                raise ConfigError("boundary must be a pair of equal-length vectors")
            if not np.all(lo < hi):
                raise ConfigError("boundary must satisfy lo < hi coordinatewise")
            self.boundary = (lo, hi)
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)

    # ---- schedule evaluation -------------------------------------------

    @property
    def temperature_exponent(self) -> float:
        """Effective temperature exponent: +inf whenever the noise is off."""
        return math.inf if math.isinf(self.c_beta) else self.frak_t

    @property
    def has_noise(self) -> bool:
        """Whether the Gaussian innovation term is present at all."""
        return not math.isinf(self.temperature_exponent)

    def step_size(self, n: int) -> float:
        return self.c_h * float(n) ** (-self.frak_h)

    def batch_size(self, n: int) -> int:
        b = math.floor(self.c_b * float(n) ** self.frak_b)
        if b < 1:
            raise ConfigError(
                f"batch schedule gives b = {b} < 1 at n = {n};"
                " increase c_b or frak_b"
            )
        if b > n:
            raise ConfigError(f"batch schedule gives b = {b} > n = {n}")
        return b

    def inverse_temperature(self, n: int) -> float:
        if not self.has_noise:
            return math.inf
        return self.c_beta * float(n) ** self.frak_t

    def steps_per_epoch(self, n: int) -> float:
        """One epoch is n/b iterations (need not be an integer)."""
        return n / self.batch_size(n)

    def epochs_to_steps(self, n: int, epochs: float) -> int:
        return max(1, int(round(epochs * self.steps_per_epoch(n))))

    def with_seed(self, seed: int) -> "TuningConfig":
        return replace(self, seed=int(seed))

    # ---- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready dictionary; infinities become the string 'inf'."""

        def num(v: float) -> Any:
            return "inf" if math.isinf(v) else float(v)

        out: dict[str, Any] = {
            "frak_h": num(self.frak_h),
            "frak_b": num(self.frak_b),
            "frak_t": num(self.frak_t),
            "c_h": num(self.c_h),
            "c_b": num(self.c_b),
            "c_beta": num(self.c_beta),
            "policy": self.policy,
            "variant": self.variant,
            "seed": self.seed,
        }
        for name in ("gamma", "lam", "mass"):
            v = getattr(self, name)
            out[name] = None if v is None else np.asarray(v).tolist()
        out["boundary"] = (
            None
            if self.boundary is None
            else [self.boundary[0].tolist(), self.boundary[1].tolist()]
        )
        out["labels"] = dict(self.labels)
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TuningConfig":
        def num(v: Any) -> float:
            return math.inf if v == "inf" else float(v)

        kwargs: dict[str, Any] = {
            "frak_h": num(d["frak_h"]),
            "frak_b": num(d["frak_b"]),
            "frak_t": num(d["frak_t"]),
            "c_h": num(d["c_h"]),
            "c_b": num(d["c_b"]),
            "c_beta": num(d["c_beta"]),
            "policy": d.get("policy", WITH_REPLACEMENT),
            "variant": d.get("variant", PLAIN),
            "seed": int(d.get("seed", 0)),
            "labels": dict(d.get("labels", {})),
        }
        for name in ("gamma", "lam", "mass"):
            v = d.get(name)
            kwargs[name] = None if v is None else np.asarray(v, dtype=float)
        bnd = d.get("boundary")
        kwargs["boundary"] = (
            None if bnd is None else (np.asarray(bnd[0], float), np.asarray(bnd[1], float))
        )
        return cls(**kwargs)


def sgd_tuning(**kwargs) -> TuningConfig:
    """Convenience constructor for noiseless runs (infinite temperature)."""
    kwargs.setdefault("frak_t", math.inf)
    return TuningConfig(**kwargs)
