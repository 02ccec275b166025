"""Discrete-time noise schedules.

A schedule holds the per-step corruption rates ``betas`` together with
``alphas = 1 - betas`` and their running product ``alpha_bars``. Timesteps are
1-indexed in every public function (``t`` in ``[1, T]``) and 0-indexed in the
stored arrays, so ``alpha_bars[t - 1]`` is the cumulative product up to ``t``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import brentq


class ParameterError(ValueError):
    """Raised when a schedule parameter is outside its domain."""

    def __init__(self, name: str, value, reason: str):
        self.name = name
        self.value = value
        super().__init__(f"invalid {name}={value!r}: {reason}")


def _check_open_unit(name: str, value: float) -> None:
    if not (0.0 < value < 1.0) or not math.isfinite(value):
        raise ParameterError(name, value, "must lie in (0, 1)")


@dataclass(frozen=True)
class LinearBeta:
    """betas linearly spaced from ``beta_start`` to ``beta_end``."""

    beta_start: float = 1e-4
    beta_end: float = 0.02
    name = "linear"

    def validate(self) -> None:
        _check_open_unit("beta_start", self.beta_start)
        _check_open_unit("beta_end", self.beta_end)
        if self.beta_start > self.beta_end:
            raise ParameterError("beta_start", self.beta_start, "must not exceed beta_end")

    def betas(self, T: int) -> np.ndarray:
        return np.linspace(self.beta_start, self.beta_end, T, dtype=np.float64)


@dataclass(frozen=True)
class ScaledLinear:
    """sqrt(beta) linearly spaced, then squared (the latent-diffusion schedule)."""

    beta_start: float = 0.00085
    beta_end: float = 0.012
    name = "scaled-linear"

    def validate(self) -> None:
        _check_open_unit("beta_start", self.beta_start)
        _check_open_unit("beta_end", self.beta_end)
        if self.beta_start > self.beta_end:
            raise ParameterError("beta_start", self.beta_start, "must not exceed beta_end")

    def betas(self, T: int) -> np.ndarray:
        root = np.linspace(math.sqrt(self.beta_start), math.sqrt(self.beta_end), T, dtype=np.float64)
        return root * root


@dataclass(frozen=True)
class SquaredCosine:
    """Capped squared-cosine schedule defined through alpha_bar(t)."""

    s_offset: float = 0.008
    beta_clip: float = 0.999
    name = "squared-cosine"

    def validate(self) -> None:
        if not (self.s_offset >= 0.0) or not math.isfinite(self.s_offset):
            raise ParameterError("s_offset", self.s_offset, "must be a finite value >= 0")
        _check_open_unit("beta_clip", self.beta_clip)

    def betas(self, T: int) -> np.ndarray:
        s = self.s_offset

        def f(t):
            return np.cos((t / T + s) / (1.0 + s) * math.pi / 2.0) ** 2

        steps = np.arange(T + 1, dtype=np.float64)
        ab = f(steps) / f(0.0)
        betas = 1.0 - ab[1:] / ab[:-1]
        return np.minimum(betas, self.beta_clip)


@dataclass(frozen=True)
class SigmoidBeta:
    """Logistic curve over ``[-logit_span, logit_span]`` rescaled to the beta range."""

    beta_start: float = 1e-4
    beta_end: float = 0.02
    logit_span: float = 6.0
    name = "sigmoid"

    def validate(self) -> None:
        _check_open_unit("beta_start", self.beta_start)
        _check_open_unit("beta_end", self.beta_end)
        if self.beta_start > self.beta_end:
            raise ParameterError("beta_start", self.beta_start, "must not exceed beta_end")
        if not (self.logit_span > 0.0) or not math.isfinite(self.logit_span):
            raise ParameterError("logit_span", self.logit_span, "must be positive")

    def betas(self, T: int) -> np.ndarray:
        grid = np.linspace(-self.logit_span, self.logit_span, T, dtype=np.float64)
        return 1.0 / (1.0 + np.exp(-grid)) * (self.beta_end - self.beta_start) + self.beta_start


ScheduleKind = Union[LinearBeta, ScaledLinear, SquaredCosine, SigmoidBeta]

KINDS = {cls.name: cls for cls in (LinearBeta, ScaledLinear, SquaredCosine, SigmoidBeta)}


def make_kind(name: str, **params) -> ScheduleKind:
    """Build a schedule kind from its CLI/JSON name, ignoring ``None`` params."""
    try:
        cls = KINDS[name]
    except KeyError:
        raise ParameterError("kind", name, f"expected one of {sorted(KINDS)}") from None
    fields = cls.__dataclass_fields__
    kwargs = {k: float(v) for k, v in params.items() if v is not None and k in fields}
    unknown = [k for k, v in params.items() if v is not None and k not in fields]
    if unknown:
        raise ParameterError(unknown[0], params[unknown[0]], f"not a parameter of {name}")
    return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    kind: ScheduleKind
    T: int
    betas: np.ndarray = field(repr=False)
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.T == other.T
            and np.array_equal(self.betas, other.betas)
            and np.array_equal(self.alpha_bars, other.alpha_bars)
        )

    @property
    def alpha_bar_final(self) -> float:
        return float(self.alpha_bars[-1])

    def alpha_bar(self, t: int) -> float:
        """alpha_bar at 1-indexed ``t``; ``alpha_bar(0)`` is 1 by convention."""
        if t == 0:
            return 1.0
        _check_timestep(self, t)
        return float(self.alpha_bars[t - 1])

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind.name, "params": asdict(self.kind), "T": self.T, "betas": self.betas.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        doc = json.loads(text)
        kind = make_kind(doc["kind"], **doc["params"])
        kind.validate()
        return from_betas(kind, np.asarray(doc["betas"], dtype=np.float64), T=int(doc["T"]))


def _check_timestep(s: NoiseSchedule, t: int) -> None:
    if not isinstance(t, (int, np.integer)) or not (1 <= t <= s.T):
        raise ValueError(f"timestep t={t!r} outside [1, {s.T}]")


def from_betas(kind: ScheduleKind, betas: np.ndarray, T: int | None = None) -> NoiseSchedule:
    """Assemble a schedule from explicit betas, checking every invariant."""
    betas = np.array(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size == 0:
        raise ParameterError("betas", betas.shape, "must be a non-empty 1-D array")
    if T is not None and T != betas.size:
        raise ParameterError("T", T, f"does not match {betas.size} betas")
    if not np.all((betas > 0.0) & (betas < 1.0)):
        raise ParameterError("betas", "...", "every beta must lie in (0, 1)")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    if not (alpha_bars[-1] > 0.0):
        raise ParameterError("betas", "...", "alpha_bar underflows to 0")
    if np.any(np.diff(alpha_bars) >= 0.0):
        raise ParameterError("betas", "...", "alpha_bars must be strictly decreasing")
    for arr in (betas, alphas, alpha_bars):
        arr.setflags(write=False)
    return NoiseSchedule(kind=kind, T=int(betas.size), betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def build_schedule(kind: ScheduleKind, T: int) -> NoiseSchedule:
    """Construct the ``T``-step schedule for ``kind``.

    Raises:
        ParameterError: if ``T`` or any kind parameter is out of domain.
    """
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 1:
        raise ParameterError("T", T, "must be a positive integer")
    kind.validate()
    return from_betas(kind, kind.betas(int(T)))


def snr_global(s: NoiseSchedule) -> float:
    """Terminal signal-to-noise ratio ``alpha_bar_T / (1 - alpha_bar_T)``."""
    ab = s.alpha_bar_final
    return ab / (1.0 - ab)


def truncate(s: NoiseSchedule, T_eff: int) -> NoiseSchedule:
    """Keep the first ``T_eff`` steps, e.g. to model a sampler starting at t=981."""
    if isinstance(T_eff, bool) or not isinstance(T_eff, (int, np.integer)) or not (1 <= T_eff <= s.T):
        raise ValueError(f"T_eff={T_eff!r} outside [1, {s.T}]")
    if T_eff == s.T:
        return s
    return from_betas(s.kind, s.betas[:T_eff])


def marginal_coeffs(s: NoiseSchedule, t: int) -> tuple[float, float]:
    """Return ``(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))`` for 1-indexed ``t``."""
    _check_timestep(s, t)
    ab = float(s.alpha_bars[t - 1])
    return math.sqrt(ab), math.sqrt(1.0 - ab)


def fit_terminal_alpha_bar(kind: ScheduleKind, T: int, target: float) -> NoiseSchedule:
    """Solve for ``beta_end`` so that the schedule ends at ``alpha_bar_T == target``.

    Only kinds with a ``beta_end`` parameter can be fitted. Used to build the
    accentuated-leak schedules of the simulator (e.g. 100 steps ending at 0.25).
    """
    _check_open_unit("target", target)
    if not hasattr(kind, "beta_end"):
        raise ParameterError("kind", kind.name, "has no beta_end to fit")

    def residual(beta_end: float) -> float:
        k = type(kind)(**{**asdict(kind), "beta_end": beta_end})
        return float(np.sum(np.log1p(-k.betas(T)))) - math.log(target)

    lo, hi = kind.beta_start, 1.0 - 1e-12
    if residual(lo) < 0.0:
        raise ParameterError("target", target, "unreachable: beta_start alone already decays below it")
    if residual(hi) > 0.0:
        raise ParameterError("target", target, "unreachable with beta_end < 1")
    beta_end = brentq(residual, lo, hi, xtol=1e-15, rtol=1e-15)
    fitted = type(kind)(**{**asdict(kind), "beta_end": beta_end})
    return build_schedule(fitted, T)


def accentuated_schedule(T: int = 100, alpha_bar_final: float = 0.25) -> NoiseSchedule:
    """Short linear-beta schedule with a deliberately strong terminal leak."""
    return fit_terminal_alpha_bar(LinearBeta(beta_start=1e-4, beta_end=0.02), T, alpha_bar_final)
