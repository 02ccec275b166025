"""Ancestral diffusion sampling with an exact denoiser.

The data distribution is a Gaussian mixture with diagonal covariances, so the
ideal sample-prediction network ``E[x0 | x_t]`` has a closed form. This isolates
the effect of the initial latent: any bias in the generated samples comes from
the initialization, not from a learned model.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .analysis import marginal_wasserstein1, spatial_moments
from .rng import RngStream
from .sampler import (
    Hybrid,
    LeakModel,
    PixelGaussian,
    WhiteNoise,
    sample_initial_latent,
    sample_training_latent,
)
from .schedule import NoiseSchedule
from .stats import estimate_hybrid_stats, estimate_pixel_stats
from .tensor import as_tensor

FLUSH_BELOW = 1e-300
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True, eq=False)
class GmmComponent:
    weight: float
    mean: np.ndarray
    var: np.ndarray


@dataclass(frozen=True, eq=False)
class GmmDistribution:
    components: tuple[GmmComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        shape = self.components[0].mean.shape
        for k, c in enumerate(self.components):
            if not (0.0 < c.weight <= 1.0):
                raise ValueError(f"component {k}: weight {c.weight} outside (0, 1]")
            if c.mean.shape != shape or c.var.shape != shape:
                raise ValueError(f"component {k}: mean/var shapes differ from {shape}")
            if np.any(c.var < 0.0):
                raise ValueError(f"component {k}: negative variance")
        total = math.fsum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total}, expected 1")

    @classmethod
    def from_spec(cls, spec: Mapping) -> "GmmDistribution":
        """Build from ``{"shape": [C, H, W], "components": [{"weight", "mean", "var"}, ...]}``.

        ``mean`` and ``var`` may be scalars (broadcast over the shape) or nested
        lists of the full shape. ``shape`` defaults to ``[1, 1, 1]``.
        """
        shape = tuple(spec.get("shape", (1, 1, 1)))
        comps = []
        for c in spec["components"]:
            mean = np.broadcast_to(np.asarray(c["mean"], dtype=np.float64), shape).copy()
            var = np.broadcast_to(np.asarray(c["var"], dtype=np.float64), shape).copy()
            comps.append(GmmComponent(float(c["weight"]), as_tensor(mean, "mean"), as_tensor(var, "var")))
        return cls(tuple(comps))

    @classmethod
    def scalar(cls, *components: tuple[float, float, float]) -> "GmmDistribution":
        """Mixture over 1x1x1 tensors from ``(weight, mean, var)`` triples."""
        return cls.from_spec({"components": [{"weight": w, "mean": m, "var": v} for w, m, v in components]})

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.components[0].mean.shape

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean.reshape(-1) for c in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.stack([c.var.reshape(-1) for c in self.components])

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        """``n`` draws, shape ``(n, C, H, W)``: component uniforms first, then normals."""
        u = rng.uniform(n)
        z = rng.normal((n, int(np.prod(self.shape))))
        edges = np.cumsum(self.weights)
        k = np.minimum(np.searchsorted(edges, u, side="right"), len(self.components) - 1)
        x = self.means[k] + np.sqrt(self.variances[k]) * z
        return x.reshape((n, *self.shape))


def gmm_posterior_x0(q: GmmDistribution, x_t, alpha_bar: float):
    """Exact posterior mean ``E[x0 | x_t]`` when ``x_t = sqrt(ab) x0 + sqrt(1-ab) eps``.

    ``x_t`` may be a single ``(C, H, W)`` tensor or a batch ``(n, C, H, W)``.
    Returns ``(x0_hat, responsibilities)`` with responsibilities of shape
    ``(K,)`` or ``(n, K)``.
    """
    if not (0.0 < alpha_bar <= 1.0):
        raise ValueError(f"alpha_bar={alpha_bar} outside (0, 1]")
    x_t = np.asarray(x_t, dtype=np.float64)
    single = x_t.ndim == 3
    if x_t.shape[-3:] != q.shape:
        raise ValueError(f"x_t shape {x_t.shape} does not end with {q.shape}")
    x = x_t.reshape(-1, int(np.prod(q.shape)))

    sa = math.sqrt(alpha_bar)
    mu = q.means  # (K, D)
    v = q.variances
    s = alpha_bar * v + (1.0 - alpha_bar)  # marginal variance of x_t per component
    diff = x[:, None, :] - sa * mu[None]  # (n, K, D)
    loglik = -0.5 * np.sum(diff**2 / s + np.log(2.0 * math.pi * s), axis=-1)
    logw = np.log(q.weights)[None] + loglik
    resp = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    resp[resp < FLUSH_BELOW] = 0.0

    gain = sa * v / s
    per_comp = mu[None] + gain[None] * diff
    x0_hat = np.einsum("nk,nkd->nd", resp, per_comp)

    x0_hat = x0_hat.reshape(x_t.shape)
    return (x0_hat, resp[0]) if single else (x0_hat, resp)


class PredictionType(Enum):
    EPSILON = "epsilon"
    SAMPLE = "sample"
    VELOCITY = "velocity"


def convert_prediction(pred, kind: PredictionType, x_t, alpha_bar: float):
    """Map any network output parameterization to ``(x0_hat, eps_hat)``."""
    kind = PredictionType(kind)
    if not (0.0 < alpha_bar < 1.0):
        raise ValueError(f"alpha_bar={alpha_bar} must lie in (0, 1) for {kind.value} prediction")
    pred = np.asarray(pred, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    a = math.sqrt(alpha_bar)
    b = math.sqrt(1.0 - alpha_bar)
    if kind is PredictionType.SAMPLE:
        return pred, (x_t - a * pred) / b
    if kind is PredictionType.EPSILON:
        return (x_t - b * pred) / a, pred
    return a * x_t - b * pred, b * x_t + a * pred


def posterior_coeffs(s: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """Coefficients of ``q(x_{t-1} | x_t, x0)``: ``(c_x0, c_xt, variance)``."""
    if not (1 <= t <= s.T):
        raise ValueError(f"timestep t={t} outside [1, {s.T}]")
    ab_t = float(s.alpha_bars[t - 1])
    ab_prev = 1.0 if t == 1 else float(s.alpha_bars[t - 2])
    beta = float(s.betas[t - 1])
    alpha = float(s.alphas[t - 1])
    c_x0 = math.sqrt(ab_prev) * beta / (1.0 - ab_t)
    c_xt = math.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab_t)
    var = (1.0 - ab_prev) / (1.0 - ab_t) * beta
    return c_x0, c_xt, var


def ancestral_step(x_t, t: int, s: NoiseSchedule, x0_hat, rng: RngStream | None = None, noise=None):
    """Sample ``x_{t-1}`` given ``x_t`` and a clean estimate ``x0_hat``.

    Pass either ``rng`` or pre-drawn standard normal ``noise`` of the same
    shape. At ``t == 1`` the posterior mean is returned without noise.
    """
    c_x0, c_xt, var = posterior_coeffs(s, t)
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = c_x0 * np.asarray(x0_hat, dtype=np.float64) + c_xt * x_t
    if t == 1:
        return mean
    if noise is None:
        if rng is None:
            raise ValueError("ancestral_step needs rng or noise for t > 1")
        noise = rng.normal(x_t.shape)
    return mean + math.sqrt(var) * noise


class Oracle:
    """Initialization from forward-noised fresh draws of the true data distribution."""

    name = "oracle"

    def __repr__(self):
        return "Oracle()"


Init = Union[LeakModel, Oracle]


def _initial_latent(s: NoiseSchedule, q: GmmDistribution, init: Init, rng: RngStream) -> np.ndarray:
    if isinstance(init, Oracle):
        x0 = q.sample(1, rng)[0]
        return sample_training_latent(s, x0, s.T, rng)
    return sample_initial_latent(s, init, q.shape, rng)


def generate(s: NoiseSchedule, q: GmmDistribution, init: Init, n_samples: int, rng: RngStream) -> np.ndarray:
    """Run the full reverse chain ``n_samples`` times; returns ``(n, C, H, W)``.

    Sample ``i`` consumes only ``rng.spawn(i)``: first its initial latent, then
    the step noise for ``t = T, ..., 2`` in order.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    shape = q.shape
    d = int(np.prod(shape))
    chunk = max(1, _CHUNK_ELEMENTS // max(1, d * s.T))
    out = np.empty((n_samples, *shape))
    for start in range(0, n_samples, chunk):
        idx = range(start, min(start + chunk, n_samples))
        x = np.empty((len(idx), *shape))
        noise = np.empty((len(idx), max(s.T - 1, 0), *shape))
        for j, i in enumerate(idx):
            stream = rng.spawn(i)
            x[j] = _initial_latent(s, q, init, stream)
            noise[j] = stream.normal((s.T - 1, *shape))
        for t in range(s.T, 0, -1):
            x0_hat, _ = gmm_posterior_x0(q, x, float(s.alpha_bars[t - 1]))
            step_noise = noise[:, s.T - t] if t > 1 else None
            x = ancestral_step(x, t, s, x0_hat, noise=step_noise)
        out[start : start + len(idx)] = x
    return out


@dataclass(eq=False)
class ModeResult:
    mode: str
    wasserstein1: float
    sample_mean: list[float]
    sample_std: list[float]
    n_samples: int
    samples: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "wasserstein1": self.wasserstein1,
            "sample_mean": self.sample_mean,
            "sample_std": self.sample_std,
            "n_samples": self.n_samples,
        }


@dataclass(eq=False)
class BiasReport:
    modes: list[ModeResult]

    def __getitem__(self, name: str) -> ModeResult:
        for m in self.modes:
            if m.mode == name:
                return m
        raise KeyError(name)

    def w1(self, name: str) -> float:
        return self[name].wasserstein1

    def to_json(self) -> str:
        return json.dumps({"modes": [m.to_dict() for m in self.modes]}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "w1", "mean", "std", "n"])
        for m in self.modes:
            mean = float(np.mean(m.sample_mean))
            std = float(np.mean(m.sample_std))
            w.writerow([m.mode, repr(m.wasserstein1), repr(mean), repr(std), m.n_samples])
        return buf.getvalue()


def _named_inits(inits) -> list[tuple[str, Init]]:
    if isinstance(inits, Mapping):
        return list(inits.items())
    named = []
    seen: dict[str, int] = {}
    for init in inits:
        base = init.name
        seen[base] = seen.get(base, 0) + 1
        named.append((base if seen[base] == 1 else f"{base}-{seen[base]}", init))
    return named


def run_bias_experiment(
    s: NoiseSchedule,
    q: GmmDistribution,
    inits: Sequence[Init] | Mapping[str, Init],
    n_samples: int,
    rng: RngStream,
) -> BiasReport:
    """Generate ``n_samples`` per init mode and score each against fresh draws of ``q``.

    The score is the per-element Wasserstein-1 distance, averaged over elements.
    Include :class:`Oracle` in ``inits`` to get the realigned reference mode.
    Mode ``m`` uses ``rng.spawn(1, m)``; the reference draws use ``rng.spawn(0)``.
    """
    reference = q.sample(n_samples, rng.spawn(0))
    results = []
    for m, (name, init) in enumerate(_named_inits(inits)):
        samples = generate(s, q, init, n_samples, rng.spawn(1, m))
        flat = samples.reshape(n_samples, -1)
        results.append(
            ModeResult(
                mode=name,
                wasserstein1=marginal_wasserstein1(samples, reference),
                sample_mean=flat.mean(axis=0).tolist(),
                sample_std=flat.std(axis=0).tolist(),
                n_samples=n_samples,
                samples=samples,
            )
        )
    return BiasReport(results)


def per_sample_rows(report: BiasReport) -> list[tuple]:
    """``(mode, sample_id, spatial_mean, spatial_std)`` for every generated sample."""
    rows = []
    for m in report.modes:
        means, stds = spatial_moments(m.samples)
        rows.extend((m.mode, i, float(a), float(b)) for i, (a, b) in enumerate(zip(means, stds)))
    return rows


INIT_MODES = ("white", "oracle", "pixel", "hybrid")


def build_init(mode: str, q: GmmDistribution, rng: RngStream, n_fit: int = 500, n_lowest: int = 1, ridge: float = 1e-4) -> Init:
    """Named init mode; ``pixel``/``hybrid`` are estimated from ``n_fit`` draws of ``q``."""
    if mode == "white":
        return WhiteNoise()
    if mode == "oracle":
        return Oracle()
    if mode in ("pixel", "hybrid"):
        fit = list(q.sample(n_fit, rng))
        if mode == "pixel":
            return PixelGaussian(estimate_pixel_stats(fit))
        return Hybrid(estimate_hybrid_stats(fit, n_lowest, ridge))
    raise ValueError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")


def simulate_modes(
    s: NoiseSchedule,
    q: GmmDistribution,
    modes: Sequence[str],
    n_samples: int,
    seed: int,
    n_fit: int = 500,
    n_lowest: int = 1,
    ridge: float = 1e-4,
    extra: Mapping[str, Init] | None = None,
) -> BiasReport:
    """Bias experiment over named modes with a fixed stream layout.

    Mode ``m`` is fitted from ``RngStream(seed).spawn(2, m)`` and generated
    as in :func:`run_bias_experiment`. ``extra`` inits are appended after the
    named modes.
    """
    rng = RngStream(seed)
    inits: dict[str, Init] = {}
    for m, name in enumerate(modes):
        inits[name] = build_init(name, q, rng.spawn(2, m), n_fit=n_fit, n_lowest=n_lowest, ridge=ridge)
    inits.update(extra or {})
    return run_bias_experiment(s, q, inits, n_samples, rng)
