"""Command-line interface.

Exit codes: 0 ok, 2 usage / bad parameters, 3 I/O, 4 numerical failure.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import click
import numpy as np

from . import io as slt_io
from .analysis import brightness_summary, lowfreq_recovery, spatial_moments
from .rng import RngStream
from .sampler import CovarianceError, Hybrid, ManualLF, PixelGaussian, WhiteNoise, sample_initial_latent
from .schedule import KINDS, ParameterError, build_schedule, fit_terminal_alpha_bar, make_kind, marginal_coeffs, snr_global, truncate
from .sim import INIT_MODES, GmmDistribution, per_sample_rows, simulate_modes
from .stats import DEFAULT_RIDGE, HybridStats, PixelStats, estimate_hybrid_stats, estimate_pixel_stats

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

INPUT_SUFFIXES = (".slt", ".ppm", ".pgm")


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def schedule_options(fn):
    opts = [
        click.option("--kind", type=click.Choice(sorted(KINDS)), default="scaled-linear", show_default=True),
        click.option("--t-max", type=int, default=1000, show_default=True, help="Number of timesteps T."),
        click.option("--beta-start", type=float, default=None),
        click.option("--beta-end", type=float, default=None),
        click.option("--s-offset", type=float, default=None, help="squared-cosine offset."),
        click.option("--beta-clip", type=float, default=None, help="squared-cosine beta cap."),
        click.option("--logit-span", type=float, default=None, help="sigmoid grid half-width."),
        click.option("--terminal-alpha-bar", type=float, default=None, help="Fit beta_end so alpha_bar_T equals this."),
        click.option("--t-eff", type=int, default=None, help="Truncate to the first T_eff steps."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


_SCHEDULE_KEYS = ("kind", "t_max", "beta_start", "beta_end", "s_offset", "beta_clip", "logit_span", "terminal_alpha_bar", "t_eff")


def _pop_schedule(kwargs: dict):
    """Remove schedule flags from ``kwargs``; return the schedule and the flags."""
    flags = {k: kwargs.pop(k) for k in _SCHEDULE_KEYS}
    try:
        kind = make_kind(
            flags["kind"],
            beta_start=flags["beta_start"],
            beta_end=flags["beta_end"],
            s_offset=flags["s_offset"],
            beta_clip=flags["beta_clip"],
            logit_span=flags["logit_span"],
        )
        if flags["terminal_alpha_bar"] is not None:
            s = fit_terminal_alpha_bar(kind, flags["t_max"], flags["terminal_alpha_bar"])
        else:
            s = build_schedule(kind, flags["t_max"])
        if flags["t_eff"] is not None:
            s = truncate(s, flags["t_eff"])
    except (ParameterError, ValueError) as exc:
        raise click.UsageError(str(exc)) from None
    return s, flags


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None


def _parse_shape(text: str) -> tuple[int, int, int]:
    try:
        shape = tuple(int(v) for v in text.split(","))
    except ValueError:
        shape = ()
    if len(shape) != 3 or min(shape) < 1:
        raise click.UsageError(f"--shape must be C,H,W with positive integers, got {text!r}")
    return shape


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_inputs(directory: str, suffixes=INPUT_SUFFIXES) -> tuple[list[Path], list[np.ndarray]]:
    root = Path(directory)
    if not root.is_dir():
        raise CliError(f"input directory {directory!r} does not exist", EXIT_IO)
    paths = sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in suffixes)
    if not paths:
        raise CliError(f"no {'/'.join(suffixes)} files in {directory!r}", EXIT_IO)
    tensors = []
    for p in paths:
        try:
            x = slt_io.read_tensor(p) if p.suffix.lower() == ".slt" else slt_io.read_pnm(p)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read {p}: {exc}", EXIT_IO) from None
        if x.ndim != 3:
            raise CliError(f"{p}: expected a C,H,W tensor, got {x.ndim} dims", EXIT_IO)
        tensors.append(np.asarray(x, dtype=np.float64))
    shape = tensors[0].shape
    for p, x in zip(paths, tensors):
        if x.shape != shape:
            raise CliError(f"{p}: shape {x.shape} differs from {shape}", EXIT_IO)
    return paths, tensors


def _numeric_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CovarianceError as exc:
            raise CliError(f"{exc} (hint: raise --ridge when estimating)", EXIT_NUMERIC) from None

    return wrapper


@click.group()
@click.version_option(_version(), prog_name="signal-leak")
def main():
    """Signal-leak analysis and leak-injected initial latents for diffusion models."""


@main.command("schedule-info")
@schedule_options
@click.option("--t", "t", type=int, default=None, help="Also report marginal coefficients at this timestep.")
def schedule_info(t, **kwargs):
    """Print terminal leak strength of a noise schedule as JSON."""
    s, _ = _pop_schedule(kwargs)
    a, b = marginal_coeffs(s, s.T)
    doc = {
        "kind": s.kind.name,
        "T": s.T,
        "sqrt_alpha_bar_T": a,
        "sqrt_one_minus_alpha_bar_T": b,
        "snr": snr_global(s),
    }
    if t is not None:
        if not (1 <= t <= s.T):
            raise click.UsageError(f"--t must lie in [1, {s.T}]")
        at, bt = marginal_coeffs(s, t)
        doc.update({"t": t, "sqrt_alpha_bar_t": at, "sqrt_one_minus_alpha_bar_t": bt})
    click.echo(json.dumps(doc, indent=2))


@main.command()
@click.option("--input", "input_dir", required=True, help="Directory of .slt/.ppm/.pgm files.")
@click.option("--mode", type=click.Choice(["pixel", "hybrid"]), default="pixel", show_default=True)
@click.option("--n-lowest", "-N", "n_lowest", type=int, default=3, show_default=True, help="LF coefficients per channel (hybrid).")
@click.option("--ridge", type=float, default=DEFAULT_RIDGE, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output stats JSON.")
def estimate(input_dir, mode, n_lowest, ridge, out):
    """Estimate the leak distribution of a set of target tensors/images."""
    if ridge < 0:
        raise click.UsageError("--ridge must be non-negative")
    paths, tensors = _load_inputs(input_dir)
    _, h, w = tensors[0].shape
    header = {"n_images": len(tensors), "inputs": [p.name for p in paths]}
    if mode == "pixel":
        stats = estimate_pixel_stats(tensors)
    else:
        if not (1 <= n_lowest <= h * w):
            raise click.UsageError(f"-N must lie in [1, {h * w}]")
        stats = estimate_hybrid_stats(tensors, n_lowest, ridge)
    try:
        slt_io.write_stats(out, stats, **header)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}", EXIT_IO) from None
    click.echo(f"wrote {mode} stats from {len(tensors)} inputs to {out}")


@main.command("sample-init")
@click.option("--stats", "stats_path", default=None, help="Stats JSON from `estimate`.")
@click.option("--white", is_flag=True, help="White-noise leak (the standard initialization).")
@click.option("--manual-lf", default=None, help="Per-channel brightness levels, e.g. 0,1,0,0 (needs hybrid --stats).")
@schedule_options
@click.option("--shape", default=None, help="C,H,W (required with --white).")
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dtype", type=click.Choice(["float32", "float64"]), default="float32", show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_numeric_errors
def sample_init(stats_path, white, manual_lf, shape, count, seed, dtype, out, **kwargs):
    """Write leak-injected initial latents as .slt files."""
    s, sched_flags = _pop_schedule(kwargs)
    if count < 1:
        raise click.UsageError("--count must be positive")
    if white == (stats_path is not None) and manual_lf is None:
        raise click.UsageError("pass exactly one of --white or --stats (optionally with --manual-lf)")
    if white and (stats_path is not None or manual_lf is not None):
        raise click.UsageError("--white cannot be combined with --stats/--manual-lf")

    stats = None
    if stats_path is not None:
        try:
            stats = slt_io.read_stats(stats_path)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot read stats {stats_path}: {exc}", EXIT_IO) from None

    if white:
        if shape is None:
            raise click.UsageError("--white needs --shape")
        model, shape = WhiteNoise(), _parse_shape(shape)
    elif manual_lf is not None:
        if not isinstance(stats, HybridStats):
            raise click.UsageError("--manual-lf needs hybrid --stats for the HF part")
        try:
            model = ManualLF.from_levels(_parse_floats(manual_lf, "--manual-lf"), stats.hf, stats.lf.mask)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from None
    elif isinstance(stats, PixelStats):
        model = PixelGaussian(stats)
    elif isinstance(stats, HybridStats):
        model = Hybrid(stats)
    else:
        raise click.UsageError("--stats must be a pixel or hybrid stats file")

    if not white:
        fitted = tuple(stats.shape)
        if shape is not None and _parse_shape(shape) != fitted:
            raise click.UsageError(f"--shape {shape} does not match stats shape {fitted}")
        shape = fitted

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RngStream(seed)
    files = []
    for i in range(count):
        x = sample_initial_latent(s, model, shape, rng.spawn(i))
        name = f"sample_{i:05d}.slt"
        slt_io.write_tensor(out_dir / name, x, dtype)
        files.append(name)
    manifest = {
        "command": "sample-init",
        "version": _version(),
        "model": model.name,
        "stats": stats_path,
        "stats_sha256": _file_digest(Path(stats_path)) if stats_path else None,
        "manual_lf": _parse_floats(manual_lf, "--manual-lf") if manual_lf else None,
        "schedule": sched_flags,
        "alpha_bar_T": s.alpha_bar_final,
        "shape": list(shape),
        "count": count,
        "seed": seed,
        "dtype": dtype,
        "rng": "philox4x64 keyed by (seed, sample index); inverse-CDF normals",
        "files": files,
    }
    _write_json(out_dir / "manifest.json", manifest)
    click.echo(f"wrote {count} initial latents to {out_dir}")


@main.command()
@click.option("--gmm", "gmm_path", required=True, help="GMM spec JSON: {shape, components: [{weight, mean, var}]}.")
@schedule_options
@click.option("--modes", default="white,oracle,pixel", show_default=True, help=f"Comma list from {', '.join(INIT_MODES)}.")
@click.option("--manual-lf", "manual_lf", multiple=True, help="Extra mode with fixed per-channel levels; repeatable.")
@click.option("--n-samples", type=int, default=10_000, show_default=True)
@click.option("--n-fit", type=int, default=500, show_default=True, help="q draws used to estimate pixel/hybrid leaks.")
@click.option("--n-lowest", "-N", "n_lowest", type=int, default=1, show_default=True)
@click.option("--ridge", type=float, default=DEFAULT_RIDGE, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_numeric_errors
def simulate(gmm_path, modes, manual_lf, n_samples, n_fit, n_lowest, ridge, seed, out, **kwargs):
    """Run the signal-leak bias experiment on a known Gaussian mixture."""
    s, sched_flags = _pop_schedule(kwargs)
    try:
        spec = json.loads(Path(gmm_path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {gmm_path}: {exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"bad GMM spec: {exc}") from None
    try:
        q = GmmDistribution.from_spec(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise click.UsageError(f"bad GMM spec: {exc}") from None
    if n_samples < 1 or n_fit < 1:
        raise click.UsageError("--n-samples and --n-fit must be positive")

    names = [m.strip() for m in modes.split(",") if m.strip()]
    unknown = [m for m in names if m not in INIT_MODES]
    if unknown or not (names or manual_lf):
        raise click.UsageError(f"--modes must list modes from {INIT_MODES}")
    _, h, w = q.shape
    if not (1 <= n_lowest <= h * w):
        raise click.UsageError(f"-N must lie in [1, {h * w}]")

    rng = RngStream(seed)
    extra = {}
    for j, levels in enumerate(manual_lf):
        hf_fit = estimate_hybrid_stats(list(q.sample(n_fit, rng.spawn(3, j))), n_lowest, ridge)
        try:
            extra[f"manual-lf[{levels}]"] = ManualLF.from_levels(_parse_floats(levels, "--manual-lf"), hf_fit.hf, hf_fit.lf.mask)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from None

    report = simulate_modes(s, q, names, n_samples, seed, n_fit=n_fit, n_lowest=n_lowest, ridge=ridge, extra=extra)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    (out_dir / "report.csv").write_text(report.to_csv())
    with open(out_dir / "samples.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["mode", "id", "spatial_mean", "spatial_std"])
        for mode, i, a, b in per_sample_rows(report):
            wr.writerow([mode, i, repr(a), repr(b)])
    _write_json(
        out_dir / "manifest.json",
        {
            "command": "simulate",
            "version": _version(),
            "gmm": spec,
            "schedule": sched_flags,
            "alpha_bar_T": s.alpha_bar_final,
            "modes": [m.mode for m in report.modes],
            "n_samples": n_samples,
            "n_fit": n_fit,
            "n_lowest": n_lowest,
            "ridge": ridge,
            "seed": seed,
        },
    )
    for m in report.modes:
        click.echo(f"{m.mode:>24s}  W1={m.wasserstein1:.5f}")


@main.command()
@click.option("--input", "input_dir", required=True, help="Directory of .slt tensors.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output CSV.")
@click.option("--schedule/--no-schedule", "with_schedule", default=False, help="Also write low-frequency recoveries.")
@schedule_options
@click.option("--t", "t", type=int, default=None, help="Timestep of the inputs (default T).")
@click.option("--n-lowest", "-N", "n_lowest", type=int, default=1, show_default=True)
@click.option("--recovery-out", type=click.Path(file_okay=False), default=None)
def analyze(input_dir, out, with_schedule, t, n_lowest, recovery_out, **kwargs):
    """Brightness/contrast summary and optional low-frequency recovery."""
    s, _ = _pop_schedule(kwargs)
    paths, tensors = _load_inputs(input_dir, (".slt",))
    means, stds = spatial_moments(tensors)
    summary = brightness_summary(tensors)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["id", "spatial_mean", "spatial_std", "std_of_means"])
        for p, a, b in zip(paths, means, stds):
            wr.writerow([p.stem, repr(float(a)), repr(float(b)), ""])
        wr.writerow(["summary", repr(summary["mean_of_means"]), repr(summary["mean_contrast"]), repr(summary["std_of_means"])])

    if with_schedule:
        t = s.T if t is None else t
        _, h, w = tensors[0].shape
        if not (1 <= t <= s.T):
            raise click.UsageError(f"--t must lie in [1, {s.T}]")
        if not (1 <= n_lowest <= h * w):
            raise click.UsageError(f"-N must lie in [1, {h * w}]")
        rec_dir = Path(recovery_out) if recovery_out else Path(out).with_suffix("").with_name(Path(out).stem + "_recovery")
        rec_dir.mkdir(parents=True, exist_ok=True)
        for p, x in zip(paths, tensors):
            slt_io.write_tensor(rec_dir / f"{p.stem}_lf.slt", lowfreq_recovery(x, s, t, n_lowest))
    click.echo(json.dumps(summary))
