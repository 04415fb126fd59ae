"""Configuration-driven experiment runner.

Modes: ``rmt-quench`` (transition-ensemble simulation), ``rotor-quench``
(coupled kicked rotors), ``theory`` (analytic curves), ``saturation-scan``
(long-time saturation values across couplings) and ``compare`` (simulation
against theory with pointwise and RMS deviations).

Config files use flat INI sections [run], [system], [grid], [output]; every
key is validated against the schema below and unknown keys are errors.  For
a fixed config and master seed the emitted CSV files are byte-identical
regardless of worker count.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, QuenchLabError
from .ensembles import TransitionSpec
from .parallel import default_workers
from .quench import EntropyCurve, run_quench
from .rotor import RotorParams, kick_pair_schedule, rotor_quench
from .theory import as_ensemble, build_theory_curve, perturbative_saturation, saturation_prediction

__all__ = ["ExperimentConfig", "ResultBundle", "parse_config", "run", "emit_csv", "emit_svg", "main"]

MODES = ("rmt-quench", "rotor-quench", "theory", "saturation-scan", "compare")

_SCHEMA = {
    "run": {
        "mode": str,
        "master_seed": int,
        "realizations": int,
        "states_per_realization": int,
        "workers": int,
    },
    "system": {
        "ensemble": str,
        "n_a": int,
        "n_b": int,
        "n": int,
        "lambda": float,
        "kick_start": float,
        "kick_gap": float,
        "kick_stride": float,
        "boundary_phases": str,
        "step_budget": float,
        "dtype": str,
    },
    "grid": {
        "t_min": float,
        "t_max": float,
        "t_points": int,
        "t_scale": str,
        "t_values": str,
        "alphas": str,
        "lambda_values": str,
        "tail_fraction": float,
    },
    "output": {
        "directory": str,
        "basename": str,
        "emit_plots": bool,
    },
}

_REQUIRED = {
    "rmt-quench": [("system", "ensemble"), ("system", "lambda")],
    "rotor-quench": [("system", "n"), ("system", "lambda")],
    "theory": [("system", "ensemble"), ("system", "lambda"), ("system", "n")],
    "saturation-scan": [("grid", "lambda_values")],
    "compare": [("system", "ensemble"), ("system", "lambda")],
}


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    mode: str
    run: dict = field(default_factory=dict)
    system: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {
            "mode": self.mode,
            "run": dict(self.run),
            "system": dict(self.system),
            "grid": dict(self.grid),
            "output": dict(self.output),
        }


@dataclass
class ResultBundle:
    """All payloads of one run, assembled in memory before anything is written."""

    csv_payloads: dict[str, bytes]
    json_metadata: dict
    svg_documents: dict[str, str] = field(default_factory=dict)

    def write(self, directory: Path) -> list[Path]:
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, payload in self.csv_payloads.items():
            path = directory / name
            path.write_bytes(payload)
            written.append(path)
        meta = directory / (self.json_metadata.get("basename", "run") + ".meta.json")
        meta.write_text(json.dumps(self.json_metadata, indent=2, sort_keys=True))
        written.append(meta)
        for name, doc in self.svg_documents.items():
            path = directory / name
            path.write_text(doc)
            written.append(path)
        return written


def _coerce(section: str, key: str, raw: str, errors: list):
    kind = _SCHEMA[section][key]
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw)
    except ValueError as exc:
        errors.append(f"[{section}].{key}: {exc}")
        return None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; every violation is reported."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}] at line {exc.lineno}")
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}] at line {exc.lineno}")
    except configparser.Error as exc:
        raise ConfigError(str(exc))

    errors: list[str] = []
    values: dict[str, dict] = {"run": {}, "system": {}, "grid": {}, "output": {}}
    for section in parser.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                errors.append(f"unknown key [{section}].{key}")
                continue
            coerced = _coerce(section, key, raw, errors)
            if coerced is not None:
                values[section][key] = coerced

    mode = values["run"].get("mode")
    if mode is None:
        errors.append("[run].mode is required")
    elif mode not in MODES:
        errors.append(f"[run].mode must be one of {MODES}, got {mode!r}")
    else:
        for sec, key in _REQUIRED[mode]:
            if key not in values[sec]:
                errors.append(f"[{sec}].{key} is required for mode {mode}")

    lam = values["system"].get("lambda")
    if lam is not None and lam < 0:
        errors.append("[system].lambda must be nonnegative")
    if "tail_fraction" in values["grid"] and not 0 < values["grid"]["tail_fraction"] <= 1:
        errors.append("[grid].tail_fraction must lie in (0, 1]")
    if "t_scale" in values["grid"] and values["grid"]["t_scale"] not in ("log", "linear"):
        errors.append("[grid].t_scale must be 'log' or 'linear'")
    if "dtype" in values["system"] and values["system"]["dtype"] not in ("complex128", "complex64"):
        errors.append("[system].dtype must be complex128 or complex64")
    if "ensemble" in values["system"]:
        try:
            as_ensemble(values["system"]["ensemble"])
        except QuenchLabError as exc:
            errors.append(f"[system].ensemble: {exc}")
    if mode in ("rmt-quench", "theory", "compare") and lam is not None:
        n_a = values["system"].get("n_a", values["system"].get("n", 50))
        n_b = values["system"].get("n_b", n_a)
        top = n_a * n_b / (4.0 * math.pi**2)
        if lam > top * (1 + 1e-12):
            errors.append(
                f"[system].lambda={lam:g} exceeds the coupling maximum {top:.6g} "
                f"for dimensions {n_a}x{n_b}"
            )
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return ExperimentConfig(
        mode=mode,
        run=values["run"],
        system=values["system"],
        grid=values["grid"],
        output=values["output"],
    )


# ----------------------------------------------------------------------
# grids and payload helpers
# ----------------------------------------------------------------------


def _float_list(raw: str) -> list[float]:
    return [float(x) for x in raw.replace(",", " ").split()]


def _time_grid(cfg: ExperimentConfig) -> tuple[float, ...]:
    g = cfg.grid
    if "t_values" in g:
        vals = _float_list(g["t_values"])
    else:
        lo = g.get("t_min", 0.05)
        hi = g.get("t_max", 20.0)
        pts = g.get("t_points", 40)
        if g.get("t_scale", "log") == "log":
            vals = list(np.geomspace(lo, hi, pts))
        else:
            vals = list(np.linspace(lo, hi, pts))
    return tuple(float(v) for v in vals)


def _alphas(cfg: ExperimentConfig) -> tuple[float, ...]:
    return tuple(_float_list(cfg.grid.get("alphas", "1 2 3 4")))


def _fmt(x) -> str:
    return format(float(x), ".17g")


def emit_csv(curve: EntropyCurve) -> bytes:
    """Serialize a curve: one row per (time, alpha), 17 significant digits."""
    if len(curve.t_grid) == 0:
        raise ConfigError("refusing to serialize an empty curve")
    out = io.StringIO()
    out.write("t,n,alpha,mean,stderr,samples\n")
    for i, t in enumerate(curve.t_grid):
        for alpha in curve.alphas:
            out.write(
                f"{_fmt(t)},{int(curve.steps[i])},{_fmt(alpha)},"
                f"{_fmt(curve.mean[alpha][i])},{_fmt(curve.stderr[alpha][i])},"
                f"{curve.sample_count}\n"
            )
    return out.getvalue().encode()


def parse_curve_csv(payload: bytes) -> dict:
    """Inverse of emit_csv: returns arrays keyed like the curve fields."""
    lines = payload.decode().strip().splitlines()
    header = lines[0].split(",")
    if header != ["t", "n", "alpha", "mean", "stderr", "samples"]:
        raise ConfigError(f"unexpected CSV header {header}")
    rows = [line.split(",") for line in lines[1:]]
    return {
        "t": np.array([float(r[0]) for r in rows]),
        "n": np.array([int(r[1]) for r in rows]),
        "alpha": np.array([float(r[2]) for r in rows]),
        "mean": np.array([float(r[3]) for r in rows]),
        "stderr": np.array([float(r[4]) for r in rows]),
        "samples": np.array([int(r[5]) for r in rows]),
    }


def emit_svg(curves: list[dict], title: str = "", xlabel: str = "t", ylabel: str = "S",
             xlog: bool = True, width: int = 640, height: int = 440) -> str:
    """Minimal static SVG line plot: axes, ticks, one polyline per curve."""
    if not curves or any(len(c["x"]) == 0 for c in curves):
        raise ConfigError("refusing to plot empty curves")
    margin = 56
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#555555"]

    all_x = np.concatenate([np.asarray(c["x"], dtype=float) for c in curves])
    all_y = np.concatenate([np.asarray(c["y"], dtype=float) for c in curves])
    if xlog:
        all_x = all_x[all_x > 0]
    x_lo, x_hi = float(all_x.min()), float(all_x.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def sx(x):
        if xlog:
            f = (math.log(x) - math.log(x_lo)) / (math.log(x_hi) - math.log(x_lo) or 1.0)
        else:
            f = (x - x_lo) / ((x_hi - x_lo) or 1.0)
        return margin + f * (width - 2 * margin)

    def sy(y):
        f = (y - y_lo) / (y_hi - y_lo)
        return height - margin - f * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{width-2*margin}" height="{height-2*margin}" '
        'fill="none" stroke="#333" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width/2:.1f}" y="{margin-16}" text-anchor="middle" '
            f'font-size="14" font-family="sans-serif">{title}</text>'
        )
    # x ticks: decades when log, five evenly spaced otherwise
    if xlog:
        d_lo = math.ceil(math.log10(x_lo) - 1e-12)
        d_hi = math.floor(math.log10(x_hi) + 1e-12)
        xticks = [10.0**d for d in range(d_lo, d_hi + 1)]
        if not xticks:
            xticks = [x_lo, x_hi]
    else:
        xticks = list(np.linspace(x_lo, x_hi, 5))
    for xt in xticks:
        px = sx(xt)
        parts.append(
            f'<line x1="{px:.1f}" y1="{height-margin}" x2="{px:.1f}" '
            f'y2="{height-margin+5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{px:.1f}" y="{height-margin+18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{xt:g}</text>'
        )
    for yt in np.linspace(y_lo, y_hi, 5):
        py = sy(yt)
        parts.append(
            f'<line x1="{margin-5}" y1="{py:.1f}" x2="{margin}" y2="{py:.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{margin-8}" y="{py+4:.1f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{yt:.3g}</text>'
        )
    parts.append(
        f'<text x="{width/2:.1f}" y="{height-12}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{height/2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {height/2:.1f})">{ylabel}</text>'
    )
    for i, curve in enumerate(curves):
        color = palette[i % len(palette)]
        xs = np.asarray(curve["x"], dtype=float)
        ys = np.asarray(curve["y"], dtype=float)
        keep = xs > 0 if xlog else np.ones(len(xs), dtype=bool)
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs[keep], ys[keep]))
        dash = ' stroke-dasharray="6,4"' if curve.get("dashed") else ""
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>'
        )
        ly = margin + 18 + 16 * i
        parts.append(
            f'<line x1="{width-margin-120}" y1="{ly-4}" x2="{width-margin-96}" y2="{ly-4}" '
            f'stroke="{color}" stroke-width="2"{dash}/>'
        )
        parts.append(
            f'<text x="{width-margin-90}" y="{ly}" font-size="11" '
            f'font-family="sans-serif">{curve["label"]}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


# ----------------------------------------------------------------------
# mode implementations
# ----------------------------------------------------------------------


def _transition_spec(cfg: ExperimentConfig, seed, t_grid, alphas) -> TransitionSpec:
    sys_ = cfg.system
    n_a = sys_.get("n_a", sys_.get("n", 50))
    return TransitionSpec(
        ensemble=sys_["ensemble"],
        n_a=n_a,
        n_b=sys_.get("n_b", n_a),
        lam=sys_["lambda"],
        master_seed=seed,
        realizations=cfg.run.get("realizations", 20),
        states_per_realization=cfg.run.get("states_per_realization", 200),
        t_grid=t_grid,
        alpha_set=alphas,
    )


def _theory_on_steps(curve: EntropyCurve, cfg: ExperimentConfig, n_dim: int):
    ens = cfg.system["ensemble"]
    return build_theory_curve(
        curve.alphas, curve.achieved_t, cfg.system["lambda"], n_dim, ens
    )


def _curve_svg(curve: EntropyCurve, title: str) -> str:
    plots = [
        {"label": f"alpha={alpha:g}", "x": curve.achieved_t, "y": curve.mean[alpha]}
        for alpha in curve.alphas
    ]
    return emit_svg(plots, title=title, xlabel="rescaled time t", ylabel="entropy")


def run(cfg: ExperimentConfig, seed: int | None = None, workers: int | None = None) -> ResultBundle:
    """Execute a validated config and assemble the result bundle."""
    t_start = time.time()
    seed = seed if seed is not None else cfg.run.get("master_seed", 0)
    workers = workers if workers is not None else cfg.run.get("workers", default_workers())
    basename = cfg.output.get("basename", cfg.mode)
    emit_plots = cfg.output.get("emit_plots", True)
    alphas = _alphas(cfg)
    csvs: dict[str, bytes] = {}
    svgs: dict[str, str] = {}
    extra_meta: dict = {}

    if cfg.mode == "rmt-quench":
        spec = _transition_spec(cfg, seed, _time_grid(cfg), alphas)
        curve = run_quench(spec, workers=workers)
        csvs[f"{basename}.csv"] = emit_csv(curve)
        extra_meta["curve"] = curve.metadata
        if emit_plots:
            svgs[f"{basename}.svg"] = _curve_svg(
                curve, f"{spec.ensemble.tag} quench, lambda={spec.lam:g}"
            )

    elif cfg.mode == "rotor-quench":
        n = cfg.system["n"]
        lam = cfg.system["lambda"]
        count = cfg.run.get("realizations", 20)
        phases = tuple(_float_list(cfg.system.get("boundary_phases", "0.25 0.31 0.25 0.31")))
        if len(phases) != 4:
            raise ConfigError("[system].boundary_phases needs four values")
        pairs = kick_pair_schedule(
            count,
            start=cfg.system.get("kick_start", 10.0),
            gap=cfg.system.get("kick_gap", 4.0),
            stride=cfg.system.get("kick_stride", 8.0),
        )
        params = [RotorParams(n=n, k_a=a, k_b=b, b=0.0, boundary_phases=phases) for a, b in pairs]
        curve = rotor_quench(
            params,
            lam,
            _time_grid(cfg),
            alpha_set=alphas,
            states_per_realization=cfg.run.get("states_per_realization", 100),
            master_seed=seed,
            workers=workers,
            step_budget=int(cfg.system.get("step_budget", 1e7)),
            dtype=cfg.system.get("dtype", "complex128"),
        )
        csvs[f"{basename}.csv"] = emit_csv(curve)
        extra_meta["curve"] = curve.metadata
        if emit_plots:
            svgs[f"{basename}.svg"] = _curve_svg(curve, f"rotor quench, lambda={lam:g}")

    elif cfg.mode == "theory":
        n_dim = cfg.system["n"]
        lam = cfg.system["lambda"]
        t_grid = np.asarray(_time_grid(cfg))
        theory = build_theory_curve(alphas, t_grid, lam, n_dim, cfg.system["ensemble"])
        d = 2.0 * math.pi / (n_dim * n_dim)
        steps = np.round(t_grid / (d * math.sqrt(lam))).astype(np.int64) if lam > 0 else np.zeros(
            len(t_grid), dtype=np.int64
        )
        curve = EntropyCurve(
            t_grid=t_grid,
            steps=steps,
            achieved_t=t_grid.copy(),
            alphas=theory.alphas,
            mean=theory.s_full,
            stderr={a: np.zeros(len(t_grid)) for a in theory.alphas},
            sample_count=0,
            top_two_mean=np.ones(len(t_grid)),
            metadata={"kind": "theory", "ensemble": as_ensemble(cfg.system["ensemble"]).tag,
                      "lambda": lam, "n": n_dim},
        )
        csvs[f"{basename}.csv"] = emit_csv(curve)
        extra_meta["curve"] = curve.metadata
        if emit_plots:
            svgs[f"{basename}.svg"] = _curve_svg(curve, f"theory, lambda={lam:g}")

    elif cfg.mode == "saturation-scan":
        lams = _float_list(cfg.grid["lambda_values"])
        n_dim = cfg.system.get("n", cfg.system.get("n_a", 50))
        out = io.StringIO()
        out.write("lambda,alpha,ensemble,saturation,perturbative\n")
        plot_curves = []
        for tag in ("COE", "CUE"):
            for alpha in alphas:
                sats = [saturation_prediction(alpha, lam, n_dim, tag) for lam in lams]
                perts = [perturbative_saturation(alpha, lam, tag) for lam in lams]
                for lam, s, p in zip(lams, sats, perts):
                    out.write(f"{_fmt(lam)},{_fmt(alpha)},{tag},{_fmt(s)},{_fmt(p)}\n")
                if alpha == 2.0:
                    plot_curves.append(
                        {"label": f"{tag} sat", "x": lams, "y": sats}
                    )
                    plot_curves.append(
                        {"label": f"{tag} pert", "x": lams, "y": perts, "dashed": True}
                    )
        csvs[f"{basename}.csv"] = out.getvalue().encode()
        if emit_plots and plot_curves:
            svgs[f"{basename}.svg"] = emit_svg(
                plot_curves, title=f"saturation scan, N={n_dim}",
                xlabel="lambda", ylabel="S2 saturation",
            )

    elif cfg.mode == "compare":
        spec = _transition_spec(cfg, seed, _time_grid(cfg), alphas)
        curve = run_quench(spec, workers=workers)
        theory = _theory_on_steps(curve, cfg, spec.n_a)
        out = io.StringIO()
        out.write("t,n,alpha,sim,theory,deviation,stderr\n")
        rms = {}
        for alpha in curve.alphas:
            dev = curve.mean[alpha] - theory.s_full[alpha]
            sat = saturation_prediction(alpha, spec.lam, spec.n_a, spec.ensemble)
            rms[f"alpha={alpha:g}"] = float(np.sqrt(np.mean(dev**2)) / sat)
            for i, t in enumerate(curve.t_grid):
                out.write(
                    f"{_fmt(t)},{int(curve.steps[i])},{_fmt(alpha)},"
                    f"{_fmt(curve.mean[alpha][i])},{_fmt(theory.s_full[alpha][i])},"
                    f"{_fmt(dev[i])},{_fmt(curve.stderr[alpha][i])}\n"
                )
        csvs[f"{basename}.csv"] = out.getvalue().encode()
        extra_meta["rms_over_saturation"] = rms
        extra_meta["curve"] = curve.metadata
        if emit_plots:
            plots = []
            for alpha in curve.alphas:
                plots.append({"label": f"sim a={alpha:g}", "x": curve.achieved_t,
                              "y": curve.mean[alpha]})
                plots.append({"label": f"thy a={alpha:g}", "x": curve.achieved_t,
                              "y": theory.s_full[alpha], "dashed": True})
            svgs[f"{basename}.svg"] = emit_svg(
                plots, title=f"compare, lambda={spec.lam:g}",
                xlabel="rescaled time t", ylabel="entropy",
            )
    else:
        raise ConfigError(f"unknown mode {cfg.mode!r}")

    import scipy

    metadata = {
        "basename": basename,
        "config": cfg.echo(),
        "seed": seed,
        "workers": workers,
        "versions": {
            "quenchlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": round(time.time() - t_start, 3),
        "theory_truncation": {"q_block": 64, "q_hard_max": 4096, "quadrature_rel_tol": 1e-10},
    }
    metadata.update(extra_meta)
    return ResultBundle(csv_payloads=csvs, json_metadata=metadata, svg_documents=svgs)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="quenchlab",
        description="entanglement production in quench-coupled chaotic bipartite systems",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="path to the INI config")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--threads", type=int, default=None, help="worker process count")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        if cfg.mode != args.mode:
            raise ConfigError(
                f"mode mismatch: command line says {args.mode!r}, config says {cfg.mode!r}"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out or cfg.output.get("directory", "."))
    try:
        bundle = run(cfg, seed=args.seed, workers=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except QuenchLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    written = bundle.write(out_dir)
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
