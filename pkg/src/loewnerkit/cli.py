"""Command line front end: simulate, classify, solve, plot.

Exit codes: 0 success, 1 numerical failure, 2 usage error.  Every
command is deterministic given its full flag set (seeds included).
File-producing commands write a JSON run manifest alongside their
outputs; re-running with the manifest's config reproduces the same
bytes.
"""

from __future__ import annotations

import argparse
import cmath
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import __version__, stochastic
from .deterministic import (
    EvolutionConfig,
    boundary_image,
    classify_semigroup,
    evolve_phi,
    is_closed_trajectory,
)
from .herglotz import (
    Automorphism,
    Cayley,
    CayleyLinear,
    ConstantImaginary,
    Error,
    Exponential,
    Taylor,
    format_complex,
    parse_complex,
    parse_spec,
)

MANIFEST_SCHEMA = "loewnerkit/manifest-v1"

_BOUND_SPECS = {
    "cayley": Cayley,
    "cayley-linear": CayleyLinear,
    "one": lambda: Taylor([1.0]),
}


@dataclass
class RunManifest:
    """Record of one file-producing command invocation."""

    command: str
    config: dict
    outputs: list
    version: str = __version__
    wall_time_s: float = 0.0
    schema: str = MANIFEST_SCHEMA
    seed: int | None = None

    def write(self, path):
        for out in self.outputs:
            if not os.path.exists(out) or os.path.getsize(out) == 0:
                raise Error("output file missing or empty: %s" % out)
        record = {
            "schema": self.schema,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "outputs": list(self.outputs),
            "version": self.version,
            "wall_time_s": self.wall_time_s,
        }
        with open(path, "w") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
            fh.write("\n")


# --------------------------------------------------------------------------
# small helpers
# --------------------------------------------------------------------------

def _complex_flag(text):
    try:
        return parse_complex(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _jsonable(value):
    if isinstance(value, complex):
        return format_complex(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _config_dict(args, keys):
    return {key: _jsonable(getattr(args, key)) for key in keys}


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _sample_grid(t_end, dt):
    if t_end <= 0.0:
        return [0.0]
    ts = [0.0]
    j = 1
    while j * dt < t_end - 1e-12:
        ts.append(j * dt)
        j += 1
    ts.append(t_end)
    return ts


def _require(args, parser, *dests):
    missing = [d for d in dests if getattr(args, d) is None]
    if missing:
        parser.error("missing required option(s): %s"
                     % ", ".join("--" + d.replace("_", "-") for d in missing))


# --------------------------------------------------------------------------
# SVG rendering (self-contained, no external assets)
# --------------------------------------------------------------------------

def render_disk_svg(curves, tau=None, title=None, size=480):
    """Unit-disk figure: boundary circle, curves, optional tau marker.

    curves: iterable of (points, color) with points a complex sequence.
    Returns the SVG document as a string.
    """
    pad = 24.0
    radius = (size - 2.0 * pad) / 2.0
    cx = cy = size / 2.0

    def xy(z):
        return cx + radius * z.real, cy - radius * z.imag

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
        'viewBox="0 0 %d %d">' % (size, size, size, size),
        '<rect width="%d" height="%d" fill="#ffffff"/>' % (size, size),
        '<circle cx="%.2f" cy="%.2f" r="%.2f" fill="none" stroke="#999999" '
        'stroke-width="1" stroke-dasharray="4 3"/>' % (cx, cy, radius),
    ]
    for points, color in curves:
        coords = " ".join("%.3f,%.3f" % xy(complex(z)) for z in points)
        parts.append('<polyline points="%s" fill="none" stroke="%s" '
                     'stroke-width="1.5"/>' % (coords, color))
    if tau is not None:
        tx, ty = xy(complex(tau))
        parts.append('<circle cx="%.3f" cy="%.3f" r="5" fill="#d62728"/>'
                     % (tx, ty))
    if title:
        parts.append('<text x="%.1f" y="%.1f" font-family="sans-serif" '
                     'font-size="14" fill="#333333">%s</text>'
                     % (pad, pad - 6.0, title))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_evolve(args, parser):
    _require(args, parser, "spec", "k", "t_end")
    spec = parse_spec(args.spec)
    started = time.monotonic()
    t_end, dt = args.t_end, args.dt
    grid = _sample_grid(t_end, dt)
    dt_used = dt
    if args.mode == "det":
        cfg_dt = min(dt, 0.05, t_end) if t_end > 0.0 else dt
        cfg = EvolutionConfig(k=args.k, t_end=t_end, dt=cfg_dt)
        traj = evolve_phi(spec, cfg, args.z0, grid)
        tau = cmath.exp(1j * args.k * t_end)
    else:
        n_steps = max(1, round(t_end / dt)) if t_end > 0.0 else 0
        dt_used = t_end / n_steps if n_steps else dt
        path = stochastic.sample_brownian(args.seed, dt_used, n_steps)
        if args.mode == "random":
            traj = stochastic.evolve_phi_pathwise(spec, args.k, args.z0,
                                                  path, grid)
            tau = cmath.exp(1j * args.k * path.values[-1])
        else:
            traj = stochastic.evolve_psi_sde(spec, args.k, args.z0, path,
                                             scheme=args.scheme)
            tau = 1.0 + 0.0j
    _write_text(args.out, traj.to_csv())
    outputs = [args.out]
    if args.svg:
        svg = render_disk_svg([(traj.values, "#1f77b4")], tau=tau,
                              title="%s  k=%s  %s frame"
                              % (spec.text_form(), args.k, traj.frame))
        _write_text(args.svg, svg)
        outputs.append(args.svg)
    config = _config_dict(args, ("spec", "k", "z0", "t_end", "dt", "mode",
                                 "scheme", "seed", "out", "svg"))
    config["dt_used"] = dt_used
    manifest = RunManifest(command="evolve", config=config, outputs=outputs,
                           seed=args.seed,
                           wall_time_s=time.monotonic() - started)
    manifest.write(args.manifest or args.out + ".manifest.json")
    return 0


def _classify_params(args, parser):
    if args.spec is not None:
        spec = parse_spec(args.spec)
        if isinstance(spec, Automorphism):
            return spec.A, spec.B
        if isinstance(spec, ConstantImaginary):
            return 0.0, 1.0
        parser.error("classification covers the two-parameter boundary "
                     "family; pass --A/--B or an automorphism spec")
    _require(args, parser, "A", "B")
    return args.A, args.B


def cmd_classify(args, parser):
    _require(args, parser, "k")
    A, B = _classify_params(args, parser)
    result = classify_semigroup(A, B, args.k)
    out = {"kind": result.kind.lower(), "D": result.discriminant}
    if result.fixed_point is not None:
        out["fixed_point"] = [result.fixed_point.real,
                              result.fixed_point.imag]
    if args.closed_check:
        if result.kind != "Elliptic":
            out["closed"] = None
            out["closed_reason"] = ("orbit closure is an elliptic-class "
                                    "question; flow is %s"
                                    % result.kind.lower())
        else:
            closed, ratio, period = is_closed_trajectory(A, B, args.k,
                                                         args.max_den)
            out["closed"] = closed
            out["ratio"] = ratio
            if closed:
                frac = Fraction(ratio).limit_denominator(args.max_den)
                out["ratio_fraction"] = "%d/%d" % (frac.numerator,
                                                   frac.denominator)
                out["period"] = period
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_moments(args, parser):
    _require(args, parser, "spec", "k")
    spec = parse_spec(args.spec)
    started = time.monotonic()
    times = np.linspace(0.0, args.t_end, args.points)
    table = stochastic.solve_moment_hierarchy(
        spec, args.k, args.z0, args.t_end, args.m, args.truncation,
        closure=args.closure, sample_times=times)
    header = "t" + "".join(",re_mu%d,im_mu%d" % (m, m) for m in table.orders)
    lines = [header]
    for i, t in enumerate(table.times):
        row = ["%.17g" % t]
        for j in range(len(table.orders)):
            v = table.values[i, j]
            row.append("%.17g" % v.real)
            row.append("%.17g" % v.imag)
        lines.append(",".join(row))
    _write_text(args.out, "\n".join(lines) + "\n")
    config = _config_dict(args, ("spec", "k", "z0", "t_end", "m",
                                 "truncation", "closure", "points", "out"))
    manifest = RunManifest(command="moments", config=config,
                           outputs=[args.out],
                           wall_time_s=time.monotonic() - started)
    manifest.write(args.manifest or args.out + ".manifest.json")
    return 0


def cmd_bounds(args, parser):
    _require(args, parser, "spec", "r0", "t")
    lower, upper = stochastic.growth_bounds(args.spec, args.r0, args.t)
    out = {"spec": args.spec, "r0": args.r0, "t": args.t,
           "lower": lower, "upper": upper}
    code = 0
    if args.paths:
        spec_obj = _BOUND_SPECS[args.spec]()
        n_steps = max(1, round(args.t / args.dt))
        dt_used = args.t / n_steps
        seen_min, seen_max = 2.0, -1.0
        violations = 0
        for j in range(args.paths):
            seed = stochastic.derive_path_seed(args.seed, j)
            path = stochastic.sample_brownian(seed, dt_used, n_steps)
            traj = stochastic.evolve_phi_pathwise(spec_obj, args.k, args.r0,
                                                  path, [args.t])
            r = abs(traj.values[-1])
            seen_min = min(seen_min, r)
            seen_max = max(seen_max, r)
            if r < lower - 1e-6 or r > upper + 1e-6:
                violations += 1
        out["mc"] = {"paths": args.paths, "k": args.k, "seed": args.seed,
                     "min": seen_min, "max": seen_max,
                     "violations": violations}
        if violations:
            code = 1
    print(json.dumps(out, sort_keys=True))
    return code


def cmd_boundary(args, parser):
    started = time.monotonic()
    outputs = []
    if args.what == "image":
        _require(args, parser, "spec", "k", "t")
        spec = parse_spec(args.spec)
        points = boundary_image(spec, args.k, args.t, args.points)
        angles = 2.0 * math.pi * np.arange(len(points)) / len(points)
        lines = ["angle,re,im"]
        for a, z in zip(angles, points):
            lines.append("%.17g,%.17g,%.17g" % (a, z.real, z.imag))
        _write_text(args.out, "\n".join(lines) + "\n")
        outputs.append(args.out)
        if args.svg:
            closed = list(points) + [points[0]]
            svg = render_disk_svg([(closed, "#1f77b4")],
                                  tau=cmath.exp(1j * args.k * args.t),
                                  title="%s  k=%s  t=%.6g"
                                  % (spec.text_form(), args.k, args.t))
            _write_text(args.svg, svg)
            outputs.append(args.svg)
        config = _config_dict(args, ("what", "spec", "k", "t", "points",
                                     "out", "svg"))
    else:
        _require(args, parser, "A", "B", "k", "t_end")
        n_steps = max(1, round(args.t_end / args.dt))
        dt_used = args.t_end / n_steps
        path = stochastic.sample_brownian(args.seed, dt_used, n_steps)
        theta = stochastic.simulate_boundary_diffusion(
            args.A, args.B, args.k, args.theta0, path)
        lines = ["t,theta"]
        for t, th in zip(path.time_grid(), theta):
            lines.append("%.17g,%.17g" % (t, th))
        _write_text(args.out, "\n".join(lines) + "\n")
        outputs.append(args.out)
        config = _config_dict(args, ("what", "A", "B", "k", "theta0",
                                     "t_end", "dt", "seed", "out"))
        config["dt_used"] = dt_used
    manifest = RunManifest(command="boundary", config=config,
                           outputs=outputs, seed=args.seed,
                           wall_time_s=time.monotonic() - started)
    manifest.write(args.manifest or args.out + ".manifest.json")
    return 0


_FIG1_TIMES = (("a", math.pi / 4.0, "t = pi/4"),
               ("b", math.pi / 2.0, "t = pi/2"),
               ("c", 3.0 * math.pi / 4.0, "t = 3pi/4"))


def cmd_figures(args, parser):
    if args.which != "fig1":
        parser.error("unknown figure %r (available: fig1)" % args.which)
    started = time.monotonic()
    os.makedirs(args.out_dir, exist_ok=True)
    spec = Exponential()
    outputs = []
    for tag, t, title in _FIG1_TIMES:
        points = boundary_image(spec, 1.0, t, args.points)
        closed = list(points) + [points[0]]
        svg = render_disk_svg([(closed, "#1f77b4")],
                              tau=cmath.exp(1j * t), title=title)
        out_path = os.path.join(args.out_dir, "fig1_%s.svg" % tag)
        _write_text(out_path, svg)
        outputs.append(out_path)
    config = _config_dict(args, ("which", "points", "out_dir"))
    manifest = RunManifest(command="figures", config=config, outputs=outputs,
                           wall_time_s=time.monotonic() - started)
    manifest.write(os.path.join(args.out_dir, "fig1.manifest.json"))
    return 0


# --------------------------------------------------------------------------
# parser assembly
# --------------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--config", help="key=value file; explicit flags win")
    sub.add_argument("--manifest", help="manifest path (default: <out>"
                     ".manifest.json)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="loewnerkit",
        description="Driven conformal evolution in the unit disk: "
                    "simulation, classification, and figures.",
        allow_abbrev=False)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    registry = {}

    p = subs.add_parser(
        "evolve", allow_abbrev=False,
        help="integrate one trajectory",
        epilog="CSV schema: t,re,im,frame (one row per sample time).")
    p.add_argument("--spec", help="driving spec, e.g. cayley or "
                   "automorphism:1,0.5 or taylor:1,0.2i")
    p.add_argument("--k", type=float, help="rotation rate / noise amplitude")
    p.add_argument("--z0", type=_complex_flag, default=0j,
                   help="start point (complex literal, i suffix)")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--dt", type=float, default=0.01,
                   help="sample spacing (and SDE step)")
    p.add_argument("--mode", choices=("det", "random", "sde"), default="det")
    p.add_argument("--scheme", choices=("euler", "milstein"),
                   default="milstein", help="SDE scheme (mode sde)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="evolve.csv")
    p.add_argument("--svg", help="also draw the trajectory to this file")
    _add_common(p)
    registry["evolve"] = (p, cmd_evolve)

    p = subs.add_parser(
        "classify", allow_abbrev=False,
        help="phase portrait of the two-parameter boundary family",
        epilog="JSON fields: kind, D, fixed_point?, closed?, ratio?, "
               "ratio_fraction?, period?")
    p.add_argument("--A", type=float)
    p.add_argument("--B", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--spec", help="alternative to --A/--B")
    p.add_argument("--closed-check", action="store_true",
                   dest="closed_check")
    p.add_argument("--max-den", type=int, default=64, dest="max_den")
    _add_common(p)
    registry["classify"] = (p, cmd_classify)

    p = subs.add_parser(
        "moments", allow_abbrev=False,
        help="solve the moment hierarchy",
        epilog="CSV schema: t,re_mu1,im_mu1,...,re_muM,im_muM.")
    p.add_argument("--spec")
    p.add_argument("--k", type=float)
    p.add_argument("--z0", type=_complex_flag, default=0j)
    p.add_argument("--t-end", type=float, default=1.0, dest="t_end")
    p.add_argument("--m", type=int, default=1, help="highest reported order")
    p.add_argument("--truncation", type=int, default=12)
    p.add_argument("--closure", choices=("zero", "frozen"), default="zero")
    p.add_argument("--points", type=int, default=65)
    p.add_argument("--out", default="moments.csv")
    _add_common(p)
    registry["moments"] = (p, cmd_moments)

    p = subs.add_parser(
        "bounds", allow_abbrev=False,
        help="radial growth envelope, optionally checked by simulation",
        epilog="JSON fields: spec, r0, t, lower, upper, mc?")
    p.add_argument("--spec", choices=tuple(_BOUND_SPECS))
    p.add_argument("--r0", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--paths", type=int, default=0,
                   help="simulate this many paths against the envelope")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    registry["bounds"] = (p, cmd_bounds)

    p = subs.add_parser(
        "boundary", allow_abbrev=False,
        help="boundary circle image or induced circle diffusion",
        epilog="CSV schema: image -> angle,re,im; diffusion -> t,theta.")
    p.add_argument("--what", choices=("image", "diffusion"), default="image")
    p.add_argument("--spec")
    p.add_argument("--k", type=float)
    p.add_argument("--t", type=float, help="image time")
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--A", type=float)
    p.add_argument("--B", type=float)
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="boundary.csv")
    p.add_argument("--svg", help="draw the image curve (image mode)")
    _add_common(p)
    registry["boundary"] = (p, cmd_boundary)

    p = subs.add_parser(
        "figures", allow_abbrev=False,
        help="regenerate the reference figure panels",
        epilog="fig1: three SVG panels of the evolved disk boundary for "
               "the exponential spec, k=1.")
    p.add_argument("--which", default="fig1")
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--out-dir", default=".", dest="out_dir")
    _add_common(p)
    registry["figures"] = (p, cmd_figures)

    return parser, registry


# --------------------------------------------------------------------------
# config files and entry point
# --------------------------------------------------------------------------

def _load_config(path):
    values = {}
    if not os.path.exists(path):
        raise ValueError("config file not found: %s" % path)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError("%s:%d: expected key=value" % (path, lineno))
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config(args, sub, values, argv):
    for dest, raw in values.items():
        if dest in ("config", "manifest"):
            continue
        action = next((a for a in sub._actions if a.dest == dest), None)
        if action is None:
            raise ValueError("unknown config key %r" % dest)
        explicit = any(tok == opt or tok.startswith(opt + "=")
                       for opt in action.option_strings for tok in argv)
        if explicit:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            setattr(args, dest, raw.lower() in ("1", "true", "yes", "on"))
        elif action.choices is not None and raw not in action.choices:
            raise ValueError("config key %r: %r not in %r"
                             % (dest, raw, tuple(action.choices)))
        else:
            setattr(args, dest, action.type(raw) if action.type else raw)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    sub, run = registry[args.command]
    try:
        if args.config:
            _apply_config(args, sub, _load_config(args.config), argv)
        return run(args, sub)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except Error as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
