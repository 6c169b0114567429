"""Command-line front end.

Every run is described by a flat ``key = value`` configuration.  Values come
from ``--config FILE`` first and are then overridden by command-line flags.
The validated configuration is echoed in the header of every output file.
Outputs are CSV (``#`` header lines, reals in round-trip ``repr`` form) or
JSON ({command, config, results, version}).  The same configuration and
seed give the same bytes for any thread count.  Wall time goes to stderr
so that the output files themselves stay reproducible.

Exit status: 0 on success, 2 for an invalid configuration, 3 when a
resource cap (spectral table size, torus memory) would be exceeded.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import __version__
from .stats import THREADS_ENV, RngStream

COMMANDS = ("arm", "correlate", "integrate", "spectral-exact", "spectral-mc", "duality", "scan",
            "structure-check", "jp-check", "constants")

MAX_TORUS_CELLS = 1 << 22


class ConfigError(ValueError):
    """Invalid configuration; the message names the field (and line, for config files)."""


class ResourceCap(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# typed fields


def _fraction(text: str) -> Fraction:
    return Fraction(text.strip())


def _list(parse: Callable) -> Callable:
    def inner(text: str):
        items = [x for x in text.replace(" ", "").split(",") if x]
        if not items:
            raise ValueError("empty list")
        return [parse(x) for x in items]
    return inner


def _cells(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.replace(" ", "").split(";"):
        if part:
            a, b = part.split(",")
            out.append((int(a), int(b)))
    return out


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt(value) -> str:
    if isinstance(value, list):
        if value and isinstance(value[0], tuple):
            return ";".join(f"{a},{b}" for a, b in value)
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return _fmt_float(value)
    return str(value)


def _choice(*options: str) -> Callable:
    def inner(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return inner


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be at least 1")
    return v


@dataclass(frozen=True)
class FieldSpec:
    parse: Callable
    help: str


FIELDS = {
    "model": FieldSpec(_choice("triangular", "bond"), "lattice model"),
    "kernel": FieldSpec(str, "dynamics: alpha:A, log:A, nn or iid[:p]"),
    "R": FieldSpec(_fraction, "outer radius"),
    "r": FieldSpec(_list(_fraction), "inner radii (comma separated)"),
    "r0": FieldSpec(_list(_fraction), "clustering radii (comma separated)"),
    "k": FieldSpec(_positive_int, "number of arms"),
    "geometry": FieldSpec(_choice("plane", "half", "quarter"), "arm geometry"),
    "start": FieldSpec(int, "colour of the first arm: 1, -1 or 0 (report both)"),
    "p": FieldSpec(float, "percolation density"),
    "function": FieldSpec(str, "Boolean function"),
    "S": FieldSpec(_cells, "cells 'a,b;c,d'"),
    "Sp": FieldSpec(_cells, "target cells 'a,b;c,d' (defaults to S)"),
    "L": FieldSpec(int, "torus side (even)"),
    "t": FieldSpec(float, "time"),
    "t_min": FieldSpec(float, "smallest grid time"),
    "T": FieldSpec(float, "scan horizon"),
    "gamma": FieldSpec(_list(float), "exponents of 1/t (comma separated)"),
    "input": FieldSpec(str, "curve CSV written by 'correlate'"),
    "samples": FieldSpec(_positive_int, "Monte Carlo samples"),
    "trajectories": FieldSpec(_positive_int, "scan trajectories"),
    "instances": FieldSpec(_positive_int, "random instances"),
    "structures": FieldSpec(_positive_int, "random structures"),
    "max_bits": FieldSpec(_positive_int, "largest table size in bits"),
    "max_sets": FieldSpec(_positive_int, "largest number of disjoint sets"),
    "alpha": FieldSpec(_list(_fraction), "kernel exponents for the d(alpha) table"),
    "mode": FieldSpec(_choice("clustering", "fourarm"), "spectral-mc experiment"),
    "width": FieldSpec(_positive_int, "grid width"),
    "height": FieldSpec(_positive_int, "grid height"),
    "seed": FieldSpec(int, "root seed"),
    "format": FieldSpec(_choice("csv", "json"), "output format"),
}

COMMON = {"seed": "0", "format": "csv"}

DEFAULTS = {
    "arm": {"model": "triangular", "k": "4", "geometry": "plane", "start": "1", "r": "4,8,16,32", "R": "128",
            "p": "0.5", "samples": "10000"},
    "correlate": {"model": "triangular", "function": "one-arm", "R": "4", "S": "0,0", "kernel": "alpha:0.5",
                  "L": "16", "t_min": repr(2.0 ** -10), "samples": "10000"},
    "integrate": {"input": "-", "gamma": "0,0.5"},
    "spectral-exact": {"function": "majority3", "model": "triangular", "R": "1", "width": "3", "height": "3"},
    "spectral-mc": {"mode": "clustering", "model": "triangular", "R": "16", "r0": "2,4,8,18", "r": "4,8,16,32",
                    "samples": "10000"},
    "duality": {"model": "triangular", "kernel": "alpha:0.5", "L": "8", "t": "1", "S": "0,0;1,0;0,1",
                "samples": "100000"},
    "scan": {"model": "triangular", "R": "16", "kernel": "alpha:0.5", "T": "10", "trajectories": "10"},
    "structure-check": {"model": "triangular", "R": "1", "structures": "100", "samples": "4000"},
    "jp-check": {"instances": "1000", "max_bits": "10", "max_sets": "4"},
    "constants": {"alpha": "0,1/20,1/10,3/20,1/5,1/4,217/816"},
}

OPTIONAL = {"duality": ("Sp",), "arm": (), "correlate": ()}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated run description; ``text`` is its canonical serialized form."""

    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def items_text(self) -> list[tuple[str, str]]:
        return [("command", self.command)] + [(k, _fmt(self.values[k])) for k in sorted(self.values)]

    @property
    def text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items_text())

    @staticmethod
    def from_text(text: str, source: str = "<config>") -> "ExperimentConfig":
        raw, lines = parse_config_text(text, source)
        command = raw.pop("command", None)
        if command is None:
            raise ConfigError(f"{source}: command: missing")
        return build_config(command, raw, lines, source)


def parse_config_text(text: str, source: str) -> tuple[dict, dict]:
    raw, lines = {}, {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in raw:
            raise ConfigError(f"{source}:{no}: {key}: given twice")
        raw[key] = value
        lines[key] = no
    return raw, lines


def build_config(command: str, raw: dict, lines: dict | None = None, source: str = "<config>") -> ExperimentConfig:
    lines = lines or {}
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}")
    allowed = dict(COMMON)
    allowed.update(DEFAULTS[command])
    optional = OPTIONAL.get(command, ())
    values = {}
    for key, text in raw.items():
        if key not in allowed and key not in optional:
            where = f"{source}:{lines[key]}: " if key in lines else ""
            raise ConfigError(f"{where}{key}: not a setting of '{command}'")
    for key in sorted(set(allowed) | set(optional)):
        if key not in raw and key not in allowed:
            continue
        text = raw.get(key, allowed.get(key))
        try:
            values[key] = FIELDS[key].parse(str(text))
        except (ValueError, ZeroDivisionError) as exc:
            where = f"{source}:{lines[key]}: " if key in lines else ""
            raise ConfigError(f"{where}{key}: {exc}") from None
    return ExperimentConfig(command, values)


# ---------------------------------------------------------------------------
# results


@dataclass
class Result:
    columns: list
    rows: list
    notes: list  # extra ("key", "value") header lines
    summary: dict


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def _cell_text(x) -> str:
    x = _num(x)
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return _fmt_float(x)
    return str(x)


def render(config: ExperimentConfig, result: Result) -> str:
    version = f"dynperc {__version__}"
    if config["format"] == "json":
        doc = {
            "command": config.command,
            "config": dict(config.items_text()[1:]),
            "results": [{c: _num(v) for c, v in zip(result.columns, row)} for row in result.rows],
            "summary": {k: _num(v) for k, v in result.summary.items()},
            "version": version,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    out = io.StringIO()
    out.write(f"# command: {config.command}\n")
    out.write(f"# version: {version}\n")
    for k, v in config.items_text()[1:]:
        out.write(f"# config: {k} = {v}\n")
    for k, v in result.notes:
        out.write(f"# {k}: {_cell_text(v)}\n")
    out.write(",".join(result.columns) + "\n")
    for row in result.rows:
        out.write(",".join(_cell_text(v) for v in row) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# commands


def _stream(cfg: ExperimentConfig) -> RngStream:
    seed = cfg["seed"]
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed: must be a 64-bit unsigned integer")
    return RngStream(seed)


def _model(cfg):
    from .lattice import Model
    return Model.parse(cfg["model"])


def _torus_kernel(cfg):
    from .dynamics import Iid, build_kernel, parse_kernel
    from .lattice import torus
    try:
        family = parse_kernel(cfg["kernel"])
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from None
    if isinstance(family, Iid):
        return family
    L = cfg["L"]
    if L < 2 or L % 2:
        raise ConfigError("L: must be even and at least 2")
    cells = L * L * (1 if cfg["model"] == "triangular" else 2)
    if cells > MAX_TORUS_CELLS:
        raise ResourceCap(f"torus with {cells} cells exceeds the cap of {MAX_TORUS_CELLS}")
    return build_kernel(family, torus(_model(cfg), L))


def cmd_arm(cfg) -> Result:
    from .percolation import ArmSpec, estimate_alpha_ladder, estimate_arm_patterns, fit_exponent
    try:
        spec = ArmSpec(cfg["k"], cfg["geometry"], start=cfg["start"])
    except ValueError as exc:
        raise ConfigError(f"k/geometry/start: {exc}") from None
    radii, R = cfg["r"], cfg["R"]
    name = f"alpha_{cfg['k']}" + {"plane": "", "half": "_halfplane", "quarter": "_quarterplane"}[cfg["geometry"]]
    notes, summary = [], {}
    if cfg["start"] == 0 and len(spec.needs()) > 1:
        res = estimate_arm_patterns(spec, radii, R, cfg["p"], cfg["samples"], _stream(cfg), _model(cfg))
        cols = ["r", "R", f"{name}_open_first", "stderr_open_first", f"{name}_closed_first", "stderr_closed_first",
                f"{name}_either", "stderr_either", "n_samples"]
        rows = [[r, R, a.mean, a.std_error, b.mean, b.std_error, c.mean, c.std_error, a.n_samples]
                for r, a, b, c in zip(radii, res[1], res[-1], res[0])]
        fit_on = {"open_first": res[1], "closed_first": res[-1]}
    else:
        est = estimate_alpha_ladder(spec, radii, R, cfg["p"], cfg["samples"], _stream(cfg), _model(cfg))
        cols = ["r", "R", name, "stderr", "n_samples"]
        rows = [[r, R, e.mean, e.std_error, e.n_samples] for r, e in zip(radii, est)]
        fit_on = {"": est}
    live = [i for i, r in enumerate(radii) if r < R]
    for label, est in fit_on.items():
        try:
            fit = fit_exponent([float(radii[i]) / float(R) for i in live], [est[i] for i in live])
        except ValueError:
            continue
        key = "fitted_slope" + (f"_{label}" if label else "")
        notes.append((key, fit.slope))
        summary[key] = fit.slope
    return Result(cols, rows, notes, summary)


def _cell_function(cfg):
    from .percolation import CrossingEvent, OneArmEvent, ParityFunction
    fn, model = cfg["function"], _model(cfg)
    if fn == "one-arm":
        return OneArmEvent(model, cfg["R"])
    if fn == "crossing":
        return CrossingEvent(model, cfg["R"])
    if fn == "parity":
        return ParityFunction(model, cfg["S"])
    raise ConfigError("function: expected one-arm, crossing or parity")


def cmd_correlate(cfg) -> Result:
    from .correlations import correlation_curve, geometric_grid
    f = _cell_function(cfg)
    dyn = _torus_kernel(cfg)
    if not 0 < cfg["t_min"] <= 1:
        raise ConfigError("t_min: must lie in (0, 1]")
    grid = np.concatenate([[0.0], geometric_grid(cfg["t_min"])])
    curve = correlation_curve(f, dyn, grid, cfg["samples"], _stream(cfg))
    rows = [[t, v.mean, v.std_error, v.n_samples] for t, v in zip(curve.t_grid, curve.values)]
    return Result(["t", "E_f0_ft", "stderr", "n_samples"], rows,
                  [("dynamics", curve.dynamics), ("f", curve.f)], {"dynamics": curve.dynamics, "f": curve.f})


def read_curve(path: str):
    from .correlations import CorrelationCurve
    from .stats import Estimate
    text = sys.stdin.read() if path == "-" else open(path, encoding="utf-8").read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        rows = [(r["t"], r["E_f0_ft"], r["stderr"], r["n_samples"]) for r in doc["results"]]
    else:
        body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        if not body or body[0].split(",")[:3] != ["t", "E_f0_ft", "stderr"]:
            raise ConfigError("input: not a curve written by 'correlate'")
        rows = [tuple(float(x) for x in ln.split(",")) for ln in body[1:]]
    # the t = 0 point is replaced by the analytic head bound
    rows = [r for r in rows if r[0] > 0]
    return CorrelationCurve([r[0] for r in rows], [Estimate(r[1], r[2], int(r[3])) for r in rows])


def cmd_integrate(cfg) -> Result:
    from .correlations import DivergentHead, second_moment_integral
    try:
        curve = read_curve(cfg["input"])
    except OSError as exc:
        raise ConfigError(f"input: {exc}") from None
    rows = []
    for g in cfg["gamma"]:
        try:
            r = second_moment_integral(curve, g)
        except DivergentHead as exc:
            raise ConfigError(f"gamma: {exc}") from None
        rows.append([g, r.value, r.error, r.head, r.quadrature_error, r.mc_error])
    return Result(["gamma", "second_moment_integral", "error", "head_bound", "quadrature_error", "mc_error"],
                  rows, [], {})


def _table(cfg):
    from .spectral_exact import BooleanTable, crossing_table, grid_crossing_table, one_arm_table
    fn = cfg["function"]
    if fn == "majority3":
        return BooleanTable.majority(3)
    if fn == "and2":
        return BooleanTable.conjunction(2)
    head, _, arg = fn.partition(":")
    if head in ("majority", "and", "parity") and arg:
        n = int(arg)
        return {"majority": BooleanTable.majority, "and": BooleanTable.conjunction,
                "parity": lambda m: BooleanTable.parity(m, range(m))}[head](n)
    if fn == "one-arm":
        return one_arm_table(_model(cfg), cfg["R"])
    if fn == "crossing":
        return crossing_table(_model(cfg), cfg["R"])
    if fn == "grid-crossing":
        return grid_crossing_table(cfg["width"], cfg["height"])
    raise ConfigError("function: expected majority3, and2, majority:N, and:N, parity:N, one-arm, crossing "
                      "or grid-crossing")


def cmd_spectral_exact(cfg) -> Result:
    from .lattice import cells_in_window
    from .spectral_exact import MAX_BITS, SizeCap, walsh_transform
    fn = cfg["function"]
    if fn in ("one-arm", "crossing"):
        n = len(cells_in_window(_model(cfg), cfg["R"]))
        if n > MAX_BITS:
            raise ResourceCap(f"{n} cells exceed the {MAX_BITS}-bit cap")
    try:
        h = _table(cfg)
    except (SizeCap, MemoryError) as exc:
        raise ResourceCap(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(f"function: {exc}") from None
    m = walsh_transform(h)
    rows = [[s, int(k), float(c), float(c * c)] for s, (c, k) in enumerate(zip(m.coefficients, m.sizes))]
    notes = [("cells", ";".join(",".join(map(str, c)) if isinstance(c, tuple) else str(c) for c in h.cell_ids)),
             ("E_h_squared", m.total_mass)]
    return Result(["S_mask", "size", "hat_h", "hat_h_squared"], rows, notes, {"E_h_squared": m.total_mass})


def cmd_spectral_mc(cfg) -> Result:
    from .spectral_mc import clustering_profile, conditioned_fourarm_ladder
    if cfg["mode"] == "clustering":
        prof = clustering_profile(cfg["R"], cfg["r0"], cfg["samples"], _stream(cfg), _model(cfg))
        rows = [[r0, e.mean, e.std_error, e.n_samples] for r0, e in prof]
        return Result(["r0", "Q_mass_inside", "stderr", "n_samples"], rows, [], {})
    lad = conditioned_fourarm_ladder(cfg["r"], cfg["R"], cfg["samples"], _stream(cfg), model=_model(cfg))
    rows = [[r, lad.R, a.mean, a.std_error, b.mean, b.std_error, a.n_samples]
            for r, a, b in zip(lad.radii, lad.alpha, lad.beta)]
    return Result(["r", "R", "alpha4", "alpha4_stderr", "beta4_halfplane", "beta4_stderr", "n_samples"], rows, [], {})


def cmd_duality(cfg) -> Result:
    from .dynamics import Iid, duality_check
    K = _torus_kernel(cfg)
    if isinstance(K, Iid):
        raise ConfigError("kernel: duality needs an exclusion kernel")
    S = cfg["S"]
    Sp = cfg.get("Sp", S)
    try:
        Si = K.region.lookup(np.array(S, dtype=np.int64).reshape(-1, 2))
        Spi = K.region.lookup(np.array(Sp, dtype=np.int64).reshape(-1, 2))
        lhs, rhs = duality_check(Si.tolist(), Spi.tolist(), K, cfg["t"], cfg["samples"], _stream(cfg))
    except ValueError as exc:
        raise ConfigError(f"S/Sp: {exc}") from None
    sigma = math.hypot(lhs.std_error, rhs.std_error)
    diff = lhs.mean - rhs.mean
    row = [cfg["t"], lhs.mean, lhs.std_error, rhs.mean, rhs.std_error, diff, sigma, lhs.n_samples]
    return Result(["t", "E_chiS0_chiSpt", "stderr_lhs", "K_t", "stderr_K_t", "difference", "sigma_combined",
                   "n_samples"], [row], [], {"within_3_sigma": abs(diff) <= 3 * sigma})


def cmd_scan(cfg) -> Result:
    from .correlations import scan_exceptional
    from .dynamics import Iid, parse_kernel
    try:
        family = parse_kernel(cfg["kernel"])
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from None
    if not cfg["T"] > 0:
        raise ConfigError("T: must be positive")
    est, intervals = scan_exceptional(cfg["R"], family, cfg["T"], _stream(cfg), cfg["trajectories"], _model(cfg))
    notes = [("hold_time_fraction", est.mean), ("hold_time_fraction_stderr", est.std_error)]
    return Result(["trajectory", "start", "end"], [list(iv) for iv in intervals], notes,
                  {"hold_time_fraction": est.mean, "hold_time_fraction_stderr": est.std_error})


def cmd_structure_check(cfg) -> Result:
    from .spectral_exact import SizeCap, annulus_bound_check, one_arm_table, random_structure
    try:
        h = one_arm_table(_model(cfg), cfg["R"])
    except SizeCap as exc:
        raise ResourceCap(str(exc)) from None
    if h.n > 20:
        raise ResourceCap(f"{h.n} cells exceed the 20-bit cap of the structure check")
    stream = _stream(cfg)
    rows = []
    for i in range(cfg["structures"]):
        st = random_structure(_model(cfg), cfg["R"], stream.spawn(0, i))
        b = annulus_bound_check(h, st, cfg["samples"], stream.spawn(1, i))
        rows.append([i, st.r0, len(st.annuli), len(st.decorating), b.lhs, b.rhs, b.rhs_std_error, b.holds])
    holds = all(r[-1] for r in rows)
    return Result(["structure", "r0", "annuli", "decorating", "compatible_mass", "bound", "bound_stderr", "holds"],
                  rows, [("all_hold", holds)], {"all_hold": holds})


def cmd_jp_check(cfg) -> Result:
    from .spectral_exact import jp_identity_check, random_jp_instance
    if cfg["max_bits"] > 16:
        raise ResourceCap("max_bits above 16")
    gen = _stream(cfg).generator()
    worst = 0.0
    for _ in range(cfg["instances"]):
        h, J, W = random_jp_instance(gen, cfg["max_bits"], cfg["max_sets"])
        worst = max(worst, jp_identity_check(h, J, W)[2])
    return Result(["instances", "max_abs_diff"], [[cfg["instances"], worst]], [], {})


def cmd_constants(cfg) -> Result:
    from .correlations import OutOfDomain, alpha_zero, d_of_alpha
    rows = []
    for a in cfg["alpha"]:
        try:
            d = d_of_alpha(a)
        except OutOfDomain as exc:
            raise ConfigError(f"alpha: {exc}") from None
        rows.append([a, d, float(d)])
    a0 = alpha_zero()
    return Result(["alpha", "d_alpha", "d_alpha_float"], rows, [("alpha_0", a0)], {"alpha_0": a0})


HANDLERS = {
    "arm": cmd_arm,
    "correlate": cmd_correlate,
    "integrate": cmd_integrate,
    "spectral-exact": cmd_spectral_exact,
    "spectral-mc": cmd_spectral_mc,
    "duality": cmd_duality,
    "scan": cmd_scan,
    "structure-check": cmd_structure_check,
    "jp-check": cmd_jp_check,
    "constants": cmd_constants,
}


def run(config: ExperimentConfig) -> str:
    """Execute a validated configuration and return the rendered output."""
    return render(config, HANDLERS[config.command](config))


# ---------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynperc", allow_abbrev=False,
                                 description="Dynamical percolation experiments. Commands: " + ", ".join(COMMANDS))
    ap.add_argument("command", nargs="?", help="one of: " + ", ".join(COMMANDS))
    ap.add_argument("--config", help="flat 'key = value' configuration file")
    ap.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    ap.add_argument("--out", default="-", help="output path ('-' for stdout)")
    for key, spec in FIELDS.items():
        flag = "--" + key.replace("_", "-")
        ap.add_argument(flag, dest=key, default=None, help=spec.help)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    started = time.perf_counter()
    try:
        raw, lines, source = {}, {}, "<config>"
        if args.config:
            source = args.config
            try:
                with open(args.config, encoding="utf-8") as fh:
                    raw, lines = parse_config_text(fh.read(), source)
            except OSError as exc:
                raise ConfigError(f"config: {exc}") from None
        command = args.command or raw.get("command")
        raw.pop("command", None)
        if command is None:
            raise ConfigError("command: missing")
        for key in FIELDS:
            value = getattr(args, key)
            if value is not None:
                raw[key] = value
                lines.pop(key, None)
        config = build_config(command, raw, lines, source)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("threads: must be at least 1")
            os.environ[THREADS_ENV] = str(args.threads)
        text = run(config)
    except ConfigError as exc:
        print(f"dynperc: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except ResourceCap as exc:
        print(f"dynperc: resource cap: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        from .spectral_exact import SizeCap
        if isinstance(exc, SizeCap):
            print(f"dynperc: resource cap: {exc}", file=sys.stderr)
            return 3
        print(f"dynperc: invalid configuration: {exc}", file=sys.stderr)
        return 2
    if args.out == "-":
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # the reader went away (e.g. piped into head); silence the interpreter's final flush
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
            return 0
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    print(f"dynperc: wall_time = {time.perf_counter() - started:.3f} s", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
