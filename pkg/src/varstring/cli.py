"""Command-line entry point: ``varstring {verify,expand,solve,converge,residual} [CONFIG]``.

Configuration is a flat ``key = value`` text file (``#`` starts a comment);
``--set key=value`` overrides single entries.  Every key and its default is
listed in ``DEFAULTS``; unknown keys are errors.  Output files are named
``<command>-<hash>.<ext>`` where the hash covers the command and the fully
resolved configuration, and are written atomically.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
3 numeric failure (blow-up, under-resolution, window or caustic problems).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np
import sympy as sp

DEFAULTS = {
    "preset": "kdv",
    "h": "",
    "a": "",
    "c": "",
    "p": "",
    "s": "",
    "lam": "",
    "kappa1": "1",
    "kappa2": "0",
    "phi": "sin(x)",
    "phi_interval": "-pi/2, pi/2",
    "period": "2*pi",
    "epsilons": "0.2, 0.14, 0.1, 0.07, 0.05",
    "T": "0.5",
    "N": "1024",
    "L": "",
    "x0": "",
    "dt": "0.001",
    "margin": "0.1",
    "string_order": "2",
    "order": "2",
    "e_offset": "0",
    "gd_pairs": "50",
    "caustic_floor": "1e-6",
    "workers": "1",
    "seed": "0",
    "output_dir": "varstring-out",
}

PRESETS = ("kdv", "quadratic_h", "symbolic", "cp_constrained", "gkdv", "custom")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


# --- configuration ---------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str | None, overrides=()) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        cfg.update(parse_config_text(text))
    for item in overrides:
        cfg.update(parse_config_text(item))
    if cfg["preset"] not in PRESETS:
        raise ConfigError(f"preset must be one of {', '.join(PRESETS)}")
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    canon = command + "\n" + "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg) if k != "output_dir")
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _rational(cfg, key) -> Fraction:
    try:
        return Fraction(cfg[key])
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key} must be a rational number, got {cfg[key]!r}") from None


def _float(cfg, key, variables=()) -> float:
    from .grammar import GrammarError, parse_expr

    try:
        v = parse_expr(cfg[key], variables)
    except GrammarError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if v.free_symbols:
        raise ConfigError(f"{key} must be a number")
    return float(v)


def _int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}") from None


def _closed(cfg, key, variables=("u",)):
    from .grammar import GrammarError, parse_expr

    if not cfg[key]:
        return None
    try:
        return parse_expr(cfg[key], variables)
    except GrammarError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def build_model(cfg: dict):
    """PerturbationData for the configured preset (closed forms bound where given)."""
    from . import perturb

    name = cfg["preset"]
    if name == "kdv":
        return perturb.kdv()
    if name == "quadratic_h":
        return perturb.quadratic_h()
    if name == "symbolic":
        return perturb.symbolic(_rational(cfg, "lam") if cfg["lam"] else None)
    if name == "cp_constrained":
        return perturb.cp_constrained(_rational(cfg, "lam") if cfg["lam"] else None)
    if name == "gkdv":
        return perturb.gkdv_example(_rational(cfg, "kappa1"), _rational(cfg, "kappa2"), _closed(cfg, "a"))
    # custom: symbolic structure plus the closed forms for numerics
    closed = {k: _closed(cfg, k) for k in ("h", "a", "c", "p", "s") if cfg[k]}
    if "h" not in closed and "a" not in closed:
        raise ConfigError("custom preset needs h or a")
    if "c" not in closed:
        raise ConfigError("custom preset needs c")
    closed.setdefault("s", sp.Integer(0))
    if cfg["lam"] and "p" in closed:
        raise ConfigError("give either lam (p = (3/5)cc' + λc³) or p, not both")
    if cfg["lam"]:
        P = perturb.cp_constrained(_rational(cfg, "lam"))
    else:
        closed.setdefault("p", sp.Integer(0))
        P = perturb.symbolic()
    return dataclasses.replace(P, closed_forms=closed, name="custom")


def build_initial_data(cfg: dict):
    from .semiclassics import InitialData

    phi = _closed(cfg, "phi", ("x",))
    if phi is None:
        raise ConfigError("phi is required")
    parts = [p for p in cfg["phi_interval"].split(",")]
    if len(parts) != 2:
        raise ConfigError("phi_interval must be 'lo, hi'")
    lo, hi = (_float({"v": p}, "v") for p in parts)
    if not lo < hi:
        raise ConfigError("phi_interval must satisfy lo < hi")
    period = None if cfg["period"].lower() in ("", "none") else _float(cfg, "period")
    return InitialData(phi, (lo, hi), period)


def build_grid(cfg: dict, D):
    from .kdvlab import GridSpec

    L = _float(cfg, "L") if cfg["L"] else D.period
    if L is None:
        raise ConfigError("L is required when phi is not periodic")
    x0 = _float(cfg, "x0") if cfg["x0"] else -L / 2
    try:
        return GridSpec(L, _int(cfg, "N"), x0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def epsilons(cfg: dict) -> list:
    try:
        out = [float(Fraction(e.strip())) for e in cfg["epsilons"].split(",") if e.strip()]
    except (ValueError, ZeroDivisionError):
        raise ConfigError("epsilons must be a comma-separated list of numbers") from None
    if not out or any(e < 0 for e in out):
        raise ConfigError("epsilons must be non-negative")
    return out


# --- output -----------------------------------------------------------------------------

class Outputs:
    """Atomic writes into the output directory under a config-derived stem."""

    def __init__(self, directory: str, stem: str):
        self.dir = Path(directory)
        self.stem = stem
        self.written: list = []

    def path(self, suffix: str) -> Path:
        return self.dir / f"{self.stem}{suffix}"

    def write_bytes(self, suffix: str, data: bytes) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        target = self.path(suffix)
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)
        return target

    def write_text(self, suffix: str, text: str) -> Path:
        return self.write_bytes(suffix, text.encode())

    def write_json(self, suffix: str, obj) -> Path:
        return self.write_text(suffix, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def write_csv(self, suffix: str, header: list, rows: list) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])
        return self.write_text(suffix, buf.getvalue())

    def write_curve(self, name: str, xs, ys) -> Path:
        """Two-column plot-ready data file."""
        lines = [f"{_fmt(a)} {_fmt(b)}" for a, b in zip(xs, ys)]
        return self.write_text(f"-{name}.dat", "\n".join(lines) + "\n")

    def write_figure(self, suffix: str, draw) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        target = self.path(suffix)
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".tmp-", suffix=".png")
        os.close(fd)
        try:
            draw(tmp)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)
        return target


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Fraction):
        return str(o)
    raise TypeError(type(o).__name__)


def _progress(msg: str) -> None:
    print(msg, flush=True)


# --- commands ------------------------------------------------------------------------

def cmd_verify(cfg: dict, out: Outputs) -> int:
    from .checks import run_suite

    P = build_model(cfg)
    results = run_suite(P, seed=_int(cfg, "seed"), e_offset=_rational(cfg, "e_offset"),
                        gd_pairs=_int(cfg, "gd_pairs"))
    passed = all(r.passed for r in results)
    for r in results:
        _progress(f"{'PASS' if r.passed else 'FAIL'}  {r.name} [{r.order}]{'  ' + r.detail if r.detail else ''}")
    out.write_json(".json", {"command": "verify", "preset": cfg["preset"], "status": "ok" if passed else "failed",
                             "checks": [r.as_dict() for r in results], "pass": passed})
    return 0 if passed else 1


def expand_text(cfg: dict) -> str:
    from .jetcalc import to_text
    from .perturb import evolution_rhs, semiclassical_expand
    from .stringeq import assemble, explicit_string_equation

    P = build_model(cfg)
    order = _int(cfg, "order")
    if not 0 <= order <= 2:
        raise ConfigError("order must be 0, 1 or 2")
    lines = [f"u_t = {to_text(evolution_rhs(P).truncate(2 * order))}"]
    system = semiclassical_expand(P, order)
    for k in range(order + 1):
        lines.append(f"v{k}_t = {to_text(system[k])}")
    if order >= 1:
        S = assemble(P, 1)
        lines.append(f"0 = {to_text(explicit_string_equation(S))}")
    return "\n".join(lines) + "\n"


def cmd_expand(cfg: dict, out: Outputs) -> int:
    out.write_text(".txt", expand_text(cfg))
    return 0


def cmd_solve(cfg: dict, out: Outputs) -> int:
    from .plotting import plot_profiles
    from .semiclassics import CharacteristicSolution, cp_relation_holds, series_solution

    P, D = build_model(cfg), build_initial_data(cfg)
    grid = build_grid(cfg, D)
    T = _float(cfg, "T")
    S = CharacteristicSolution(P, D, caustic_floor=_float(cfg, "caustic_floor"))
    with_v2 = cp_relation_holds(P)
    sol = series_solution(S, grid.x, T, with_v2=with_v2)
    eps = epsilons(cfg)
    top = 2 if with_v2 else 1
    cols = {"x": grid.x, "v0": sol.v0, "v1": sol.v1}
    if with_v2:
        cols["v2"] = sol.v2
    for e in eps:
        cols[f"u_eps{e:g}"] = sol.partial_sum(e, top)
    header = list(cols)
    rows = [{h: cols[h][i] for h in header} for i in range(grid.N)]
    out.write_csv(".csv", header, rows)
    for name in header[1:]:
        out.write_curve(name, grid.x, cols[name])
    out.write_json(".json", {"command": "solve", "status": "ok", "T": T, "t_c": S.t_c, "N": grid.N,
                             "v2_available": with_v2, "columns": header})
    out.write_figure(".png", lambda p: plot_profiles(p, grid.x, {k: cols[k] for k in header[1:4]}, T))
    _progress(f"solve: {grid.N} points at t = {T:g} (t_c = {S.t_c:.6g})")
    return 0


def _study(cfg: dict):
    from .kdvlab import convergence_study
    from .stringeq import assemble

    P, D = build_model(cfg), build_initial_data(cfg)
    grid = build_grid(cfg, D)
    N = _int(cfg, "string_order")
    if N not in (1, 2):
        raise ConfigError("string_order must be 1 or 2")
    eps = epsilons(cfg)
    _progress(f"integrating {len(eps)} runs at N = {grid.N} and {2 * grid.N}")
    return convergence_study(P, D, eps, _float(cfg, "T"), grid, _float(cfg, "dt"), margin=_float(cfg, "margin"),
                             sigma={"sigma_sup": assemble(P, N)}, workers=_int(cfg, "workers"))


def cmd_converge(cfg: dict, out: Outputs) -> int:
    from .plotting import plot_errors

    res = _study(cfg)
    header = ["epsilon"] + list(res.err) + ["sigma_sup", "richardson"]
    out.write_csv(".csv", header, res.rows())
    for name, vals in {**res.err, **res.sigma}.items():
        out.write_curve(name, res.epsilons, vals)
    summary = {"command": "converge", "status": "ok", **res.summary()}
    out.write_json(".json", summary)
    out.write_figure(".png", lambda p: plot_errors(p, res.epsilons, {**res.err, **res.sigma}, res.slopes))
    for name, fit in res.slopes.items():
        s = "n/a" if fit.get("slope") is None else f"{fit['slope']:.3f} ± {fit['halfwidth']:.3f}"
        _progress(f"slope {name}: {s}")
    return 0


def cmd_residual(cfg: dict, out: Outputs) -> int:
    from .plotting import plot_errors

    res = _study(cfg)
    rows = [{"epsilon": e, "sigma_sup": s} for e, s in zip(res.epsilons, res.sigma["sigma_sup"])]
    out.write_csv(".csv", ["epsilon", "sigma_sup"], rows)
    out.write_curve("sigma_sup", res.epsilons, res.sigma["sigma_sup"])
    out.write_json(".json", {"command": "residual", "status": "ok", "epsilons": res.epsilons,
                             "sigma_sup": res.sigma["sigma_sup"], "slope": res.slopes["sigma_sup"], **res.meta})
    out.write_figure(".png", lambda p: plot_errors(p, res.epsilons, res.sigma, res.slopes,
                                                   ylabel=r"sup $|\sigma|$ on window"))
    for e, s in zip(res.epsilons, res.sigma["sigma_sup"]):
        _progress(f"eps = {e:g}: sup|sigma| = {s:.3e}")
    return 0


COMMANDS = {"verify": cmd_verify, "expand": cmd_expand, "solve": cmd_solve,
            "converge": cmd_converge, "residual": cmd_residual}


def _error_code(exc: BaseException) -> int | None:
    from .grammar import GrammarError
    from .kdvlab import BlowUpError, FitError, ResolutionError, WindowError
    from .semiclassics import NearCausticError, OutsideDomainError
    from .stringeq import ObstructionError

    if isinstance(exc, (ConfigError, GrammarError, ObstructionError)):
        return 2
    if isinstance(exc, (BlowUpError, ResolutionError, WindowError, NearCausticError, OutsideDomainError,
                        FitError, FloatingPointError)):
        return 3
    return None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="varstring", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", nargs="?", help="flat key = value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    parser.add_argument("--output-dir", help="overrides output_dir")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    out = None
    try:
        cfg = load_config(args.config, args.set)
        if args.output_dir:
            cfg["output_dir"] = args.output_dir
        out = Outputs(cfg["output_dir"], f"{args.command}-{config_hash(args.command, cfg)}")
        code = COMMANDS[args.command](cfg, out)
    except Exception as exc:  # mapped to exit codes; anything unexpected propagates
        code = _error_code(exc)
        if code is None:
            raise
        err = {"command": args.command, "status": "error", "exit_code": code,
               "error": {"type": type(exc).__name__, "message": str(exc)}}
        if out is not None:
            out.write_json(".json", err)
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return code
    for p in out.written:
        _progress(f"wrote {p}")
    return code


if __name__ == "__main__":
    sys.exit(main())
