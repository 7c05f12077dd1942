"""Command-line front end.

Every command writes its artifacts (CSV and/or JSON) plus MANIFEST.json into
the output directory.  Exit codes: 0 success, 1 configuration error, 2
numerical failure (partial artifacts and diagnostics are still written),
3 failed validation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ProfileError
from .integrator import IntegrationConfig

CONFIG_ERROR, NUMERIC_FAILURE, VALIDATION_FAILURE = 1, 2, 3

COMMANDS = ("profile", "scan-eta", "orbit", "family-scan", "bifurcate", "regime-map", "classify-points", "validate")

SCHEMAS = {
    "profile.csv": "xi,f,df,fm_prime",
    "trace.csv": "t,chart,c1,c2,c3,logxi,xi,f,df",
    "scan.csv": "param,class,detail",
    "report.json": "command-specific JSON object",
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def parse_grid(spec: str | None):
    """Sorted grid from 'geom:a:b:n', 'lin:a:b:n', 'a,b,c' or a file with one value per line."""
    if spec is None:
        return None
    if os.path.isfile(spec):
        try:
            return np.array(sorted(float(v) for v in Path(spec).read_text().split()))
        except ValueError as exc:
            raise ConfigError(f"bad grid file {spec!r}: {exc}") from None
    kind, _, rest = spec.partition(":")
    try:
        if kind in ("geom", "lin"):
            a, b, n = rest.split(":")
            f = np.geomspace if kind == "geom" else np.linspace
            return f(float(a), float(b), int(n))
        return np.array(sorted(float(v) for v in spec.split(",") if v.strip()))
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {spec!r}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="blowup-profiles", description="Self-similar blow-up profiles: shooting, orbits, bifurcation.")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values; flags override it")
    common.add_argument("--m", type=float)
    common.add_argument("--p", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--validation", action="store_true", help="allow the limit cases p = 1 and sigma = 0")
    common.add_argument("--rel-tol", type=float)
    common.add_argument("--abs-tol", type=float)
    common.add_argument("--tol", type=float, help="bisection tolerance (eta, k or sigma)")
    common.add_argument("--grid", help="geom:a:b:n, lin:a:b:n, a,b,c or a file")
    common.add_argument("--jobs", type=int, help="accepted for compatibility; runs are sequential")
    common.add_argument("--out", help="output directory (default $OUTPUT_DIR or .)")
    common.add_argument("--format", help="subset of csv,json (default both)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sp = sub.add_parser("profile", parents=[common], help="good profile by bisection in eta")
    sp.add_argument("--eta", help="bracket 'lo,hi' (default: widened 0.1,20)")
    sub.add_parser("scan-eta", parents=[common], help="classify backward shots on an eta grid")
    sp = sub.add_parser("orbit", parents=[common], help="forward orbit from P2 or from the P0 family")
    sp.add_argument("--start", choices=("P2", "P0"), default="P2")
    sp.add_argument("--k", type=float, help="P0 family parameter")
    sp = sub.add_parser("family-scan", parents=[common], help="scan the P0 family over k")
    sp.add_argument("--refine", action="store_true", help="bisect every B0 bracket")
    sp = sub.add_parser("bifurcate", parents=[common], help="locate sigma* for (m, p)")
    sp.add_argument("--sigma-lo", type=float, default=0.5)
    sp.add_argument("--sigma-hi", type=float, default=8.0)
    sp = sub.add_parser("regime-map", parents=[common], help="per-sigma regime table")
    sp.add_argument("--no-family", action="store_true", help="skip the P0-family scan per sigma")
    sub.add_parser("classify-points", parents=[common], help="eigenstructure of the critical points")
    sp = sub.add_parser("validate", parents=[common], help="golden suites (p = 1 exact profile, sigma = 0)")
    sp.add_argument("--quick", action="store_true", help="coarse k grid for the sigma = 0 suite")
    return ap


def _merge_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    for k, v in vars(args).items():
        if k != "config" and v is not None and v is not False:
            cfg[k] = v
    for k, v in _DEFAULTS.items():
        cfg.setdefault(k, v)
    return cfg


_DEFAULTS = {"jobs": 1, "format": "csv,json"}


def _params(cfg: dict, need_sigma: bool = True):
    from .model import derive_exponents

    for key in ("m", "p") + (("sigma",) if need_sigma else ()):
        if cfg.get(key) is None:
            raise ConfigError(f"--{key} is required")
    try:
        return derive_exponents(cfg["m"], cfg["p"], cfg.get("sigma", 1.0), validation=bool(cfg.get("validation")))
    except ProfileError as exc:
        raise ConfigError(str(exc)) from None


def _numeric(cfg: dict, base: IntegrationConfig) -> IntegrationConfig:
    kw = {}
    if cfg.get("rel_tol") is not None:
        kw["rel_tol"] = float(cfg["rel_tol"])
    if cfg.get("abs_tol") is not None:
        kw["abs_tol"] = float(cfg["abs_tol"])
    if not kw:
        return base
    try:
        return IntegrationConfig(**{**base.as_dict(), **kw})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


class Output:
    """Single writer for the artifacts of one run."""

    def __init__(self, root: Path, formats: set[str]):
        self.root = root
        self.formats = formats
        self.files: dict[str, str] = {}
        root.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str):
        kind = name.rsplit(".", 1)[-1]
        if kind not in self.formats:
            return
        with open(self.root / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        self.files[name] = SCHEMAS.get(name, kind)

    def json(self, name: str, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def manifest(self, command: str, cfg: dict, status: str):
        body = {
            "command": command,
            "config": {k: v for k, v in sorted(cfg.items()) if k != "out"},
            "version": __version__,
            "status": status,
            "files": dict(sorted(self.files.items())),
            "determinism": "no random numbers and no timestamps; identical config gives identical bytes",
        }
        with open(self.root / "MANIFEST.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


# -- commands -------------------------------------------------------------------

def cmd_profile(cfg, out: Output) -> int:
    from .shooting import SHOOT_CONFIG, bisect_eta

    params = _params(cfg)
    bracket = None
    if cfg.get("eta"):
        try:
            lo, hi = (float(v) for v in str(cfg["eta"]).split(","))
        except ValueError:
            raise ConfigError("--eta must be 'lo,hi'") from None
        bracket = (lo, hi)
    good = bisect_eta(params, bracket, _numeric(cfg, SHOOT_CONFIG), tol_eta=cfg.get("tol") or 1e-10)
    out.text("profile.csv", good.to_csv())
    out.json("report.json", {"params": params.as_dict(), "profile": good.as_record()})
    return 0


def cmd_scan_eta(cfg, out: Output) -> int:
    from .shooting import SHOOT_CONFIG, scan_eta

    params = _params(cfg)
    grid = parse_grid(cfg.get("grid")) if cfg.get("grid") else np.geomspace(0.2, 10.0, 40)
    outs, bracket, transitions = scan_eta(params, grid, _numeric(cfg, SHOOT_CONFIG))
    lines = ["param,class,detail"]
    for o in outs:
        detail = o.a0 if o.a0 is not None else o.theta
        lines.append(f"{o.eta!r},{o.cls.value},{'' if detail is None else repr(float(detail))}")
    out.text("scan.csv", "\n".join(lines) + "\n")
    out.json("report.json", {"params": params.as_dict(), "bracket": bracket, "transitions": transitions,
                             "shots": [o.as_record(bracket) for o in outs]})
    return 0


def cmd_orbit(cfg, out: Output) -> int:
    from .orbits import ORBIT_CONFIG, classify_from_P0, classify_from_P2, tail_value

    params = _params(cfg)
    num = _numeric(cfg, ORBIT_CONFIG)
    if cfg.get("start", "P2") == "P0":
        if cfg.get("k") is None:
            raise ConfigError("--k is required for --start P0")
        cls, trace = classify_from_P0(params, cfg["k"], num)
    else:
        cls, trace = classify_from_P2(params, num)
    out.text("trace.csv", trace.to_csv())
    events = [{"kind": e.kind.value, "label": e.label, "t": e.time, "coords": list(e.state.coords),
               "logxi": e.state.logxi} for e in trace.events]
    out.json("report.json", {"params": params.as_dict(), "start": cfg.get("start", "P2"), "k": cfg.get("k"),
                             "terminal": cls.as_record(), "tail": tail_value(params, trace), "events": events})
    return 0


def cmd_family_scan(cfg, out: Output) -> int:
    from .orbits import ORBIT_CONFIG, profile_samples, scan_family, scan_to_csv, closest_to_interface
    from .shooting import samples_to_csv

    params = _params(cfg)
    grid = parse_grid(cfg.get("grid"))
    scan = scan_family(params, grid, _numeric(cfg, ORBIT_CONFIG), refine=bool(cfg.get("refine")),
                       k_tol=cfg.get("tol") or 1e-8)
    out.text("scan.csv", scan_to_csv(scan))
    if scan.refined:
        best = min(scan.refined, key=lambda r: abs(r.f_eta))
        _, i = closest_to_interface(params, best.trace)
        out.text("profile.csv", samples_to_csv(profile_samples(best.trace, i)))
    out.text("report.json", scan.to_json() + "\n")
    return 0


def cmd_bifurcate(cfg, out: Output) -> int:
    from .bifurcation import find_sigma_star
    from .orbits import ORBIT_CONFIG

    _params({**cfg, "sigma": 1.0}, need_sigma=False)
    res = find_sigma_star(cfg["m"], cfg["p"], (cfg.get("sigma_lo", 0.5), cfg.get("sigma_hi", 8.0)),
                          cfg.get("tol") or 1e-6, _numeric(cfg, ORBIT_CONFIG))
    if res.critical_profile is not None:
        out.text("profile.csv", res.critical_profile.to_csv())
    out.json("report.json", res.as_record())
    return 0


def cmd_regime_map(cfg, out: Output) -> int:
    from .bifurcation import regime_map
    from .orbits import ORBIT_CONFIG

    _params({**cfg, "sigma": 1.0}, need_sigma=False)
    grid = parse_grid(cfg.get("grid")) if cfg.get("grid") else np.array([0.25, 0.5, 0.75, 1.0])
    rm = regime_map(cfg["m"], cfg["p"], grid, _numeric(cfg, ORBIT_CONFIG), family=not cfg.get("no_family"))
    lines = ["param,class,detail"]
    for r in rm.rows:
        lines.append(f"{r.sigma!r},{r.p2_class.tag.value},{r.profile_kind}")
    out.text("scan.csv", "\n".join(lines) + "\n")
    out.text("report.json", rm.to_json() + "\n")
    return 0


def cmd_classify_points(cfg, out: Output) -> int:
    from .errors import UnsupportedPoint
    from .local_analysis import POINT_IDS, classify_point

    params = _params(cfg)
    rows = []
    for pid in POINT_IDS:
        try:
            info = classify_point(params, pid)
        except UnsupportedPoint as exc:
            rows.append({"id": pid, "unsupported": str(exc)})
            continue
        rows.append({"id": info.id, "chart": info.chart.value, "coords": list(info.coords),
                     "eigenvalues": [[complex(w).real, complex(w).imag] for w in info.eigenvalues],
                     "stable_dim": info.stable_dim, "unstable_dim": info.unstable_dim,
                     "center_dim": info.center_dim, "note": info.note})
    out.json("report.json", {"params": params.as_dict(), "points": rows})
    return 0


def cmd_validate(cfg, out: Output) -> int:
    from .orbits import default_k_grid
    from .validation import run_all

    results = run_all(default_k_grid(8) if cfg.get("quick") else None)
    out.json("report.json", {"results": [r.as_record() for r in results]})
    return 0 if all(r.passed for r in results) else VALIDATION_FAILURE


HANDLERS = {
    "profile": cmd_profile,
    "scan-eta": cmd_scan_eta,
    "orbit": cmd_orbit,
    "family-scan": cmd_family_scan,
    "bifurcate": cmd_bifurcate,
    "regime-map": cmd_regime_map,
    "classify-points": cmd_classify_points,
    "validate": cmd_validate,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        formats = {f.strip() for f in str(cfg.get("format", "csv,json")).split(",") if f.strip()}
        if not formats or not formats <= {"csv", "json"}:
            raise ConfigError(f"--format must be a subset of csv,json, got {cfg.get('format')!r}")
        root = Path(cfg.get("out") or os.environ.get("OUTPUT_DIR") or ".")
        out = Output(root, formats)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    command = args.command
    try:
        code = HANDLERS[command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (ProfileError, FloatingPointError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        lo, hi = getattr(exc, "lo", None), getattr(exc, "hi", None)
        for name, o in (("lo", lo), ("hi", hi)):
            if o is not None and hasattr(o, "as_record"):
                diag[name] = o.as_record()
        out.json("diagnostics.json", diag)
        out.manifest(command, cfg, "numeric failure")
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return NUMERIC_FAILURE
    out.manifest(command, cfg, "ok" if code == 0 else "validation failed")
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
