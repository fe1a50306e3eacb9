"""Command line front-end.

Subcommands::

    gsmollifier windows build|verify   build / re-verify a window pair
    gsmollifier weights check          growth axioms of a weight system
    gsmollifier classify               membership / convolutor / multiplier verdicts
    gsmollifier reconstruct            truncated reconstruction error curve
    gsmollifier delta-check            approximate-identity error curve

Settings resolve as defaults, then the JSON config (``--config``, with
``"schema": 1``), then command line flags.  Every report embeds the resolved
configuration and the library version.

Exit codes: 0 success, 2 certificate or validation failure, 3 inconclusive
verdict.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from . import classify as cls
from .corpus import NAMES, make
from .expr import ExpressionError, compile_expression
from .grid import Grid, SampledField, make_grid, sample, save_binary, to_bytes
from .mollify import DEFAULT_GRID, ScaleError, delta_approx_check, reconstruct
from .norms import ENGINES, NormDescriptor
from .weights import (check_moderate, check_N, check_squarable, check_wM, check_wN,
                      system_from_spec)
from .windows import (MAX_L, TOL_INTEGRAL, TOL_MOMENT, TOL_TWO_SCALE, CertificateError,
                      build_window_pair, fourier_decay_check, verify_moments, verify_two_scale)

SCHEMA = 1
EXIT_OK, EXIT_INVALID, EXIT_INCONCLUSIVE = 0, 2, 3
WINDOW_GRID = {1: (16.0, 4096), 2: (4.0, 1024)}
WEIGHT_GRID = {1: (16.0, 4096), 2: (8.0, 256)}
CONDITIONS = ("wM", "wN", "N", "moderate", "squarable")
CLASSES = ("membership", "convolutor", "multiplier", "bounded-set")


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


class ConfigError(ValueError):
    """Invalid configuration; reported with exit code 2."""


@dataclass
class RunConfig:
    d: int = 1
    X: float | None = None
    N: int | None = None
    L: int = 1
    system: str = "exp"
    against: str | None = None
    cond: str = "wM"
    n: int = 1
    m_cap: int | None = None
    f: str = "gaussian"
    space_class: str = "membership"
    norm: dict = field(default_factory=lambda: {"engine": "Lp", "p": 2.0})
    window: str = "varphi"
    J: int | None = None
    caps: dict = field(default_factory=lambda: asdict(cls.Caps()))
    thresholds: dict = field(default_factory=lambda: asdict(cls.Thresholds()))
    out: str = "."

    def grid(self, table: dict[int, tuple[float, int]]) -> Grid:
        """Grid of the command; the defaults used are written back so reports show them."""
        X0, N0 = table[self.d]
        self.X = float(self.X if self.X is not None else X0)
        self.N = int(self.N if self.N is not None else N0)
        return make_grid(self.d, self.X, self.N)

    def norm_descriptor(self) -> NormDescriptor:
        return NormDescriptor.from_dict(self.norm)

    def validate(self) -> None:
        if self.d not in (1, 2):
            raise ConfigError(f"d must be 1 or 2, got {self.d}")
        if not 0 <= self.L <= MAX_L:
            raise ConfigError(f"L must lie in [0, {MAX_L}], got {self.L}")
        if self.N is not None and (self.N < 8 or self.N % 2):
            raise ConfigError(f"N must be an even integer >= 8, got {self.N}")
        if self.X is not None and not self.X > 0:
            raise ConfigError(f"X must be positive, got {self.X}")
        if self.cond not in CONDITIONS:
            raise ConfigError(f"unknown condition {self.cond!r}; expected one of {CONDITIONS}")
        if self.space_class not in CLASSES:
            raise ConfigError(f"unknown class {self.space_class!r}; expected one of {CLASSES}")
        if self.window not in ("varphi", "psi"):
            raise ConfigError(f"window must be varphi or psi, got {self.window!r}")
        if self.n < 0 or (self.m_cap is not None and self.m_cap < self.n):
            raise ConfigError("need 0 <= n <= m_cap")
        if self.J is not None and self.J < 0:
            raise ConfigError(f"J must be non-negative, got {self.J}")
        try:
            self.norm_descriptor()
            system_from_spec(self.system)
            if self.against:
                system_from_spec(self.against)
            cls.Caps(**self.caps)
            cls.Thresholds(**self.thresholds)
        except (ValueError, TypeError, ExpressionError) as exc:
            raise ConfigError(str(exc)) from exc
        caps = cls.Caps(**self.caps)
        if min(caps.J, caps.N_max + 1, caps.A_max + 1) <= 0:
            raise ConfigError("caps must be positive")
        if not (self.f in NAMES or self.f.startswith("expr:")):
            raise ConfigError(f"unknown function {self.f!r}; expected one of {NAMES} or 'expr:<expression>'")


_KNOWN = {f.name for f in fields(RunConfig)}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"config schema must be {SCHEMA}, got {data.get('schema')!r}")
    data = {k: v for k, v in data.items() if k != "schema"}
    if "class" in data:
        data["space_class"] = data.pop("class")
    unknown = set(data) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return data


def resolve(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config)
    flags = {k: v for k, v in vars(args).items() if k in _KNOWN and v is not None}
    if getattr(args, "p", None) is not None or getattr(args, "engine", None) is not None:
        norm = dict(values.get("norm", RunConfig().norm))
        if args.engine is not None:
            norm["engine"] = args.engine
        if args.p is not None:
            norm["p"] = args.p
        flags["norm"] = norm
    for group, keys in (("caps", ("J_cap", "N_max", "A_max")), ("thresholds", ("eps_slope", "rho_fit"))):
        base = dict(values.get(group, getattr(RunConfig(), group)))
        for key in keys:
            v = getattr(args, key, None)
            if v is not None:
                base["J" if key == "J_cap" else key] = v
        flags[group] = base
    values.update(flags)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _field_for(cfg: RunConfig, grid: Grid) -> SampledField:
    if cfg.f.startswith("expr:"):
        ev = compile_expression(cfg.f[len("expr:"):])
        return sample(lambda *xs: ev(*xs), grid, "expr")
    return make(cfg.f, grid)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        o = o.item()
    if isinstance(o, float):
        return o if math.isfinite(o) else str(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report(cfg: RunConfig, command: str, body: dict) -> dict:
    return {"command": command, "version": version(), "config": asdict(cfg), **_sanitize(body)}


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


# -- commands -------------------------------------------------------------------------

def cmd_windows_build(cfg: RunConfig) -> tuple[int, dict]:
    grid = cfg.grid(WINDOW_GRID)
    out = Path(cfg.out)
    try:
        pair = build_window_pair(cfg.d, cfg.L, grid)
    except CertificateError as exc:
        return EXIT_INVALID, _report(cfg, "windows build", {"status": "certificate failure", "error": str(exc)})
    out.mkdir(parents=True, exist_ok=True)
    save_binary(pair.varphi, out / "varphi.bin")
    save_binary(pair.psi, out / "psi.bin")
    cert = _report(cfg, "windows build", {"L": pair.L, "d": pair.d, "certificate": pair.cert})
    _write(out, "cert.json", _dump(cert) + "\n")
    return EXIT_OK, cert


def cmd_windows_verify(cfg: RunConfig) -> tuple[int, dict]:
    grid = cfg.grid(WINDOW_GRID)
    pair = build_window_pair(cfg.d, cfg.L, grid, check=False)
    two = verify_two_scale(pair)
    mom = verify_moments(pair, 2 * cfg.L)
    failures = []
    if abs(pair.varphi.integral() - 1.0) > TOL_INTEGRAL:
        failures.append("integral")
    worst = max((abs(v) for order, v in mom["psi"].items() if int(order) < 2 * cfg.L), default=0.0)
    if worst > TOL_MOMENT:
        failures.append("moments")
    if two["residual"] > TOL_TWO_SCALE:
        failures.append("two_scale_residual")
    body = {"two_scale": two, "moments": mom, "varphi_integral": pair.varphi.integral(),
            "failures": failures}
    if cfg.d == 1:
        body["fourier"] = fourier_decay_check(pair)
    out = Path(cfg.out)
    existing = out / "varphi.bin"
    if existing.exists():
        body["artifacts_match"] = (existing.read_bytes() == to_bytes(pair.varphi)
                                   and (out / "psi.bin").read_bytes() == to_bytes(pair.psi))
        if not body["artifacts_match"]:
            failures.append("artifacts")
    report = _report(cfg, "windows verify", body)
    _write(out, "verify.json", _dump(report) + "\n")
    return (EXIT_INVALID if failures else EXIT_OK), report


def cmd_weights_check(cfg: RunConfig) -> tuple[int, dict]:
    grid = cfg.grid(WEIGHT_GRID)
    W = system_from_spec(cfg.system)
    if cfg.cond == "wM":
        res = check_wM(W, cfg.n, cfg.m_cap, grid)
    elif cfg.cond == "wN":
        res = check_wN(W, cfg.n, cfg.m_cap, grid)
    elif cfg.cond == "N":
        res = check_N(W, cfg.n, cfg.m_cap, grid)
    elif cfg.cond == "moderate":
        V = system_from_spec(cfg.against) if cfg.against else W
        res = check_moderate(W, V, cfg.n, cfg.m_cap, grid)
    else:
        res = check_squarable(W, cfg.n, cfg.m_cap, grid)
    report = _report(cfg, "weights check", {"result": res.to_dict()})
    _write(Path(cfg.out), "weights.json", _dump(report) + "\n")
    return EXIT_OK, report


def cmd_classify(cfg: RunConfig) -> tuple[int, dict]:
    grid = cfg.grid(cls.CLASSIFY_GRID)
    try:
        pair = build_window_pair(cfg.d, cfg.L, grid)
    except CertificateError as exc:
        return EXIT_INVALID, _report(cfg, "classify", {"status": "certificate failure", "error": str(exc)})
    f = _field_for(cfg, grid)
    W = system_from_spec(cfg.system)
    V = system_from_spec(cfg.against) if cfg.against else None
    nd = cfg.norm_descriptor()
    caps, th = cls.Caps(**cfg.caps), cls.Thresholds(**cfg.thresholds)
    if cfg.space_class == "multiplier":
        table = cls.norm_table(f, pair, V or W, nd, caps.J, caps.N_max, caps.A_max,
                               inverse=True, semilocal=True, thresholds=th)
        verdict = cls.verdict_multiplier(f, pair, W, V, nd, caps, th, table=table)
    elif cfg.space_class == "convolutor":
        table = cls.norm_table(f, pair, W, nd, caps.J, caps.N_max, 0, thresholds=th)
        verdict = cls.verdict_convolutor(f, pair, W, nd, caps, th, table=table)
    elif cfg.space_class == "membership":
        table = cls.norm_table(f, pair, W, nd, caps.J, caps.N_max, caps.A_max, thresholds=th)
        verdict = cls.verdict_membership(f, pair, W, nd, caps, th, table=table)
    else:
        table = cls.norm_table(f, [pair.varphi], W, nd, caps.J, caps.N_max, caps.A_max, thresholds=th)
        verdict = cls.bounded_set_test(f, pair.varphi, W, nd, caps, th)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "table.csv")
    report = _report(cfg, "classify", {"verdict": verdict.to_dict()})
    _write(out, "verdict.json", _dump(report) + "\n")
    code = EXIT_INCONCLUSIVE if verdict.decision == cls.INCONCLUSIVE else EXIT_OK
    return code, report


def _curve_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_reconstruct(cfg: RunConfig) -> tuple[int, dict]:
    grid = cfg.grid(DEFAULT_GRID)
    try:
        pair = build_window_pair(cfg.d, cfg.L, grid)
    except CertificateError as exc:
        return EXIT_INVALID, _report(cfg, "reconstruct", {"status": "certificate failure", "error": str(exc)})
    J = 8 if cfg.J is None else cfg.J
    _, curve = reconstruct(_field_for(cfg, grid), pair, J)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _curve_csv(out / "reconstruct.csv", ["J", "error", "resolved"],
               ((c["J"], c["error"], int(c["resolved"])) for c in curve))
    report = _report(cfg, "reconstruct", {"curve": curve})
    _write(out, "reconstruct.json", _dump(report) + "\n")
    return EXIT_OK, report


def cmd_delta_check(cfg: RunConfig) -> tuple[int, dict]:
    grid = cfg.grid(DEFAULT_GRID)
    try:
        pair = build_window_pair(cfg.d, cfg.L, grid)
    except CertificateError as exc:
        return EXIT_INVALID, _report(cfg, "delta-check", {"status": "certificate failure", "error": str(exc)})
    J = 8 if cfg.J is None else cfg.J
    f = _field_for(cfg, grid)
    try:
        res = delta_approx_check(f, pair.window(cfg.window), J)
    except (ValueError, ScaleError) as exc:
        return EXIT_INVALID, _report(cfg, "delta-check", {"status": "invalid", "error": str(exc)})
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _curve_csv(out / "delta.csv", ["j", "error", "resolved"],
               zip(res["j"], res["error"], (int(r) for r in res["resolved"])))
    report = _report(cfg, "delta-check", res)
    _write(out, "delta.json", _dump(report) + "\n")
    return EXIT_OK, report


# -- argument parsing ---------------------------------------------------------------

def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (schema 1)")
    p.add_argument("--d", type=int, help="dimension (1 or 2)")
    p.add_argument("--X", type=float, help="grid half width")
    p.add_argument("--N", type=int, help="nodes per axis")
    p.add_argument("--L", type=int, help="window order")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsmollifier", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version())
    sub = parser.add_subparsers(dest="command", required=True)

    win = sub.add_parser("windows", help="build or verify a window pair")
    win_sub = win.add_subparsers(dest="action", required=True)
    for action in ("build", "verify"):
        _grid_flags(win_sub.add_parser(action))

    wc = sub.add_parser("weights", help="weight system checks").add_subparsers(dest="action", required=True)
    chk = wc.add_parser("check")
    _grid_flags(chk)
    chk.add_argument("--system", help="one, log, pol, exp or custom:<expr>")
    chk.add_argument("--cond", choices=CONDITIONS)
    chk.add_argument("--n", type=int)
    chk.add_argument("--m-cap", dest="m_cap", type=int)
    chk.add_argument("--against", help="second system for the moderate condition")

    c = sub.add_parser("classify", help="membership / convolutor / multiplier verdict")
    _grid_flags(c)
    c.add_argument("--f", help=f"corpus function {NAMES} or expr:<expression>")
    c.add_argument("--class", dest="space_class", choices=CLASSES)
    c.add_argument("--system")
    c.add_argument("--against", help="divisor system for the multiplier class")
    c.add_argument("--engine", choices=ENGINES)
    c.add_argument("--p", type=float)
    c.add_argument("--J", dest="J_cap", type=int)
    c.add_argument("--N-max", dest="N_max", type=int)
    c.add_argument("--A-max", dest="A_max", type=int)
    c.add_argument("--eps-slope", dest="eps_slope", type=float)
    c.add_argument("--rho-fit", dest="rho_fit", type=float)

    for name in ("reconstruct", "delta-check"):
        r = sub.add_parser(name)
        _grid_flags(r)
        r.add_argument("--f")
        r.add_argument("--J", type=int)
        if name == "delta-check":
            r.add_argument("--window", choices=("varphi", "psi"))
    return parser


COMMANDS = {
    ("windows", "build"): cmd_windows_build,
    ("windows", "verify"): cmd_windows_verify,
    ("weights", "check"): cmd_weights_check,
    ("classify", None): cmd_classify,
    ("reconstruct", None): cmd_reconstruct,
    ("delta-check", None): cmd_delta_check,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    key = (args.command, getattr(args, "action", None))
    try:
        cfg = resolve(args)
        code, report = COMMANDS[key](cfg)
    except (ConfigError, ExpressionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(_dump(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
