"""Command line front end and pipeline orchestration.

    wavemaslov run --config fhn_default.cfg --out results/
    wavemaslov run --system scalar --a 0.3
    wavemaslov box --wave results/wave.json

Exit status: 0 when every requested check passes, 1 when a check fails,
2 for configuration or I/O problems and 3 when a stage raises.
"""
import argparse
import configparser
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import serialization
from .bundle_tracker import BundleCache
from .errors import WaveMaslovError
from .evans_function import real_roots, winding_count
from .fd_oracle import assemble, oracle_eigs, to_dict as oracle_dict
from .maslov_index import maslov_box, maslov_of_wave, select_lambda_max, z_crossings, select_tau
from .system_model import FHNParameters, make_fhn, make_scalar_bistable
from .wave_solver import WaveConfig, WaveProfile, singular_guess, solve_wave, standing_guess

STAGES = ("wave", "box", "evans", "winding", "oracle")
EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2, 3
ORACLE_SPACING = 0.1
POSITIVE = 1e-4
MATCH_TOL = 5e-3


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    system: str = "fhn"
    a: float | None = None
    eps: float = 0.001
    gamma: float = 1.0
    L: float | None = None
    M: int | None = None
    tol: float = 1e-8
    lambda_max: float | None = None
    n_lambda: int = 201
    stages: tuple = STAGES
    out: str = "."
    threads: int = 1
    wave: str | None = None

    def validate(self):
        if self.system not in ("fhn", "scalar"):
            raise ConfigError(f"system must be fhn or scalar, got {self.system!r}")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; choose from {STAGES}")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.M is not None and self.M < 400:
            raise ConfigError("M must be at least 400")

    def fhn_parameters(self) -> FHNParameters:
        return FHNParameters(0.1 if self.a is None else self.a, self.eps, self.gamma)

    def build_system(self):
        if self.system == "fhn":
            return make_fhn(self.fhn_parameters())
        return make_scalar_bistable(0.3 if self.a is None else self.a)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    if value is None:
        return None
    if key == "stages":
        items = value if isinstance(value, (list, tuple)) else str(value).split(",")
        return tuple(s.strip() for s in items if s.strip())
    kind = _TYPES[key]
    try:
        if kind in ("int", int):
            return int(value)
        if "float" in str(kind):
            return float(value)
        if "int" in str(kind):
            return int(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return str(value)


def read_config(path: str) -> dict:
    """Flat key = value file; a section header is optional."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text if not text.lstrip().startswith("[") else text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            key = key.replace("-", "_")
            if key not in _TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            out[key] = _coerce(key, value)
    return out


def make_config(args) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    for key in ("system", "a", "eps", "gamma", "L", "M", "tol", "lambda_max", "out",
                "threads", "wave", "stages", "n_lambda"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = _coerce(key, v)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- stages

def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text)


def solve_stage(cfg: RunConfig) -> WaveProfile:
    if cfg.wave:
        with open(cfg.wave) as fh:
            return WaveProfile.from_json(fh.read())
    system = cfg.build_system()
    if cfg.system == "fhn":
        guess = singular_guess(cfg.fhn_parameters(), L=cfg.L)
    else:
        guess = standing_guess(system.params["a"], L=cfg.L)
    return solve_wave(system, guess, WaveConfig(tol=cfg.tol))


def oracle_size(cfg: RunConfig, profile: WaveProfile) -> int:
    if cfg.M is not None:
        return cfg.M
    return max(1600, int(np.ceil(2 * profile.L / ORACLE_SPACING)))


def oracle_stage(cfg: RunConfig, profile: WaveProfile) -> dict:
    op = assemble(profile.system, profile, "Lc", oracle_size(cfg, profile))
    eigs = oracle_eigs(op)
    return oracle_dict(op, eigs)


def evans_csv(samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda_re", "lambda_im", "D_re", "D_im", "z_spread"])
    for s in samples:
        w.writerow([format(float(x), ".17g") for x in s.row()])
    return buf.getvalue()


@dataclass
class Pipeline:
    cfg: RunConfig
    profile: WaveProfile | None = None
    lambda_max: float | None = None
    cache: BundleCache | None = None
    results: dict = field(default_factory=dict)

    def ensure_wave(self):
        if self.profile is None:
            self.profile = solve_stage(self.cfg)
        return self.profile

    def ensure_cache(self):
        profile = self.ensure_wave()
        if self.lambda_max is None:
            if self.cfg.lambda_max is not None:
                self.lambda_max = self.cfg.lambda_max
            else:
                shelf = select_lambda_max(profile.system, profile)
                self.lambda_max = shelf.lambda_max
                self.results["shelf"] = {"lambda_max": shelf.lambda_max, "margin": shelf.margin,
                                         "fine_margin": shelf.fine_margin}
        if self.cache is None:
            self.cache = BundleCache(profile.system, profile, self.lambda_max)
        return self.cache


def _report(p: Pipeline) -> tuple[dict, bool]:
    r = p.results
    checks = {}
    box = r.get("box")
    roots = r.get("evans_roots")
    oracle = r.get("oracle")
    if box is not None:
        checks["sum_ok"] = bool(box.sum_ok)
        lam_forms = [c for c in box.crossings if c.kind == "lambda"]
        checks["monotonicity_ok"] = all(c.sig.n_minus == 0 and c.sig.n_zero == 0 for c in lam_forms)
    positive_roots = None
    if roots is not None:
        positive_roots = sum(rr.order for rr in roots if rr.lambda_star > POSITIVE)
    oracle_eig = None
    if oracle is not None:
        oracle_eig = np.array([complex(*e) for e in oracle["eigs"]])
    realness = []
    if "winding" in r and roots is not None:
        realness.append(r["winding"] == sum(rr.order for rr in roots))
    if oracle_eig is not None:
        realness.append(bool(np.all(np.abs(oracle_eig.imag) < 1e-8)))
    if realness:
        checks["realness_ok"] = all(realness)
    if oracle_eig is not None and (roots is not None or box is not None):
        ok = True
        count = int(np.sum(oracle_eig.real > POSITIVE))
        if roots is not None:
            locs = np.array([rr.lambda_star for rr in roots])
            in_range = oracle_eig.real[(oracle_eig.real >= -MATCH_TOL)
                                       & (oracle_eig.real <= (p.lambda_max or np.inf))]
            ok &= all(np.min(np.abs(in_range - x)) < MATCH_TOL for x in locs) if in_range.size else not locs.size
            ok &= all(np.min(np.abs(locs - e)) < MATCH_TOL for e in in_range) if locs.size else not in_range.size
            ok &= positive_roots == count
        if box is not None:
            ok &= abs(box.mu[0]) == box.mu[1] == count
        checks["oracle_match"] = bool(ok)
    passed = all(checks.values())
    if roots is not None and positive_roots:
        verdict = "unstable"
    elif roots is not None and passed and any(abs(rr.lambda_star) < POSITIVE and rr.order == 1
                                               for rr in roots):
        verdict = "stable"
    else:
        verdict = "inconclusive"
    report = {
        "system": p.profile.system.describe() if p.profile is not None else None,
        "speed": p.profile.c if p.profile is not None else None,
        "lambda_max": p.lambda_max,
        "maslov": box.maslov if box is not None else r.get("maslov"),
        "mu": list(box.mu) if box is not None else None,
        "evans_roots": [rr.to_dict() for rr in roots] if roots is not None else None,
        "oracle_eigs": oracle["eigs"] if oracle is not None else None,
        "winding": r.get("winding"),
        "checks": checks,
        "verdict": verdict,
    }
    return report, passed


def run_stages(p: Pipeline, stages, out: str) -> dict:
    """Run stages in pipeline order, writing each artifact as soon as it exists."""
    cfg = p.cfg
    for stage in STAGES:
        if stage not in stages:
            continue
        try:
            if stage == "wave":
                _write(os.path.join(out, "wave.json"), p.ensure_wave().to_json())
            elif stage == "box":
                cache = p.ensure_cache()
                box = maslov_box(p.profile.system, p.profile, lambda_max=p.lambda_max,
                                 n_lambda=cfg.n_lambda, cache=cache)
                p.results["box"] = box
                d = box.to_dict()
                if "evans_roots" in p.results:
                    d["evans_roots"] = [rr.to_dict() for rr in p.results["evans_roots"]]
                _write(os.path.join(out, "box.json"), serialization.dumps(d))
            elif stage == "evans":
                cache = p.ensure_cache()
                roots, samples = real_roots(cache, (0.0, p.lambda_max), n=cfg.n_lambda)
                p.results["evans_roots"] = roots
                _write(os.path.join(out, "evans.csv"), evans_csv(samples))
                if "box" in p.results:
                    d = p.results["box"].to_dict()
                    d["evans_roots"] = [rr.to_dict() for rr in roots]
                    _write(os.path.join(out, "box.json"), serialization.dumps(d))
            elif stage == "winding":
                cache = p.ensure_cache()
                p.results["winding"] = winding_count(cache, (-1e-3, p.lambda_max, -1.0, 1.0))
                _write(os.path.join(out, "winding.json"),
                       serialization.dumps({"rectangle": [-1e-3, p.lambda_max, -1.0, 1.0],
                                            "count": p.results["winding"]}))
            elif stage == "oracle":
                p.results["oracle"] = oracle_stage(cfg, p.ensure_wave())
                _write(os.path.join(out, "oracle.json"), serialization.dumps(p.results["oracle"]))
        except WaveMaslovError as exc:
            raise StageFailure(stage, exc) from exc
    return p.results


class StageFailure(Exception):
    def __init__(self, stage: str, error: WaveMaslovError):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error


# ---------------------------------------------------------------- commands

def _cmd_run(p: Pipeline, out: str) -> int:
    run_stages(p, p.cfg.stages, out)
    report, passed = _report(p)
    _write(os.path.join(out, "report.json"), serialization.dumps(report))
    return EXIT_OK if passed else EXIT_CHECKS


def _cmd_maslov(p: Pipeline, out: str) -> int:
    cache = p.ensure_cache()
    tau = select_tau(cache, np.linspace(0.0, p.lambda_max, 5))
    crossings = z_crossings(cache, tau)
    value = maslov_of_wave(crossings)
    _write(os.path.join(out, "maslov.json"), serialization.dumps(
        {"tau": float(cache.grid[tau]), "maslov": value,
         "crossings": [c.to_dict() for c in crossings]}))
    return EXIT_OK


COMMANDS = {
    "run": None,
    "solve-wave": ("wave",),
    "maslov": None,
    "box": ("box",),
    "evans": ("evans",),
    "winding": ("winding",),
    "oracle": ("oracle",),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--threads", type=int, help="worker count (computation is sequential)")
    common.add_argument("--system", choices=("fhn", "scalar"))
    common.add_argument("--a", type=float)
    common.add_argument("--eps", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--L", type=float, help="half-length of the domain for the wave guess")
    common.add_argument("--M", type=int, help="oracle grid size")
    common.add_argument("--tol", type=float, help="collocation tolerance")
    common.add_argument("--lambda-max", dest="lambda_max", type=float)
    common.add_argument("--n-lambda", dest="n_lambda", type=int)
    common.add_argument("--wave", help="reuse a wave.json instead of solving")
    common.add_argument("--stages", help="comma separated subset of " + ",".join(STAGES))
    parser = argparse.ArgumentParser(prog="wavemaslov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        out = cfg.out
        os.makedirs(out, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory not writable: {out}")
        if cfg.wave and not os.path.isfile(cfg.wave):
            raise ConfigError(f"wave file not found: {cfg.wave}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    p = Pipeline(cfg)
    try:
        if args.command == "run":
            return _cmd_run(p, out)
        if args.command == "maslov":
            return _cmd_maslov(p, out)
        run_stages(p, COMMANDS[args.command], out)
        return EXIT_OK if _report(p)[1] else EXIT_CHECKS
    except StageFailure as exc:
        print(json.dumps({"stage": exc.stage, "code": exc.error.code, "message": str(exc.error)}),
              file=sys.stderr)
        return EXIT_STAGE
    except WaveMaslovError as exc:
        print(json.dumps({"stage": args.command, "code": exc.code, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_STAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
