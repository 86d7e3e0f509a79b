"""Command-line entry point: ``multiplex-cutoff {validate,optimize,simulate,envelope,props}``.

Exit codes: 0 success, 1 certificate failure, 2 invalid model or usage,
3 no strictly positive permissible vector, 4 envelope grid over the cap,
5 property-suite failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .config import ExperimentConfig, load_config
from .degree_model import build_polytope, check_assumptions, is_permissible, validate_model
from .errors import ConfigError, EmptyPolytope, GridTooLarge, NoInteriorPoint
from .graph_gen import sample_graph
from .layer_chain import build_chain
from .optimizer import maximize_entropy_rate, optimizer_certificates
from .profile import crossing_time, envelope, profile_gap, profile_of
from .properties import run_all
from .walk_engine import default_sources, tv_curve, tv_curve_uniform_start

EXIT_OK = 0
EXIT_CERTIFICATE = 1
EXIT_INVALID = 2
EXIT_NO_INTERIOR = 3
EXIT_GRID = 4
EXIT_PROPS = 5


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_plain) + "\n")


def _emit(cfg: ExperimentConfig, name: str, command: str, body: dict[str, Any]) -> dict:
    payload = {"header": cfg.header(command), **body}
    _write_json(Path(cfg.out_dir) / name, payload)
    print(json.dumps(payload, sort_keys=True, default=_plain))
    return payload


def _optimum(cfg: ExperimentConfig):
    spec = cfg.model()
    chart = build_polytope(spec)
    o = cfg.section("optimize")
    return spec, chart, maximize_entropy_rate(spec, chart, tol=float(o["tol"]), method=o["method"])


def _time_range(t_max, profile) -> int:
    if t_max is not None:
        return int(t_max)
    return int(math.ceil(profile.t_p + 6 * profile.w_p))


# -- subcommands --------------------------------------------------------------

def cmd_validate(cfg: ExperimentConfig) -> int:
    spec = cfg.model()
    violations = [v.to_dict() for v in validate_model(spec)]
    body: dict[str, Any] = {"valid": not violations, "violations": violations,
                            "N": spec.N, "layers": spec.types[0].layers if spec.types else 0}
    if not violations:
        try:
            chart = build_polytope(spec)
            body["polytope"] = chart.to_dict()
            body["polytope_dim"] = chart.dim
            body["assumptions"] = check_assumptions(spec, chart).to_dict()
        except EmptyPolytope as exc:
            body["valid"] = False
            body["violations"] = [{"kind": "polytope", "message": str(exc),
                                   "layer": None, "type_index": None}]
    _emit(cfg, "validate.json", "validate", body)
    return EXIT_OK if body["valid"] else EXIT_INVALID


def cmd_optimize(cfg: ExperimentConfig) -> int:
    spec, chart, res = _optimum(cfg)
    chain = build_chain(spec, res.p_star)
    cert = optimizer_certificates(spec, res, chain, raise_on_failure=False)
    prof = profile_of(chain, spec.N)
    body = {
        "optimizer": res.with_certificate(cert).to_dict(),
        "mu_star": chain.mu,
        "sigma2_star": chain.sigma2,
        "t_star": prof.t_p,
        "w_star": prof.w_p,
        "N": spec.N,
        "chain": chain.to_dict(spec.N),
    }
    if chart.dim == 1:
        body["segment_parameter"] = chart.segment_parameter(res.p_star)
    _emit(cfg, "optimize.json", "optimize", body)
    ok = cert["min_coord_ok"] and cert["kkt_ok"] and cert["variance_ok"] is not False
    return EXIT_OK if ok else EXIT_CERTIFICATE


def cmd_simulate(cfg: ExperimentConfig) -> int:
    s = cfg.section("simulate")
    spec = cfg.model()
    if s["p"] is None:
        p = _optimum(cfg)[2].p_star
    else:
        p = np.asarray(s["p"], dtype=float)
        if not is_permissible(spec, p, tol=1e-9):
            raise ConfigError("simulate.p is not a permissible vector for this model")
    prof = profile_of(build_chain(spec, p), spec.N)
    t_max = _time_range(s["t_max"], prof)
    g = sample_graph(spec, cfg.seed)
    if s["uniform_start"]:
        curve = tv_curve_uniform_start(g, p, t_max)
    else:
        sources = default_sources(g, int(s["sources"]), cfg.seed)
        curve = tv_curve(g, p, sources, t_max, threads=cfg.threads)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "simulate.csv", "w", newline="") as fh:
        curve.write_csv(fh, cfg.header_text("simulate"))
    gap = profile_gap(curve, prof)
    _emit(cfg, "simulate.json", "simulate", {
        "p": p.tolist(), "N": spec.N, "profile": prof.to_dict(), "t_max": t_max,
        "sources": [str(v) for v in curve.sources], "sup_gap": gap.sup_gap, "gap_at": gap.gap_at,
        "crossing_time": crossing_time(curve.times, curve.values),
        "monotone": bool(np.all(np.diff(curve.values) <= 1e-12)),
    })
    return EXIT_OK


def cmd_envelope(cfg: ExperimentConfig) -> int:
    e = cfg.section("envelope")
    size = int(e["grid_size"])
    if size < 1:
        raise ConfigError(f"envelope.grid_size must be positive, got {size}")
    spec, chart, res = _optimum(cfg)
    prof = profile_of(build_chain(spec, res.p_star), spec.N)
    times = np.arange(_time_range(e["t_max"], prof) + 1)
    g = sample_graph(spec, cfg.seed)
    sources = default_sources(g, int(e["sources"]), cfg.seed)
    env = envelope(g, spec, chart, size, times, sources, p_star=res.p_star,
                   cap=int(e["grid_cap"]), threads=cfg.threads)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "envelope.csv", "w", newline="") as fh:
        env.write_csv(fh, cfg.header_text("envelope"))
    trace = [{"t": int(t), "grid_index": int(k), "chart": env.chart_coords[k].tolist(),
              **({"segment": float(env.segment[k])} if env.segment is not None else {})}
             for t, k in zip(env.times, env.argmin)]
    _emit(cfg, "envelope.json", "envelope", {
        "N": spec.N, "profile": prof.to_dict(), "sup_gap": env.sup_gap,
        "grid": [p.tolist() for p in env.grid], "optimizer_index": env.optimizer_index,
        "argmin_trace": trace,
    })
    return EXIT_OK


def cmd_props(cfg: ExperimentConfig) -> int:
    s = cfg.section("props")
    results = run_all(cfg.seed, instances=int(s["instances"]),
                      inject_bad_sigma=bool(s["inject_bad_sigma"]), quick=bool(s["quick"]))
    failed = [r.name for r in results if not r.passed]
    _emit(cfg, "props.json", "props", {
        "passed": not failed, "failed": failed, "properties": [r.to_dict() for r in results],
    })
    if failed:
        print("failed properties: " + ", ".join(failed), file=sys.stderr)
        return EXIT_PROPS
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "envelope": cmd_envelope,
    "props": cmd_props,
}


def _p_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (required here or in the config)")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--out-dir", dest="out_dir", help="directory for emitted files")
    common.add_argument("--N", dest="N", type=int, help="override the population size")

    parser = argparse.ArgumentParser(prog="multiplex-cutoff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a model and its polytope")
    sub.add_parser("optimize", parents=[common], help="entropy-rate maximizer and its profile")

    sim = sub.add_parser("simulate", parents=[common], help="TV curve on one sampled graph")
    sim.add_argument("--p", dest="simulate.p", type=_p_list, help="layer vector, comma separated")
    sim.add_argument("--sources", dest="simulate.sources", type=int)
    sim.add_argument("--t-max", dest="simulate.t_max", type=int)
    sim.add_argument("--uniform-start", dest="simulate.uniform_start", action="store_true",
                     default=None)

    env = sub.add_parser("envelope", parents=[common], help="minimum of TV curves over a p grid")
    env.add_argument("--grid-size", dest="envelope.grid_size", type=int)
    env.add_argument("--grid-cap", dest="envelope.grid_cap", type=int)
    env.add_argument("--sources", dest="envelope.sources", type=int)
    env.add_argument("--t-max", dest="envelope.t_max", type=int)

    props = sub.add_parser("props", parents=[common], help="randomized property suites")
    props.add_argument("--instances", dest="props.instances", type=int)
    props.add_argument("--quick", dest="props.quick", action="store_true", default=None)
    props.add_argument("--inject-bad-sigma", dest="props.inject_bad_sigma", action="store_true",
                       default=None, help="debug: inflate sigma2 to exercise the failure path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    path = args.pop("config")
    try:
        cfg = load_config(path, args)
    except ConfigError as exc:
        parser.error(str(exc))
    try:
        return COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NoInteriorPoint as exc:
        print(f"error: no strictly positive permissible vector: {exc}", file=sys.stderr)
        return EXIT_NO_INTERIOR
    except EmptyPolytope as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GridTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRID


if __name__ == "__main__":
    sys.exit(main())
