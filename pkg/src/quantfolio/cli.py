"""``quantfolio`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 market or input validation failure.
Numbers are printed with 12 significant digits. Every file written with
``--out`` gets a ``<out>.manifest.json`` next to it recording the command,
parameters, seed, version, wall-clock time and a SHA-256 of the output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import QuantfolioError, ValidationError
from .household import HouseholdConfig, replicate_table
from .io import load_market, load_strategy
from .kelly import kelly_curve
from .market import discount_normalize, validate
from .quantile import MultiTimeObjective, deviation_rate, multi_time_objective, quantile
from .rng import fresh_seed
from .simulator import (
    SimConfig,
    boundary_deviation_test,
    empirical_quantile,
    multi_time_perturbation_test,
    perturbation_test,
    simulate,
)
from .strategies import allocation

FMT = "%.12g"


class UsageError(Exception):
    def __init__(self, message, parser=None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self)


def fmt(v):
    return FMT % v


def floats(text):
    return [float(s) for s in str(text).replace(";", ",").split(",") if s.strip()]


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    version: str = __version__
    wall_clock_seconds: float = 0.0
    outputs: dict = field(default_factory=dict)


def _digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_output(args, text, manifest):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        manifest.outputs[args.out] = _digest(args.out)
        manifest.wall_clock_seconds = round(time.perf_counter() - args._t_start, 6)
        with open(args.out + ".manifest.json", "w") as fh:
            json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        sys.stdout.write(text)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _manifest(args):
    params = {k: v for k, v in vars(args).items() if not k.startswith("_") and k != "func"}
    return RunManifest(command=args.command, parameters=params, seed=getattr(args, "seed", None))


# ---------------------------------------------------------------------------
# shared setup


def _market(args, require_valid=True):
    model = discount_normalize(load_market(args.market))
    if require_valid:
        report = validate(model, getattr(args, "grid_step", 1.0 / 252.0))
        if not report.passed:
            raise ValidationError(report.summary())
    return model


def _kelly(args):
    model = _market(args)
    return model, kelly_curve(model, grid_step=getattr(args, "grid_step", 1.0 / 252.0))


def _strategy(source, model, x0=None):
    return load_strategy(source, horizon=model.horizon, num_assets=model.num_assets, anchor_x=x0)


def _sim_config(args, record=()):
    if args.seed is None:
        args.seed = fresh_seed()
    return SimConfig(
        num_paths=args.paths,
        seed=args.seed,
        scheme=args.scheme,
        step=args.step,
        record_times=tuple(record),
        antithetic=args.antithetic,
        threads=args.threads,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    model = discount_normalize(load_market(args.market))
    report = validate(model, args.grid_step)
    print(report.summary())
    return 0 if report.passed else 2


def cmd_kelly(args):
    model, curve = _kelly(args)
    m = model.num_assets
    rows = []
    for t, v, bv, vsv, active in curve.rows():
        rows.append([float(t)] + [float(x) for x in v] + [bv, vsv, " ".join(str(i) for i in active)])
    header = ["t"] + [f"v_star_{i + 1}" for i in range(m)] + ["b_dot_v", "sigma_v_norm_sq", "active_set"]
    _write_output(args, _csv(header, rows), _manifest(args))
    return 0


def cmd_allocate(args):
    model, curve = _kelly(args)
    strat = _strategy(args.strategy, model, args.x0)
    pi = allocation(strat, curve, args.t, args.x)
    print(",".join(fmt(v) for v in np.atleast_1d(pi)))
    return 0


def cmd_quantile(args):
    model, curve = _kelly(args)
    strat = _strategy(args.strategy, model, args.x0 if args.x0 is not None else args.x)
    print(fmt(quantile(strat, curve, args.t, args.x, args.alpha, args.horizon)))
    return 0


def cmd_compare(args):
    model, curve = _kelly(args)
    a = _strategy(args.strategies[0], model, args.x0)
    b = _strategy(args.strategies[1], model, args.x0)
    parts = args.grid.split(":")
    if len(parts) != 3:
        raise UsageError("--grid must look like x0:x1:n")
    xs = np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    rows = []
    for x in xs:
        qa = quantile(a, curve, args.t, x, args.alpha)
        qb = quantile(b, curve, args.t, x, args.alpha)
        rows.append([float(x), qa, qb, "a" if qa > qb else ("b" if qb > qa else "tie")])
    _write_output(args, _csv(["x", "median_a", "median_b", "winner"], rows), _manifest(args))
    return 0


def cmd_deviate(args):
    model, curve = _kelly(args)
    strat = _strategy(args.strategy, model, args.x0)
    r = deviation_rate(strat, args.alpha, args.t, args.x, floats(args.pi), curve)
    out = {"rate": r.value, "phi_hat": r.phi_hat, "phi_pi": r.phi_pi, "F_y": r.F_y, "quantile": r.quantile}
    print(json.dumps({k: float(fmt(v)) for k, v in out.items()}))
    return 0


def cmd_simulate(args):
    model, curve = _kelly(args)
    strat = _strategy(args.strategy, model, args.x0 if args.x0 is not None else args.x)
    record = floats(args.record) if args.record else [model.horizon]
    cfg = _sim_config(args, record)
    batch = simulate(strat, model, curve, args.t, args.x, cfg)
    rows = []
    for j, t in enumerate(batch.record_times):
        w = batch.wealth[:, j]
        rows.append([
            float(t), float(w.mean()), empirical_quantile(batch, j, 0.5), empirical_quantile(batch, j, 0.05),
            empirical_quantile(batch, j, 0.95), float(w.min()), batch.breach_fraction,
        ])
    header = ["time", "mean", "median", "q05", "q95", "min", "breach_fraction"]
    _write_output(args, _csv(header, rows), _manifest(args))
    return 0


def _perturb_rows(results):
    return [[r.eps, r.alpha, r.q_base, r.q_perturbed, r.diff, r.stderr, r.rate_estimate] for r in results]


PERTURB_HEADER = ["eps", "alpha", "q_base", "q_perturbed", "diff", "stderr", "rate_estimate"]


def cmd_perturb(args):
    model, curve = _kelly(args)
    strat = _strategy(args.strategy, model, args.x0 if args.x0 is not None else args.x)
    cfg = _sim_config(args)
    res = perturbation_test(strat, args.alpha, args.t, args.x, floats(args.pi), floats(args.eps), cfg, curve,
                            resamples=args.resamples)
    _write_output(args, _csv(PERTURB_HEADER, _perturb_rows(res)), _manifest(args))
    return 0


def cmd_boundary(args):
    model, curve = _kelly(args)
    cfg = _sim_config(args)
    res = [boundary_deviation_test(args.xi, args.t, e, cfg, curve) for e in floats(args.eps)]
    rows = [row + [r.z_score] for row, r in zip(_perturb_rows(res), res)]
    _write_output(args, _csv(PERTURB_HEADER + ["z_score"], rows), _manifest(args))
    return 0


def cmd_household(args):
    if args.seed is None:
        args.seed = fresh_seed()
    cfg = HouseholdConfig(
        num_households=args.households, replications=args.reps, seed=args.seed, log_base=args.log_base,
    )
    table = replicate_table(cfg, betas=floats(args.beta), varpis=floats(args.varpi))
    _write_output(args, table.to_csv(), _manifest(args))
    return 0


def cmd_multitime(args):
    model, curve = _kelly(args)
    strat = _strategy(args.strategy, model, args.x0 if args.x0 is not None else args.x)
    rows = [floats(r) for r in args.weights.split(";")]
    obj = MultiTimeObjective(np.array(floats(args.dates)), rows)
    if args.pi is None:
        cfg = _sim_config(args)
        print(fmt(multi_time_objective(obj, strat, args.t, args.x, args.alpha, curve, cfg)))
        return 0
    cfg = _sim_config(args)
    r = multi_time_perturbation_test(obj, strat, args.alpha, args.t, args.x, floats(args.pi), args.eps, cfg, curve,
                                     resamples=args.resamples)
    _write_output(args, _csv(PERTURB_HEADER, _perturb_rows([r])), _manifest(args))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, sim=False):
    p.add_argument("--market", default=None, help="market JSON (default: one-asset benchmark)")
    p.add_argument("--grid-step", type=float, default=1.0 / 252.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker cap (fallback: QUANTFOLIO_THREADS)")
    p.add_argument("--out", default=None)
    if sim:
        p.add_argument("--paths", type=int, default=100_000)
        p.add_argument("--scheme", choices=["exact", "log_euler"], default="exact")
        p.add_argument("--step", type=float, default=1.0 / 252.0)
        p.add_argument("--antithetic", action="store_true")
        p.add_argument("--resamples", type=int, default=200)


def _add_state(p, alpha=True):
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--x", type=float, default=100.0)
    p.add_argument("--x0", type=float, default=None, help="anchor wealth for pre-committed / zero-investment rules")
    if alpha:
        p.add_argument("--alpha", type=float, default=0.5)


def build_parser():
    parser = _Parser(prog="quantfolio", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("validate", help="check the market assumptions")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("kelly", help="Kelly proportions on a grid")
    _add_common(p)
    p.set_defaults(func=cmd_kelly)

    p = sub.add_parser("allocate", help="dollar holdings of a strategy")
    _add_common(p)
    p.add_argument("--strategy", required=True)
    _add_state(p, alpha=False)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("quantile", help="closed-form quantile")
    _add_common(p)
    p.add_argument("--strategy", required=True)
    _add_state(p)
    p.add_argument("--horizon", type=float, default=None)
    p.set_defaults(func=cmd_quantile)

    p = sub.add_parser("compare", help="medians of two strategies over a wealth grid")
    _add_common(p)
    p.add_argument("--strategies", nargs=2, required=True)
    p.add_argument("--grid", required=True, help="x0:x1:n")
    _add_state(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("deviate", help="closed-form deviation rate")
    _add_common(p)
    p.add_argument("--strategy", default='{"kind": "equilibrium", "xi": 60}')
    p.add_argument("--pi", required=True, help="comma-separated dollar holdings")
    _add_state(p)
    p.set_defaults(func=cmd_deviate)

    p = sub.add_parser("simulate", help="Monte Carlo wealth summary")
    _add_common(p, sim=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--record", default=None, help="comma-separated record times")
    _add_state(p, alpha=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("perturb", help="finite-eps perturbation test")
    _add_common(p, sim=True)
    p.add_argument("--strategy", default='{"kind": "equilibrium", "xi": 60}')
    p.add_argument("--pi", required=True)
    p.add_argument("--eps", default="0.04,0.02,0.01,0.005")
    _add_state(p)
    p.set_defaults(func=cmd_perturb, paths=400_000)

    p = sub.add_parser("boundary", help="deviation from the insurance floor")
    _add_common(p, sim=True)
    p.add_argument("--xi", type=float, default=60.0)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--eps", default="0.01")
    p.set_defaults(func=cmd_boundary, paths=400_000)

    p = sub.add_parser("household", help="share-on-wealth regression table")
    p.add_argument("--beta", default="0.4,0.5,0.6")
    p.add_argument("--varpi", default="0.0065,0.0070,0.0075")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--households", type=int, default=3000)
    p.add_argument("--log-base", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_household)

    p = sub.add_parser("multitime", help="multi-date objective and its perturbation test")
    _add_common(p, sim=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--dates", required=True, help="comma-separated T_1..T_N")
    p.add_argument("--weights", required=True, help="rows separated by ';', e.g. '0.5,0.5;1'")
    p.add_argument("--pi", default=None)
    p.add_argument("--eps", type=float, default=0.01)
    _add_state(p)
    p.set_defaults(func=cmd_multitime)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required", parser)
        args._t_start = time.perf_counter()
        return args.func(args)
    except UsageError as exc:
        (exc.parser or parser).print_usage(sys.stderr)
        print(f"quantfolio: error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"quantfolio: validation failed: {exc}", file=sys.stderr)
        return 2
    except (QuantfolioError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"quantfolio: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
