"""Command-line front end.

``perpex <command> [--config FILE] [--spec TEXT] [--output PATH] [--threads N] [--key value ...]``

Every command is a pure function of its resolved configuration: ``--threads``
and ``--output`` change neither results nor the embedded configuration.
Exit codes: 0 success, 2 configuration error (including an ineligible law
without ``--allow-counterexample``), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import io, rng as rngmod
from .config import COMMANDS, _bool, params_for, resolve
from .errors import (CapabilityError, ConfigError, EstimationError, NumericalError, PerpexError,
                     ReplicaError, SpecError)
from .extremes import (ExceedanceRecords, conditional_non_exceedance, theta_blocks, theta_runs,
                       theta_theoretical)
from .gof import maxima_gof, tail_sandwich
from .mdist import parse_spec, require_simulatable
from .norming import TailConstants, asymptotic_norming, bn_residual, empirical_norming, solve_bn, solved_norming
from .recurrence import (BlockMaximaJob, PathJob, RecurrenceConfig, Stationary, StationaryJob, TailKeeper,
                         coarsen, ensemble)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

HELP = {
    "simulate": "stationary draws, block maxima or path summaries to CSV/binary",
    "maxima-gof": "block maxima, empirical norming and KS distance to the Gumbel law",
    "norming": "all norming variants side by side",
    "extremal-index": "theoretical, blocks, runs and conditional extremal index",
    "tailcheck": "feasibility of the two-sided tail bound over a constant grid",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="perpex", description="Extremes of perpetuities R = M R + q.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, help=HELP[cmd], description=HELP[cmd])
        sp.add_argument("--config", help="INI experiment file")
        sp.add_argument("--spec", help='law of M, e.g. "family=beta alpha=2 beta=1"')
        sp.add_argument("--output", "-o", help="output file (JSON report; sample file for simulate)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        for key, p in params_for(cmd).items():
            flag = "--" + key.replace("_", "-")
            if p.conv is _bool:
                sp.add_argument(flag, dest=key, action="store_const", const="true", default=None, help=p.help)
            elif p.conv.__name__.startswith("list_of_"):
                sp.add_argument(flag, dest=key, nargs="+", default=None, help=p.help)
            else:
                sp.add_argument(flag, dest=key, default=None, help=p.help)
    return parser


def _recurrence(cfg, n=1):
    return RecurrenceConfig(q=cfg["q"], n=n, replicas=cfg["replicas"], seed=cfg["seed"],
                            init=Stationary(cfg["tolerance"], cfg["max_terms"]),
                            allow_counterexample=cfg["allow_counterexample"])


def _spec(cfg, gate=True):
    spec = parse_spec(cfg["distribution"])
    if gate:
        require_simulatable(spec, cfg["allow_counterexample"])
    return spec


def _theta_for(cfg, spec):
    t = cfg.get("theta", "estimated")
    return theta_theoretical(spec, allow_counterexample=True) if t == "theoretical" else t


# -- commands ------------------------------------------------------------------


def cmd_simulate(cfg, output, threads):
    if output is None:
        raise ConfigError("simulate needs --output")
    spec = _spec(cfg)
    R = cfg["replicas"]
    mode = cfg["mode"]
    if mode == "path":
        summaries = ensemble(_recurrence(cfg, cfg["n"]), spec, PathJob(), threads)
        with open(output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("replica,final,running_max,r0,init_truncated\n")
            for s in summaries:
                fh.write(f"{s.replica},{format(float(s.final), '.17g')},{format(float(s.running_max), '.17g')},"
                         f"{format(float(s.r0), '.17g')},{int(bool(s.init_truncated))}\n")
        rows = len(summaries)
    else:
        if mode == "stationary":
            draws = ensemble(_recurrence(cfg), spec, StationaryJob(cfg["samples"]), threads)
            values, per = draws.values, cfg["samples"]
        else:
            values, _ = ensemble(_recurrence(cfg), spec, BlockMaximaJob(cfg["block_len"], cfg["n_blocks"]), threads)
            per = cfg["n_blocks"]
        replica = np.repeat(np.arange(R), per)
        block = np.tile(np.arange(per), R)
        writer = io.write_binary if cfg["format"] == "binary" else io.write_csv
        rows = writer(output, values, replica, block)
    man = io.manifest("simulate", cfg, [output], rows)
    io.write_json(output + ".manifest.json", man)
    return man


def cmd_maxima_gof(cfg, threads):
    spec = _spec(cfg)
    lens = sorted(set(cfg["block_lens"]))
    base, top = lens[0], lens[-1]
    if base < 2:
        raise ConfigError("block_lens must be >= 2")
    bad = [L for L in lens if L % base]
    if bad:
        raise ConfigError(f"block_lens {bad} are not multiples of the smallest length {base}")
    bad = [L for L in lens if top % L]
    if bad:
        raise ConfigError(f"block_lens {bad} do not divide the largest length {top}")
    theta = _theta_for(cfg, spec)
    steps = top * cfg["n_blocks"]
    size = steps * cfg["replicas"]
    # the empirical norming of the shortest blocks reaches deepest into the sample;
    # an estimated theta is not known yet, so keep enough for theta down to 0.1
    t_min = 0.1 if theta == "estimated" else theta
    tail_k = min(size, math.ceil(size * math.e / (t_min * base)) + 2)
    maxima, tail = ensemble(_recurrence(cfg), spec, BlockMaximaJob(base, steps // base, tail_k), threads)
    view = tail.view()
    results = [maxima_gof(coarsen(maxima, L // base), view, L, theta, cfg["x_grid"], cfg["best_fit"])
               for L in lens]
    return {"theta": theta if isinstance(theta, str) else float(theta),
            "theta_theoretical": theta_theoretical(spec, allow_counterexample=True),
            "path_length": steps, "results": results}


def cmd_norming(cfg, threads):
    spec = _spec(cfg, gate=False)
    cons = TailConstants(cfg["c0"], cfg["c1"], cfg["c2"], cfg["c3"])
    ln_n = cfg["log_n"]
    out, reasons = {}, {}
    for which in ("lower", "upper"):
        key = f"solved-{which}"
        try:
            out[key] = solved_norming(spec, cons, which=which, log_n=ln_n).to_dict()
        except CapabilityError as exc:
            b = solve_bn(spec, cons, which=which, log_n=ln_n)
            out[key] = {"a": None, "b": b, "log_n": ln_n, "method": key,
                        "residual": abs(bn_residual(spec, cons, b, ln_n, which))}
            reasons[key] = f"scale: {exc}"
        except NumericalError as exc:
            out[key] = None
            reasons[key] = str(exc)
    try:
        out["asymptotic"] = asymptotic_norming(spec, constants=cons, log_n=ln_n).to_dict()
    except (CapabilityError, SpecError) as exc:
        out["asymptotic"] = None
        reasons["asymptotic"] = str(exc)
    out["empirical"] = None
    theta = 1.0 - spec.p0
    need = 100.0 * theta * math.exp(min(ln_n, 700.0))
    cap = cfg["empirical_max_samples"]
    if need > cap:
        reasons["empirical"] = f"needs {need:.3g} stationary draws (cap {cap})"
    else:
        require_simulatable(spec, cfg["allow_counterexample"])
        per = math.ceil(math.ceil(need) / cfg["replicas"])
        draws = ensemble(_recurrence(cfg), spec, StationaryJob(per), threads)
        try:
            out["empirical"] = empirical_norming(draws.values, math.exp(ln_n), theta, cfg["x_grid"]).to_dict()
        except EstimationError as exc:
            reasons["empirical"] = str(exc)
    out["reasons"] = reasons
    return out


def cmd_extremal_index(cfg, threads):
    spec = _spec(cfg)
    n, R = cfg["n"], cfg["replicas"]
    size = n * R
    pcts = [cfg["percentile"], *cfg["cond_percentiles"]]
    if any(not 0.0 < p < 100.0 for p in pcts):
        raise ConfigError("percentiles must lie strictly between 0 and 100")
    k = math.ceil(size * (1.0 - min(pcts) / 100.0)) + 2
    paths = ensemble(_recurrence(cfg, n), spec, PathJob(lambda: [TailKeeper(min(n, k))]), threads)
    tails = [s.observers[0] for s in paths]
    pooled = TailKeeper(min(size, k))
    for t in tails:
        pooled = pooled.merged(t)
    view = pooled.view()
    u = view.quantile(cfg["percentile"] / 100.0)
    idx = np.sort(np.concatenate([s.replica * n + t.indices[t.values > u] for s, t in zip(paths, tails)]))
    records = ExceedanceRecords(idx, size, u)

    out, reasons = {"theoretical": theta_theoretical(spec, cfg["allow_counterexample"]), "u": u,
                    "path_length": n}, {}
    for name, fn in (("blocks", lambda: theta_blocks(records, cfg["block_len"], cfg["estimator"])),
                     ("runs", lambda: theta_runs(records, cfg["run_gap"]))):
        try:
            out[name] = fn().to_dict()
        except (EstimationError, SpecError) as exc:
            out[name] = None
            reasons[name] = str(exc)
    cond = []
    for j, p in enumerate(cfg["cond_percentiles"]):
        uc = view.quantile(p / 100.0)
        g = rngmod.substream(cfg["seed"], j, rngmod.CONDITIONAL)
        try:
            est = conditional_non_exceedance(spec, cfg["q"], uc, cfg["cond_samples"], g, cfg["attempt_cap"],
                                             cfg["tolerance"], cfg["max_terms"], cfg["allow_counterexample"])
            cond.append({"percentile": p, **est.to_dict()})
        except EstimationError as exc:
            cond.append({"percentile": p, "u": uc, "theta_hat": None, "reason": str(exc)})
    out["conditional"] = cond
    out["reasons"] = reasons
    return out


def cmd_tailcheck(cfg, threads):
    spec = _spec(cfg)
    draws = ensemble(_recurrence(cfg), spec, StationaryJob(cfg["samples"]), threads)
    return tail_sandwich(draws.values, spec, None, cfg["constant_grid"], cfg["y_points"]).to_dict()


RUNNERS = {
    "maxima-gof": cmd_maxima_gof,
    "norming": cmd_norming,
    "extremal-index": cmd_extremal_index,
    "tailcheck": cmd_tailcheck,
}


def run(args):
    flags = {k: getattr(args, k) for k in params_for(args.command)}
    if args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    cfg = resolve(args.command, args.config, args.spec, flags)
    if args.command == "simulate":
        out = cmd_simulate(cfg, args.output, args.threads)
        sys.stdout.write(io.dumps(out))
        return
    report = RUNNERS[args.command](cfg, args.threads)
    report = {"command": args.command, "config": cfg, "report": report}
    if args.output is None:
        sys.stdout.write(io.dumps(report))
        return
    io.write_json(args.output, report)
    io.write_json(args.output + ".manifest.json", io.manifest(args.command, cfg, [args.output]))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        try:
            run(args)
        except ReplicaError as exc:
            if isinstance(exc.cause, SpecError):
                raise exc.cause from exc
            raise
    except (ConfigError, SpecError) as exc:
        print(f"perpex: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PerpexError, OSError, ArithmeticError, MemoryError) as exc:
        print(f"perpex: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
