"""Command-line front end.

Exit codes: 0 pass, 2 negative finding, 3 inconclusive, 64 configuration
error, 70 numeric failure during simulation.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .feedback import (
    check_corollary_lti,
    check_corollary_nl,
    check_theorem_sni2,
    impulse_experiment,
    wellposed_gate,
)
from .iqc import b_membership, bc_membership, lti_b_condition
from .ni_analysis import check_ccw, check_ni, lti_ni_sweep
from .report import jsonable
from .sysmodel import ModelError, SimulationError

__all__ = ["main", "EXIT_OK", "EXIT_NEGATIVE", "EXIT_INCONCLUSIVE", "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_OK = 0
EXIT_NEGATIVE = 2
EXIT_INCONCLUSIVE = 3
EXIT_CONFIG = 64
EXIT_NUMERIC = 70

OUT_ENV = "NEGIMAG_OUT"

FIGURES = {
    "fig2": {
        "pairs": (("C1", "paper-P"), ("C2", "paper-P"), ("C3", "paper-P")),
        "expected": ("decaying", "decaying", "growing"),
        "log": False,
    },
    "fig3": {
        "pairs": (("C4", "paper-P"), ("C5", "paper-P")),
        "expected": ("decaying", "growing"),
        "log": True,
    },
}

log = logging.getLogger("negimag")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# Output helpers


class Context:
    def __init__(self, args):
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        self.config = cfg
        out = args.out or os.environ.get(OUT_ENV) or "negimag-out"
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.jobs = max(1, args.jobs)
        self.command = args.command
        self.started = time.perf_counter()
        self._systems = {}

    def system(self, name):
        if name not in self._systems:
            self._systems[name] = self.config.system(name)
        return self._systems[name]

    def battery(self):
        return self.config.make_battery()

    def write_witness(self, tag, witness):
        if witness is None:
            return None
        name = f"witness-{tag}.csv"
        write_csv(self.out / name, ["t", *[f"u{j + 1}" for j in range(witness.dim)]],
                  [witness.t, *witness.samples.T])
        return name

    def write_report(self, stem, results):
        doc = {
            "tool": "negimag",
            "version": __version__,
            "command": self.command,
            "config": self.config.to_dict(),
            "results": jsonable(results),
        }
        stamp = (
            f"{_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')} "
            f"elapsed={time.perf_counter() - self.started:.3f}s"
        )
        write_json(self.out / f"{stem}.json", doc, stamp)
        return self.out / f"{stem}.json"


def write_json(path, doc, stamp=None):
    """Sorted, indented JSON; the run stamp (if any) occupies the first key line only."""
    body = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=True)
    if stamp is not None:
        body = "{\n" + f'  "run_stamp": {json.dumps(stamp)},\n' + body[2:]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(body + "\n")


def write_csv(path, header, columns):
    """CSV with '.' radix, ',' delimiter, LF endings and round-trip precision."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    np.savetxt(buf, data, fmt="%.17g", delimiter=",", newline="\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_check_ni(ctx, args):
    sys_ = ctx.system(args.system)
    n = ctx.config.numerics
    battery = ctx.battery()
    verdict = check_ni(sys_, battery, n.bands(), grid=n.grid())
    result = {"system": args.system, "ni": verdict.to_dict(ctx.write_witness(f"ni-{_safe(args.system)}", verdict.witness))}
    if sys_.is_lti:
        sweep = lti_ni_sweep(sys_)
        result["sweep"] = {
            "classification": sweep.classification,
            "epsilon_hat": sweep.epsilon_hat,
            "lowest": sweep.details["lowest"],
            "lowest_at": sweep.details["lowest_at"],
            "flags": sweep.flags,
        }
        result["crosscheck"] = {
            "agree": sweep.classification == verdict.classification,
            "sweep": sweep.classification,
            "battery": verdict.classification,
        }
    ctx.write_report(f"check-ni-{_safe(args.system)}", result)
    print(f"{args.system}: {verdict.classification} (epsilon_hat={verdict.epsilon_hat:.4g})")
    for flag in verdict.flags:
        print(f"  flag: {flag}")
    return {"SNI": EXIT_OK, "NI": EXIT_OK, "not-NI": EXIT_NEGATIVE}.get(verdict.classification, EXIT_INCONCLUSIVE)


def _status_exit(status):
    return {"pass": EXIT_OK, "fail": EXIT_NEGATIVE}.get(status, EXIT_INCONCLUSIVE)


def cmd_check_ccw(ctx, args):
    rep = check_ccw(ctx.system(args.system), ctx.battery())
    ref = ctx.write_witness(f"ccw-{_safe(args.system)}", rep.witness)
    ctx.write_report(f"check-ccw-{_safe(args.system)}", {"system": args.system, "ccw": rep.to_dict(ref)})
    print(f"{args.system}: CCW {rep.status} (min value {rep.margins['min_value']:.4g})")
    return _status_exit(rep.status)


def _xi(ctx, args):
    c = ctx.config.xi_constraint(args.xi, args.epsilon)
    if c is None:
        raise ConfigError("no Xi given: set 'xi' in the config or pass --xi")
    return c


def cmd_check_iqc(ctx, args):
    sys_ = ctx.system(args.system)
    c = _xi(ctx, args)
    fn = bc_membership if args.set == "BC" else b_membership
    rep = fn(sys_, c, ctx.battery())
    result = {"system": args.system, "set": args.set, "xi": c.to_dict()}
    result["membership"] = rep.to_dict(ctx.write_witness(f"iqc-{_safe(args.system)}", rep.witness))
    if sys_.is_lti and args.set == "B":
        result["dc_condition"] = lti_b_condition(sys_, c).to_dict()
    ctx.write_report(f"check-iqc-{_safe(args.system)}-{args.set}", result)
    print(f"{args.system} in {args.set}(Xi, {c.epsilon:g}): {rep.status} (eps_meas={rep.margins['eps_meas']:.4g})")
    return _status_exit(rep.status)


def cmd_check_stability(ctx, args):
    p_name, c_name = args.pair
    p, c = ctx.system(p_name), ctx.system(c_name)
    n = ctx.config.numerics
    if args.rule == "theorem":
        v = check_theorem_sni2(p, c, _xi(ctx, args), ctx.battery(), n.bands(), n.tau_grid)
    elif args.rule == "corollary-nl":
        v = check_corollary_nl(p, c, _xi(ctx, args), ctx.battery(), n.tau_grid)
    else:
        xi0 = _xi(ctx, args)
        xi_inf = ctx.config.xi_inf_constraint()
        if xi_inf is None:
            raise ConfigError("rule corollary-lti needs 'xi_inf' in the config")
        v = check_corollary_lti(p, c, xi0, xi_inf, n.tau_grid)
    result = {"pair": [p_name, c_name], "verdict": v.to_dict()}
    ctx.write_report(f"check-stability-{_safe(p_name)}-{_safe(c_name)}-{args.rule}", result)
    print(f"{p_name} # {c_name} [{args.rule}]: {v.conclusion}")
    for key in sorted(v.premises):
        print(f"  {key}: {v.premises[key].status}")
    for flag in sorted(set(v.flags)):
        print(f"  flag: {flag}")
    return EXIT_OK if v.certified else EXIT_NEGATIVE


def _trace_columns(res, with_abs=False):
    tr = res.trace
    cols = [tr.t, tr.d1.samples[:, 0], tr.u1.samples[:, 0], tr.y1.samples[:, 0], tr.y2.samples[:, 0]]
    header = ["t", "d1", "u1", "y1", "y2"]
    if with_abs:
        cols.append(np.abs(tr.y1.samples[:, 0]))
        header.append("abs_y1")
    return header, cols


def _run_impulse(p, c, n):
    return impulse_experiment(p, c, n.pulse_width, n.loop_horizon, n.dt, n.decay_below, n.grow_above)


def cmd_simulate(ctx, args):
    from .plotting import plot_impulse_results

    p_name, c_name = args.pair
    p, c = ctx.system(p_name), ctx.system(c_name)
    gate = wellposed_gate(p, c)
    stem = f"simulate-{_safe(p_name)}-{_safe(c_name)}"
    if not gate.passed:
        ctx.write_report(stem, {"pair": [p_name, c_name], "wellposed": gate.to_dict()})
        print(f"{p_name} # {c_name}: loop not well posed (gain product {gate.margins['product']:g})")
        return EXIT_NEGATIVE
    res = _run_impulse(p, c, ctx.config.numerics)
    header, cols = _trace_columns(res)
    write_csv(ctx.out / f"{stem}.csv", header, cols)
    plot_impulse_results({f"{p_name} # {c_name}": res}, ctx.out / f"{stem}.png",
                         log_amplitude=args.log, title=f"{p_name} # {c_name}")
    ctx.write_report(stem, {
        "pair": [p_name, c_name],
        "injection": args.injection,
        "wellposed": gate.to_dict(),
        "diagnostics": res.to_dict(),
        "trace": f"{stem}.csv",
        "figure": f"{stem}.png",
    })
    print(f"{p_name} # {c_name}: {res.label} (tail ratio {res.tail_ratio:.3g}, peak |y1| {res.peak:.4g})")
    return EXIT_NUMERIC if res.label == "growing/overflow" else EXIT_OK


def _reproduce_one(job):
    cfg_dict, p_name, c_name = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return _run_impulse(cfg.system(p_name), cfg.system(c_name), cfg.numerics)


def cmd_reproduce(ctx, args):
    from .plotting import plot_impulse_results

    spec = FIGURES[args.figure]
    cfg = ctx.config
    if args.horizon is not None:
        cfg = cfg.with_numerics(loop_horizon=args.horizon)
        ctx.config = cfg
    jobs = [(cfg.to_dict(), p, c) for p, c in spec["pairs"]]
    if ctx.jobs > 1:
        with ProcessPoolExecutor(max_workers=ctx.jobs) as pool:
            results = list(pool.map(_reproduce_one, jobs))
    else:
        n = cfg.numerics
        results = [_run_impulse(ctx.system(p), ctx.system(c), n) for p, c in spec["pairs"]]
    rows, matches, indeterminate = [], 0, False
    fig_results = {}
    for (p, c), expected, res in zip(spec["pairs"], spec["expected"], results):
        stem = f"{args.figure}-{_safe(p)}-{_safe(c)}"
        header, cols = _trace_columns(res, with_abs=spec["log"])
        write_csv(ctx.out / f"{stem}.csv", header, cols)
        ok = res.label == expected or (expected == "growing" and res.label == "growing/overflow")
        matches += ok
        indeterminate |= res.label == "indeterminate"
        rows.append({"pair": [p, c], "expected": expected, "match": ok, "trace": f"{stem}.csv", **res.to_dict()})
        fig_results[p] = res
        print(f"{args.figure} {p} # {c}: {res.label} (expected {expected}) tail ratio {res.tail_ratio:.3g}")
    plot_impulse_results(fig_results, ctx.out / f"{args.figure}.png", log_amplitude=spec["log"],
                         title=f"{args.figure}: impulse responses y1")
    summary = {"figure": args.figure, "matched": matches, "total": len(rows), "experiments": rows,
               "figure_file": f"{args.figure}.png"}
    ctx.write_report(f"{args.figure}-summary", summary)
    print(f"{args.figure}: {matches}/{len(rows)} labels match")
    if matches == len(rows):
        return EXIT_OK
    return EXIT_INCONCLUSIVE if indeterminate else EXIT_NEGATIVE


# ---------------------------------------------------------------------------


def _global_flags(suppress):
    g = _Parser(add_help=False)
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    g.add_argument("--config", help="JSON experiment configuration", **kw)
    g.add_argument("--seed", type=int, help="battery seed (overrides the config)", **kw)
    g.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./negimag-out)", **kw)
    g.add_argument("--jobs", type=int, help="parallel experiments", **({"default": 1} | kw))
    return g


def build_parser():
    # Global flags are accepted before or after the subcommand.
    common = _global_flags(suppress=True)
    parser = _Parser(prog="negimag", description="Negative-imaginary and IQC feedback checks.",
                     parents=[_global_flags(suppress=False)])
    parser.add_argument("--version", action="version", version=f"negimag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check-ni", parents=[common], help="finite-frequency NI/SNI test")
    p.add_argument("--system", required=True)

    p = sub.add_parser("check-ccw", parents=[common], help="counterclockwise functional test")
    p.add_argument("--system", required=True)

    def xi_args(q):
        q.add_argument("--xi", help="preset name (xi1, xi2) overriding the config")
        q.add_argument("--epsilon", type=float, help="margin overriding the config")

    p = sub.add_parser("check-iqc", parents=[common], help="B / B_C membership")
    p.add_argument("--system", required=True)
    p.add_argument("--set", choices=("B", "BC"), default="B")
    xi_args(p)

    p = sub.add_parser("check-stability", parents=[common], help="feedback stability premises")
    p.add_argument("--pair", nargs=2, required=True, metavar=("P", "C"))
    p.add_argument("--rule", choices=("theorem", "corollary-nl", "corollary-lti"), default="theorem")
    xi_args(p)

    p = sub.add_parser("simulate", parents=[common], help="pulse response of P # C")
    p.add_argument("--pair", nargs=2, required=True, metavar=("P", "C"))
    p.add_argument("--injection", choices=("pulse",), default="pulse")
    p.add_argument("--log", action="store_true", help="plot |y1| on a log axis")

    p = sub.add_parser("reproduce", parents=[common], help="reference impulse experiments")
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--horizon", type=float, help="loop horizon in seconds")
    return parser


COMMANDS = {
    "check-ni": cmd_check_ni,
    "check-ccw": cmd_check_ccw,
    "check-iqc": cmd_check_iqc,
    "check-stability": cmd_check_stability,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        ctx = Context(args)
        return COMMANDS[args.command](ctx, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, FloatingPointError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ModelError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
