"""Command-line front end: ``anytime <command> [options]``.

Exit codes: 0 ok, 1 usage error, 2 too many diverged trials, 3 an internal
invariant failed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import code as codes
from . import thresholds as th
from .channel import ChannelSpec, capacity
from .errors import BudgetExceeded, InternalCorruption, MemoryOverflow, UnsupportedOperation
from .plant import preset

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_CORRUPT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config and manifest ------------------------------------------------------------

def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{no}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill options not given on the command line from ``--config``."""
    if not getattr(args, "config", None):
        return
    cfg = read_config(args.config)
    defaults = {a.dest: a for a in parser._actions}
    for key, raw in cfg.items():
        if key not in defaults:
            raise UsageError(f"unknown config key {key!r}")
        act = defaults[key]
        if getattr(args, key) != act.default:
            continue  # explicit flag wins
        try:
            val = act.type(raw) if act.type else raw
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc
        setattr(args, key, val)


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace, out_dir: str):
        self.out_dir = out_dir
        self.path = os.path.join(out_dir, "manifest.json")
        self.data = {
            "command": command,
            "version": __version__,
            "config": {k: v for k, v in vars(args).items() if k not in ("func",)},
            "outputs": [],
        }

    def plan(self, *names: str) -> list[str]:
        paths = [os.path.join(self.out_dir, n) for n in names]
        self.data["outputs"].extend(paths)
        return paths

    def drop(self, path: str) -> None:
        self.data["outputs"].remove(path)

    def write(self) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        with open(self.path, "w") as fh:
            json.dump(self.data, fh, indent=2, default=str)
            fh.write("\n")


def _channel(text: str) -> ChannelSpec:
    try:
        return ChannelSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- commands ----------------------------------------------------------------------------

def cmd_sample_code(args) -> int:
    if not 0 < args.k < args.n:
        raise UsageError("need 0 < k < n (rate below 1)")
    c = codes.sample_toeplitz(args.n, args.k, args.p, args.depth, args.seed)
    codes.save(c, args.out)
    print(f"wrote {args.out}")
    print(f"H_1 shape {c.nbar}x{c.n}, depth {c.depth}, rate {c.rate:.3f}")
    return EXIT_OK


def _emit(rows, header=("quantity", "per_channel_use", "per_step")) -> None:
    print(",".join(header))
    for r in rows:
        print(",".join(_fmt(x) for x in r))


def _fmt(x) -> str:
    if isinstance(x, th.Infeasible):
        return "INFEASIBLE"
    if isinstance(x, float):
        return f"{x:.6g}" if math.isfinite(x) else str(x)
    return str(x)


def cmd_thresholds(args) -> int:
    n = args.n
    kind = args.family
    if kind in ("er", "improved"):
        spec = args.channel
        R = args.rate
        if R is None:
            raise UsageError("--rate is required")
        e = th.random_coding_exponent_full(spec, R)
        rows = [("E_r", e.value, n * e.value)]
        if e.above_capacity:
            rows.append(("E_r", th.Infeasible("rate at or above capacity"), th.Infeasible("")))
        if kind == "improved":
            ez = th.improved_exponent(spec, R)
            rows.append(("E_zeta", ez, n * ez))
            rows.append(("breakpoint_rate", th.improved_breakpoint(spec), n * th.improved_breakpoint(spec)))
        rows.append(("capacity", capacity(spec), n * capacity(spec)))
        _emit(rows)
    elif kind == "toeplitz":
        if args.rate is None:
            raise UsageError("--rate is required")
        res = th.toeplitz_distance_thresholds(args.rate, args.p)
        print("quantity,value")
        if isinstance(res, th.Infeasible):
            print(f"alpha_sup,INFEASIBLE\ntheta_inf,INFEASIBLE")
        else:
            print(f"alpha_sup,{res[0]:.6g}\ntheta_inf,{res[1]:.6g}")
    elif kind == "corollary":
        from .channel import bhattacharyya
        z = bhattacharyya(args.channel)
        rows = [("R_sup", th.max_rate(z), n * th.max_rate(z))]
        if args.rate is not None:
            b = th.corollary_bec_bounds(args.rate, z)
            rows.append(("beta_sup", b, b if isinstance(b, th.Infeasible) else n * b))
        _emit(rows)
    elif kind == "plant":
        if args.preset is None:
            raise UsageError("--preset is required")
        plant = preset(args.preset).canonical
        b = th.sufficient_budget(plant, args.filter, n)
        rho_abs = th.spectral_radius(th.abs_matrix(plant.F))
        rows = [("R", b.R, n * b.R), ("beta", b.beta, n * b.beta),
                ("rho_abs_F", rho_abs, rho_abs), ("rho_F", th.spectral_radius(plant.F), th.spectral_radius(plant.F))]
        _emit(rows)
        print(f"# canonical coefficients {', '.join(f'{x:.6g}' for x in plant.a)}; logs are base 2")
    elif kind == "limiting":
        if not args.mu:
            raise UsageError("--mu is required")
        print("n,R_n,beta_n,R_star,beta_star")
        for m in args.ns:
            lc = th.limiting_case(args.mu, m, args.filter)
            print(f"{m},{lc.R_n:.6g},{lc.beta_n:.6g},{lc.R_star:.6g},{lc.beta_star:.6g}")
    elif kind == "region":
        spec = args.channel
        if args.sweep:
            eps = np.linspace(0.0, 0.9, 19) if args.epsilons is None else args.epsilons
            rows = th.region_sweep(spec.kind, eps, args.eta)
            print("epsilon,mu_max")
            for e, m in rows:
                print(f"{e:.6g},{m:.6g}")
        else:
            v = th.scalar_stabilizable_mu(spec, args.eta)
            print("quantity,value")
            print(f"log2_mu_max,{v:.6g}\nmu_max,{2 ** v:.6g}")
            if args.mu:
                print(f"region_check,{th.region_check(args.mu, spec, args.eta)}")
    return EXIT_OK


def _loop_config(args):
    from .simulate import preset_config
    over = {}
    for key in ("k", "n", "horizon", "seed", "filter", "feedback_period", "eps_prime", "delta", "code_seed"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if args.channel is not None:
        over["channel"] = args.channel
    if args.observer_knows_control is not None:
        over["observer_knows_control"] = args.observer_knows_control == "yes"
    if args.code_file:
        over["code"] = codes.load(args.code_file)
        over["n"], over["k"] = over["code"].n, over["code"].k
    return preset_config(args.preset, **over)


def cmd_simulate(args) -> int:
    from .simulate import run_closed_loop, write_csv, write_svg_lines
    cfg = _loop_config(args)
    man = Manifest("simulate", args, args.out_dir)
    names = ["trials.csv"] + [f"trajectory_seed{cfg.seed + i}.csv" for i in range(args.trials)]
    if args.svg:
        names.append("trajectory.svg")
    paths = man.plan(*names)
    man.write()
    rows, diverged = [], 0
    series = {}
    for i in range(args.trials):
        c = _with(cfg, seed=cfg.seed + i)
        rec = run_closed_loop(c)
        diverged += rec.diverged
        rows.append((c.seed, rec.cost, rec.max_norm, int(rec.diverged), len(rec.x_norm), rec.reason))
        write_csv(paths[1 + i], ["t", "x_norm", "u_norm", "delay"],
                  [(t, f"{x:.9g}", f"{u:.9g}", d) for t, (x, u, d) in enumerate(zip(rec.x_norm, rec.u, rec.delay))])
        series[f"seed {c.seed}"] = list(enumerate(rec.x_norm.tolist()))
    write_csv(paths[0], ["seed", "lqr_cost", "max_norm", "diverged", "steps", "reason"], rows)
    if args.svg:
        write_svg_lines(paths[-1], dict(list(series.items())[:7]), "t", "|x_t|")
    frac = diverged / args.trials
    print(f"trials {args.trials}, diverged {diverged}, median cost "
          f"{np.median([r[1] for r in rows if not r[3]]) if diverged < args.trials else math.inf:.6g}")
    return EXIT_DIVERGED if frac > args.fail_threshold else EXIT_OK


def _with(cfg, **kw):
    from .simulate import LoopConfig
    f = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    f.update(kw)
    return LoopConfig(**f)


def cmd_reliability(args) -> int:
    from .simulate import reliability_estimate, write_csv, write_svg_lines
    if args.code_file:
        code = codes.load(args.code_file)
    else:
        code = codes.sample_toeplitz(args.n, args.k, 0.5, max(args.horizon, 1), args.seed)
    man = Manifest("reliability", args, args.out_dir)
    names = ["reliability.csv"] + (["reliability.svg"] if args.svg else [])
    paths = man.plan(*names)
    man.write()
    tab = reliability_estimate(code, args.channel, args.horizon, args.trials, args.seed, jobs=args.jobs,
                               pool_from=args.pool_from)
    write_csv(paths[0], ["d", "count", "probability"], [(d, c, f"{p:.9g}") for d, c, p in tab.rows()])
    if args.svg:
        pts = [(d, math.log2(p)) for d, _, p in tab.rows() if p > 0 and d >= 1]
        write_svg_lines(paths[1], {"log2 P(d)": pts}, "d", "log2 P")
    print("d,count,probability")
    for d, c, p in tab.rows():
        print(f"{d},{c},{p:.6g}")
    if tab.slope is None:
        print("# slope undefined: fewer than two delays with enough events")
    else:
        print(f"# slope {tab.slope:.6g} bits per step of delay (R^2 {tab.r2:.4f}, fit over d={tab.fit_delays})")
        er = th.random_coding_exponent(args.channel, code.rate) * code.n if args.channel.kind == "bec" else float("nan")
        print(f"# reference n*E_r(R) = {er:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .simulate import experiment_lqr_sweep, write_csv, write_svg_lines
    cfg = _loop_config(args)
    man = Manifest("sweep", args, args.out_dir)
    names = ["sweep_cdf.csv", "sweep_summary.csv"] + (["sweep_cdf.svg"] if args.svg else [])
    paths = man.plan(*names)
    man.write()
    res = experiment_lqr_sweep(cfg, args.k_values, args.codes, args.runs, jobs=args.jobs)
    write_csv(paths[0], ["k", "lqr_cost", "fraction_of_codes"],
              [(r.k, f"{c:.9g}", f"{f:.6g}") for r in res for c, f in r.cdf()])
    write_csv(paths[1], ["k", "median_cost", "codes_kept", "diverged_runs", "total_runs"],
              [(r.k, f"{r.median:.9g}", len(r.code_costs), r.diverged_runs, r.total_runs) for r in res])
    if args.svg:
        write_svg_lines(paths[2], {f"k={r.k}": r.cdf() for r in res}, "LQR cost", "fraction of codes")
    print("k,median_cost,diverged_runs")
    for r in res:
        print(f"{r.k},{r.median:.6g},{r.diverged_runs}")
    total = sum(r.total_runs for r in res)
    frac = sum(r.diverged_runs for r in res) / total if total else 0.0
    return EXIT_DIVERGED if frac > args.fail_threshold else EXIT_OK


# -- parser ------------------------------------------------------------------------------------

def _loop_flags(p, preset_default):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--preset", default=preset_default, choices=["cart-stick", "example2"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--code-seed", dest="code_seed", type=int, default=None)
    p.add_argument("--code", dest="code_file", default=None, help="serialized code file")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--channel", type=_channel, default=None, help="e.g. bec:0.3")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--filter", choices=["hypercuboid", "ellipsoid"], default=None)
    p.add_argument("--feedback-period", dest="feedback_period", type=int, default=None, help="2T; 0 disables")
    p.add_argument("--eps-prime", dest="eps_prime", type=float, default=None)
    p.add_argument("--delta", type=float, default=None, help="quantizer bin width")
    p.add_argument("--observer-knows-control", dest="observer_knows_control", choices=["yes", "no"], default=None)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--fail-threshold", dest="fail_threshold", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="anytime", description="Anytime-reliable Toeplitz codes and networked control.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample-code", help="sample a Toeplitz code and save it")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--depth", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="code.txt")
    p.set_defaults(func=cmd_sample_code)

    p = sub.add_parser("thresholds", help="rate and exponent formulas")
    p.add_argument("family", choices=["er", "improved", "toeplitz", "corollary", "plant", "limiting", "region"])
    p.add_argument("--channel", type=_channel, default=ChannelSpec("bec", 0.3))
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--n", type=int, default=15)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--preset", choices=["cart-stick", "example2"], default=None)
    p.add_argument("--filter", choices=["hypercuboid", "ellipsoid"], default="hypercuboid")
    p.add_argument("--mu", type=_float_list, default=None)
    p.add_argument("--ns", type=_int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--sweep", action="store_true")
    p.add_argument("--epsilons", type=_float_list, default=None)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("simulate", help="closed-loop trials")
    _loop_flags(p, "cart-stick")
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reliability", help="Monte-Carlo delay distribution of a code")
    p.add_argument("--config")
    p.add_argument("--code", dest="code_file", default=None)
    p.add_argument("--n", type=int, default=15)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--channel", type=_channel, default=ChannelSpec("bec", 0.3))
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--pool-from", dest="pool_from", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="out")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_reliability)

    p = sub.add_parser("sweep", help="LQR cost distribution across k")
    _loop_flags(p, "example2")
    p.add_argument("--k-values", "--ks", dest="k_values", type=_int_list, default=[3, 4, 5, 6, 7])
    p.add_argument("--codes", type=int, default=50)
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    # "--k 3,4,5" is accepted for sweep as a list of k values
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "sweep" and "--k" in argv:
        i = argv.index("--k")
        if i + 1 < len(argv) and "," in argv[i + 1]:
            argv[i] = "--k-values"
    args = ap.parse_args(argv)
    sub = next(a for a in ap._subparsers._group_actions[0].choices.values() if a.get_default("func") is args.func)
    try:
        apply_config(args, sub)
        return args.func(args)
    except UsageError as exc:
        print(f"anytime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, BudgetExceeded, UnsupportedOperation) as exc:
        print(f"anytime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InternalCorruption as exc:
        print(f"anytime: internal invariant failed: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except MemoryOverflow as exc:
        print(f"anytime: {exc}", file=sys.stderr)
        return EXIT_CORRUPT


if __name__ == "__main__":
    sys.exit(main())
