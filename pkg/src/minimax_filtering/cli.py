"""Command-line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure
(non-convergence or a failed KKT certificate).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .capacity import CapacityError, ChannelModel, ConstraintSet, InfeasibleConstraints, solve_capacity
from .distributions import DiscreteDistribution, DistributionError
from .experiments import ConfigError, ExperimentConfig, run_experiment, validate, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _fmt(x: float) -> str:
    return f"{x:.10g}"


# --------------------------------------------------------------------------
# capacity


def cmd_capacity(args) -> int:
    if args.channel == "awgn":
        channel = ChannelModel.awgn()
        cons = ConstraintSet(avg_power=args.power, duty_cycle=args.duty)
    else:
        channel = ChannelModel.poisson(args.exposure)
        cons = ConstraintSet(peak_lo=args.lo, peak_hi=args.hi)
    try:
        res = solve_capacity(channel, cons, stop_tol=args.tol, n_starts=args.starts, seed=args.seed)
    except InfeasibleConstraints as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = sys.stdout
    out.write(res.prior.to_text())
    out.write("\nquantity,value\n")
    out.write(f"mi_nats,{_fmt(res.mi_nats)}\nmi_bits,{_fmt(res.mi_bits)}\n")
    out.write(f"kkt_slack,{res.kkt_slack:.3e}\nstatus,{res.status}\n")
    out.write("\natoms,mi_nats\n")
    for count, mi in res.atom_count_history:
        out.write(f"{count},{_fmt(mi)}\n")
    if args.out:
        Path(args.out).write_text(json.dumps(res.to_dict(), indent=2) + "\n")
    return EXIT_OK if res.status == "ok" else EXIT_NUMERIC


# --------------------------------------------------------------------------
# filter


def _prior_arg(value: str, solve):
    if value == "auto":
        return solve().prior
    return DiscreteDistribution.from_text(Path(value).read_text())


def cmd_filter(args) -> int:
    from .gaussian_filter import CoefficientPrior, GramPathFilters, PiecewiseMinimaxFilter, haar_basis, \
        sufficient_stats_path
    from .poisson_filter import bayes_path_filter, ml_path_filter, uniform_path_filter
    from .simulation import simulate_basis_signal, simulate_poisson, trial_rng

    try:
        if args.channel == "gaussian":
            P = 10 ** (args.power_db / 10)
            q = args.k / args.n
            prior = _prior_arg(args.prior, lambda: solve_capacity(
                ChannelModel.awgn(), ConstraintSet(avg_power=P, duty_cycle=q)))
            coord = prior.pruned(args.prior_atoms)
            basis = haar_basis(args.n, args.horizon)
            rng = trial_rng(args.seed, 1 << 62)
            support = np.sort(rng.choice(args.n, size=args.k, replace=False))
            a = np.zeros(args.n)
            a[support] = rng.normal(0.0, math.sqrt(args.n * P / args.k), size=args.k)
            path = simulate_basis_signal(a, basis, args.dt, args.seed)
            ys = sufficient_stats_path(path, basis)
            gf = GramPathFilters(basis, path.grid)
            cols = {
                "minimax": PiecewiseMinimaxFilter(basis, CoefficientPrior.iid(coord, args.n))(path),
                "ml-hard": gf.ml(ys, hard_k=args.k),
                "linear": gf.linear(ys, P),
                "genie": gf.genie(ys, support, P),
            }
        else:
            prior = _prior_arg(args.prior, lambda: solve_capacity(
                ChannelModel.poisson(args.horizon), ConstraintSet(peak_lo=args.lo, peak_hi=args.hi)))
            if np.any(prior.atoms <= 0):
                raise DistributionError("poisson prior atoms must be positive")
            if not (args.lo <= args.truth <= args.hi):
                raise ValueError(f"--truth must lie in [{args.lo}, {args.hi}]")
            path = simulate_poisson(args.truth, args.horizon, args.dt, args.seed)
            cols = {
                "minimax": bayes_path_filter(prior)(path),
                "ml": ml_path_filter(args.lo, args.hi)(path),
                "uniform": uniform_path_filter(args.lo, args.hi)(path),
            }
    except (DistributionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    names = list(cols)
    out = sys.stdout
    out.write(",".join(["t", "x", "y"] + names) + "\n")
    for i, t in enumerate(path.grid):
        row = [f"{t:.6g}", _fmt(path.x[i]), _fmt(path.y[i])] + [_fmt(cols[n][i]) for n in names]
        out.write(",".join(row) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# experiment / validate


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.values.get("experiment") != args.name:
            raise ConfigError([f"{args.config}: experiment field {cfg.values.get('experiment')!r} "
                               f"does not match the requested {args.name!r}"])
    else:
        cfg = ExperimentConfig.defaults(args.name)
    for key in ("trials", "dt", "seed", "units"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.values[key] = val
    if args.prior is not None:
        cfg.values["prior"] = args.prior
    return cfg


def cmd_experiment(args) -> int:
    try:
        cfg = _load_config(args)
        result = run_experiment(cfg)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(result.table())
    if args.out_dir:
        arts = write_outputs(result, args.out_dir, plot=not args.no_plot)
        for k, p in arts.items():
            print(f"wrote {k}: {p}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = ExperimentConfig.from_file(args.config)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    diags = validate(cfg)
    for d in diags:
        print(d, file=sys.stderr)
    if not diags:
        print(f"{args.config}: ok")
    return EXIT_CONFIG if diags else EXIT_OK


# --------------------------------------------------------------------------
# oracle


def _load_instance(path) -> dict:
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict) or "sources" not in data:
        raise ValueError(f"{path}: instance must be a mapping with a 'sources' list of pmfs")
    return data


def cmd_oracle(args) -> int:
    from .info_metrics import (kl_rows, minimax_mixture, regret_capacity_oracle, strong_regret_check,
                               weights_on_sources)

    try:
        inst = _load_instance(args.instance)
        W = np.asarray(inst["sources"], float)
        if args.kind == "regret-capacity":
            r = regret_capacity_oracle(W, tol=args.tol)
            print("quantity,value")
            print(f"capacity_nats,{_fmt(r.capacity)}\nminimax_nats,{_fmt(r.minimax)}\ngap,{r.gap:.3e}")
            print("source,weight")
            for i, p in zip(r.weights.atoms, r.weights.probs):
                print(f"{int(i)},{_fmt(p)}")
            return EXIT_OK
        w, C = minimax_mixture(W, tol=args.tol)
        wv = weights_on_sources(w, W.shape[0])
        qstar = wv @ W
        battery = {"minimax": qstar, "uniform": np.full(W.shape[1], 1.0 / W.shape[1])}
        for name, q in (inst.get("filters") or {}).items():
            battery[name] = np.asarray(q, float)
        eps_list = args.eps or [round(0.1 * i, 1) for i in range(1, 10)]
        print("filter,eps,bad_mass,bound,pass")
        ok = True
        for name, q in battery.items():
            regrets = kl_rows(W, q)
            for eps in eps_list:
                r = strong_regret_check(regrets, wv, C, eps)
                ok &= r.passed
                print(f"{name},{eps:g},{_fmt(r.bad_mass)},{_fmt(r.bound)},{int(r.passed)}")
        return EXIT_OK if ok else EXIT_NUMERIC
    except (ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapacityError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minimax-filter", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    cap = sub.add_parser("capacity", help="capacity-achieving prior for a constrained channel")
    capsub = cap.add_subparsers(dest="channel", required=True)
    for name in ("awgn", "poisson"):
        c = capsub.add_parser(name)
        if name == "awgn":
            c.add_argument("--power", type=float, required=True, help="average power P")
            c.add_argument("--duty", type=float, default=None, help="duty cycle q in (0, 1]")
        else:
            c.add_argument("--lo", type=float, required=True, help="peak lower bound a > 0")
            c.add_argument("--hi", type=float, required=True, help="peak upper bound A")
            c.add_argument("--exposure", type=float, required=True, help="exposure time T")
        c.add_argument("--tol", type=float, default=1e-5, help="MI increment stopping rule (nats)")
        c.add_argument("--starts", type=int, default=5, help="multi-start count")
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--out", help="write a JSON result document")
        c.set_defaults(func=cmd_capacity)

    flt = sub.add_parser("filter", help="run the filters on one simulated path")
    fsub = flt.add_subparsers(dest="channel", required=True)
    g = fsub.add_parser("gaussian")
    g.add_argument("--n", type=int, default=7)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--power-db", type=float, default=4.0)
    g.add_argument("--horizon", type=float, default=10.0)
    g.add_argument("--basis", choices=["haar"], default="haar")
    g.add_argument("--prior-atoms", type=int, default=5, help="keep this many most probable prior atoms")
    pz = fsub.add_parser("poisson")
    pz.add_argument("--lo", type=float, default=0.5)
    pz.add_argument("--hi", type=float, default=2.0)
    pz.add_argument("--horizon", type=float, default=10.0)
    pz.add_argument("--truth", type=float, required=True)
    for c in (g, pz):
        c.add_argument("--prior", default="auto", help="prior file (atom,prob rows) or 'auto'")
        c.add_argument("--dt", type=float, default=0.01)
        c.add_argument("--seed", type=int, default=0)
        c.set_defaults(func=cmd_filter)

    ex = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    ex.add_argument("name", choices=["fig1", "fig2"])
    ex.add_argument("--config", help="YAML experiment config")
    ex.add_argument("--trials", type=int)
    ex.add_argument("--dt", type=float)
    ex.add_argument("--seed", type=int)
    ex.add_argument("--units", choices=["nats", "bits"])
    ex.add_argument("--prior", help="prior file or 'auto'")
    ex.add_argument("--out-dir", help="write table, plot and manifest here")
    ex.add_argument("--no-plot", action="store_true")
    ex.set_defaults(func=cmd_experiment)

    orc = sub.add_parser("oracle", help="finite-instance regret-capacity checks")
    orc.add_argument("kind", choices=["regret-capacity", "strong-regret"])
    orc.add_argument("--instance", required=True, help="YAML/JSON file with 'sources' (and optional 'filters')")
    orc.add_argument("--eps", type=float, nargs="*", help="epsilon values (default 0.1..0.9)")
    orc.add_argument("--tol", type=float, default=1e-8)
    orc.set_defaults(func=cmd_oracle)

    val = sub.add_parser("validate", help="check an experiment config")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
