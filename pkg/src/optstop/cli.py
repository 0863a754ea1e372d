"""Command-line entry points.

Subcommands: simulate, fit, evaluate, experiment, thresholds, bounds.
Global flags --seed, --out-dir and --threads apply where meaningful.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .basis import BasisSpec, build_features
from .bounds import BoundInputs, NormType, generalization_lower_bound, rademacher_bound
from .experiment import (
    ExperimentConfig,
    MethodSpec,
    fit_method,
    load_config,
    run_experiment,
)
from .gbm import save_trajectories, simulate_gbm
from .lsm import eval_lsm, load_lsm_weights, save_lsm_weights
from .payoff import maxcall_rewards
from .policy import (
    ThresholdForm,
    eval_deterministic,
    extract_thresholds,
    load_weights,
    save_weights,
)
from .rng import derive_seed


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optstop",
        description="Learn and evaluate optimal-stopping policies on simulated trajectories.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config base seed")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for replications")
    parser.add_argument("-v", "--verbose", action="store_true", help="chatty logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate trajectories and write a binary dump")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--initial-price", type=float, default=None)
    p.add_argument("--n-paths", type=int, required=True)
    p.add_argument("--out", type=Path, default=None, help="dump file (default out-dir/trajectories.bin)")

    p = sub.add_parser("fit", help="fit one method on a freshly simulated training set")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--method", required=True, choices=["LSM", "RPO", "lsm", "rpo"])
    p.add_argument("--basis", required=True)
    p.add_argument("--initial-price", type=float, default=None)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="weights CSV (default out-dir/weights.csv)")

    p = sub.add_parser("evaluate", help="evaluate a weight CSV on a fresh test set")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--form", choices=["policy", "lsm-rule"], default="policy")
    p.add_argument("--initial-price", type=float, default=None)
    p.add_argument("--rep", type=int, default=0)

    p = sub.add_parser("experiment", help="run the replicated benchmark described by a config")
    p.add_argument("--config", type=Path, required=True)

    p = sub.add_parser("thresholds", help="extract per-period payoff thresholds from weights")
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--form", choices=["rpo", "lsm"], required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--method-label", default=None)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("bounds", help="print complexity and lower-bound rows")
    p.add_argument("--radius-b", type=float, required=True)
    p.add_argument("--feature-bound-q", type=float, required=True)
    p.add_argument("--reward-bound-g", type=float, required=True)
    p.add_argument("--n-features", type=int, required=True)
    p.add_argument("--n-periods", type=int, required=True)
    p.add_argument("--n-paths", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--j-hat", type=float, default=0.0)
    p.add_argument("--out", type=Path, default=None)
    return parser


def _apply_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None:
        return cfg
    return replace(cfg, sample=replace(cfg.sample, base_seed=seed))


def _train_data(cfg: ExperimentConfig, price: float | None, rep: int, kind: int):
    inst = cfg.instance
    p0 = inst.initial_prices[0] if price is None else price
    model = inst.model(p0)
    n = cfg.sample.n_train if kind == 0 else cfg.sample.n_test
    seed = derive_seed(cfg.sample.base_seed, rep, kind)
    traj = simulate_gbm(model, n, seed)
    rewards = maxcall_rewards(traj, inst.strike, inst.barrier, inst.discount_beta)
    return traj, rewards


def _cmd_simulate(args) -> int:
    cfg = _apply_seed(load_config(args.config), args.seed)
    inst = cfg.instance
    p0 = inst.initial_prices[0] if args.initial_price is None else args.initial_price
    traj = simulate_gbm(inst.model(p0), args.n_paths, derive_seed(cfg.sample.base_seed, 0, 0))
    out = args.out or args.out_dir / "trajectories.bin"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trajectories(out, traj)
    print(f"wrote {traj.n_paths} paths x {traj.n_periods} periods x {traj.n_assets} assets to {out}")
    return 0


def _cmd_fit(args) -> int:
    cfg = _apply_seed(load_config(args.config), args.seed)
    traj, rewards = _train_data(cfg, args.initial_price, args.rep, 0)
    spec = MethodSpec(method=args.method.upper(), basis=args.basis)
    basis_spec = BasisSpec.parse(args.basis, standardize=cfg.flags.standardize)
    features = build_features(traj, rewards, basis_spec)
    fitted = fit_method(spec, features, rewards, cfg.adam)
    out = args.out or args.out_dir / "weights.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    if fitted.policy is not None:
        save_weights(out, fitted.policy)
        kind = "policy"
    else:
        save_lsm_weights(out, fitted.lsm)
        kind = "continuation regression (evaluate with --form lsm-rule)"
    print(f"wrote {kind} weights to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _apply_seed(load_config(args.config), args.seed)
    traj, rewards = _train_data(cfg, args.initial_price, args.rep, 1)
    if args.form == "policy":
        weights = load_weights(args.weights)
    else:
        weights = load_lsm_weights(args.weights)
    basis_spec = BasisSpec.parse(weights.basis_fingerprint, standardize=cfg.flags.standardize)
    transform = None
    if cfg.flags.standardize:
        # the rescaling must come from the matching training set
        traj_tr, rew_tr = _train_data(cfg, args.initial_price, args.rep, 0)
        transform = build_features(traj_tr, rew_tr, basis_spec).transform
    features = build_features(traj, rewards, basis_spec, transform=transform)
    if args.form == "policy":
        reward = eval_deterministic(weights, features, rewards)
    else:
        reward = eval_lsm(weights, features, rewards)
    print(repr(reward))
    return 0


def _cmd_experiment(args) -> int:
    cfg = _apply_seed(load_config(args.config), args.seed)
    result = run_experiment(cfg, out_dir=args.out_dir, threads=args.threads)
    for s in result.summary:
        print(
            f"{s.method}({s.basis}) p={s.initial_price:g}: "
            f"mean={s.mean:.4f} se={s.se:.4f} n={s.n_reps}"
        )
    if result.n_failures:
        print(f"{result.n_failures} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_thresholds(args) -> int:
    import csv

    if args.form == "rpo":
        weights = load_weights(args.weights)
        thr, defined = extract_thresholds(weights, ThresholdForm.RPO_ONE_PAYOFF, args.beta)
    else:
        weights = load_lsm_weights(args.weights)
        thr, defined = extract_thresholds(weights, ThresholdForm.LSM_ONE_PAYOFF, args.beta)
    label = args.method_label or args.form.upper()
    out = args.out or args.out_dir / "thresholds.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "t", "threshold", "defined_flag"])
        for t in range(thr.shape[0]):
            writer.writerow([label, t + 1, repr(float(thr[t])), int(defined[t])])
    print(f"wrote {thr.shape[0]} thresholds to {out}")
    return 0


def _cmd_bounds(args) -> int:
    import csv

    rows = []
    for norm in (NormType.L1, NormType.L2, NormType.LINF):
        inp = BoundInputs(
            norm_type=norm,
            radius_B=args.radius_b,
            feature_bound_Q=args.feature_bound_q,
            reward_bound_G=args.reward_bound_g,
            K=args.n_features,
            T=args.n_periods,
            n_paths=args.n_paths,
            delta=args.delta,
        )
        rows.append(
            [
                norm.value,
                repr(rademacher_bound(inp)),
                repr(generalization_lower_bound(args.j_hat, inp, empirical=False)),
                repr(generalization_lower_bound(args.j_hat, inp, empirical=True)),
            ]
        )
    header = ["norm", "rademacher", "lower_bound", "lower_bound_empirical"]
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(v) for v in row))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
    "thresholds": _cmd_thresholds,
    "bounds": _cmd_bounds,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
