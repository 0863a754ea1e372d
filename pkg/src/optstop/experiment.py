"""Replicated train/test benchmark runner with CSV outputs."""

from __future__ import annotations

import csv
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .basis import BasisSpec, FeatureTensor, build_features
from .bounds import BoundInputs, NormType, generalization_lower_bound, rademacher_bound
from .gbm import GbmModel, simulate_gbm
from .lsm import (
    LsmWeights,
    eval_lsm,
    lsm_fit,
    lsm_to_linear_policy,
    rescale_to_unit_payoff,
)
from .payoff import RewardSet, maxcall_rewards
from .policy import (
    ThresholdForm,
    WeightMatrix,
    eval_deterministic,
    eval_randomized,
    extract_thresholds,
)
from .rng import derive_seed
from .rpo import AdamConfig, StageDiagnostics, rpo_backward_fit

logger = logging.getLogger(__name__)

_TRAIN, _TEST = 0, 1
_BOUNDS_DELTA = 0.05


@dataclass(frozen=True)
class InstanceConfig:
    n_assets: int
    rate_r: float
    vol_sigma: float
    corr_rho: float
    initial_prices: tuple[float, ...]
    strike: float
    barrier: float
    n_periods: int
    horizon_years: float

    def model(self, initial_price: float) -> GbmModel:
        return GbmModel(
            n_assets=self.n_assets,
            rate_r=self.rate_r,
            vol_sigma=self.vol_sigma,
            corr_rho=self.corr_rho,
            initial_price=initial_price,
            n_periods=self.n_periods,
            horizon_years=self.horizon_years,
        )

    @property
    def discount_beta(self) -> float:
        return math.exp(-self.rate_r * self.horizon_years / self.n_periods)


@dataclass(frozen=True)
class SampleConfig:
    n_train: int
    n_test: int
    n_reps: int
    base_seed: int

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")


@dataclass(frozen=True)
class MethodSpec:
    method: str  # "LSM" or "RPO"
    basis: str

    def __post_init__(self):
        if self.method.upper() not in ("LSM", "RPO"):
            raise ValueError(f"unknown method {self.method!r}; use LSM or RPO")

    @property
    def name(self) -> str:
        return self.method.upper()


@dataclass(frozen=True)
class RunFlags:
    standardize: bool = False
    verbose: bool = False
    emit_thresholds: bool = False
    emit_bounds: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceConfig
    sample: SampleConfig
    methods: tuple[MethodSpec, ...]
    adam: AdamConfig = field(default_factory=AdamConfig)
    flags: RunFlags = field(default_factory=RunFlags)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment description from a TOML file.

    Tables: ``[instance]`` (accepts ``initial_price`` or a list
    ``initial_prices``), ``[sample]``, one ``[[methods]]`` entry per policy
    with ``method`` and ``basis`` keys, optional ``[adam]`` and ``[flags]``.
    """
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    try:
        inst = dict(raw["instance"])
        sample = raw["sample"]
        methods = raw["methods"]
    except KeyError as exc:
        raise ValueError(f"config is missing the {exc.args[0]!r} section") from None

    if "initial_prices" in inst:
        prices = tuple(float(p) for p in inst.pop("initial_prices"))
    elif "initial_price" in inst:
        prices = (float(inst.pop("initial_price")),)
    else:
        raise ValueError("instance needs initial_price or initial_prices")
    instance = InstanceConfig(
        n_assets=int(inst.pop("n_assets")),
        rate_r=float(inst.pop("rate_r")),
        vol_sigma=float(inst.pop("vol_sigma")),
        corr_rho=float(inst.pop("corr_rho", 0.0)),
        initial_prices=prices,
        strike=float(inst.pop("strike")),
        barrier=float(inst.pop("barrier")),
        n_periods=int(inst.pop("n_periods")),
        horizon_years=float(inst.pop("horizon_years")),
    )
    if inst:
        raise ValueError(f"unknown instance keys: {sorted(inst)}")

    sample_cfg = SampleConfig(
        n_train=int(sample["n_train"]),
        n_test=int(sample["n_test"]),
        n_reps=int(sample["n_reps"]),
        base_seed=int(sample["base_seed"]),
    )
    method_specs = tuple(
        MethodSpec(method=str(m["method"]), basis=str(m["basis"])) for m in methods
    )
    adam = AdamConfig(**raw.get("adam", {}))
    flags = RunFlags(**raw.get("flags", {}))
    return ExperimentConfig(
        instance=instance,
        sample=sample_cfg,
        methods=method_specs,
        adam=adam,
        flags=flags,
    )


@dataclass
class CellResult:
    method: str
    basis: str
    initial_price: float
    rep: int
    train_reward: float
    test_reward: float
    fit_seconds: float
    error: str | None = None


@dataclass
class SummaryRow:
    method: str
    basis: str
    initial_price: float
    mean: float
    se: float
    n_reps: int


@dataclass
class ExperimentResult:
    rows: list[CellResult]
    summary: list[SummaryRow]
    thresholds: dict[float, list[tuple]]  # price -> (method, t, threshold, defined)
    bounds_rows: list[tuple]
    stage_rows: list[tuple]
    n_failures: int


@dataclass
class _FittedCell:
    policy: WeightMatrix | None  # hard-policy weights, when representable
    lsm: LsmWeights | None
    diagnostics: list[StageDiagnostics]


def fit_method(
    spec: MethodSpec,
    features: FeatureTensor,
    rewards: RewardSet,
    adam: AdamConfig,
) -> _FittedCell:
    """Fit one method on a training set.

    LSM always yields regression weights, plus equivalent hard-policy
    weights when the basis contains the payoff column. RPO warm-starts from
    the transformed LSM fit when possible and from zeros otherwise.
    """
    beta = rewards.discount_beta
    if spec.name == "LSM":
        lsm = lsm_fit(features, rewards)
        policy = None
        if features.payoff_column is not None:
            policy = lsm_to_linear_policy(lsm, beta, features.payoff_column)
        return _FittedCell(policy=policy, lsm=lsm, diagnostics=[])
    if features.payoff_column is not None:
        warm = rescale_to_unit_payoff(
            lsm_to_linear_policy(
                lsm_fit(features, rewards), beta, features.payoff_column
            ),
            features.payoff_column,
        )
    else:
        warm = WeightMatrix.zeros(
            features.n_periods, features.n_features, features.fingerprint
        )
    policy, diags = rpo_backward_fit(features, rewards, warm, adam)
    return _FittedCell(policy=policy, lsm=None, diagnostics=diags)


def _evaluate(fitted: _FittedCell, features: FeatureTensor, rewards: RewardSet) -> float:
    if fitted.lsm is not None:
        return eval_lsm(fitted.lsm, features, rewards)
    return eval_deterministic(fitted.policy, features, rewards)


def _bounds_rows(spec, basis, price, rep, policy, features, rewards):
    flat = policy.weights.ravel()
    j_hat = eval_randomized(policy, features, rewards)
    rows = []
    for norm, radius in (
        (NormType.L1, float(np.abs(flat).sum())),
        (NormType.L2, float(np.sqrt(np.sum(flat * flat)))),
        (NormType.LINF, float(np.abs(flat).max())),
    ):
        inp = BoundInputs(
            norm_type=norm,
            radius_B=radius,
            feature_bound_Q=features.feature_bound_Q,
            reward_bound_G=rewards.reward_upper_bound,
            K=features.n_features,
            T=features.n_periods,
            n_paths=features.n_paths,
            delta=_BOUNDS_DELTA,
        )
        rows.append(
            (
                spec.name,
                basis,
                price,
                rep,
                norm.value,
                radius,
                features.feature_bound_Q,
                rewards.reward_upper_bound,
                j_hat,
                rademacher_bound(inp),
                generalization_lower_bound(j_hat, inp, empirical=False),
                generalization_lower_bound(j_hat, inp, empirical=True),
                _BOUNDS_DELTA,
                features.n_paths,
            )
        )
    return rows


def _run_replication(cfg: ExperimentConfig, price_idx: int, rep: int):
    inst, sample = cfg.instance, cfg.sample
    price = inst.initial_prices[price_idx]
    model = inst.model(price)
    beta = inst.discount_beta
    traj_train = simulate_gbm(model, sample.n_train, derive_seed(sample.base_seed, rep, _TRAIN))
    rew_train = maxcall_rewards(traj_train, inst.strike, inst.barrier, beta)
    traj_test = simulate_gbm(model, sample.n_test, derive_seed(sample.base_seed, rep, _TEST))
    rew_test = maxcall_rewards(traj_test, inst.strike, inst.barrier, beta)

    feature_cache: dict[str, tuple[FeatureTensor, FeatureTensor]] = {}
    cells: list[CellResult] = []
    thresholds: list[tuple] = []
    bounds_rows: list[tuple] = []
    stage_rows: list[tuple] = []
    for spec in cfg.methods:
        basis_spec = BasisSpec.parse(spec.basis, standardize=cfg.flags.standardize)
        key = basis_spec.canonical()
        started = time.perf_counter()
        try:
            if key not in feature_cache:
                feat_train = build_features(traj_train, rew_train, basis_spec)
                feat_test = build_features(
                    traj_test, rew_test, basis_spec, transform=feat_train.transform
                )
                feature_cache[key] = (feat_train, feat_test)
            feat_train, feat_test = feature_cache[key]
            fitted = fit_method(spec, feat_train, rew_train, cfg.adam)
            fit_seconds = time.perf_counter() - started
            train_reward = _evaluate(fitted, feat_train, rew_train)
            test_reward = _evaluate(fitted, feat_test, rew_test)
            cells.append(
                CellResult(spec.name, key, price, rep, train_reward, test_reward, fit_seconds)
            )
        except Exception as exc:  # noqa: BLE001 - cell failures must not kill the run
            logger.exception(
                "cell failed: method=%s basis=%s price=%s rep=%d",
                spec.name, key, price, rep,
            )
            cells.append(
                CellResult(
                    spec.name, key, price, rep,
                    float("nan"), float("nan"),
                    time.perf_counter() - started,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
            continue
        if cfg.flags.emit_thresholds and rep == 0:
            thresholds.extend(_threshold_rows(spec, key, fitted, beta))
        if cfg.flags.emit_bounds and fitted.policy is not None:
            bounds_rows.extend(
                _bounds_rows(spec, key, price, rep, fitted.policy, feat_train, rew_train)
            )
        if cfg.flags.verbose:
            for d in fitted.diagnostics:
                stage_rows.append(
                    (
                        spec.name, key, price, rep, d.stage, d.n_iterations,
                        d.objective_init, d.objective_final, d.n_active,
                    )
                )
    return price_idx, rep, cells, thresholds, bounds_rows, stage_rows


def _threshold_rows(spec, basis_key, fitted, beta):
    if basis_key != "one,payoff":
        logger.info(
            "thresholds skipped for %s(%s): not a (one, payoff) policy",
            spec.name, basis_key,
        )
        return []
    if fitted.lsm is not None:
        thr, defined = extract_thresholds(fitted.lsm, ThresholdForm.LSM_ONE_PAYOFF, beta)
    else:
        thr, defined = extract_thresholds(fitted.policy, ThresholdForm.RPO_ONE_PAYOFF, beta)
    return [
        (spec.name, t + 1, thr[t], int(defined[t]))
        for t in range(thr.shape[0])
    ]


def run_experiment(
    cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1
) -> ExperimentResult:
    """Run the full replicated benchmark described by ``cfg``.

    Every replication derives its train/test seeds from
    ``(base_seed, rep, train|test)``, so output values are a pure function
    of the config; replications may run on any number of threads without
    changing a byte of the emitted tables (wall-clock ``fit_seconds``
    excepted). Per-cell failures are recorded and the run continues.
    """
    tasks = [
        (p, r)
        for p in range(len(cfg.instance.initial_prices))
        for r in range(cfg.sample.n_reps)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(lambda pr: _run_replication(cfg, *pr), tasks))
    else:
        outputs = [_run_replication(cfg, p, r) for p, r in tasks]

    by_key = {(o[0], o[1]): o for o in outputs}
    rows: list[CellResult] = []
    thresholds: dict[float, list[tuple]] = {}
    bounds_rows: list[tuple] = []
    stage_rows: list[tuple] = []
    for m_idx in range(len(cfg.methods)):
        for p_idx in range(len(cfg.instance.initial_prices)):
            for rep in range(cfg.sample.n_reps):
                rows.append(by_key[(p_idx, rep)][2][m_idx])
    for p_idx, rep in tasks:
        _, _, _, thr, brs, srs = by_key[(p_idx, rep)]
        if thr:
            thresholds.setdefault(cfg.instance.initial_prices[p_idx], []).extend(thr)
        bounds_rows.extend(brs)
        stage_rows.extend(srs)

    summary = _summarize(cfg, rows)
    n_failures = sum(1 for r in rows if r.error is not None)
    result = ExperimentResult(
        rows=rows,
        summary=summary,
        thresholds=thresholds,
        bounds_rows=bounds_rows,
        stage_rows=stage_rows,
        n_failures=n_failures,
    )
    if out_dir is not None:
        write_outputs(result, cfg, Path(out_dir))
    return result


def _summarize(cfg: ExperimentConfig, rows: list[CellResult]) -> list[SummaryRow]:
    summary = []
    for spec in cfg.methods:
        basis_key = BasisSpec.parse(spec.basis).canonical()
        for price in cfg.instance.initial_prices:
            vals = [
                r.test_reward
                for r in rows
                if r.method == spec.name
                and r.basis == basis_key
                and r.initial_price == price
                and r.error is None
            ]
            n = len(vals)
            mean = float(np.mean(vals)) if n else float("nan")
            se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
            summary.append(SummaryRow(spec.name, basis_key, price, mean, se, n))
    return summary


def _fmt(value) -> str:
    if isinstance(value, float):  # includes numpy float64 scalars
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig, out_dir: Path) -> None:
    """Write results.csv, summary.csv and any opted-in side tables."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out_dir / "results.csv",
        ["method", "basis", "initial_price", "rep", "train_reward", "test_reward", "fit_seconds"],
        (
            (r.method, r.basis, r.initial_price, r.rep, r.train_reward, r.test_reward,
             round(r.fit_seconds, 3))
            for r in result.rows
        ),
    )
    _write_csv(
        out_dir / "summary.csv",
        ["method", "basis", "initial_price", "mean", "se", "n_reps"],
        ((s.method, s.basis, s.initial_price, s.mean, s.se, s.n_reps) for s in result.summary),
    )
    for price, rows in result.thresholds.items():
        _write_csv(
            out_dir / f"thresholds_p{price:g}.csv",
            ["method", "t", "threshold", "defined_flag"],
            rows,
        )
    if result.bounds_rows:
        _write_csv(
            out_dir / "bounds.csv",
            [
                "method", "basis", "initial_price", "rep", "norm", "radius_B",
                "feature_bound_Q", "reward_bound_G", "j_hat", "rademacher",
                "lower_bound", "lower_bound_empirical", "delta", "n_paths",
            ],
            result.bounds_rows,
        )
    if result.stage_rows:
        _write_csv(
            out_dir / "rpo_stages.csv",
            [
                "method", "basis", "initial_price", "rep", "stage", "iterations",
                "objective_init", "objective_final", "n_active",
            ],
            result.stage_rows,
        )
