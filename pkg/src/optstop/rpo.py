"""Backward stage-by-stage optimization of smoothed stopping policies.

One sweep runs from the last period to the first. At each stage the
surviving probability mass and the expected continuation value reduce the
full smoothed objective to a single-period problem, which is maximized with
full-batch Adam warm-started from the incoming weights. The best iterate
seen (including the start) is kept, so a stage can never regress.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .basis import FeatureTensor
from .payoff import RewardSet
from .policy import WeightMatrix, eval_randomized, logistic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    """Full-batch Adam settings for the stage problems."""

    step_size: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iters: int = 500
    grad_tol: float = 1e-6

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be >= 0")


@dataclass
class StageProblem:
    """Data of one single-period problem.

    ``survival_p`` is the probability of reaching the stage, ``continuation_c``
    the expected reward of continuing, ``stage_reward_g`` the immediate
    reward, ``stage_features`` the (n, K) feature rows. ``n_paths`` is the
    divisor of the sample average; it defaults to the number of rows but may
    exceed it when rows that contribute exactly zero were dropped.
    """

    survival_p: np.ndarray
    continuation_c: np.ndarray
    stage_reward_g: np.ndarray
    stage_features: np.ndarray
    n_paths: int | None = None

    def __post_init__(self):
        n = self.survival_p.shape[0]
        if self.continuation_c.shape != (n,) or self.stage_reward_g.shape != (n,):
            raise ValueError("stage vectors must share one length")
        if self.stage_features.shape[0] != n:
            raise ValueError("stage features must have one row per path")
        if self.n_paths is None:
            self.n_paths = n
        if np.any(self.survival_p < 0.0) or np.any(self.survival_p > 1.0):
            raise ValueError("survival probabilities must lie in [0, 1]")
        if np.any(self.continuation_c < 0.0) or np.any(self.stage_reward_g < 0.0):
            raise ValueError("stage rewards and continuation values must be >= 0")

    @property
    def n_features(self) -> int:
        return self.stage_features.shape[1]


def stage_objective(b_t: np.ndarray, sp: StageProblem) -> float:
    """Average of p * (g * sigma(b.phi) + c * (1 - sigma(b.phi)))."""
    s = logistic(sp.stage_features @ b_t)
    stop_val = sp.stage_reward_g * s
    cont_val = sp.continuation_c * (1.0 - s)
    return float(np.sum(sp.survival_p * (stop_val + cont_val)) / sp.n_paths)


def stage_gradient(b_t: np.ndarray, sp: StageProblem) -> np.ndarray:
    """Analytic gradient of :func:`stage_objective` with respect to b_t."""
    s = logistic(sp.stage_features @ b_t)
    w = sp.survival_p * (sp.stage_reward_g - sp.continuation_c) * s * (1.0 - s)
    # einsum keeps the path-axis reduction off BLAS, so the summation order
    # never depends on the ambient thread pool
    return np.einsum("nk,n->k", sp.stage_features, w) / sp.n_paths


class _StageWork:
    """Preallocated buffers for repeated objective/gradient evaluation.

    Replicates :func:`stage_objective` / :func:`stage_gradient` operation by
    operation (same order, same rounding) while avoiding per-iteration
    allocations; a unit test pins the bitwise agreement.
    """

    def __init__(self, sp: StageProblem):
        self.sp = sp
        n = sp.survival_p.shape[0]
        self.pgc = sp.survival_p * (sp.stage_reward_g - sp.continuation_c)
        self.u = np.empty(n)
        self.t = np.empty(n)
        self.s = np.empty(n)
        self.r = np.empty(n)
        self.pos = np.empty(n, dtype=bool)
        self.one_minus_s = np.empty(n)
        self.tmp = np.empty(n)
        self.tmp2 = np.empty(n)

    def value_and_grad(self, b_t: np.ndarray):
        sp = self.sp
        u, t, s = self.u, self.t, self.s
        np.dot(sp.stage_features, b_t, out=u)
        np.greater_equal(u, 0.0, out=self.pos)
        np.abs(u, out=t)
        np.negative(t, out=t)
        np.exp(t, out=t)  # t = exp(-|u|)
        np.add(1.0, t, out=s)  # s = 1 + t
        np.divide(1.0, s, out=self.r)  # 1 / (1 + t), the u >= 0 branch
        np.divide(t, s, out=s)  # t / (1 + t), the u < 0 branch
        np.copyto(s, self.r, where=self.pos)
        np.subtract(1.0, s, out=self.one_minus_s)
        # objective: sum(p * (g*s + c*(1-s))) / n
        np.multiply(sp.stage_reward_g, s, out=self.tmp)
        np.multiply(sp.continuation_c, self.one_minus_s, out=self.tmp2)
        np.add(self.tmp, self.tmp2, out=self.tmp)
        np.multiply(sp.survival_p, self.tmp, out=self.tmp)
        obj = float(np.sum(self.tmp) / sp.n_paths)
        # gradient: features' @ (p*(g-c) * s * (1-s)) / n
        np.multiply(self.pgc, s, out=self.tmp)
        np.multiply(self.tmp, self.one_minus_s, out=self.tmp)
        grad = np.einsum("nk,n->k", sp.stage_features, self.tmp) / sp.n_paths
        return obj, grad


@dataclass(frozen=True)
class AdamResult:
    weights: np.ndarray
    objective: float
    objective_init: float
    n_iterations: int
    grad_inf_norm: float


def adam_maximize(sp: StageProblem, init: np.ndarray, cfg: AdamConfig) -> AdamResult:
    """Maximize the stage objective with full-batch Adam ascent.

    Runs until the gradient infinity-norm drops below ``cfg.grad_tol`` or
    ``cfg.max_iters`` steps were taken, and returns the best iterate seen,
    which includes the start, so ``result.objective >= objective(init)``.
    Non-finite objective or gradient values abort with a diagnostic.
    """
    init = np.asarray(init, dtype=np.float64)
    if init.shape != (sp.n_features,):
        raise ValueError(f"init must have shape ({sp.n_features},)")
    work = _StageWork(sp)
    obj, grad = work.value_and_grad(init)
    _check_finite(obj, grad, 0)

    best_b = init.copy()
    best_obj = obj
    obj_init = obj
    b = init.copy()
    m = np.zeros_like(b)
    v = np.zeros_like(b)
    iters = 0
    gnorm = float(np.abs(grad).max()) if grad.size else 0.0
    while iters < cfg.max_iters and gnorm >= cfg.grad_tol:
        iters += 1
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        m_hat = m / (1.0 - cfg.beta1**iters)
        v_hat = v / (1.0 - cfg.beta2**iters)
        b = b + cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        obj, grad = work.value_and_grad(b)
        _check_finite(obj, grad, iters)
        if obj > best_obj:
            best_obj = obj
            best_b = b.copy()
        gnorm = float(np.abs(grad).max())
    return AdamResult(
        weights=best_b,
        objective=best_obj,
        objective_init=obj_init,
        n_iterations=iters,
        grad_inf_norm=gnorm,
    )


def _check_finite(obj: float, grad: np.ndarray, iteration: int) -> None:
    if not np.isfinite(obj) or not np.all(np.isfinite(grad)):
        raise FloatingPointError(
            f"non-finite stage objective/gradient at iteration {iteration}: "
            f"objective={obj!r}, |grad|max={np.abs(grad).max()!r}"
        )


@dataclass(frozen=True)
class StageDiagnostics:
    stage: int
    n_iterations: int
    objective_init: float
    objective_final: float
    n_active: int
    grad_inf_norm: float


def rpo_backward_fit(
    features: FeatureTensor,
    rewards: RewardSet,
    init: WeightMatrix,
    cfg: AdamConfig | None = None,
) -> tuple[WeightMatrix, list[StageDiagnostics]]:
    """Single backward sweep of per-stage Adam solves.

    Survival probabilities for stage t are built from the incoming weights
    of the earlier periods (they are only replaced once their own stage has
    run), the continuation values carry the already-optimized later stages.
    Rows that can no longer contribute (zero reward and zero continuation,
    or zero survival mass) are dropped from the stage problem; the sample
    average keeps the full-path divisor, so the objective value is
    unchanged.

    Returns the fitted weights, meant to be used inside the hard policy, and
    per-stage diagnostics. Raises if a stage ends below its starting
    objective, which the best-iterate contract rules out.
    """
    if cfg is None:
        cfg = AdamConfig()
    x = features.values
    reward = rewards.reward
    n_paths, n_periods, _ = x.shape
    if init.weights.shape != (n_periods, features.n_features):
        raise ValueError("init weights do not match the feature tensor")

    b = init.weights.copy()
    init_scores = np.einsum("otk,tk->ot", x, init.weights)
    survive = np.cumprod(1.0 - logistic(init_scores), axis=1)

    cont = np.zeros(n_paths)
    diags: list[StageDiagnostics] = []
    for t in range(n_periods, 0, -1):
        p_t = np.ones(n_paths) if t == 1 else survive[:, t - 2]
        x_t = np.ascontiguousarray(x[:, t - 1, :])
        g_t = reward[:, t - 1]
        keep = (p_t > 0.0) & ((g_t > 0.0) | (cont > 0.0))
        if keep.all():
            sp = StageProblem(p_t, cont, g_t, x_t, n_paths=n_paths)
        else:
            sp = StageProblem(
                p_t[keep], cont[keep], g_t[keep], x_t[keep], n_paths=n_paths
            )
        res = adam_maximize(sp, b[t - 1], cfg)
        if res.objective < res.objective_init:
            raise AssertionError(
                f"stage {t} regressed: {res.objective} < {res.objective_init}"
            )
        b[t - 1] = res.weights
        diags.append(
            StageDiagnostics(
                stage=t,
                n_iterations=res.n_iterations,
                objective_init=res.objective_init,
                objective_final=res.objective,
                n_active=int(sp.survival_p.shape[0]),
                grad_inf_norm=res.grad_inf_norm,
            )
        )
        s_full = logistic(x_t @ res.weights)
        cont = g_t * s_full + cont * (1.0 - s_full)

    fitted = WeightMatrix(weights=b, basis_fingerprint=features.fingerprint)
    _soft_check_improvement(fitted, init, features, rewards)
    diags.reverse()
    return fitted, diags


def _soft_check_improvement(fitted, init, features, rewards) -> None:
    j_new = eval_randomized(fitted, features, rewards)
    j_old = eval_randomized(init, features, rewards)
    slack = 1e-9 * max(1.0, rewards.reward_upper_bound)
    if j_new < j_old - slack:
        logger.warning(
            "smoothed objective fell below its warm start: %.12g < %.12g",
            j_new,
            j_old,
        )
