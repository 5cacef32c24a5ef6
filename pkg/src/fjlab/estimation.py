"""Fitting update parameters to observed trajectories.

The objective is teacher-forced one-step prediction error: every
observed snapshot B(t) is fed through one model round and compared to
the observed B(t+1), either by mean squared error over (round, agent,
entry) or by KL(observed || predicted) averaged over (round, agent)
with a 1e-12 floor inside the log.

Constraints (gamma, alpha in [0, 1]; masked row-stochastic W) are
handled by reparameterization: logistic maps for gamma and alpha and a
row-wise softmax over the allowed entries of W.  In the natural
convex-combination coordinates the one-step objective is convex per
agent, so plain gradient descent with Armijo backtracking converges;
random restarts guard against saturated-logistic plateaus.  Every run
is deterministic given the seed: restarts draw from
numpy.random.default_rng(seed + restart_index) in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .constants import LOG_FLOOR
from .errors import (
    DegenerateTrajectory,
    EmptyInput,
    InsufficientSamples,
    ShapeMismatch,
)
from .model import DeliberationTrajectory, FJParameters

__all__ = [
    "FitConfig",
    "FitReport",
    "VariabilityReport",
    "one_step_predictions",
    "fit_objective",
    "fit_sample",
    "fit_global",
    "parameter_variability",
]

_FLAT_TOL = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings; the defaults suit pools of short trajectories."""

    objective: str = "kl"
    max_iters: int = 500
    tol: float = 1e-12
    reg_lambda: float = 1e-3
    restarts: int = 5
    seed: int = 0
    step0: float = 1.0
    step_max: float = 50.0

    def __post_init__(self):
        if self.objective not in ("kl", "mse"):
            raise ShapeMismatch(f"objective must be 'kl' or 'mse', got {self.objective!r}")
        if self.max_iters < 1 or self.restarts < 1:
            raise ShapeMismatch("max_iters and restarts must be positive")
        if self.reg_lambda < 0.0:
            raise ShapeMismatch("reg_lambda must be nonnegative")


@dataclass(frozen=True)
class FitReport:
    """Result of one fit: parameters plus both unregularized objectives.

    kl and mse are averages over all predicted (agent, round) pairs of
    the winning restart's parameters, independent of which objective was
    optimized.  objective_curve lists the regularized objective at the
    start and after every accepted step (non-increasing).  flat marks a
    trajectory whose snapshots never move.
    """

    params: FJParameters
    kl: float
    mse: float
    objective_curve: list[float]
    restart_index: int
    flat: bool = False
    sample_id: str = ""


@dataclass(frozen=True)
class VariabilityReport:
    """Spread of fitted parameters across a pool of per-sample fits.

    per_parameter maps "gamma_<i>"/"alpha_<i>"/"w_in_<i>" to
    (mean, std, iqr) over reports; w_in_<i> is agent i's incoming weight
    averaged over the other agents (senders).
    """

    per_parameter: dict[str, tuple[float, float, float]]
    n_reports: int


def _stack_io(traj: DeliberationTrajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if traj.rounds < 1:
        raise EmptyInput(f"trajectory {traj.sample_id!r} has no update rounds")
    snaps = traj.snapshots
    return snaps[0], snaps[:-1], snaps[1:]


def _predict(
    gamma: np.ndarray, alpha: np.ndarray, w: np.ndarray, innate: np.ndarray, b_in: np.ndarray
) -> np.ndarray:
    """Teacher-forced one-step predictions, (T, n, d)."""
    coef_self = (1.0 - gamma) * alpha
    coef_peer = (1.0 - gamma) * (1.0 - alpha)
    return (
        gamma[:, None] * innate
        + coef_self[:, None] * b_in
        + coef_peer[:, None] * (w @ b_in)
    )


def one_step_predictions(
    params: FJParameters, traj: DeliberationTrajectory
) -> np.ndarray:
    """Model predictions for rounds 1..T given the observed previous rounds."""
    if params.n != traj.n:
        raise ShapeMismatch(f"params n={params.n} but trajectory n={traj.n}")
    innate, b_in, _ = _stack_io(traj)
    return _predict(params.gamma, params.alpha, params.w, innate, b_in)


def _data_value(pred: np.ndarray, b_out: np.ndarray, objective: str) -> float:
    if objective == "mse":
        return float(((pred - b_out) ** 2).mean())
    t, n, _ = b_out.shape
    pred_floor = np.maximum(pred, LOG_FLOOR)
    terms = np.where(
        b_out > 0.0, b_out * (np.log(np.where(b_out > 0.0, b_out, 1.0)) - np.log(pred_floor)), 0.0
    )
    return float(terms.sum() / (t * n))


def _data_grad(pred: np.ndarray, b_out: np.ndarray, objective: str) -> np.ndarray:
    """Derivative of the data term with respect to the predictions."""
    t, n, d = b_out.shape
    if objective == "mse":
        return 2.0 * (pred - b_out) / (t * n * d)
    grad = np.where(
        (b_out > 0.0) & (pred > LOG_FLOOR), -b_out / np.maximum(pred, LOG_FLOOR), 0.0
    )
    return grad / (t * n)


def fit_objective(
    params: FJParameters, traj: DeliberationTrajectory, objective: str = "kl"
) -> float:
    """Unregularized teacher-forced one-step objective of given parameters."""
    if objective not in ("kl", "mse"):
        raise ShapeMismatch(f"objective must be 'kl' or 'mse', got {objective!r}")
    innate, b_in, b_out = _stack_io(traj)
    if params.n != traj.n:
        raise ShapeMismatch(f"params n={params.n} but trajectory n={traj.n}")
    pred = _predict(params.gamma, params.alpha, params.w, innate, b_in)
    return _data_value(pred, b_out, objective)


class _Problem:
    """Shared-parameter fit problem over one or more trajectories."""

    def __init__(
        self,
        trajs: list[DeliberationTrajectory],
        mask: np.ndarray,
        objective: str,
        reg_lambda: float,
    ):
        self.objective = objective
        self.reg_lambda = reg_lambda
        self.mask = mask
        self.n = mask.shape[0]
        self.data = [_stack_io(t) for t in trajs]
        self.count = len(trajs)
        row_deg = mask.sum(axis=1)
        self.w_uniform = np.where(mask, 1.0, 0.0)
        nonzero = row_deg > 0
        self.w_uniform[nonzero] /= row_deg[nonzero][:, None]

    def natural(self, tg, ta, tw):
        gamma = expit(tg)
        alpha = expit(ta)
        z = np.where(self.mask, tw, -np.inf)
        zmax = z.max(axis=1, keepdims=True)
        zmax = np.where(np.isfinite(zmax), zmax, 0.0)  # empty rows stay all -inf
        e = np.exp(z - zmax)
        e = np.where(self.mask, e, 0.0)
        sums = e.sum(axis=1, keepdims=True)
        w = np.where(sums > 0.0, e / np.where(sums > 0.0, sums, 1.0), 0.0)
        return gamma, alpha, w

    def value_grad(self, tg, ta, tw):
        gamma, alpha, w = self.natural(tg, ta, tw)
        lam = self.reg_lambda
        total = 0.0
        d_gamma = np.zeros(self.n)
        d_alpha = np.zeros(self.n)
        d_w = np.zeros((self.n, self.n))
        for innate, b_in, b_out in self.data:
            pred = _predict(gamma, alpha, w, innate, b_in)
            total += _data_value(pred, b_out, self.objective)
            g = _data_grad(pred, b_out, self.objective)
            wb = w @ b_in
            d_gamma += np.einsum(
                "tic,tic->i",
                g,
                innate[None, :, :] - alpha[:, None] * b_in - (1.0 - alpha)[:, None] * wb,
            )
            d_alpha += (1.0 - gamma) * np.einsum("tic,tic->i", g, b_in - wb)
            d_w += ((1.0 - gamma) * (1.0 - alpha))[:, None] * np.einsum(
                "tic,tjc->ij", g, b_in
            )
        # identical arithmetic to value(): the curve must compare bitwise
        total = total / self.count
        inv = 1.0 / self.count
        d_gamma *= inv
        d_alpha *= inv
        d_w *= inv
        if lam > 0.0:
            total += lam * (
                ((w - self.w_uniform) ** 2).sum()
                + ((gamma - 0.5) ** 2).sum()
                + ((alpha - 0.5) ** 2).sum()
            )
            d_w += 2.0 * lam * (w - self.w_uniform)
            d_gamma += 2.0 * lam * (gamma - 0.5)
            d_alpha += 2.0 * lam * (alpha - 0.5)
        # chain through the reparameterization
        g_tg = d_gamma * gamma * (1.0 - gamma)
        g_ta = d_alpha * alpha * (1.0 - alpha)
        row_dot = (w * d_w).sum(axis=1, keepdims=True)
        g_tw = w * (d_w - row_dot)
        return total, g_tg, g_ta, g_tw

    def value(self, tg, ta, tw) -> float:
        gamma, alpha, w = self.natural(tg, ta, tw)
        total = 0.0
        for innate, b_in, b_out in self.data:
            pred = _predict(gamma, alpha, w, innate, b_in)
            total += _data_value(pred, b_out, self.objective)
        total = total / self.count
        if self.reg_lambda > 0.0:
            total += self.reg_lambda * (
                ((w - self.w_uniform) ** 2).sum()
                + ((gamma - 0.5) ** 2).sum()
                + ((alpha - 0.5) ** 2).sum()
            )
        return total


def _descend(problem: _Problem, config: FitConfig, restart: int):
    """One gradient-descent run; returns (final value, theta, curve)."""
    rng = np.random.default_rng(config.seed + restart)
    n = problem.n
    tg = rng.normal(0.0, 0.5, n)
    ta = rng.normal(0.0, 0.5, n)
    tw = rng.normal(0.0, 0.5, (n, n))
    f, g_tg, g_ta, g_tw = problem.value_grad(tg, ta, tw)
    curve = [f]
    step = config.step0
    for _ in range(config.max_iters):
        gnorm2 = float((g_tg**2).sum() + (g_ta**2).sum() + (g_tw**2).sum())
        if gnorm2 <= 1e-28:
            break
        accepted = False
        while step >= 1e-18:
            cand = (tg - step * g_tg, ta - step * g_ta, tw - step * g_tw)
            f_cand = problem.value(*cand)
            if f_cand <= f - 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        decrease = f - f_cand
        tg, ta, tw = cand
        f, g_tg, g_ta, g_tw = problem.value_grad(tg, ta, tw)
        # value() and value_grad() share the arithmetic, so f == f_cand
        curve.append(f)
        step = min(step * 1.3, config.step_max)
        if decrease <= config.tol:
            break
    return f, (tg, ta, tw), curve


def _is_flat(traj: DeliberationTrajectory) -> bool:
    snaps = traj.snapshots
    return bool(np.abs(snaps - snaps[0]).max() <= _FLAT_TOL)


def _run_fit(
    trajs: list[DeliberationTrajectory],
    config: FitConfig,
    mask: np.ndarray | None,
    flat: bool,
    sample_id: str,
) -> FitReport:
    n = trajs[0].n
    for t in trajs[1:]:
        if t.n != n:
            raise ShapeMismatch(f"trajectory {t.sample_id!r} has n={t.n}, expected {n}")
    if mask is None:
        mask = FJParameters.complete_mask(n)
    mask = np.asarray(mask)
    if mask.dtype != np.bool_:
        mask = mask.astype(bool)
    if mask.shape != (n, n):
        raise ShapeMismatch(f"mask shape {mask.shape}, expected {(n, n)}")
    if mask.diagonal().any():
        raise ShapeMismatch("mask diagonal must be False")
    problem = _Problem(trajs, mask, config.objective, config.reg_lambda)
    best = None
    best_index = -1
    for r in range(config.restarts):
        f, theta, curve = _descend(problem, config, r)
        if best is None or f < best[0]:
            best = (f, theta, curve)
            best_index = r
    _, theta, curve = best
    gamma, alpha, w = problem.natural(*theta)
    # exact zeros outside the mask; softmax already normalizes the rows
    w = np.where(mask, w, 0.0)
    params = FJParameters(gamma=gamma, alpha=alpha, w=w, mask=mask)
    kl = float(np.mean([fit_objective(params, t, "kl") for t in trajs]))
    mse = float(np.mean([fit_objective(params, t, "mse") for t in trajs]))
    return FitReport(
        params=params,
        kl=kl,
        mse=mse,
        objective_curve=[float(v) for v in curve],
        restart_index=best_index,
        flat=flat,
        sample_id=sample_id,
    )


def fit_sample(
    traj: DeliberationTrajectory,
    config: FitConfig = FitConfig(),
    mask: np.ndarray | None = None,
) -> FitReport:
    """Fit parameters to one trajectory.

    A trajectory whose snapshots never move cannot identify any
    parameters; with reg_lambda = 0 that raises DegenerateTrajectory,
    otherwise the regularized optimum is returned with flat=True.
    """
    flat = _is_flat(traj)
    if flat and config.reg_lambda == 0.0:
        raise DegenerateTrajectory(
            f"trajectory {traj.sample_id!r} is constant and the fit is unregularized"
        )
    return _run_fit([traj], config, mask, flat, traj.sample_id)


def fit_global(
    trajs: list[DeliberationTrajectory],
    config: FitConfig = FitConfig(),
    mask: np.ndarray | None = None,
) -> FitReport:
    """Fit one shared parameter set to a pool of trajectories.

    Trajectories must share the agent count; labels and class counts may
    differ.  The objective is the unweighted mean of the per-sample data
    terms plus one regularizer.
    """
    if not trajs:
        raise EmptyInput("no trajectories to fit")
    flat = all(_is_flat(t) for t in trajs)
    if flat and config.reg_lambda == 0.0:
        raise DegenerateTrajectory("all trajectories are constant; fit is unregularized")
    return _run_fit(list(trajs), config, mask, flat, "global")


def parameter_variability(reports: list[FitReport]) -> VariabilityReport:
    """Cross-sample spread (mean, population std, IQR) of fitted values.

    Incoming weights are first averaged over senders per receiving
    agent, giving one w_in value per agent per report.
    """
    if len(reports) < 2:
        raise InsufficientSamples(f"need >= 2 reports, got {len(reports)}")
    n = reports[0].params.n
    for rep in reports[1:]:
        if rep.params.n != n:
            raise ShapeMismatch("reports mix different agent counts")
    gammas = np.stack([rep.params.gamma for rep in reports])
    alphas = np.stack([rep.params.alpha for rep in reports])
    # mean over the n-1 potential senders; the diagonal is structurally 0
    w_in = np.stack([rep.params.w.sum(axis=0) / (n - 1) for rep in reports])
    out: dict[str, tuple[float, float, float]] = {}

    def add(prefix: str, values: np.ndarray):
        for i in range(n):
            col = values[:, i]
            q25, q75 = np.percentile(col, [25.0, 75.0])
            out[f"{prefix}_{i}"] = (
                float(col.mean()),
                float(col.std()),
                float(q75 - q25),
            )

    add("gamma", gammas)
    add("alpha", alphas)
    add("w_in", w_in)
    return VariabilityReport(per_parameter=out, n_reports=len(reports))
