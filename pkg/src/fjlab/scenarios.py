"""Synthetic deliberation scenarios with closed-form loss oracles.

Two families, both over n agents and d labels with one competent agent
per sample whose identity varies by region:

* exclusive knowledge: the competent agent puts p = 1 - epsilon on the
  true label; everyone else is exactly uniform.  Log losses of fixed
  mixtures, of confidence routing, and of error-prone routing all have
  closed forms, which makes the family a sharp oracle for routing
  theory.
* imperfect agents: non-competent agents lean on a shared wrong label,
  so the uniform ensemble can be confidently wrong while confidence
  routing stays exact.

Generation is vectorized from a counter-based Philox stream keyed by the
seed; identical (scenario, samples, seed) triples reproduce bitwise. The
draw order is fixed: regions first, then labels (then routing-noise
uniforms where applicable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfidenceOrderViolated,
    InvalidScenario,
    NoConvergence,
    UnbalancedScenario,
)
from .metrics import _confidence_rows
from .routing import LabeledSnapshotSet

__all__ = [
    "ExclusiveScenario",
    "ExclusiveLosses",
    "gen_exclusive",
    "exclusive_losses",
    "optimal_fixed_ensemble",
    "moe_advantage_check",
    "routing_error_threshold",
    "route_loss",
    "empirical_route_crossover",
    "ImperfectScenario",
    "gen_imperfect",
    "imperfect_gap",
    "wrong_majority_holds",
    "uniform_mixture_profile",
    "project_simplex",
]

_BALANCED_TOL = 1e-12


@dataclass(frozen=True)
class ExclusiveScenario:
    """Exclusive-knowledge scenario parameters.

    n agents, d labels, competent mass p = 1 - epsilon on the true label
    (rest spread evenly), all other agents exactly uniform at u = 1/d.
    rho gives the region probabilities (balanced when omitted).
    """

    n: int
    d: int
    epsilon: float
    rho: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 2:
            raise InvalidScenario(f"need n >= 2 agents, got {self.n}")
        if self.d < 2:
            raise InvalidScenario(f"need d >= 2 labels, got {self.d}")
        if not 0.0 < self.epsilon < 1.0 - 1.0 / self.d:
            raise InvalidScenario(
                f"epsilon must lie in (0, 1 - 1/d) = (0, {1.0 - 1.0 / self.d}), "
                f"got {self.epsilon}"
            )
        rho = self.rho
        if rho is None:
            rho = np.full(self.n, 1.0 / self.n)
        rho = np.asarray(rho, dtype=np.float64)
        if rho.shape != (self.n,):
            raise InvalidScenario(f"rho shape {rho.shape} does not match n={self.n}")
        if rho.min() < 0.0 or abs(rho.sum() - 1.0) > 1e-9:
            raise InvalidScenario("rho must be a probability vector")
        rho = rho / rho.sum()
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def p(self) -> float:
        return 1.0 - self.epsilon

    @property
    def u(self) -> float:
        return 1.0 / self.d

    @property
    def balanced(self) -> bool:
        return bool(np.abs(self.rho - 1.0 / self.n).max() <= _BALANCED_TOL)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def gen_exclusive(
    sc: ExclusiveScenario, samples: int, seed: int
) -> LabeledSnapshotSet:
    """Draw a labeled snapshot batch; risks are exact conditional risks."""
    if samples < 1:
        raise InvalidScenario(f"samples must be >= 1, got {samples}")
    rng = _rng(seed)
    regions = rng.choice(sc.n, size=samples, p=sc.rho)
    labels = rng.integers(0, sc.d, size=samples)
    p, u = sc.p, sc.u
    off = (1.0 - p) / (sc.d - 1)
    beliefs = np.full((samples, sc.n, sc.d), u)
    idx = np.arange(samples)
    beliefs[idx, regions, :] = off
    beliefs[idx, regions, labels] = p
    comp_risk = (1.0 - p) ** 2 + (sc.d - 1) * off**2
    other_risk = (1.0 - u) ** 2 + (sc.d - 1) * u**2
    risks = np.full((samples, sc.n), other_risk)
    risks[idx, regions] = comp_risk
    return LabeledSnapshotSet(
        beliefs=beliefs, labels=labels, risks=risks, exact_risk=True
    )


@dataclass(frozen=True)
class ExclusiveLosses:
    """Closed-form expected log losses for one fixed weighting.

    gap_balanced is only defined for balanced regions; gap_single is the
    loss the globally best single agent pays beyond perfect routing.
    """

    l_ens: float
    l_moe: float
    gap_balanced: float | None
    gap_single: float


def exclusive_losses(sc: ExclusiveScenario, a) -> ExclusiveLosses:
    """Expected log loss of the fixed mixture ``a`` and of exact routing.

    l_ens(a) = -sum_j rho_j ln(u + (p - u) a_j);  l_moe = -ln p.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (sc.n,):
        raise InvalidScenario(f"weights shape {a.shape} does not match n={sc.n}")
    if a.min() < -1e-12 or abs(a.sum() - 1.0) > 1e-9:
        raise InvalidScenario("weights must lie on the simplex")
    p, u = sc.p, sc.u
    l_ens = float(-(sc.rho * np.log(u + (p - u) * np.clip(a, 0.0, None))).sum())
    l_moe = float(-np.log(p))
    gap_balanced = None
    if sc.balanced:
        gap_balanced = float(np.log(p) - np.log(u + (p - u) / sc.n))
    rho_best = float(sc.rho.max())
    gap_single = float((1.0 - rho_best) * np.log(p / u))
    return ExclusiveLosses(
        l_ens=l_ens, l_moe=l_moe, gap_balanced=gap_balanced, gap_single=gap_single
    )


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    support = u - css / k > 0.0
    rho = int(np.nonzero(support)[0][-1])
    theta = css[rho] / (rho + 1.0)
    return np.clip(v - theta, 0.0, None)


def optimal_fixed_ensemble(
    sc: ExclusiveScenario, tol: float = 1e-10, max_iter: int = 20000
) -> np.ndarray:
    """Fixed weights minimizing l_ens over the simplex.

    The objective is convex and smooth on the simplex, so projected
    gradient descent with backtracking converges to the global optimum;
    for balanced regions the first iterate is already uniform and is
    returned exactly.
    """
    p, u = sc.p, sc.u
    rho = sc.rho

    def f(a: np.ndarray) -> float:
        return float(-(rho * np.log(u + (p - u) * a)).sum())

    def grad(a: np.ndarray) -> np.ndarray:
        return -rho * (p - u) / (u + (p - u) * a)

    a = np.full(sc.n, 1.0 / sc.n)
    fa = f(a)
    step = 1.0
    for _ in range(max_iter):
        g = grad(a)
        while True:
            cand = project_simplex(a - step * g)
            fc = f(cand)
            decrease = g @ (a - cand)
            if fc <= fa - 1e-4 * decrease or step < 1e-18:
                break
            step *= 0.5
        moved = float(np.abs(cand - a).max())
        if fc < fa:
            a, fa = cand, fc
        if moved <= tol:
            return a
        step = min(step * 1.3, 1e6)
    raise NoConvergence(f"simplex descent did not settle in {max_iter} steps")


def moe_advantage_check(sc: ExclusiveScenario) -> bool:
    """True when exact routing strictly beats the best fixed mixture."""
    best = optimal_fixed_ensemble(sc)
    losses = exclusive_losses(sc, best)
    return bool(losses.l_moe < losses.l_ens)


def routing_error_threshold(sc: ExclusiveScenario) -> float:
    """Routing error rate at which noisy routing stops beating the best
    fixed mixture (balanced regions only):

        delta* = (ln p - ln(u + (p - u)/n)) / (ln p - ln u)
    """
    if not sc.balanced:
        raise UnbalancedScenario("threshold has a closed form only for balanced rho")
    p, u = sc.p, sc.u
    return float((np.log(p) - np.log(u + (p - u) / sc.n)) / (np.log(p) - np.log(u)))


def route_loss(sc: ExclusiveScenario, delta: float) -> float:
    """Expected log loss of routing that errs with probability delta:
    -(1 - delta) ln p - delta ln u."""
    if not 0.0 <= delta <= 1.0:
        raise InvalidScenario(f"delta must lie in [0, 1], got {delta}")
    return float(-(1.0 - delta) * np.log(sc.p) - delta * np.log(sc.u))


def empirical_route_crossover(
    sc: ExclusiveScenario, samples: int = 100_000, seed: int = 0, tol: float = 1e-6
) -> float:
    """Monte Carlo estimate of the routing-error break-even point.

    Uses common random numbers: one uniform per sample decides whether
    the router errs, so the empirical routed loss is monotone in delta
    and plain bisection against the empirical optimal-fixed-mixture loss
    is valid.  Draw order: regions, labels, then routing uniforms.
    """
    if not sc.balanced:
        raise UnbalancedScenario("crossover search expects balanced rho")
    rng = _rng(seed)
    regions = rng.choice(sc.n, size=samples, p=sc.rho)
    rng.integers(0, sc.d, size=samples)  # labels; keep the stream layout fixed
    noise = rng.uniform(size=samples)
    p, u = sc.p, sc.u
    a_star = optimal_fixed_ensemble(sc)
    target = float(-np.log(u + (p - u) * a_star[regions]).mean())
    loss_right, loss_wrong = -np.log(p), -np.log(u)

    def routed(delta: float) -> float:
        return float(np.where(noise < delta, loss_wrong, loss_right).mean())

    lo, hi = 0.0, 1.0
    if routed(lo) - target >= 0.0 or routed(hi) - target <= 0.0:
        raise NoConvergence("empirical routed loss does not bracket the target")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if routed(mid) - target > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ImperfectScenario:
    """Imperfect-agents scenario parameters.

    The competent agent puts p on the true label; every other agent puts
    u < 1/d on it, c on a shared wrong label, and the rest evenly on the
    remaining labels.  For d = 2 the non-competent row is forced to
    (u, 1 - u).  Regions are balanced.
    """

    n: int
    d: int
    p: float
    u: float
    c: float | None = None

    def __post_init__(self):
        if self.n < 3:
            raise InvalidScenario(f"need n >= 3 agents, got {self.n}")
        if self.d < 2:
            raise InvalidScenario(f"need d >= 2 labels, got {self.d}")
        if not 0.0 < self.u < 1.0 / self.d < self.p < 1.0:
            raise InvalidScenario(
                f"require 0 < u < 1/d < p < 1, got u={self.u}, p={self.p}, d={self.d}"
            )
        c = self.c
        if self.d == 2:
            forced = 1.0 - self.u
            if c is not None and abs(c - forced) > 1e-12:
                raise InvalidScenario(f"for d=2 the wrong-label mass is 1-u={forced}")
            c = forced
        else:
            if c is None:
                raise InvalidScenario("c is required when d > 2")
            if not self.u < c <= 1.0 - self.u:
                raise InvalidScenario(
                    f"require u < c <= 1-u for nonnegative residual mass, got c={c}"
                )
        object.__setattr__(self, "c", float(c))

    def profile_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Canonical (competent, non-competent) rows for y=0, z=1."""
        comp = np.full(self.d, (1.0 - self.p) / (self.d - 1))
        comp[0] = self.p
        if self.d == 2:
            other = np.array([self.u, 1.0 - self.u])
        else:
            other = np.full(self.d, (1.0 - self.u - self.c) / (self.d - 2))
            other[0] = self.u
            other[1] = self.c
        return comp, other


def gen_imperfect(
    sc: ImperfectScenario, samples: int, seed: int
) -> LabeledSnapshotSet:
    """Draw a labeled snapshot batch; raises ConfidenceOrderViolated when
    the parameters do not leave the competent agent strictly most
    confident (confidence routing is undefined there)."""
    if samples < 1:
        raise InvalidScenario(f"samples must be >= 1, got {samples}")
    comp, other = sc.profile_rows()
    c_comp, c_other = _confidence_rows(np.stack([comp, other]))
    if not c_comp > c_other:
        raise ConfidenceOrderViolated(
            f"competent confidence {c_comp!r} not strictly above {c_other!r}"
        )
    rng = _rng(seed)
    regions = rng.integers(0, sc.n, size=samples)
    labels = rng.integers(0, sc.d, size=samples)
    wrong = (labels + 1) % sc.d
    idx = np.arange(samples)
    if sc.d == 2:
        beliefs = np.empty((samples, sc.n, sc.d))
        beliefs[idx[:, None], :, labels[:, None]] = sc.u
        beliefs[idx[:, None], :, wrong[:, None]] = sc.c
    else:
        rest = (1.0 - sc.u - sc.c) / (sc.d - 2)
        beliefs = np.full((samples, sc.n, sc.d), rest)
        beliefs[idx[:, None], :, labels[:, None]] = sc.u
        beliefs[idx[:, None], :, wrong[:, None]] = sc.c
    beliefs[idx, regions, :] = (1.0 - sc.p) / (sc.d - 1)
    beliefs[idx, regions, labels] = sc.p
    onehot = np.zeros(sc.d)
    onehot[0] = 1.0
    comp_risk = float(((comp - onehot) ** 2).sum())
    other_risk = float(((other - onehot) ** 2).sum())
    risks = np.full((samples, sc.n), other_risk)
    risks[idx, regions] = comp_risk
    return LabeledSnapshotSet(
        beliefs=beliefs, labels=labels, risks=risks, exact_risk=True
    )


def imperfect_gap(sc: ImperfectScenario) -> float:
    """Expected log-loss gap between the uniform mixture and exact
    routing, counting only the true-label mass: ln(p / ((p + (n-1)u)/n))."""
    return float(np.log(sc.p / ((sc.p + (sc.n - 1) * sc.u) / sc.n)))


def uniform_mixture_profile(sc: ImperfectScenario) -> np.ndarray:
    """Uniform-ensemble belief row in canonical coordinates (y=0, z=1)."""
    comp, other = sc.profile_rows()
    return (comp + (sc.n - 1) * other) / sc.n


def wrong_majority_holds(sc: ImperfectScenario) -> bool:
    """True when the uniform mixture's argmax is the shared wrong label.

    Strictly stronger than comparing the wrong label only against the
    true one; this is the condition under which the uniform ensemble is
    confidently wrong on every sample.
    """
    mix = uniform_mixture_profile(sc)
    top = int(np.argmax(mix))
    return top == 1 and mix[1] > np.max(np.delete(mix, 1))
