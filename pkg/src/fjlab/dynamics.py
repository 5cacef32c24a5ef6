"""Belief update dynamics, fixed points, and long-run influence.

One deliberation round moves every agent toward a convex combination of
its innate belief, its current belief, and a weighted average of its
peers' current beliefs:

    b_i(t+1) = g_i * s_i + (1 - g_i) * a_i * b_i(t)
               + (1 - g_i) * (1 - a_i) * sum_j w_ij * b_j(t)

Stacking rows, the linear part is H = (I - G) @ (A + (I - A) @ W) with
G = diag(gamma) and A = diag(alpha), so a round is B <- G @ S + H @ B.
When the spectral radius of H is below 1 the map contracts onto

    B* = (I - H)^{-1} @ G @ S = M @ S,

where M is the long-run influence matrix: entry (i, j) is how much of
agent j's innate belief ends up in agent i's settled belief.  For
row-stochastic W, M is nonnegative with unit row sums, so any readout
eta over agents induces source weights pi = eta @ M on the simplex.
"""

from __future__ import annotations

import numpy as np

from .constants import CONTRACTION_MARGIN, STOCHASTIC_TOL, TAU_SIMPLEX
from .errors import (
    DegenerateStubbornness,
    InvariantViolation,
    NoConvergence,
    NotContractive,
    ShapeMismatch,
    SingularSystem,
)
from .model import (
    AggregationWeights,
    DeliberationTrajectory,
    FJParameters,
    validate_snapshot,
)

__all__ = [
    "build_h",
    "fj_step",
    "spectral_radius",
    "equilibrium",
    "influence_weights",
    "aggregate_pi",
    "simulate",
    "settle",
]


def build_h(params: FJParameters) -> np.ndarray:
    """Linear round operator H = (I - G) (A + (I - A) W); nonnegative,
    row sums 1 - gamma_i when the weight row is stochastic."""
    one_minus_g = 1.0 - params.gamma
    one_minus_a = 1.0 - params.alpha
    h = one_minus_a[:, None] * params.w
    h[np.diag_indices_from(h)] += params.alpha
    h *= one_minus_g[:, None]
    return h


def fj_step(params: FJParameters, innate: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Apply one deliberation round to ``current`` given innate beliefs."""
    out, _ = _fj_step_drift(params, innate, current)
    return out


def _fj_step_drift(
    params: FJParameters, innate: np.ndarray, current: np.ndarray
) -> tuple[np.ndarray, float]:
    innate = validate_snapshot(innate)
    current = validate_snapshot(current)
    if innate.shape != current.shape or innate.shape[0] != params.n:
        raise ShapeMismatch(
            f"innate {innate.shape}, current {current.shape}, n={params.n}"
        )
    return _fj_step_core(params, innate, current)


def _fj_step_core(
    params: FJParameters, innate: np.ndarray, current: np.ndarray
) -> tuple[np.ndarray, float]:
    coef_self = (1.0 - params.gamma) * params.alpha
    coef_peer = (1.0 - params.gamma) * (1.0 - params.alpha)
    out = (
        params.gamma[:, None] * innate
        + coef_self[:, None] * current
        + coef_peer[:, None] * (params.w @ current)
    )
    # Rows are convex combinations of simplex rows, so only float rounding
    # (or an empty neighborhood row) moves the mass off 1; renormalize and
    # report how far it drifted.
    sums = out.sum(axis=1)
    drift = float(np.abs(sums - 1.0).max())
    np.clip(out, 0.0, None, out=out)
    out /= out.sum(axis=1, keepdims=True)
    return out, drift


def spectral_radius(h: np.ndarray, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Spectral radius of a nonnegative matrix by power iteration.

    Iterates on h + 0.5 I (the shift adds exactly 0.5 to the dominant
    eigenvalue of a nonnegative matrix and breaks periodic cycling),
    starting from the all-ones vector, until the residual of the Rayleigh
    estimate drops below tol.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ShapeMismatch(f"expected square matrix, got {h.shape}")
    if h.shape[0] == 0:
        raise ShapeMismatch("empty matrix")
    shift = 0.5
    m = h + shift * np.eye(h.shape[0])
    x = np.ones(h.shape[0])
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = m @ x
        lam = float(x @ y)
        if np.linalg.norm(y - lam * x) <= tol * max(1.0, abs(lam)):
            return lam - shift
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return -shift  # only reachable for the zero matrix edge case
        x = y / norm
    raise NoConvergence(f"power iteration did not settle in {max_iter} steps")


def _require_contractive(h: np.ndarray, tol: float) -> float:
    rho = spectral_radius(h, tol=tol)
    if rho >= 1.0 - CONTRACTION_MARGIN:
        raise NotContractive(
            f"spectral radius {rho!r} is not below 1 - {CONTRACTION_MARGIN!r}"
        )
    return rho


def equilibrium(
    params: FJParameters, innate: np.ndarray, tol: float = 1e-10
) -> np.ndarray:
    """Settled beliefs: solves (I - H) B = G S with partial pivoting.

    Raises NotContractive when the spectral radius of H is within
    CONTRACTION_MARGIN of 1; callers that still want an answer can fall
    back to ``settle`` (finite iteration).
    """
    innate = validate_snapshot(innate)
    if innate.shape[0] != params.n:
        raise ShapeMismatch(f"innate has {innate.shape[0]} rows, n={params.n}")
    h = build_h(params)
    _require_contractive(h, tol)
    lhs = np.eye(params.n) - h
    rhs = params.gamma[:, None] * innate
    try:
        out = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return out


def influence_weights(params: FJParameters, tol: float = 1e-10) -> np.ndarray:
    """Long-run influence matrix M = (I - H)^{-1} G.

    Entry (i, j) is the weight of agent j's innate belief in agent i's
    equilibrium belief.  Nonnegative and row-stochastic for stochastic W;
    zero-stubbornness agents can break row sums, which is reported as
    DegenerateStubbornness rather than repaired.
    """
    h = build_h(params)
    _require_contractive(h, tol)
    lhs = np.eye(params.n) - h
    try:
        m = np.linalg.solve(lhs, np.diag(params.gamma))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    low = float(m.min())
    if low < -1e-12:
        raise InvariantViolation(f"influence entry {low!r} below -1e-12")
    np.clip(m, 0.0, None, out=m)
    row_err = float(np.abs(m.sum(axis=1) - 1.0).max())
    if row_err > STOCHASTIC_TOL:
        if np.any(params.gamma == 0.0):
            raise DegenerateStubbornness(
                f"influence rows off stochasticity by {row_err!r} with "
                f"zero-stubbornness agents present"
            )
        raise InvariantViolation(
            f"influence rows off stochasticity by {row_err!r}; check that "
            f"every agent has a stochastic weight row"
        )
    return m


def aggregate_pi(m: np.ndarray, eta: np.ndarray | None = None) -> AggregationWeights:
    """Source weights pi = eta @ M for a readout eta (uniform by default)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"influence matrix must be square, got {m.shape}")
    n = m.shape[0]
    if eta is None:
        eta = np.full(n, 1.0 / n)
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (n,):
        raise ShapeMismatch(f"eta shape {eta.shape} does not match n={n}")
    pi = eta @ m
    # Guard against -1e-17 style round-off before the simplex validation.
    np.clip(pi, 0.0, None, out=pi)
    pi /= pi.sum()
    return AggregationWeights(eta=eta, pi=pi)


def simulate(
    params: FJParameters,
    innate: np.ndarray,
    rounds: int,
    *,
    sample_id: str = "sim",
    correct_label: int | None = None,
    metadata: dict[str, str] | None = None,
) -> DeliberationTrajectory:
    """Run ``rounds`` update steps from the innate snapshot.

    The returned trajectory records the worst per-round row drift that
    renormalization absorbed under the "max_drift" metadata key.
    """
    innate = validate_snapshot(innate)
    if innate.shape[0] != params.n:
        raise ShapeMismatch(f"innate has {innate.shape[0]} rows, n={params.n}")
    if rounds < 0:
        raise ShapeMismatch(f"rounds must be >= 0, got {rounds}")
    snaps = np.empty((rounds + 1,) + innate.shape)
    snaps[0] = innate
    worst = 0.0
    current = innate
    for t in range(rounds):
        current, drift = _fj_step_core(params, innate, current)
        worst = max(worst, drift)
        snaps[t + 1] = current
    meta = dict(metadata or {})
    meta["max_drift"] = repr(worst)
    return DeliberationTrajectory(
        snapshots=snaps,
        sample_id=sample_id,
        correct_label=correct_label,
        metadata=meta,
    )


def settle(
    params: FJParameters,
    innate: np.ndarray,
    max_rounds: int = 10000,
    atol: float = 1e-12,
) -> np.ndarray:
    """Iterate rounds until the snapshot stops moving (sup-norm <= atol).

    Finite-horizon fallback for systems rejected by ``equilibrium``;
    raises NoConvergence when the budget runs out first.
    """
    innate = validate_snapshot(innate)
    if innate.shape[0] != params.n:
        raise ShapeMismatch(f"innate has {innate.shape[0]} rows, n={params.n}")
    current = innate
    for _ in range(max_rounds):
        nxt, _ = _fj_step_core(params, innate, current)
        if np.abs(nxt - current).max() <= atol:
            return nxt
        current = nxt
    raise NoConvergence(f"no fixed point within {max_rounds} rounds")
