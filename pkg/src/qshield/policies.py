"""Behavior and target policies plus the 2x2 matrix-game minimax machinery.

A policy is any callable mapping a traffic state to a MixedAction.  The
matrix-game solver is exact: with two actions per player the defender's
optimum is attained at one of the two pure columns or at the indifference
mixture, so no LP is needed inside the training loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import GameParams


@dataclass(frozen=True)
class MixedAction:
    """Probabilities of playing action 0 and action 1.

    Both masses are stored explicitly: near-deterministic policies carry one
    probability of order e^{-||x||_1/2}, which would round away entirely if
    derived as 1 minus the other side.  Tiny masses matter to the drift
    auditor, where rates multiply exponentially large Lyapunov values.
    """

    p0: float
    p1: float

    @classmethod
    def from_p1(cls, p1: float) -> "MixedAction":
        return cls(1.0 - p1, p1)

    @classmethod
    def from_p0(cls, p0: float) -> "MixedAction":
        return cls(p0, 1.0 - p0)

    def prob(self, action: int) -> float:
        return self.p1 if action else self.p0

    def sample(self, rng: np.random.Generator) -> int:
        # branch on the smaller mass so it is never lost to rounding
        u = rng.random()
        if self.p0 <= self.p1:
            return 0 if u < self.p0 else 1
        return 1 if u < self.p1 else 0


UNIFORM = MixedAction(0.5, 0.5)


def validate_C0(params: GameParams, C0: float) -> list[str]:
    """Behavior-policy constant must satisfy 0 < C0 < min(1, (sum mu - lam)/lam)."""
    bound = min(1.0, (params.total_mu - params.lam) / params.lam)
    if not 0 < C0 < bound:
        return [f"C0 must lie in (0, {bound}), got {C0}"]
    return []


@dataclass(frozen=True)
class AttackerBehavior:
    """Exploratory attacker: attacks with probability C0*e^{-||x||_1/2}."""

    C0: float

    def __call__(self, x) -> MixedAction:
        s = float(np.asarray(x).sum())
        return MixedAction.from_p1(self.C0 * math.exp(-s / 2.0))


@dataclass(frozen=True)
class DefenderBehavior:
    """Exploratory defender: defends with probability 1 - e^{-||x||_1/2}, 0.5 at x=0."""

    def __call__(self, x) -> MixedAction:
        s = float(np.asarray(x).sum())
        if s == 0.0:
            return UNIFORM
        return MixedAction(math.exp(-s / 2.0), -math.expm1(-s / 2.0))


@dataclass(frozen=True)
class UniformPolicy:
    def __call__(self, x) -> MixedAction:
        return UNIFORM


class TablePolicy:
    """State-indexed mixtures; states beyond the table clip to its box."""

    def __init__(self, table: dict[tuple, MixedAction], cap: int | None = None):
        self.table = table
        self.cap = cap

    def __call__(self, x) -> MixedAction:
        key = tuple(int(v) for v in np.asarray(x))
        if key not in self.table and self.cap is not None:
            key = tuple(min(v, self.cap) for v in key)
        return self.table[key]


def behavior_pair(C0: float) -> tuple[AttackerBehavior, DefenderBehavior]:
    return AttackerBehavior(C0), DefenderBehavior()


class GreedyFromWeights:
    """One side of the equilibrium mixture of the approximate Q at each state."""

    def __init__(self, basis, w, side: str):
        if side not in ("attacker", "defender"):
            raise ValueError(f"side must be 'attacker' or 'defender', got {side!r}")
        self.basis = basis
        self.w = np.asarray(w, dtype=float)
        self.side = side

    def __call__(self, x) -> MixedAction:
        payoff = [
            [float(self.basis.phi(x, a, b) @ self.w) for b in (0, 1)] for a in (0, 1)
        ]
        if self.side == "defender":
            return solve_matrix_game_defender(payoff)[0]
        return solve_matrix_game_attacker(payoff)[0]


def greedy_pair(basis, w) -> tuple["GreedyFromWeights", "GreedyFromWeights"]:
    return GreedyFromWeights(basis, w, "attacker"), GreedyFromWeights(basis, w, "defender")


# ---------------------------------------------------------------------------
# 2x2 zero-sum matrix games.  Payoff matrix Q[a][b]: row player a maximizes,
# column player b minimizes.
# ---------------------------------------------------------------------------


def solve_matrix_game_defender(payoff) -> tuple[MixedAction, float]:
    """Minimizing column player's optimal mixture and the game value.

    Evaluates max_a of the mixed payoff at the two pure columns and at the
    indifference mixture t* = (Q00-Q10)/(Q00-Q10-Q01+Q11) when it is
    interior; ties prefer pure b=0, then pure b=1, then the mixture.
    """
    q00, q01 = float(payoff[0][0]), float(payoff[0][1])
    q10, q11 = float(payoff[1][0]), float(payoff[1][1])
    best_t = 0.0
    best_v = max(q00, q10)
    v1 = max(q01, q11)
    if v1 < best_v:
        best_t, best_v = 1.0, v1
    den = q00 - q10 - q01 + q11
    if den != 0.0:
        t = (q00 - q10) / den
        if 0.0 < t < 1.0:
            vt = max(q00 * (1.0 - t) + q01 * t, q10 * (1.0 - t) + q11 * t)
            if vt < best_v:
                best_t, best_v = t, vt
    return MixedAction.from_p1(best_t), best_v


def solve_matrix_game_attacker(payoff) -> tuple[MixedAction, float]:
    """Maximizing row player's optimal mixture and the game value.

    The attacker's max-min program is the defender's min-max program on the
    negated transpose, which reuses the same tie-breaking.
    """
    q = np.asarray(payoff, dtype=float)
    pi, v = solve_matrix_game_defender(-q.T)
    return pi, -v


def matrix_game_value_batch(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Defender game values and mixtures for a stack of 2x2 payoffs.

    q has shape (..., 2, 2) indexed [a, b].  Candidate evaluation and
    tie-breaking replicate solve_matrix_game_defender expression for
    expression, so the two agree bitwise.
    """
    q00, q01 = q[..., 0, 0], q[..., 0, 1]
    q10, q11 = q[..., 1, 0], q[..., 1, 1]
    best_v = np.maximum(q00, q10)
    best_t = np.zeros_like(best_v)
    v1 = np.maximum(q01, q11)
    take = v1 < best_v
    best_v = np.where(take, v1, best_v)
    best_t = np.where(take, 1.0, best_t)
    den = q00 - q10 - q01 + q11
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (q00 - q10) / den
        vt = np.maximum(q00 * (1.0 - t) + q01 * t, q10 * (1.0 - t) + q11 * t)
    ok = (den != 0.0) & (t > 0.0) & (t < 1.0) & (vt < best_v)
    best_v = np.where(ok, vt, best_v)
    best_t = np.where(ok, t, best_t)
    return best_v, best_t


def matrix_game_attacker_batch(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Attacker game values and mixtures for a stack of 2x2 payoffs."""
    v, t = matrix_game_value_batch(-np.swapaxes(q, -1, -2))
    return -v, t


def best_response_attacker(payoff, sigma: MixedAction) -> tuple[int, float]:
    """Best pure row against the column mixture; ties go to a=0."""
    u0 = sigma.p0 * float(payoff[0][0]) + sigma.p1 * float(payoff[0][1])
    u1 = sigma.p0 * float(payoff[1][0]) + sigma.p1 * float(payoff[1][1])
    return (0, u0) if u0 >= u1 else (1, u1)


def greedy_policy_pair_from_Q(qfun, x) -> tuple[MixedAction, MixedAction]:
    """Equilibrium mixtures of the 2x2 game qfun(x, ., .).

    Returns (attacker mixture, defender mixture); in a zero-sum game any
    pair of individually minimax strategies is a Nash equilibrium.
    """
    payoff = [[qfun(x, a, b) for b in (0, 1)] for a in (0, 1)]
    sigma, _ = solve_matrix_game_defender(payoff)
    pi, _ = solve_matrix_game_attacker(payoff)
    return pi, sigma
