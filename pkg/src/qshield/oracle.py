"""Ground-truth machinery on a truncated state box.

Exact tabular computations stand in for the unbounded game: Shapley value
iteration for the minimax Q function, equilibrium policy extraction, the
behavior-pair stationary distribution, the feature second-moment matrix and
the projected Bellman fixed point.  Arrivals into a full queue self-loop so
every row stays stochastic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .features import ACTION_PAIRS, FeatureBasis
from .game import GameParams, embedded_reward, next_state_distribution
from .policies import (
    MixedAction,
    matrix_game_attacker_batch,
    matrix_game_value_batch,
)

MAX_ITER = 100_000


@dataclass(frozen=True)
class TruncatedSpace:
    """The box {0..cap}^m enumerated lexicographically (first queue most significant)."""

    cap: int
    m: int

    @property
    def n_states(self) -> int:
        return (self.cap + 1) ** self.m

    @property
    def radix(self) -> np.ndarray:
        return (self.cap + 1) ** np.arange(self.m - 1, -1, -1)

    def states(self) -> np.ndarray:
        """All states as an (n_states, m) integer array in index order."""
        grids = np.indices((self.cap + 1,) * self.m)
        return grids.reshape(self.m, -1).T.astype(np.int64)

    def index_of(self, x) -> int:
        x = np.asarray(x, dtype=np.int64)
        if (x < 0).any() or (x > self.cap).any():
            raise ValueError(f"state {tuple(x)} outside the box [0, {self.cap}]^{self.m}")
        return int(x @ self.radix)

    def state_of(self, idx: int) -> tuple[int, ...]:
        out = []
        for r in self.radix:
            out.append(int(idx // r))
            idx = idx % r
        return tuple(out)


def build_truncated_chain(
    params: GameParams, space: TruncatedSpace, a: int, b: int
) -> sp.csr_matrix:
    """Jump-chain transition matrix under the pure action pair (a, b).

    Interior rows equal next_state_distribution; arrival mass aimed at a
    queue already at the cap stays on the diagonal.
    """
    n = space.n_states
    rows, cols, vals = [], [], []
    for idx, x in enumerate(space.states()):
        for y, p in next_state_distribution(x, a, b, params):
            if max(y) > space.cap:
                rows.append(idx)
                cols.append(idx)
            else:
                rows.append(idx)
                cols.append(space.index_of(y))
            vals.append(p)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    return mat


@dataclass
class TruncatedChain:
    """Per-action-pair kernels and the reward table on a truncated space."""

    space: TruncatedSpace
    params: GameParams
    kernels: dict[tuple[int, int], sp.csr_matrix]
    rewards: np.ndarray  # (n_states, 2, 2)

    @classmethod
    def build(cls, params: GameParams, space: TruncatedSpace) -> "TruncatedChain":
        kernels = {
            (a, b): build_truncated_chain(params, space, a, b) for a, b in ACTION_PAIRS
        }
        states = space.states()
        rewards = np.empty((space.n_states, 2, 2))
        for a, b in ACTION_PAIRS:
            rewards[:, a, b] = [embedded_reward(x, a, b, params) for x in states]
        return cls(space, params, kernels, rewards)


def shapley_iterate(Q: np.ndarray, chain: TruncatedChain, gamma: float | None = None) -> np.ndarray:
    """One application of the minimax Bellman operator to a tabular Q."""
    if gamma is None:
        gamma = chain.params.gamma
    v, _ = matrix_game_value_batch(Q)
    out = np.empty_like(Q)
    for (a, b), P in chain.kernels.items():
        out[:, a, b] = chain.rewards[:, a, b] + gamma * (P @ v)
    return out


@dataclass
class EquilibriumSolution:
    q: np.ndarray  # (n_states, 2, 2) minimax Q
    v: np.ndarray  # (n_states,) game values
    pi_p1: np.ndarray  # attacker equilibrium attack probabilities
    sigma_p1: np.ndarray  # defender equilibrium defense probabilities
    iterations: int
    residual: float

    def attacker_policy(self, space: TruncatedSpace):
        return _table_policy_from_p1(space, self.pi_p1)

    def defender_policy(self, space: TruncatedSpace):
        return _table_policy_from_p1(space, self.sigma_p1)


def _table_policy_from_p1(space: TruncatedSpace, p1: np.ndarray):
    from .policies import TablePolicy

    table = {
        space.state_of(i): MixedAction.from_p1(float(p1[i])) for i in range(space.n_states)
    }
    return TablePolicy(table, cap=space.cap)


def solve_equilibrium(
    space: TruncatedSpace,
    params: GameParams,
    tol: float = 1e-8,
    max_iter: int = MAX_ITER,
    chain: TruncatedChain | None = None,
) -> EquilibriumSolution:
    """Iterate the minimax Bellman operator to its fixed point.

    Stops when the sup-norm step falls to tol; gamma-contraction makes the
    iteration count logarithmic in tol.
    """
    if chain is None:
        chain = TruncatedChain.build(params, space)
    Q = np.zeros((space.n_states, 2, 2))
    residual = np.inf
    for it in range(1, max_iter + 1):
        Q_next = shapley_iterate(Q, chain)
        residual = float(np.abs(Q_next - Q).max())
        Q = Q_next
        if residual <= tol:
            break
    else:
        raise RuntimeError(
            f"Shapley iteration hit the {max_iter}-iteration cap at residual {residual:.3e}"
        )
    v, sigma_p1 = matrix_game_value_batch(Q)
    _, pi_p1 = matrix_game_attacker_batch(Q)
    return EquilibriumSolution(Q, v, pi_p1, sigma_p1, it, residual)


def policy_action_weights(space: TruncatedSpace, attacker_policy, defender_policy) -> np.ndarray:
    """Joint action probabilities alpha(a|x)*beta(b|x), shape (n_states, 2, 2)."""
    n = space.n_states
    out = np.empty((n, 2, 2))
    for idx, x in enumerate(space.states()):
        alpha = attacker_policy(x)
        beta = defender_policy(x)
        for a, b in ACTION_PAIRS:
            out[idx, a, b] = alpha.prob(a) * beta.prob(b)
    return out


def mixed_kernel(
    chain: TruncatedChain, attacker_policy, defender_policy
) -> sp.csr_matrix:
    """State kernel with actions integrated out under the policy pair."""
    weights = policy_action_weights(chain.space, attacker_policy, defender_policy)
    mat = None
    for (a, b), P in chain.kernels.items():
        scaled = P.multiply(weights[:, a, b][:, None])
        mat = scaled if mat is None else mat + scaled
    return mat.tocsr()


def stationary_distribution(
    space: TruncatedSpace,
    attacker_policy,
    defender_policy,
    params: GameParams,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
    chain: TruncatedChain | None = None,
) -> np.ndarray:
    """Invariant distribution of the policy-induced truncated jump chain.

    Power iteration on the half-lazy kernel (P+I)/2: the jump chain flips
    the parity of ||x||_1 at every interior step, so the plain kernel is
    periodic and would oscillate.  The fixed point is unchanged and the
    residual is checked against the original kernel.
    """
    if chain is None:
        chain = TruncatedChain.build(params, space)
    P = mixed_kernel(chain, attacker_policy, defender_policy)
    PT = P.T.tocsr()
    n = space.n_states
    mu = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        muP = PT @ mu
        residual = float(np.abs(muP - mu).sum())
        if residual <= tol:
            break
        mu = 0.5 * (mu + muP)
        mu /= mu.sum()
    else:
        raise RuntimeError(
            f"stationary distribution power iteration hit the cap at residual {residual:.3e}"
        )
    return mu


def cap_mass(space: TruncatedSpace, mu: np.ndarray, fraction: float = 0.9) -> float:
    """Probability mass on states with any queue above fraction*cap."""
    threshold = fraction * space.cap
    heavy = (space.states() > threshold).any(axis=1)
    return float(mu[heavy].sum())


def feature_matrix(basis: FeatureBasis, space: TruncatedSpace) -> np.ndarray:
    """phi at every (state, a, b), shape (n_states, 2, 2, dim)."""
    n = space.n_states
    F = np.empty((n, 2, 2, basis.dim))
    for idx, x in enumerate(space.states()):
        for a, b in ACTION_PAIRS:
            F[idx, a, b] = basis.phi(x, a, b)
    return F


@dataclass
class SigmaMoment:
    """Feature second moment E[phi phi^T] under the state-action measure."""

    matrix: np.ndarray
    min_eigenvalue: float
    max_eigenvalue: float

    @property
    def singular(self) -> bool:
        return self.min_eigenvalue <= 1e-10 * max(self.max_eigenvalue, 1.0)


def feature_second_moment(
    basis: FeatureBasis,
    space: TruncatedSpace,
    mu: np.ndarray,
    attacker_policy,
    defender_policy,
    F: np.ndarray | None = None,
) -> SigmaMoment:
    if F is None:
        F = feature_matrix(basis, space)
    weights = policy_action_weights(space, attacker_policy, defender_policy)
    omega = (mu[:, None, None] * weights).reshape(-1)
    flat = F.reshape(-1, basis.dim)
    sigma = flat.T @ (omega[:, None] * flat)
    sigma = 0.5 * (sigma + sigma.T)
    eigs = np.linalg.eigvalsh(sigma)
    return SigmaMoment(sigma, float(eigs[0]), float(eigs[-1]))


@dataclass
class FixedPointResult:
    w: np.ndarray
    residual: float
    iterations: int
    singular: bool
    min_eigenvalue: float
    damping: float


def projected_fixed_point(
    basis: FeatureBasis,
    space: TruncatedSpace,
    mu: np.ndarray,
    policies,
    params: GameParams,
    gamma: float | None = None,
    tol: float = 1e-8,
    max_iter: int = MAX_ITER,
    chain: TruncatedChain | None = None,
) -> FixedPointResult:
    """Fixed point of the projected minimax Bellman operator.

    Iterates w <- Sigma^+ E_mu[phi * (r + gamma * minimax Q_w at successor)]
    with all expectations as exact dense sums over the truncated space.  A
    singular second moment (the affine/quadratic bases duplicate constant
    and action features across servers) drops to the min-norm pseudo-inverse
    solution and is flagged.  If the plain iteration oscillates, the update
    is geometrically damped; the fixed point is unaffected.
    """
    if gamma is None:
        gamma = params.gamma
    if chain is None:
        chain = TruncatedChain.build(params, space)
    attacker_policy, defender_policy = policies
    F = feature_matrix(basis, space)
    moment = feature_second_moment(basis, space, mu, attacker_policy, defender_policy, F=F)
    weights = policy_action_weights(space, attacker_policy, defender_policy)
    omega = (mu[:, None, None] * weights).reshape(-1)
    flat = F.reshape(-1, basis.dim)
    weighted_flat = omega[:, None] * flat
    if moment.singular:
        solver = np.linalg.pinv(moment.matrix, rcond=1e-12, hermitian=True)
        solve = lambda rhs: solver @ rhs
    else:
        solve = lambda rhs: np.linalg.solve(moment.matrix, rhs)

    def next_w(w: np.ndarray) -> np.ndarray:
        qvals = F @ w  # (n, 2, 2)
        v, _ = matrix_game_value_batch(qvals)
        target = np.empty_like(chain.rewards)
        for (a, b), P in chain.kernels.items():
            target[:, a, b] = chain.rewards[:, a, b] + gamma * (P @ v)
        return solve(weighted_flat.T @ target.reshape(-1))

    damping = 1.0
    w = np.zeros(basis.dim)
    residual = np.inf
    it = 0
    while damping >= 2.0**-8:
        grew = 0
        prev_residual = np.inf
        for _ in range(max_iter - it):
            it += 1
            w_new = w + damping * (next_w(w) - w)
            residual = float(np.abs(w_new - w).max())
            w = w_new
            if residual <= tol:
                return FixedPointResult(
                    w, residual, it, moment.singular, moment.min_eigenvalue, damping
                )
            if not np.isfinite(residual) or residual > prev_residual:
                grew += 1
                if not np.isfinite(residual) or grew >= 20:
                    break
            else:
                grew = 0
            prev_residual = residual
        else:
            raise RuntimeError(
                f"projected fixed point hit the {max_iter}-iteration cap at residual {residual:.3e}"
            )
        damping *= 0.5
        w = np.zeros(basis.dim)
    raise RuntimeError(
        f"projected fixed point failed to converge even at damping {damping * 2}; "
        f"last residual {residual:.3e}"
    )
