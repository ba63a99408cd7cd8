"""Parallel-server system under routing attack/defense.

Continuous-time model: Poisson arrivals at rate lambda are routed by
join-the-shortest-queue unless an undefended attack redirects the job to the
longest queue.  Exponential servers drain their own queues.  The embedded
jump chain (state recorded at transition epochs) carries the discounted
zero-sum game; everything here is expressed per transition epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# A traffic state is a vector of nonnegative integer queue lengths, one per
# server.  Functions accept any array-like; dict keys use plain tuples.
State = tuple[int, ...]


@dataclass(frozen=True)
class GameParams:
    """Arrival/service rates, per-unit-time action costs and the discount."""

    lam: float
    mu: tuple[float, ...]
    c1: float
    c2: float
    gamma: float

    @property
    def m(self) -> int:
        return len(self.mu)

    @property
    def total_mu(self) -> float:
        return float(sum(self.mu))


def validate_params(params: GameParams) -> list[str]:
    """Check every GameParams invariant; returns the violated constraints."""
    problems = []
    if not params.lam > 0:
        problems.append(f"lambda must be > 0, got {params.lam}")
    if len(params.mu) == 0:
        problems.append("mu must have at least one server")
    if any(not mu_i > 0 for mu_i in params.mu):
        problems.append(f"every mu_i must be > 0, got {params.mu}")
    if not params.c1 > 0:
        problems.append(f"c1 must be > 0, got {params.c1}")
    if not params.c2 > 0:
        problems.append(f"c2 must be > 0, got {params.c2}")
    if not 0 < params.gamma < 1:
        problems.append(f"gamma must lie in (0,1), got {params.gamma}")
    if params.mu and all(mu_i > 0 for mu_i in params.mu):
        if not params.lam < params.total_mu:
            problems.append(
                f"lambda >= sum(mu) ({params.lam} >= {params.total_mu}): "
                "system is not stabilizable"
            )
    return problems


def require_valid_params(params: GameParams) -> None:
    problems = validate_params(params)
    if problems:
        raise ValueError("; ".join(problems))


@dataclass(frozen=True)
class TransitionEvent:
    """One sampled event of the exponential race: what fired and when."""

    kind: str  # "arrival" or "departure"
    server: int  # 0-based index of the queue that changed
    dt: float  # sojourn time spent in the pre-transition state


def instantaneous_reward(x, a: int, b: int, params: GameParams) -> float:
    """Attacker reward rate (defender cost rate): ||x||_1 - c1*a + c2*b."""
    x = np.asarray(x)
    return float(x.sum()) - params.c1 * a + params.c2 * b


def active_server_count(x) -> int:
    """Number of servers currently holding at least one job."""
    x = np.asarray(x)
    return int((x >= 1).sum())


def total_event_rate(x, params: GameParams) -> float:
    """Rate of the arrival/departure exponential race at state x."""
    x = np.asarray(x)
    mu = np.asarray(params.mu)
    return params.lam + float(mu[x >= 1].sum())


def expected_sojourn(x, params: GameParams) -> float:
    """Mean dwell time at x; always <= 1/lambda."""
    return 1.0 / total_event_rate(x, params)


def embedded_reward(x, a: int, b: int, params: GameParams) -> float:
    """One-step reward of the embedded discrete-time game.

    The reward rate at the pre-transition state, held for the expected
    sojourn there.  The learner's TD target uses this conditional
    expectation, never the sampled dt.
    """
    return instantaneous_reward(x, a, b, params) * expected_sojourn(x, params)


def _argmin_set(x: np.ndarray) -> np.ndarray:
    return np.flatnonzero(x == x.min())


def _argmax_set(x: np.ndarray) -> np.ndarray:
    return np.flatnonzero(x == x.max())


def route_target(x, a: int, b: int, rng: np.random.Generator) -> int:
    """Destination queue of an arrival under actions (a, b).

    An undefended attack, (a,b) = (1,0), misroutes to the longest queue;
    every other action pair routes join-the-shortest-queue.  Ties are broken
    uniformly at random.
    """
    x = np.asarray(x)
    cands = _argmax_set(x) if (a, b) == (1, 0) else _argmin_set(x)
    return int(cands[rng.integers(0, len(cands))])


def sample_transition(
    x, a: int, b: int, params: GameParams, rng: np.random.Generator
) -> tuple[TransitionEvent, np.ndarray]:
    """Sample the exponential race at x and return (event, next state)."""
    x = np.asarray(x, dtype=np.int64)
    mu = np.asarray(params.mu)
    rate = total_event_rate(x, params)
    dt = rng.exponential(1.0 / rate)
    u = rng.random() * rate
    if u < params.lam:
        i = route_target(x, a, b, rng)
        x_next = x.copy()
        x_next[i] += 1
        return TransitionEvent("arrival", i, dt), x_next
    acc = params.lam
    active = np.flatnonzero(x >= 1)
    for i in active:
        acc += mu[i]
        if u < acc:
            x_next = x.copy()
            x_next[i] -= 1
            return TransitionEvent("departure", int(i), dt), x_next
    # u landed in the last active server's band up to rounding
    i = int(active[-1])
    x_next = x.copy()
    x_next[i] -= 1
    return TransitionEvent("departure", i, dt), x_next


def next_state_distribution(
    x, a: int, b: int, params: GameParams
) -> list[tuple[State, float]]:
    """Exact jump-chain distribution at x under the pure action pair."""
    x = np.asarray(x, dtype=np.int64)
    mu = np.asarray(params.mu)
    rate = total_event_rate(x, params)
    out: dict[State, float] = {}
    targets = _argmax_set(x) if (a, b) == (1, 0) else _argmin_set(x)
    share = params.lam / rate / len(targets)
    for i in targets:
        y = x.copy()
        y[i] += 1
        out[tuple(int(v) for v in y)] = share
    for i in np.flatnonzero(x >= 1):
        y = x.copy()
        y[i] -= 1
        out[tuple(int(v) for v in y)] = float(mu[i]) / rate
    return sorted(out.items())


def marginal_rates(x, attacker_policy, defender_policy, params: GameParams) -> dict[State, float]:
    """Transition rates out of x when both players mix per their policies.

    Arrival rate lam*(alpha(0)+alpha(1)beta(1)) spreads over the shortest
    queues and lam*alpha(1)beta(0) over the longest ones; the two branches
    add up when a queue is both shortest and longest (all-equal states), so
    total arrival outflow is exactly lam.  Departures contribute mu_i each.
    """
    x = np.asarray(x, dtype=np.int64)
    mu = np.asarray(params.mu)
    alpha = attacker_policy(x)
    beta = defender_policy(x)
    rates: dict[State, float] = {}

    def bump(i: int, step: int) -> State:
        y = x.copy()
        y[i] += step
        return tuple(int(v) for v in y)

    mins = _argmin_set(x)
    correct = (alpha.p0 + alpha.p1 * beta.p1) * params.lam / len(mins)
    if correct > 0.0:
        for i in mins:
            key = bump(int(i), +1)
            rates[key] = rates.get(key, 0.0) + correct
    maxs = _argmax_set(x)
    misrouted = alpha.p1 * beta.p0 * params.lam / len(maxs)
    if misrouted > 0.0:
        for i in maxs:
            key = bump(int(i), +1)
            rates[key] = rates.get(key, 0.0) + misrouted
    for i in np.flatnonzero(x >= 1):
        rates[bump(int(i), -1)] = float(mu[i])
    return rates
