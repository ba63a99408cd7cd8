"""Experiment metrics: Monte Carlo discounted cost, normalized mean cost,
policy consistency against a reference, and the trained-weight sign report.

Cost comparisons use common random numbers: every rollout stream is derived
from (base seed, rollout index), so evaluating two defenders against the
same attacker reuses identical randomness and the cost ratio of a policy
against itself is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import AFFINE, QUADRATIC, FeatureBasis
from .game import GameParams, embedded_reward, sample_transition


@dataclass
class EvalConfig:
    n_states: int = 25
    burn_in: int = 2_000
    horizon: int = 200
    reps: int = 40
    seeds: tuple[int, ...] = (0,)
    consistency_tol: float = 0.1

    def validate(self) -> list[str]:
        problems = []
        if self.n_states < 1:
            problems.append("n_states must be >= 1")
        if self.horizon < 1:
            problems.append("horizon must be >= 1")
        if self.reps < 1:
            problems.append("reps must be >= 1")
        if len(self.seeds) == 0:
            problems.append("seeds must be non-empty")
        if not 0 <= self.consistency_tol <= 1:
            problems.append("consistency_tol must lie in [0, 1]")
        return problems


def sample_equilibrium_states(
    policy_pair,
    params: GameParams,
    burn_in: int,
    n: int,
    rng: np.random.Generator,
    x0=None,
    thin: int = 10,
) -> list[np.ndarray]:
    """States drawn from one long behavior trajectory, thinned after burn-in."""
    attacker, defender = policy_pair
    x = np.zeros(params.m, dtype=np.int64) if x0 is None else np.asarray(x0, dtype=np.int64)
    out: list[np.ndarray] = []
    step = 0
    while len(out) < n:
        if step >= burn_in and (step - burn_in) % thin == 0:
            out.append(x.copy())
        a = attacker(x).sample(rng)
        b = defender(x).sample(rng)
        _, x = sample_transition(x, a, b, params, rng)
        step += 1
    return out


def mc_discounted_cost(
    pi,
    sigma,
    x0,
    params: GameParams,
    horizon: int,
    reps: int,
    seed: int,
) -> tuple[float, float]:
    """Mean and standard error of the discounted embedded-chain cost from x0.

    Rollout r uses the stream seeded by (seed, r); pass the same seed when
    comparing policies to share randomness.
    """
    totals = np.empty(reps)
    x0 = np.asarray(x0, dtype=np.int64)
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence((seed, rep)))
        x = x0.copy()
        total = 0.0
        discount = 1.0
        for _ in range(horizon):
            a = pi(x).sample(rng)
            b = sigma(x).sample(rng)
            total += discount * embedded_reward(x, a, b, params)
            discount *= params.gamma
            _, x = sample_transition(x, a, b, params, rng)
        totals[rep] = total
    stderr = float(totals.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return float(totals.mean()), stderr


def normalized_mean_cost(
    learned_pair,
    reference_pair,
    states,
    params: GameParams,
    eval_config: EvalConfig,
    seed: int = 0,
) -> float:
    """Cost of the learned defender against the reference attacker, over the
    reference pair's own cost; both averaged over the given start states."""
    ref_attacker, ref_defender = reference_pair
    _, learned_defender = learned_pair
    learned_costs, reference_costs = [], []
    for i, x0 in enumerate(states):
        state_seed = seed * 1_000_003 + i
        cost_l, _ = mc_discounted_cost(
            ref_attacker, learned_defender, x0, params, eval_config.horizon, eval_config.reps, state_seed
        )
        cost_r, _ = mc_discounted_cost(
            ref_attacker, ref_defender, x0, params, eval_config.horizon, eval_config.reps, state_seed
        )
        learned_costs.append(cost_l)
        reference_costs.append(cost_r)
    denom = float(np.mean(reference_costs))
    if abs(denom) < 1e-12:
        raise ValueError("reference cost is ~0; normalization undefined")
    return float(np.mean(learned_costs)) / denom


def policy_consistency(
    learned_sigma, reference_sigma, states, tol: float
) -> tuple[float, float]:
    """Fraction of states within total-variation tol, and the mean TV distance."""
    tvs = [
        abs(learned_sigma(x).p1 - reference_sigma(x).p1) for x in states
    ]
    frac = float(np.mean([tv <= tol for tv in tvs]))
    return frac, float(np.mean(tvs))


@dataclass
class ServerWeights:
    server: int  # 1-based, matching the w_{i,j} layout
    intercept: float
    linear: float
    quadratic: float | None
    attack: float
    defend: float


@dataclass
class WeightReport:
    servers: list[ServerWeights]
    attack_weights_positive: bool | None
    defend_weights_negative: bool | None
    defense_outweighs_attack: bool | None  # mean |defend| > mean |attack|
    intercept_order: list[int]  # server numbers sorted by descending intercept
    determined: bool

    def to_json_dict(self) -> dict:
        return {
            "servers": [vars(s) for s in self.servers],
            "attack_weights_positive": self.attack_weights_positive,
            "defend_weights_negative": self.defend_weights_negative,
            "defense_outweighs_attack": self.defense_outweighs_attack,
            "intercept_order": self.intercept_order,
            "determined": self.determined,
        }


def weight_interpretation_report(w: np.ndarray, basis: FeatureBasis) -> WeightReport:
    """Per-server weight breakdown with the sign checks of the trained bases."""
    if basis.kind not in (AFFINE, QUADRATIC):
        raise ValueError(f"weight report needs the affine or quadratic basis, got {basis.kind!r}")
    w = np.asarray(w, dtype=float)
    if w.shape != (basis.dim,):
        raise ValueError(f"weights have shape {w.shape}, basis needs ({basis.dim},)")
    servers = []
    for i in range(basis.m):
        servers.append(
            ServerWeights(
                server=i + 1,
                intercept=float(w[basis.feature_index(i, "const")]),
                linear=float(w[basis.feature_index(i, "load")]),
                quadratic=(
                    float(w[basis.feature_index(i, "load_sq")])
                    if basis.kind == QUADRATIC
                    else None
                ),
                attack=float(w[basis.feature_index(i, "attack")]),
                defend=float(w[basis.feature_index(i, "defend")]),
            )
        )
    determined = bool(np.any(w != 0.0))
    if determined:
        attack_pos = all(s.attack > 0 for s in servers)
        defend_neg = all(s.defend < 0 for s in servers)
        stronger = float(np.mean([abs(s.defend) for s in servers])) > float(
            np.mean([abs(s.attack) for s in servers])
        )
    else:
        attack_pos = defend_neg = stronger = None
    order = [s.server for s in sorted(servers, key=lambda s: -s.intercept)]
    return WeightReport(servers, attack_pos, defend_neg, stronger, order, determined)


@dataclass
class MetricsReport:
    normalized_mean_cost: float
    policy_consistency: float
    mean_tv_distance: float
    per_seed: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "normalized_mean_cost": self.normalized_mean_cost,
            "policy_consistency": self.policy_consistency,
            "mean_tv_distance": self.mean_tv_distance,
            "per_seed": self.per_seed,
        }


def evaluate_policies(
    learned_pair,
    reference_pair,
    params: GameParams,
    eval_config: EvalConfig,
) -> tuple[MetricsReport, list[tuple[tuple, float, float]]]:
    """Full metric sweep over the configured seeds.

    Start states are sampled from the reference pair's equilibrium
    distribution per seed.  Also returns per-state consistency detail
    (state, learned p1, reference p1) from the last seed for CSV export.
    """
    per_seed = []
    detail: list[tuple[tuple, float, float]] = []
    for seed in eval_config.seeds:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE7A1)))
        states = sample_equilibrium_states(
            reference_pair, params, eval_config.burn_in, eval_config.n_states, rng
        )
        cost = normalized_mean_cost(
            learned_pair, reference_pair, states, params, eval_config, seed=seed
        )
        frac, mean_tv = policy_consistency(
            learned_pair[1], reference_pair[1], states, eval_config.consistency_tol
        )
        per_seed.append(
            {
                "seed": seed,
                "normalized_mean_cost": cost,
                "policy_consistency": frac,
                "mean_tv_distance": mean_tv,
            }
        )
        detail = [
            (tuple(int(v) for v in x), float(learned_pair[1](x).p1), float(reference_pair[1](x).p1))
            for x in states
        ]
    return (
        MetricsReport(
            float(np.mean([s["normalized_mean_cost"] for s in per_seed])),
            float(np.mean([s["policy_consistency"] for s in per_seed])),
            float(np.mean([s["mean_tv_distance"] for s in per_seed])),
            per_seed,
        ),
        detail,
    )
