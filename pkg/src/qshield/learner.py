"""Approximate minimax-Q training loop with linear value approximation.

Off-policy: the exploratory behavior pair generates actions, the weight
vector tracks the projected minimax fixed point.  Each step solves the 2x2
matrix game at the successor state to form the bootstrap target, then takes
a stochastic-approximation step along the visited feature vector.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureBasis
from .game import GameParams, embedded_reward, sample_transition
from .policies import MixedAction, solve_matrix_game_defender


class DivergenceError(RuntimeError):
    """Weights left the finite floats; report the offending step."""

    def __init__(self, step: int):
        super().__init__(f"non-finite weights at training step {step}")
        self.step = step


@dataclass(frozen=True)
class LearningSchedule:
    """Step sizes eta_k = eta0 / (1 + k/tau).

    Satisfies the Robbins-Monro conditions: the partial sums grow like
    eta0*tau*log(k) while the squared sums stay below eta0^2*tau^2*pi^2/6.
    Defaults are sized for the quadratic basis at desk scale; the affine
    basis tolerates roughly 10x larger eta0.
    """

    eta0: float = 0.005
    tau: float = 10_000.0

    def eta(self, k: int) -> float:
        return self.eta0 / (1.0 + k / self.tau)

    def validate(self) -> list[str]:
        problems = []
        if not self.eta0 > 0:
            problems.append(f"eta0 must be > 0, got {self.eta0}")
        if not self.tau > 0:
            problems.append(f"tau must be > 0, got {self.tau}")
        return problems


def check_robbins_monro(schedule: LearningSchedule, K: int) -> dict:
    """Partial sums of eta_k and eta_k^2 up to K, with validity flags."""
    k = np.arange(K)
    etas = schedule.eta0 / (1.0 + k / schedule.tau)
    s, s2 = float(etas.sum()), float((etas * etas).sum())
    return {
        "partial_sum": s,
        "partial_sum_sq": s2,
        "valid": bool(schedule.eta0 > 0 and schedule.tau > 0),
    }


@dataclass
class TrainConfig:
    epochs: int
    seed: int = 0
    log_every: int = 100
    initial_weights: np.ndarray | None = None
    initial_state: tuple | str = "random"  # "random" draws each queue uniform on 0..10

    def validate(self) -> list[str]:
        return [] if self.epochs >= 0 else [f"epochs must be >= 0, got {self.epochs}"]


@dataclass
class TrainTrajectory:
    steps: list[int] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    td_errors: list[float] = field(default_factory=list)
    state_l1: list[float] = field(default_factory=list)
    final_weights: np.ndarray | None = None
    final_step: int = 0

    def log(self, step: int, w: np.ndarray, td: float, l1: float) -> None:
        self.steps.append(step)
        self.weights.append(w.copy())
        self.td_errors.append(td)
        self.state_l1.append(l1)

    def to_csv(self, basis: FeatureBasis) -> str:
        """Trajectory CSV: step,td_error,state_l1,w_1_1,...,w_m_d (server-major)."""
        header = ["step", "td_error", "state_l1"]
        header += [f"w_{i + 1}_{j + 1}" for i in range(basis.m) for j in range(basis.d)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for k, step in enumerate(self.steps):
            row = [str(step), _f17(self.td_errors[k]), _f17(self.state_l1[k])]
            row += [_f17(v) for v in self.weights[k]]
            writer.writerow(row)
        return buf.getvalue()


def _f17(x: float) -> str:
    return format(float(x), ".17g")


def q_value(basis: FeatureBasis, w: np.ndarray, x, a: int, b: int) -> float:
    return float(basis.phi(x, a, b) @ w)


def action_payoff_matrix(basis: FeatureBasis, w: np.ndarray, x) -> list[list[float]]:
    return [[q_value(basis, w, x, a, b) for b in (0, 1)] for a in (0, 1)]


def minimax_next_value(
    basis: FeatureBasis, w: np.ndarray, x_next
) -> tuple[float, MixedAction]:
    """Defender's matrix-game value of Q_w at the successor state."""
    sigma, value = solve_matrix_game_defender(action_payoff_matrix(basis, w, x_next))
    return value, sigma


def td_error(
    basis: FeatureBasis,
    w: np.ndarray,
    x,
    a: int,
    b: int,
    r: float,
    x_next,
    gamma: float,
) -> float:
    value, _ = minimax_next_value(basis, w, x_next)
    return r + gamma * value - q_value(basis, w, x, a, b)


def update_step(w: np.ndarray, eta_k: float, phi_vec: np.ndarray, delta: float) -> np.ndarray:
    return w + (eta_k * delta) * phi_vec


def train(
    params: GameParams,
    basis: FeatureBasis,
    behavior_pair,
    schedule: LearningSchedule,
    config: TrainConfig,
) -> TrainTrajectory:
    """Run the embedded-chain learning loop; deterministic given the seed."""
    attacker, defender = behavior_pair
    rng = np.random.default_rng(config.seed)
    if config.initial_state == "random":
        x = rng.integers(0, 11, size=params.m)
    else:
        x = np.asarray(config.initial_state, dtype=np.int64)
    if config.initial_weights is None:
        w = np.zeros(basis.dim)
    else:
        w = np.asarray(config.initial_weights, dtype=float).copy()
        if w.shape != (basis.dim,):
            raise ValueError(f"initial weights have shape {w.shape}, basis needs ({basis.dim},)")

    traj = TrainTrajectory()
    traj.log(0, w, 0.0, float(x.sum()))
    for k in range(config.epochs):
        a = attacker(x).sample(rng)
        b = defender(x).sample(rng)
        r = embedded_reward(x, a, b, params)
        _, x_next = sample_transition(x, a, b, params, rng)
        phi_vec = basis.phi(x, a, b)
        next_value, _ = minimax_next_value(basis, w, x_next)
        delta = r + params.gamma * next_value - float(phi_vec @ w)
        w = update_step(w, schedule.eta(k), phi_vec, delta)
        if not np.isfinite(w).all():
            raise DivergenceError(k)
        x = x_next
        step = k + 1
        if step % config.log_every == 0 or step == config.epochs:
            traj.log(step, w, delta, float(x.sum()))
    traj.final_weights = w
    traj.final_step = config.epochs
    return traj


def convergence_curve(
    trajectory: TrainTrajectory, w_ref: np.ndarray
) -> tuple[list[tuple[int, float]], bool]:
    """Normalized distances ||w_k - w_ref|| / ||w_0 - w_ref|| per logged step.

    When the trajectory starts at w_ref the normalizer falls back to 1 and
    the second return value flags it.
    """
    w_ref = np.asarray(w_ref, dtype=float)
    norm0 = float(np.linalg.norm(trajectory.weights[0] - w_ref))
    degenerate = norm0 == 0.0
    scale = 1.0 if degenerate else norm0
    curve = [
        (step, float(np.linalg.norm(w - w_ref)) / scale)
        for step, w in zip(trajectory.steps, trajectory.weights)
    ]
    return curve, degenerate


def trailing_average_weights(trajectory: TrainTrajectory, fraction: float = 0.1) -> np.ndarray:
    """Mean of the logged weights over the trailing fraction of steps."""
    cutoff = trajectory.final_step * (1.0 - fraction)
    tail = [w for step, w in zip(trajectory.steps, trajectory.weights) if step >= cutoff]
    if not tail:
        tail = [trajectory.weights[-1]]
    return np.mean(tail, axis=0)
