"""Numeric Foster-Lyapunov drift certification for the behavior chain.

Certifies L V(x) <= -c V(x) + d over a declared box for the exponential
Lyapunov function V(x) = sum_n e^{nu x_n} and its square W = V^2.  The decay
rate c is fitted on the outer shell (large ||x||_1) where the exponential
terms dominate, the offset d on the inner region.  Certification over a
finite box is the desk-scale stand-in for the asymptotic lemma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .game import GameParams, marginal_rates

KIND_V = "V"
KIND_W = "W"


@dataclass(frozen=True)
class LyapunovConfig:
    nu: float
    box: int  # max per-coordinate queue length scanned
    shell: int  # ||x||_1 threshold where the decay rate is fitted

    def validate(self) -> list[str]:
        problems = []
        if not self.nu > 0:
            problems.append(f"nu must be > 0, got {self.nu}")
        if not self.box >= self.shell >= 0:
            problems.append(f"need box >= shell >= 0, got box={self.box} shell={self.shell}")
        return problems


def exp_lyapunov(nu: float):
    """V(x) = sum_n e^{nu x_n}."""

    def V(x) -> float:
        return float(np.exp(nu * np.asarray(x, dtype=float)).sum())

    return V


def exp_lyapunov_squared(nu: float):
    V = exp_lyapunov(nu)

    def W(x) -> float:
        v = V(x)
        return v * v

    return W


def generator_apply(V, x, attacker_policy, defender_policy, params: GameParams) -> float:
    """Infinitesimal generator: sum_y q(y|x) (V(y) - V(x)), self-loops excluded."""
    rates = marginal_rates(x, attacker_policy, defender_policy, params)
    vx = V(x)
    return float(sum(rate * (V(y) - vx) for y, rate in rates.items()))


@dataclass
class DriftReport:
    function_kind: str
    nu: float
    box: int
    shell: int
    c: float
    d: float | None
    violations: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.c > 0.0 and not self.violations and self.d is not None

    def to_json_dict(self) -> dict:
        return {
            "function_kind": self.function_kind,
            "nu": self.nu,
            "box": self.box,
            "shell": self.shell,
            "certified": self.certified,
            "c": self.c,
            "d": self.d,
            "violations": [list(v) for v in self.violations],
        }


@dataclass
class _BoxRates:
    """Rate table of the behavior chain over a box, independent of nu.

    Flat arrays over all (state, successor) transitions: the source state
    index, the changed coordinate's old and new values, and the rate.  A
    one-coordinate difference form of V(y) - V(x) avoids the catastrophic
    cancellation a naive full-sum difference would hit at large states.
    """

    states: np.ndarray  # (S, m)
    l1: np.ndarray  # (S,)
    src: np.ndarray  # (K,)
    old_val: np.ndarray  # (K,)
    new_val: np.ndarray  # (K,)
    rate: np.ndarray  # (K,)


def _box_rates(behavior_pair, params: GameParams, box: int) -> _BoxRates:
    attacker, defender = behavior_pair
    m = params.m
    states = np.array(list(product(range(box + 1), repeat=m)), dtype=np.int64)
    src, old_val, new_val, rate = [], [], [], []
    for idx, x in enumerate(states):
        for y, q in marginal_rates(x, attacker, defender, params).items():
            (coord,) = np.flatnonzero(np.asarray(y) != x)
            src.append(idx)
            old_val.append(x[coord])
            new_val.append(y[coord])
            rate.append(q)
    return _BoxRates(
        states,
        states.sum(axis=1),
        np.asarray(src),
        np.asarray(old_val, dtype=float),
        np.asarray(new_val, dtype=float),
        np.asarray(rate),
    )


def _drift_values(rates: _BoxRates, nu: float, function_kind: str) -> tuple[np.ndarray, np.ndarray]:
    """(L f(x), f(x)) per state for f = V or W, evaluated stably."""
    n = len(rates.states)
    with np.errstate(over="ignore", invalid="ignore"):
        dV = np.exp(nu * rates.new_val) - np.exp(nu * rates.old_val)
        Vx = np.exp(nu * rates.states).sum(axis=1)
        if function_kind == KIND_V:
            flow = rates.rate * dV
            fx = Vx
        elif function_kind == KIND_W:
            flow = rates.rate * dV * (2.0 * Vx[rates.src] + dV)
            fx = Vx * Vx
        else:
            raise ValueError(
                f"function_kind must be {KIND_V!r} or {KIND_W!r}, got {function_kind!r}"
            )
        lf = np.bincount(rates.src, weights=flow, minlength=n)
    return lf, fx


def audit_drift(
    config: LyapunovConfig,
    function_kind: str,
    behavior_pair,
    params: GameParams,
    rates: _BoxRates | None = None,
) -> DriftReport:
    """Evaluate the drift of V or W at every state in the box and fit (c, d)."""
    if rates is None:
        rates = _box_rates(behavior_pair, params, config.box)
    lf, fx = _drift_values(rates, config.nu, function_kind)
    shell_mask = rates.l1 >= config.shell
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = -lf / fx
    ratio[~np.isfinite(ratio)] = -np.inf
    c = float(ratio[shell_mask].min()) if shell_mask.any() else -np.inf
    if c > 0.0:
        inner = ~shell_mask
        d = float(max(0.0, (lf[inner] + c * fx[inner]).max())) if inner.any() else 0.0
        return DriftReport(function_kind, config.nu, config.box, config.shell, c, d)
    bad = shell_mask & (ratio <= 0.0)
    violations = [tuple(int(v) for v in s) for s in rates.states[bad]]
    return DriftReport(
        function_kind, config.nu, config.box, config.shell, c, None, violations
    )


@dataclass
class NuScan:
    best_nu: float | None
    reports: list[DriftReport]

    def report_for(self, nu: float) -> DriftReport:
        for r in self.reports:
            if r.nu == nu:
                return r
        raise KeyError(nu)


def scan_nu(
    grid,
    behavior_pair,
    params: GameParams,
    box: int,
    shell: int,
    function_kind: str = KIND_V,
) -> NuScan:
    """Audit each nu on the grid; the best nu maximizes the certified rate c."""
    grid = list(grid)
    if not grid:
        raise ValueError("nu grid must be non-empty")
    if any(not nu > 0 for nu in grid):
        raise ValueError(f"every nu must be > 0, got {grid}")
    rates = _box_rates(behavior_pair, params, box)
    reports = [
        audit_drift(LyapunovConfig(nu, box, shell), function_kind, behavior_pair, params, rates)
        for nu in grid
    ]
    certified = [r for r in reports if r.certified]
    best = max(certified, key=lambda r: r.c).nu if certified else None
    return NuScan(best, reports)
