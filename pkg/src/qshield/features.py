"""Linear feature bases over (state, attacker action, defender action).

Each basis is built from d per-server features evaluated at z_i = x_i + d_i,
where the routing indicator d_i marks the single queue that would receive an
arrival under the current action pair (the longest under an undefended
attack, the shortest otherwise; ties to the lowest index).  The affine basis
uses blocks (1, z_i, a, b); the quadratic one adds z_i^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

AFFINE = "amq1"
QUADRATIC = "amq2"
CUSTOM = "custom"


def routing_index(x, a: int, b: int) -> int:
    """Index of the queue a prospective arrival would join under (a, b)."""
    x = np.asarray(x)
    if (a, b) == (1, 0):
        return int(np.argmax(x))
    return int(np.argmin(x))


def routing_indicator(x, a: int, b: int) -> np.ndarray:
    """0/1 vector with a single 1 at the routing index."""
    x = np.asarray(x)
    out = np.zeros(len(x), dtype=np.int64)
    out[routing_index(x, a, b)] = 1
    return out


@dataclass(frozen=True)
class PerServerFeature:
    """Named scalar feature of (z, a, b) with its derivative in z.

    The derivative treats the state as continuous and the routing indicator
    as locally constant, which is what the gradient-dominance audit checks.
    """

    name: str
    value: Callable[[float, int, int], float]
    grad_z: Callable[[float, int, int], float]


CONST = PerServerFeature("const", lambda z, a, b: 1.0, lambda z, a, b: 0.0)
LOAD = PerServerFeature("load", lambda z, a, b: z, lambda z, a, b: 1.0)
LOAD_SQ = PerServerFeature("load_sq", lambda z, a, b: z * z, lambda z, a, b: 2.0 * z)
ATTACK = PerServerFeature("attack", lambda z, a, b: float(a), lambda z, a, b: 0.0)
DEFEND = PerServerFeature("defend", lambda z, a, b: float(b), lambda z, a, b: 0.0)

_KIND_FEATURES = {
    AFFINE: (CONST, LOAD, ATTACK, DEFEND),
    QUADRATIC: (CONST, LOAD, LOAD_SQ, ATTACK, DEFEND),
}


@dataclass(frozen=True)
class FeatureBasis:
    """A per-server feature list replicated over m servers, scaled by epsilon."""

    m: int
    kind: str
    features: tuple[PerServerFeature, ...]
    epsilon_scale: float = 1.0

    @classmethod
    def affine(cls, m: int, epsilon_scale: float = 1.0) -> "FeatureBasis":
        return cls(m, AFFINE, _KIND_FEATURES[AFFINE], epsilon_scale)

    @classmethod
    def quadratic(cls, m: int, epsilon_scale: float = 1.0) -> "FeatureBasis":
        return cls(m, QUADRATIC, _KIND_FEATURES[QUADRATIC], epsilon_scale)

    @classmethod
    def custom(
        cls, m: int, features, epsilon_scale: float = 1.0
    ) -> "FeatureBasis":
        return cls(m, CUSTOM, tuple(features), epsilon_scale)

    @classmethod
    def from_kind(cls, kind: str, m: int, epsilon_scale: float = 1.0) -> "FeatureBasis":
        if kind not in _KIND_FEATURES:
            raise ValueError(f"unknown basis kind {kind!r}; use {AFFINE!r} or {QUADRATIC!r}")
        return cls(m, kind, _KIND_FEATURES[kind], epsilon_scale)

    @property
    def d(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.m * self.d

    def feature_index(self, server: int, name: str) -> int:
        """Flat index of a named feature inside a server block (0-based server)."""
        names = [f.name for f in self.features]
        return server * self.d + names.index(name)

    def phi(self, x, a: int, b: int) -> np.ndarray:
        """Feature vector, server-major: block i holds the d features at z_i."""
        x = np.asarray(x)
        j = routing_index(x, a, b)
        out = np.empty(self.dim)
        if self.kind == AFFINE:
            fa, fb = float(a), float(b)
            for i in range(self.m):
                base = 4 * i
                out[base] = 1.0
                out[base + 1] = x[i] + (1.0 if i == j else 0.0)
                out[base + 2] = fa
                out[base + 3] = fb
        elif self.kind == QUADRATIC:
            fa, fb = float(a), float(b)
            for i in range(self.m):
                base = 5 * i
                z = x[i] + (1.0 if i == j else 0.0)
                out[base] = 1.0
                out[base + 1] = z
                out[base + 2] = z * z
                out[base + 3] = fa
                out[base + 4] = fb
        else:
            for i in range(self.m):
                z = x[i] + (1.0 if i == j else 0.0)
                for k, feat in enumerate(self.features):
                    out[i * self.d + k] = feat.value(z, a, b)
        if self.epsilon_scale != 1.0:
            out *= self.epsilon_scale
        return out

    def phi_grad(self, x, a: int, b: int) -> np.ndarray:
        """Jacobian d phi / d x of shape (dim, m), routing indicator frozen."""
        x = np.asarray(x)
        j = routing_index(x, a, b)
        out = np.zeros((self.dim, self.m))
        for i in range(self.m):
            z = x[i] + (1.0 if i == j else 0.0)
            for k, feat in enumerate(self.features):
                out[i * self.d + k, i] = feat.grad_z(z, a, b)
        if self.epsilon_scale != 1.0:
            out *= self.epsilon_scale
        return out


ACTION_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass
class SubexpViolation:
    server_value: int  # x_i
    delta: int  # whether this server is the routing target
    a: int
    b: int
    block_sum: float
    bound: float


@dataclass
class SubexpAudit:
    """Scan of the per-server sum bound 0 <= sum_j phi_{i,j} <= e^{x_i}."""

    violations: list[SubexpViolation]
    max_feasible_epsilon: float | None  # largest scale clearing the box; None if signs break

    @property
    def clean(self) -> bool:
        return not self.violations


def audit_subexponential(basis: FeatureBasis, box: int) -> SubexpAudit:
    """Check the block-sum envelope over all x_i in [0, box] and action pairs.

    Server blocks depend on the state only through (x_i, d_i), so the scan
    runs over that product rather than the full m-dimensional box.  The
    largest epsilon_scale that would clear every scanned combination is
    reported; scaling cannot repair a negative block sum.
    """
    violations = []
    eps_cap = np.inf
    sign_ok = True
    for v in range(box + 1):
        bound = float(np.exp(v))
        for delta in (0, 1):
            z = v + delta
            for a, b in ACTION_PAIRS:
                raw = sum(f.value(float(z), a, b) for f in basis.features)
                s = basis.epsilon_scale * raw
                if not 0.0 <= s <= bound:
                    violations.append(SubexpViolation(v, delta, a, b, s, bound))
                if raw < 0.0:
                    sign_ok = False
                elif raw > 0.0:
                    eps_cap = min(eps_cap, bound / raw)
    return SubexpAudit(violations, float(eps_cap) if sign_ok else None)


@dataclass
class GradientAudit:
    """Smallest shell ||x||_2^2 >= B past which the gradient is dominated."""

    certified_B: int | None  # None when no shell inside the box qualifies
    worst_shell: int  # largest ||x||_2^2 among violating states (-1 if none)
    states_scanned: int


def audit_gradient_dominance(basis: FeatureBasis, box: int) -> GradientAudit:
    """Scan ||d phi/d x||_1 < ||phi||_1 over the box {0..box}^m, all action pairs."""
    from itertools import product

    worst = -1
    scanned = 0
    for x in product(range(box + 1), repeat=basis.m):
        xa = np.asarray(x)
        scanned += 1
        for a, b in ACTION_PAIRS:
            grad_l1 = float(np.abs(basis.phi_grad(xa, a, b)).sum())
            phi_l1 = float(np.abs(basis.phi(xa, a, b)).sum())
            if not grad_l1 < phi_l1:
                worst = max(worst, int((xa * xa).sum()))
                break
    top_shell = basis.m * box * box
    if worst < 0:
        return GradientAudit(0, worst, scanned)
    if worst >= top_shell:
        return GradientAudit(None, worst, scanned)
    return GradientAudit(worst + 1, worst, scanned)
