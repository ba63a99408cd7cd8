"""Run configuration: one JSON document drives every CLI command.

Parsing is fail-fast: unknown keys anywhere in the document are errors, so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .evaluate import EvalConfig
from .game import GameParams, validate_params
from .learner import LearningSchedule, TrainConfig
from .policies import validate_C0


class ConfigError(ValueError):
    """Malformed configuration document (missing file, bad JSON, bad keys)."""


@dataclass
class BasisConfig:
    kind: str = "amq2"
    epsilon_scale: float = 1.0


@dataclass
class OracleConfig:
    cap: int = 15
    tol: float = 1e-8


@dataclass
class LyapunovSection:
    nu_grid: tuple[float, ...] = (0.05, 0.1, 0.2, 0.5)
    box: int = 30
    shell: int = 12


@dataclass
class RunConfig:
    game: GameParams
    C0: float
    basis: BasisConfig = field(default_factory=BasisConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20_000))
    schedule: LearningSchedule = field(default_factory=LearningSchedule)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    lyapunov: LyapunovSection = field(default_factory=LyapunovSection)

    def validation_problems(self) -> list[str]:
        problems = validate_params(self.game)
        if not problems:
            problems += validate_C0(self.game, self.C0)
        problems += self.schedule.validate()
        problems += self.train.validate()
        problems += self.eval.validate()
        if self.basis.kind not in ("amq1", "amq2"):
            problems.append(f"basis.kind must be 'amq1' or 'amq2', got {self.basis.kind!r}")
        if not self.basis.epsilon_scale > 0:
            problems.append(f"basis.epsilon_scale must be > 0, got {self.basis.epsilon_scale}")
        if not self.oracle.cap >= 1:
            problems.append(f"oracle.cap must be >= 1, got {self.oracle.cap}")
        if not self.oracle.tol > 0:
            problems.append(f"oracle.tol must be > 0, got {self.oracle.tol}")
        if any(not nu > 0 for nu in self.lyapunov.nu_grid):
            problems.append(f"lyapunov.nu_grid entries must be > 0, got {self.lyapunov.nu_grid}")
        if not self.lyapunov.box >= self.lyapunov.shell >= 0:
            problems.append(
                f"need lyapunov.box >= shell >= 0, got box={self.lyapunov.box} "
                f"shell={self.lyapunov.shell}"
            )
        return problems


def _check_keys(section: str, data: dict, allowed: set[str], required: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")
    missing = required - set(data)
    if missing:
        raise ConfigError(f"missing key(s) in '{section}': {sorted(missing)}")


def _number(section: str, data: dict, key: str, default=None) -> float:
    value = data.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"'{section}.{key}' must be a number, got {value!r}")
    return float(value)


def _integer(section: str, data: dict, key: str, default=None) -> int:
    value = data.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"'{section}.{key}' must be an integer, got {value!r}")
    return value


def parse_config(document: dict) -> RunConfig:
    if not isinstance(document, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(
        "config",
        document,
        {"game", "behavior", "basis", "train", "oracle", "eval", "lyapunov"},
        {"game", "behavior"},
    )

    g = document["game"]
    _check_keys("game", g, {"lambda", "mu", "c1", "c2", "gamma"}, {"lambda", "mu", "c1", "c2", "gamma"})
    mu = g["mu"]
    if not isinstance(mu, list) or not mu or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in mu
    ):
        raise ConfigError("'game.mu' must be a non-empty list of numbers")
    game = GameParams(
        lam=_number("game", g, "lambda"),
        mu=tuple(float(v) for v in mu),
        c1=_number("game", g, "c1"),
        c2=_number("game", g, "c2"),
        gamma=_number("game", g, "gamma"),
    )

    bh = document["behavior"]
    _check_keys("behavior", bh, {"C0"}, {"C0"})
    C0 = _number("behavior", bh, "C0")

    bs = document.get("basis", {})
    _check_keys("basis", bs, {"kind", "epsilon_scale"}, set())
    kind = bs.get("kind", "amq2")
    if not isinstance(kind, str):
        raise ConfigError(f"'basis.kind' must be a string, got {kind!r}")
    basis = BasisConfig(kind=kind, epsilon_scale=_number("basis", bs, "epsilon_scale", 1.0))

    tr = document.get("train", {})
    _check_keys(
        "train", tr, {"epochs", "eta0", "tau", "seed", "log_every", "initial_state"}, set()
    )
    initial_state = tr.get("initial_state", "random")
    if initial_state != "random":
        if not isinstance(initial_state, list) or len(initial_state) != game.m or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in initial_state
        ):
            raise ConfigError(
                "'train.initial_state' must be \"random\" or a list of "
                f"{game.m} nonnegative integers"
            )
        initial_state = tuple(initial_state)
    train = TrainConfig(
        epochs=_integer("train", tr, "epochs", 20_000),
        seed=_integer("train", tr, "seed", 0),
        log_every=_integer("train", tr, "log_every", 100),
        initial_state=initial_state,
    )
    if train.log_every < 1:
        raise ConfigError(f"'train.log_every' must be >= 1, got {train.log_every}")
    schedule = LearningSchedule(
        eta0=_number("train", tr, "eta0", LearningSchedule.eta0),
        tau=_number("train", tr, "tau", LearningSchedule.tau),
    )

    oc = document.get("oracle", {})
    _check_keys("oracle", oc, {"cap", "tol"}, set())
    oracle = OracleConfig(
        cap=_integer("oracle", oc, "cap", 15), tol=_number("oracle", oc, "tol", 1e-8)
    )

    ev = document.get("eval", {})
    _check_keys(
        "eval",
        ev,
        {"n_states", "burn_in", "horizon", "reps", "seeds", "consistency_tol"},
        set(),
    )
    seeds = ev.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ConfigError("'eval.seeds' must be a non-empty list of integers")
    eval_config = EvalConfig(
        n_states=_integer("eval", ev, "n_states", 25),
        burn_in=_integer("eval", ev, "burn_in", 2_000),
        horizon=_integer("eval", ev, "horizon", 200),
        reps=_integer("eval", ev, "reps", 40),
        seeds=tuple(seeds),
        consistency_tol=_number("eval", ev, "consistency_tol", 0.1),
    )

    ly = document.get("lyapunov", {})
    _check_keys("lyapunov", ly, {"nu_grid", "box", "shell"}, set())
    nu_grid = ly.get("nu_grid", [0.05, 0.1, 0.2, 0.5])
    if not isinstance(nu_grid, list) or not nu_grid or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in nu_grid
    ):
        raise ConfigError("'lyapunov.nu_grid' must be a non-empty list of numbers")
    lyapunov = LyapunovSection(
        nu_grid=tuple(float(v) for v in nu_grid),
        box=_integer("lyapunov", ly, "box", 30),
        shell=_integer("lyapunov", ly, "shell", 12),
    )

    return RunConfig(
        game=game,
        C0=C0,
        basis=basis,
        train=train,
        schedule=schedule,
        oracle=oracle,
        eval=eval_config,
        lyapunov=lyapunov,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(document)
