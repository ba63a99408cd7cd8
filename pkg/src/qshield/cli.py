"""Command-line front end: validation, training, audits, oracle solves,
evaluation and report emission for scripts and CI.

Exit codes: 0 success, 1 check failed, 2 config/artifact error,
3 training divergence, 4 resource guard tripped.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .drift import KIND_V, KIND_W, scan_nu
from .evaluate import evaluate_policies, weight_interpretation_report
from .features import FeatureBasis, audit_gradient_dominance, audit_subexponential
from .learner import DivergenceError, convergence_curve, train, trailing_average_weights
from .oracle import (
    TruncatedChain,
    TruncatedSpace,
    cap_mass,
    projected_fixed_point,
    solve_equilibrium,
    stationary_distribution,
)
from .policies import MixedAction, TablePolicy, behavior_pair, greedy_pair

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_GUARD = 4

STATE_GUARD = 10**6


def _f17(x: float) -> str:
    return format(float(x), ".17g")


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_manifest(out_dir: Path, command: str, config_path, artifacts: list[str]) -> None:
    digest = ""
    if config_path is not None:
        digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    _write_json(
        out_dir / f"manifest_{command}.json",
        {
            "command": command,
            "config_sha256": digest,
            "version": __version__,
            "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "artifacts": sorted(artifacts),
        },
    )


def _load_validated(config_path, quiet: bool) -> RunConfig | int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        _say(quiet, f"config error: {exc}")
        return EXIT_CONFIG
    problems = cfg.validation_problems()
    if problems:
        for p in problems:
            _say(quiet, f"validation failed: {p}")
        return EXIT_CHECK_FAILED
    return cfg


def _basis_from(cfg: RunConfig) -> FeatureBasis:
    return FeatureBasis.from_kind(cfg.basis.kind, cfg.game.m, cfg.basis.epsilon_scale)


def cmd_validate(config_path, out=None, quiet=False) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        _say(quiet, f"config error: {exc}")
        return EXIT_CONFIG
    problems = cfg.validation_problems()
    basis = None
    report = {"valid": not problems, "problems": problems}
    if not problems:
        basis = _basis_from(cfg)
        sub = audit_subexponential(basis, box=20)
        grad = audit_gradient_dominance(basis, box=8)
        report["basis_audit"] = {
            "subexponential_violations": len(sub.violations),
            "max_feasible_epsilon": sub.max_feasible_epsilon,
            "gradient_dominance_B": grad.certified_B,
        }
    if out is not None:
        _write_json(Path(out), report)
    if problems:
        for p in problems:
            _say(quiet, f"validation failed: {p}")
        return EXIT_CHECK_FAILED
    _say(quiet, "config valid")
    if basis is not None and report["basis_audit"]["subexponential_violations"]:
        _say(
            quiet,
            "note: basis violates the subexponential envelope at small states "
            "(reported, not rejected)",
        )
    return EXIT_OK


def cmd_train(config_path, out_dir, quiet=False) -> int:
    cfg = _load_validated(config_path, quiet)
    if isinstance(cfg, int):
        return cfg
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    basis = _basis_from(cfg)
    pair = behavior_pair(cfg.C0)
    try:
        traj = train(cfg.game, basis, pair, cfg.schedule, cfg.train)
    except DivergenceError as exc:
        _say(quiet, f"training diverged: {exc}")
        _write_json(out / "summary.json", {"diverged": True, "diverged_at_step": exc.step})
        return EXIT_DIVERGED
    (out / "trajectory.csv").write_text(traj.to_csv(basis))
    summary = {
        "final_weights": [float(v) for v in traj.final_weights],
        "steps": traj.final_step,
        "diverged": False,
        "basis_kind": basis.kind,
        "epsilon_scale": basis.epsilon_scale,
        "m": basis.m,
        "d": basis.d,
        "seed": cfg.train.seed,
    }
    _write_json(out / "summary.json", summary)
    _write_manifest(out, "train", config_path, ["trajectory.csv", "summary.json"])
    _say(quiet, f"trained {traj.final_step} steps; artifacts in {out}")
    return EXIT_OK


def cmd_drift_check(config_path, out=None, quiet=False) -> int:
    cfg = _load_validated(config_path, quiet)
    if isinstance(cfg, int):
        return cfg
    pair = behavior_pair(cfg.C0)
    ly = cfg.lyapunov
    results = {}
    for kind in (KIND_V, KIND_W):
        scan = scan_nu(ly.nu_grid, pair, cfg.game, ly.box, ly.shell, function_kind=kind)
        results[kind] = scan
    payload = {
        kind: {
            "best_nu": scan.best_nu,
            "reports": [r.to_json_dict() for r in scan.reports],
        }
        for kind, scan in results.items()
    }
    both = [
        nu
        for nu in ly.nu_grid
        if results[KIND_V].report_for(nu).certified and results[KIND_W].report_for(nu).certified
    ]
    payload["certified_for_both"] = both
    if out is not None:
        _write_json(Path(out), payload)
    if both:
        _say(quiet, f"drift certified for V and W at nu in {both}")
        return EXIT_OK
    _say(quiet, "no nu on the grid certifies both V and W")
    return EXIT_CHECK_FAILED


def cmd_audit_basis(config_path, out=None, quiet=False) -> int:
    cfg = _load_validated(config_path, quiet)
    if isinstance(cfg, int):
        return cfg
    basis = _basis_from(cfg)
    sub = audit_subexponential(basis, box=20)
    grad_box = 20 if cfg.game.m <= 3 else 6
    grad = audit_gradient_dominance(basis, box=grad_box)
    payload = {
        "basis_kind": basis.kind,
        "epsilon_scale": basis.epsilon_scale,
        "subexponential": {
            "violations": [vars(v) for v in sub.violations],
            "max_feasible_epsilon": sub.max_feasible_epsilon,
        },
        "gradient_dominance": {
            "certified_B": grad.certified_B,
            "worst_shell": grad.worst_shell,
            "box": grad_box,
            "states_scanned": grad.states_scanned,
        },
    }
    if out is not None:
        _write_json(Path(out), payload)
    _say(
        quiet,
        f"subexponential violations: {len(sub.violations)}; "
        f"gradient dominance B: {grad.certified_B}",
    )
    return EXIT_OK


def cmd_oracle(config_path, out_dir, quiet=False) -> int:
    cfg = _load_validated(config_path, quiet)
    if isinstance(cfg, int):
        return cfg
    n_states = (cfg.oracle.cap + 1) ** cfg.game.m
    if n_states > STATE_GUARD:
        _say(
            quiet,
            f"state-count guard: (cap+1)^m = {n_states} > {STATE_GUARD}; "
            "lower oracle.cap or use fewer servers (6-server runs are simulation-only)",
        )
        return EXIT_GUARD
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    space = TruncatedSpace(cfg.oracle.cap, cfg.game.m)
    chain = TruncatedChain.build(cfg.game, space)
    eq = solve_equilibrium(space, cfg.game, tol=cfg.oracle.tol, chain=chain)
    pair = behavior_pair(cfg.C0)
    mu = stationary_distribution(space, *pair, cfg.game, chain=chain)
    basis = _basis_from(cfg)
    fp = projected_fixed_point(basis, space, mu, pair, cfg.game, tol=cfg.oracle.tol, chain=chain)
    mass = cap_mass(space, mu)

    states = space.states()
    cols = [f"x_{i + 1}" for i in range(cfg.game.m)]
    with (out / "oracle_q.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols + ["q_00", "q_01", "q_10", "q_11"])
        for idx, x in enumerate(states):
            writer.writerow(
                [str(int(v)) for v in x]
                + [_f17(eq.q[idx, a, b]) for a in (0, 1) for b in (0, 1)]
            )
    with (out / "oracle_policy.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols + ["v", "pi_p1", "sigma_p1", "mu"])
        for idx, x in enumerate(states):
            writer.writerow(
                [str(int(v)) for v in x]
                + [_f17(eq.v[idx]), _f17(eq.pi_p1[idx]), _f17(eq.sigma_p1[idx]), _f17(mu[idx])]
            )
    _write_json(
        out / "oracle_weights.json",
        {
            "basis_kind": basis.kind,
            "epsilon_scale": basis.epsilon_scale,
            "w": [float(v) for v in fp.w],
            "residual": fp.residual,
            "iterations": fp.iterations,
            "singular_second_moment": fp.singular,
            "min_eigenvalue": fp.min_eigenvalue,
            "damping": fp.damping,
        },
    )
    _write_json(
        out / "oracle_summary.json",
        {
            "cap": cfg.oracle.cap,
            "m": cfg.game.m,
            "n_states": int(n_states),
            "shapley_iterations": eq.iterations,
            "shapley_residual": eq.residual,
            "cap_mass_above_0.9cap": mass,
            "cap_mass_ok": mass < 1e-4,
        },
    )
    _write_manifest(
        out,
        "oracle",
        config_path,
        ["oracle_q.csv", "oracle_policy.csv", "oracle_weights.json", "oracle_summary.json"],
    )
    _say(
        quiet,
        f"oracle solved: {eq.iterations} Shapley iterations, cap mass {mass:.2e}; "
        f"artifacts in {out}",
    )
    return EXIT_OK


def _load_oracle_artifacts(oracle_dir: Path, m: int):
    policy_path = oracle_dir / "oracle_policy.csv"
    weights_path = oracle_dir / "oracle_weights.json"
    summary_path = oracle_dir / "oracle_summary.json"
    if not (policy_path.is_file() and weights_path.is_file() and summary_path.is_file()):
        return None
    summary = json.loads(summary_path.read_text())
    cap = summary["cap"]
    pi_table, sigma_table = {}, {}
    with policy_path.open() as fh:
        for row in csv.DictReader(fh):
            key = tuple(int(row[f"x_{i + 1}"]) for i in range(m))
            pi_table[key] = MixedAction.from_p1(float(row["pi_p1"]))
            sigma_table[key] = MixedAction.from_p1(float(row["sigma_p1"]))
    weights = json.loads(weights_path.read_text())
    return (
        TablePolicy(pi_table, cap=cap),
        TablePolicy(sigma_table, cap=cap),
        weights,
        summary,
    )


def cmd_eval(config_path, weights_path, oracle_dir, out_dir, quiet=False) -> int:
    cfg = _load_validated(config_path, quiet)
    if isinstance(cfg, int):
        return cfg
    weights_path = Path(weights_path)
    if not weights_path.is_file():
        _say(quiet, f"weights file not found: {weights_path}")
        return EXIT_CONFIG
    summary = json.loads(weights_path.read_text())
    if summary.get("diverged"):
        _say(quiet, "weights summary marks a diverged run; nothing to evaluate")
        return EXIT_CONFIG
    basis = _basis_from(cfg)
    w = np.asarray(summary["final_weights"], dtype=float)
    if w.shape != (basis.dim,):
        _say(
            quiet,
            f"weight/basis mismatch: {w.shape[0]} weights but basis "
            f"{basis.kind} on {basis.m} servers needs {basis.dim}",
        )
        return EXIT_CONFIG
    loaded = _load_oracle_artifacts(Path(oracle_dir), cfg.game.m)
    if loaded is None:
        _say(quiet, f"oracle artifacts missing in {oracle_dir}")
        return EXIT_CONFIG
    pi_ref, sigma_ref, oracle_weights, _ = loaded

    learned = greedy_pair(basis, w)
    metrics, detail = evaluate_policies(learned, (pi_ref, sigma_ref), cfg.game, cfg.eval)
    report = weight_interpretation_report(w, basis)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = metrics.to_json_dict()
    payload["weight_report"] = report.to_json_dict()
    payload["system"] = f"{cfg.game.m}-server"
    payload["basis"] = basis.kind
    payload["w_ref"] = oracle_weights["w"]
    payload["w_ref_kind"] = "oracle_fixed_point"
    _write_json(out / "metrics.json", payload)
    with (out / "consistency.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state", "learned_p1", "reference_p1", "tv"])
        for state, lp, rp in detail:
            writer.writerow(
                [" ".join(str(v) for v in state), _f17(lp), _f17(rp), _f17(abs(lp - rp))]
            )
    _write_manifest(out, "eval", config_path, ["metrics.json", "consistency.csv"])
    _say(
        quiet,
        f"normalized mean cost {metrics.normalized_mean_cost:.4f}, "
        f"policy consistency {metrics.policy_consistency:.4f}",
    )
    return EXIT_OK


def cmd_report(out_dir, quiet=False) -> int:
    out = Path(out_dir)
    traj_path = out / "trajectory.csv"
    summary_path = out / "summary.json"
    metrics_path = out / "metrics.json"
    if not (traj_path.is_file() and summary_path.is_file() and metrics_path.is_file()):
        _say(quiet, f"missing artifacts in {out}: need trajectory.csv, summary.json, metrics.json")
        return EXIT_CONFIG
    metrics = json.loads(metrics_path.read_text())

    steps, weight_rows = [], []
    with traj_path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        w_cols = [i for i, name in enumerate(header) if name.startswith("w_")]
        for row in reader:
            steps.append(int(row[0]))
            weight_rows.append([float(row[i]) for i in w_cols])
    weights = np.asarray(weight_rows)

    if "w_ref" in metrics:
        w_ref = np.asarray(metrics["w_ref"], dtype=float)
        ref_kind = metrics.get("w_ref_kind", "oracle_fixed_point")
    else:
        cutoff = steps[-1] * 0.9
        tail = weights[[i for i, s in enumerate(steps) if s >= cutoff]]
        w_ref = tail.mean(axis=0)
        ref_kind = "trailing_average"
    norm0 = float(np.linalg.norm(weights[0] - w_ref))
    scale = norm0 if norm0 > 0 else 1.0
    with (out / "convergence.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "normalized_distance"])
        for step, row in zip(steps, weights):
            writer.writerow([str(step), _f17(float(np.linalg.norm(row - w_ref)) / scale)])
    with (out / "metrics.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "system", "basis", "value"])
        for name in ("normalized_mean_cost", "policy_consistency", "mean_tv_distance"):
            writer.writerow(
                [name, metrics["system"], metrics["basis"], _f17(metrics[name])]
            )
    _write_json(out / "report.json", {"w_ref_kind": ref_kind})
    _write_manifest(out, "report", None, ["convergence.csv", "metrics.csv", "report.json"])
    _say(quiet, f"report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qshield",
        description="Security game on parallel server queues: train, audit, solve, evaluate.",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check config, params and basis audits")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="optional JSON report path")

    p = sub.add_parser("train", help="run the minimax-Q learning loop")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("drift-check", help="certify Foster-Lyapunov drift for V and W")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="optional JSON report path")

    p = sub.add_parser("audit-basis", help="feature regularity audits")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="optional JSON report path")

    p = sub.add_parser("oracle", help="truncated tabular equilibrium and fixed point")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="metrics of trained weights against the oracle")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", required=True, help="summary.json from train")
    p.add_argument("--oracle", required=True, help="directory produced by the oracle command")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", help="plot-ready CSVs from train/eval artifacts")
    p.add_argument("--out", required=True, help="run directory holding the artifacts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.config, args.out, args.quiet)
    if args.command == "train":
        return cmd_train(args.config, args.out, args.quiet)
    if args.command == "drift-check":
        return cmd_drift_check(args.config, args.out, args.quiet)
    if args.command == "audit-basis":
        return cmd_audit_basis(args.config, args.out, args.quiet)
    if args.command == "oracle":
        return cmd_oracle(args.config, args.out, args.quiet)
    if args.command == "eval":
        return cmd_eval(args.config, args.weights, args.oracle, args.out, args.quiet)
    if args.command == "report":
        return cmd_report(args.out, args.quiet)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
