"""Command-line front end: config parsing, presets, orchestration, reports.

Config documents are YAML with strict schema checking (unknown keys are
errors, all matrices validated before any simulation starts). Matrix
literals are lists of rows whose entries are [re, im] pairs. Subcommands:

* ``simulate``    run a coupled ensemble, test the fidelity trend
* ``chain-check`` exact one-step expected-fidelity enumeration over pairs
* ``sweep-alpha`` counting-vs-diffusive gap sweep over amplitudes
* ``validate``    parse and validate a config, run nothing

Exit codes: 0 success, 1 scientific assertion failed, 2 config error,
3 runtime/numeric error. ``QFILTER_SEED`` overrides the config seed and
``--seed`` overrides both. Report paths write CSV (or JSON) tables plus
rendered PNG figures; all artifacts are written atomically.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import plots
from .densitymat import DensityMatrix, maximally_mixed, random_density
from .exceptions import (
    ConfigError,
    ParseError,
    QFilterError,
    RateOverflow,
    ValidationError,
)
from .jump import JumpConfig, build_kraus_set, diffusion_limit_check, normalize_kraus_set, one_step_expected_fidelity, suggested_dt
from .model import SystemModel
from .sde import IntegratorConfig, simulate_pair
from .stats import EnsembleConfig, final_convergence, run_ensemble, submartingale_test

EXIT_OK = 0
EXIT_SCIENCE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

GAP_TOLERANCE = 1e-9  # one-step expected-fidelity gains below this fail

PRESETS: dict[str, dict] = {
    "paper-qubit": {
        "model": {
            "hamiltonian": [[[0.0, 0.0], [0.0, -1.0]], [[0.0, 1.0], [0.0, 0.0]]],
            "measured": [[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]],
            "unmeasured": [],
        },
        "initial": {
            "rho0": [[[0.5, 0.0], [0.25, 0.0]], [[0.25, 0.0], [0.5, 0.0]]],
            "rho_hat0": [[[1 / 3, 0.0], [0.0, 0.0]], [[0.0, 0.0], [2 / 3, 0.0]]],
        },
        "ensemble": {
            "n_traj": 500,
            "seed": 20240,
            "dt": 1.0e-4,
            "horizon": 3.0,
            "n_checkpoints": 61,
            "driver": "diffusive_kraus",
        },
        "jump": {"alpha": 2.0, "max_jump_prob": 0.1},
        "sweep": {
            "alphas": [1.0, 2.0, 5.0, 10.0],
            "horizon": 0.5,
            "n_traj": 3000,
            "dt": None,
            "max_jump_prob": 0.1,
        },
        "chain_check": {"n_pairs": 1000, "alpha": 2.0, "eps": 1.0e-3},
        "output": {"directory": "out", "format": "csv"},
        "convergence_threshold": 0.99,
    }
}

_SCHEMA = {
    "preset": str,
    "model": {"hamiltonian": "matrix", "measured": "matrix_list", "unmeasured": "matrix_list"},
    "initial": {"rho0": "state", "rho_hat0": "state"},
    "ensemble": {
        "n_traj": int,
        "seed": int,
        "dt": float,
        "horizon": float,
        "n_checkpoints": int,
        "checkpoints": list,
        "driver": str,
        "project_every": int,
        "domain_tol": float,
    },
    "jump": {"alpha": float, "max_jump_prob": float},
    "sweep": {
        "alphas": list,
        "horizon": float,
        "n_traj": int,
        "dt": (float, type(None)),
        "max_jump_prob": float,
    },
    "chain_check": {"n_pairs": int, "alpha": float, "eps": float},
    "output": {"directory": str, "format": str},
    "convergence_threshold": float,
}


@dataclass
class ExperimentConfig:
    model: SystemModel
    rho0: DensityMatrix
    rho_hat0: DensityMatrix
    ensemble: EnsembleConfig
    integrator: IntegratorConfig
    jump: Optional[JumpConfig]
    sweep: dict
    chain_check: dict
    out_dir: str
    fmt: str
    convergence_threshold: float
    raw: dict


def _parse_matrix(node, path: str) -> np.ndarray:
    if not isinstance(node, list) or not node:
        raise ValidationError(f"{path}: expected a list of rows")
    n = len(node)
    out = np.zeros((n, n), dtype=complex)
    for i, row in enumerate(node):
        if not isinstance(row, list) or len(row) != n:
            raise ValidationError(f"{path}[{i}]: expected a row of {n} entries")
        for j, entry in enumerate(row):
            if (
                not isinstance(entry, (list, tuple))
                or len(entry) != 2
                or not all(isinstance(x, (int, float)) for x in entry)
            ):
                raise ValidationError(
                    f"{path}[{i}][{j}]: expected an [re, im] pair of reals"
                )
            out[i, j] = complex(entry[0], entry[1])
    if n < 2:
        raise ValidationError(f"{path}: matrices must be at least 2x2")
    return out


def _parse_state(node, path: str, dim: int) -> DensityMatrix:
    if node == "maximally_mixed":
        return maximally_mixed(dim)
    m = _parse_matrix(node, path)
    if m.shape[0] != dim:
        raise ValidationError(f"{path}: dimension {m.shape[0]} does not match model dimension {dim}")
    try:
        return DensityMatrix(m)
    except QFilterError as exc:
        raise ValidationError(f"{path}: not a valid density matrix: {exc}") from exc


def _check_keys(section: dict, allowed: dict, path: str):
    for key in section:
        if key not in allowed:
            raise ValidationError(f"unknown key '{path}{key}'")


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key == "preset":
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **copy.deepcopy(value)}
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a YAML experiment document (fail fast)."""
    try:
        doc = yaml.safe_load(io.StringIO(text))
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ParseError("top level of the config must be a mapping")
    _check_keys(doc, _SCHEMA, "")
    preset_name = doc.get("preset")
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ValidationError(
                f"unknown preset '{preset_name}'; available: {sorted(PRESETS)}"
            )
        doc = _deep_merge(PRESETS[preset_name], doc)

    for section in ("model", "initial", "ensemble", "output"):
        if section not in doc:
            raise ValidationError(f"missing required section '{section}'")
        if not isinstance(doc[section], dict):
            raise ValidationError(f"section '{section}' must be a mapping")
        _check_keys(doc[section], _SCHEMA[section], f"{section}.")
    for section in ("jump", "sweep", "chain_check"):
        if section in doc:
            if not isinstance(doc[section], dict):
                raise ValidationError(f"section '{section}' must be a mapping")
            _check_keys(doc[section], _SCHEMA[section], f"{section}.")

    mdl = doc["model"]
    if "hamiltonian" not in mdl:
        raise ValidationError("model.hamiltonian is required")
    hamiltonian = _parse_matrix(mdl["hamiltonian"], "model.hamiltonian")
    measured = [
        _parse_matrix(mat, f"model.measured[{i}]")
        for i, mat in enumerate(mdl.get("measured", []))
    ]
    unmeasured = [
        _parse_matrix(mat, f"model.unmeasured[{i}]")
        for i, mat in enumerate(mdl.get("unmeasured", []))
    ]
    try:
        model = SystemModel(
            hamiltonian=hamiltonian, measured=tuple(measured), unmeasured=tuple(unmeasured)
        )
    except QFilterError as exc:
        raise ValidationError(f"model: {exc}") from exc

    init = doc["initial"]
    for key in ("rho0", "rho_hat0"):
        if key not in init:
            raise ValidationError(f"initial.{key} is required")
    rho0 = _parse_state(init["rho0"], "initial.rho0", model.dim)
    rho_hat0 = _parse_state(init["rho_hat0"], "initial.rho_hat0", model.dim)

    ens = doc["ensemble"]
    for key in ("n_traj", "seed", "dt", "horizon", "driver"):
        if key not in ens:
            raise ValidationError(f"ensemble.{key} is required")
    dt = float(ens["dt"])
    horizon = float(ens["horizon"])
    if "checkpoints" in ens and "n_checkpoints" in ens:
        raise ValidationError("give either ensemble.checkpoints or ensemble.n_checkpoints")
    if "checkpoints" in ens:
        checkpoints = tuple(float(t) for t in ens["checkpoints"])
    else:
        n_cp = int(ens.get("n_checkpoints", 61))
        if n_cp < 2:
            raise ValidationError("ensemble.n_checkpoints must be >= 2")
        checkpoints = tuple(np.linspace(0.0, horizon, n_cp))
    try:
        ensemble = EnsembleConfig(
            n_traj=int(ens["n_traj"]),
            seed=int(ens["seed"]),
            dt=dt,
            horizon=horizon,
            checkpoints=checkpoints,
            driver=str(ens["driver"]),
        )
        integrator = IntegratorConfig(
            dt=dt,
            scheme="euler_maruyama" if ensemble.driver == "diffusive_em" else "kraus",
            domain_tol=float(ens.get("domain_tol", 1e-8)),
            project_every=int(ens.get("project_every", 1)),
        )
    except QFilterError as exc:
        raise ValidationError(f"ensemble: {exc}") from exc

    jump_cfg = None
    if "jump" in doc:
        j = doc["jump"]
        if "alpha" not in j:
            raise ValidationError("jump.alpha is required when the section is present")
        try:
            jump_cfg = JumpConfig(
                alpha=float(j["alpha"]),
                dt=dt,
                max_jump_prob=float(j.get("max_jump_prob", 0.1)),
            )
        except QFilterError as exc:
            raise ValidationError(f"jump: {exc}") from exc
    if ensemble.driver in ("jump", "chain") and jump_cfg is None:
        raise ValidationError(f"driver '{ensemble.driver}' requires a jump section")

    out = doc["output"]
    fmt = str(out.get("format", "csv"))
    if fmt not in ("csv", "json"):
        raise ValidationError("output.format must be 'csv' or 'json'")
    threshold = float(doc.get("convergence_threshold", 0.99))
    if not 0 < threshold < 1:
        raise ValidationError("convergence_threshold must lie in (0, 1)")

    return ExperimentConfig(
        model=model,
        rho0=rho0,
        rho_hat0=rho_hat0,
        ensemble=ensemble,
        integrator=integrator,
        jump=jump_cfg,
        sweep=dict(doc.get("sweep", {})),
        chain_check=dict(doc.get("chain_check", {})),
        out_dir=str(out.get("directory", "out")),
        fmt=fmt,
        convergence_threshold=threshold,
        raw=doc,
    )


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_table(path: Path, header: list[str], rows: list[tuple], fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        payload = [dict(zip(header, row)) for row in rows]
        _atomic_write(path, json.dumps(payload, indent=1).encode())
        return path
    path = path.with_suffix(".csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    _atomic_write(path, buf.getvalue().encode())
    return path


def _write_summary(path: Path, payload: dict):
    _atomic_write(path, json.dumps(payload, indent=1, sort_keys=True).encode())


def _resolve_seed(cfg: ExperimentConfig, args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("QFILTER_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"QFILTER_SEED must be an integer, got {env!r}") from exc
    return cfg.ensemble.seed


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    """Run the configured ensemble; report and test the fidelity trend."""
    seed = _resolve_seed(cfg, args)
    ensemble = EnsembleConfig(
        n_traj=cfg.ensemble.n_traj,
        seed=seed,
        dt=cfg.ensemble.dt,
        horizon=cfg.ensemble.horizon,
        checkpoints=cfg.ensemble.checkpoints,
        driver=cfg.ensemble.driver,
    )
    out_dir = Path(args.out_dir or cfg.out_dir)
    started = time.monotonic()
    result = run_ensemble(
        cfg.model,
        cfg.rho0,
        cfg.rho_hat0,
        ensemble,
        jump_cfg=cfg.jump,
        workers=args.workers,
        integrator=cfg.integrator,
    )
    report = submartingale_test(result, z_crit=3.0)
    converged = final_convergence(result, cfg.convergence_threshold)
    elapsed = time.monotonic() - started

    out_dir.mkdir(parents=True, exist_ok=True)
    ens_path = _write_table(
        out_dir / "ensemble",
        ["t", "mean_fidelity", "stderr", "n"],
        [
            (float(t), float(m), float(s), result.completed)
            for t, m, s in zip(result.checkpoints, result.mean_fidelity, result.stderr)
        ],
        cfg.fmt,
    )
    sub_path = _write_table(
        out_dir / "submartingale",
        ["t_start", "t_end", "mean_increment", "stderr", "z"],
        [
            (float(a), float(b), float(m), float(s), float(z))
            for (a, b), m, s, z in zip(
                report.intervals, report.mean_increments, report.stderrs, report.z_scores
            )
        ],
        cfg.fmt,
    )
    artifacts = [str(ens_path), str(sub_path)]
    if not args.no_plot:
        fig_path = out_dir / "fidelity.png"
        plots.fidelity_figure(result, fig_path)
        artifacts.append(str(fig_path))
    if args.dump_trajectories:
        artifacts.extend(
            str(p) for p in _dump_trajectories(cfg, ensemble, out_dir, args.dump_trajectories)
        )
    summary = {
        "command": "simulate",
        "config": cfg.raw,
        "seed": seed,
        "n_traj": result.n_traj,
        "aborted": result.aborted,
        "submartingale_pass": report.passed,
        "worst_violation": report.worst_violation,
        "z_crit": report.z_crit,
        "final_mean_fidelity": float(result.mean_fidelity[-1]),
        "initial_mean_fidelity": float(result.mean_fidelity[0]),
        "converged": converged,
        "convergence_threshold": cfg.convergence_threshold,
        "wall_clock_s": elapsed,
        "artifacts": artifacts,
    }
    _write_summary(out_dir / "summary.json", summary)
    print(
        f"simulate: {result.completed}/{result.n_traj} trajectories, "
        f"final mean fidelity {result.mean_fidelity[-1]:.6f}, "
        f"submartingale {'PASS' if report.passed else 'FAIL'} "
        f"(worst z = {report.worst_violation:.3f})"
    )
    return EXIT_OK if report.passed else EXIT_SCIENCE


def _dump_trajectories(cfg, ensemble, out_dir: Path, count: int) -> list[Path]:
    if ensemble.driver not in ("diffusive_kraus", "diffusive_em"):
        raise ValidationError("trajectory dumps are available for diffusive drivers only")
    traj_dir = out_dir / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    n_channels = cfg.model.n_measured
    for i in range(min(count, ensemble.n_traj)):
        rng = np.random.default_rng([ensemble.seed, i])
        _, _, table = simulate_pair(
            cfg.model, cfg.rho0, cfg.rho_hat0, cfg.integrator, ensemble.n_steps, rng
        )
        header = ["t", "fidelity", "tr_rho", "lambda_min_rho", "purity_rho", "purity_rhohat"]
        header += [f"dy_{mu}" for mu in range(n_channels)]
        rows = []
        for k in range(len(table.times)):
            dy = table.dy[k - 1] if k > 0 else np.zeros(n_channels)
            rows.append(
                (
                    float(table.times[k]),
                    float(table.fidelity[k]),
                    float(table.tr_rho[k]),
                    float(table.lambda_min_rho[k]),
                    float(table.purity_rho[k]),
                    float(table.purity_rho_hat[k]),
                    *[float(v) for v in dy],
                )
            )
        paths.append(_write_table(traj_dir / f"trajectory_{i:04d}", header, rows, "csv"))
    return paths


def cmd_chain_check(cfg: ExperimentConfig, args) -> int:
    """Enumerate one-step expected fidelity over random pairs; exact test."""
    seed = _resolve_seed(cfg, args)
    section = cfg.chain_check
    n_pairs = int(section.get("n_pairs", 1000))
    alpha = float(section.get("alpha", 2.0))
    eps = float(section.get("eps", 1e-3))
    kset = normalize_kraus_set(build_kraus_set(cfg.model, alpha, eps))
    rng = np.random.default_rng([seed, 1])
    rows = []
    violations = 0
    worst = np.inf
    for _ in range(n_pairs):
        chi = random_density(cfg.model.dim, rng)
        chi_hat = random_density(cfg.model.dim, rng)
        expected, current = one_step_expected_fidelity(chi, chi_hat, kset)
        gap = expected - current
        worst = min(worst, gap)
        if gap < -GAP_TOLERANCE:
            violations += 1
        rows.append((float(current), float(expected), float(gap)))

    out_dir = Path(args.out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = _write_table(
        out_dir / "chain_check", ["fid_before", "fid_expected_after", "gap"], rows, cfg.fmt
    )
    artifacts = [str(table_path)]
    if not args.no_plot:
        fig_path = out_dir / "chain_gaps.png"
        plots.chain_gap_figure([r[2] for r in rows], fig_path)
        artifacts.append(str(fig_path))
    summary = {
        "command": "chain-check",
        "config": cfg.raw,
        "seed": seed,
        "n_pairs": n_pairs,
        "alpha": alpha,
        "eps": eps,
        "completeness_defect": kset.completeness_defect(),
        "violations": violations,
        "min_gap": float(worst),
        "gap_tolerance": GAP_TOLERANCE,
        "pass": violations == 0,
        "artifacts": artifacts,
    }
    _write_summary(out_dir / "summary.json", summary)
    print(
        f"chain-check: {n_pairs} pairs, min gap {worst:.3e}, "
        f"{violations} violations -> {'PASS' if violations == 0 else 'FAIL'}"
    )
    return EXIT_OK if violations == 0 else EXIT_SCIENCE


def cmd_sweep_alpha(cfg: ExperimentConfig, args) -> int:
    """Counting-vs-diffusive gap sweep over local-oscillator amplitudes."""
    seed = _resolve_seed(cfg, args)
    section = cfg.sweep
    alphas = [float(a) for a in section.get("alphas", [1.0, 2.0, 5.0, 10.0])]
    if not alphas:
        raise ValidationError("sweep.alphas must not be empty")
    horizon = float(section.get("horizon", 0.5))
    n_traj = int(section.get("n_traj", 3000))
    max_jump_prob = float(section.get("max_jump_prob", 0.1))
    dt = section.get("dt")
    if dt is None:
        if cfg.model.n_measured != 1 or cfg.model.n_unmeasured != 0:
            raise ValidationError("sweep-alpha needs exactly one measured channel")
        bound = min(suggested_dt(cfg.model.measured[0], a, max_jump_prob) for a in alphas)
        dt = horizon / int(np.ceil(horizon / bound))
    dt = float(dt)

    report = diffusion_limit_check(
        cfg.model,
        cfg.rho0,
        cfg.rho_hat0,
        alphas,
        dt=dt,
        horizon=horizon,
        n_traj=n_traj,
        seed=seed,
        max_jump_prob=max_jump_prob,
        workers=args.workers,
    )
    out_dir = Path(args.out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = _write_table(
        out_dir / "sweep",
        ["alpha", "t", "obs_gap", "fid_gap", "stderr_obs", "stderr_fid"],
        list(report.rows()),
        cfg.fmt,
    )
    artifacts = [str(table_path)]
    if not args.no_plot:
        fig_path = out_dir / "sweep.png"
        plots.sweep_figure(report, fig_path)
        artifacts.append(str(fig_path))
    trend_asserted = len(alphas) >= 2
    summary = {
        "command": "sweep-alpha",
        "config": cfg.raw,
        "seed": seed,
        "alphas": alphas,
        "dt": dt,
        "horizon": horizon,
        "n_traj": n_traj,
        "trend_asserted": trend_asserted,
        "trend_ok": report.trend_ok,
        "final_fid_gaps": [float(g) for g in report.fid_gap[:, -1]],
        "final_obs_gaps": [float(g) for g in report.obs_gap[:, -1]],
        "artifacts": artifacts,
    }
    _write_summary(out_dir / "summary.json", summary)
    ok = report.trend_ok or not trend_asserted
    print(
        f"sweep-alpha: alphas {alphas}, dt {dt:g}, "
        f"trend {'PASS' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_SCIENCE


def cmd_validate(cfg: ExperimentConfig, args) -> int:
    """Parse-only command: echo the validated configuration."""
    info = {
        "valid": True,
        "dim": cfg.model.dim,
        "measured_channels": cfg.model.n_measured,
        "unmeasured_channels": cfg.model.n_unmeasured,
        "driver": cfg.ensemble.driver,
        "n_traj": cfg.ensemble.n_traj,
        "dt": cfg.ensemble.dt,
        "horizon": cfg.ensemble.horizon,
        "n_checkpoints": len(cfg.ensemble.checkpoints),
        "seed": _resolve_seed(cfg, args),
    }
    print(json.dumps(info, indent=1, sort_keys=True))
    return EXIT_OK


def _load_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ValidationError("give either --config or --preset, not both")
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        return parse_config(path.read_text(encoding="utf-8"))
    preset = args.preset or "paper-qubit"
    return parse_config(yaml.safe_dump({"preset": preset}))


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="path to a YAML experiment config")
    parser.add_argument("--preset", help="built-in preset name (default: paper-qubit)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument(
        "--workers", type=int, default=min(8, os.cpu_count() or 1),
        help="worker threads (affects wall time only, never results)",
    )
    parser.add_argument("--out-dir", help="output directory (default from config)")
    parser.add_argument("--format", choices=("csv", "json"), help="table format override")
    parser.add_argument("--no-plot", action="store_true", help="skip PNG figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfilter",
        description="Coupled quantum trajectory / filter simulation and "
        "fidelity-trend certification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_sim = sub.add_parser("simulate", help="run a coupled ensemble and test the trend")
    p_sim.add_argument(
        "--dump-trajectories", type=int, default=0, metavar="K",
        help="write per-step CSVs for the first K trajectories",
    )
    p_chain = sub.add_parser("chain-check", help="exact one-step enumeration over pairs")
    p_sweep = sub.add_parser("sweep-alpha", help="counting-vs-diffusive amplitude sweep")
    p_val = sub.add_parser("validate", help="parse and validate a config only")
    for p in (p_sim, p_chain, p_sweep, p_val):
        _add_common(p)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "chain-check": cmd_chain_check,
    "sweep-alpha": cmd_sweep_alpha,
    "validate": cmd_validate,
}


def _error_json(exc: Exception, code: int) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, RateOverflow) and exc.suggested_dt is not None:
        payload["suggested_dt"] = exc.suggested_dt
    return json.dumps(payload, sort_keys=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.format:
            cfg.fmt = args.format
        code = _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(_error_json(exc, EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    except QFilterError as exc:
        print(_error_json(exc, EXIT_RUNTIME), file=sys.stderr)
        return EXIT_RUNTIME
    return code


if __name__ == "__main__":
    sys.exit(main())
