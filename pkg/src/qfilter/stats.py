"""Ensemble execution and statistical certification of the fidelity trend.

Trajectories are integrated in lockstep batches over fixed-size chunks of
trajectory indices. Each trajectory's noise comes from its own generator
seeded by (seed path, trajectory index), and every per-lane computation is
independent of the other lanes, so results are bit-identical for any
worker count; workers only decide which thread advances which chunk.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .densitymat import DensityMatrix, as_matrix, fidelity_many, hermitize, trace
from .exceptions import EnsembleError, InsufficientData, ValidationError
from .jump import (
    JumpConfig,
    JumpOperators,
    _project_lanes,
    build_kraus_set,
    chain_core,
    jump_core,
    normalize_kraus_set,
)
from .model import SystemModel
from .sde import (
    MAX_STEP_INCREMENT,
    MIN_STEP_NORM,
    IntegratorConfig,
    StepOperators,
    em_core,
    expected_increments,
    kraus_core,
)

DRIVERS = ("diffusive_kraus", "diffusive_em", "jump", "chain")

# Trajectories are processed in fixed chunks regardless of worker count so
# that batching never influences results.
CHUNK_SIZE = 128


@dataclass(frozen=True)
class EnsembleConfig:
    n_traj: int
    seed: int
    dt: float
    horizon: float
    checkpoints: tuple[float, ...]
    driver: str = "diffusive_kraus"

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValidationError("n_traj must be positive")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValidationError("dt and horizon must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")
        if self.driver not in DRIVERS:
            raise ValidationError(f"driver must be one of {DRIVERS}")
        cps = tuple(float(t) for t in self.checkpoints)
        if not cps:
            raise ValidationError("need at least one checkpoint")
        if any(t2 <= t1 for t1, t2 in zip(cps, cps[1:])):
            raise ValidationError("checkpoints must be strictly increasing")
        if cps[0] < 0 or cps[-1] > self.horizon * (1 + 1e-12):
            raise ValidationError("checkpoints must lie in [0, horizon]")
        for t in cps:
            steps = t / self.dt
            if abs(steps - round(steps)) > 1e-6:
                raise ValidationError(
                    f"checkpoint {t} is not an integer multiple of dt={self.dt}"
                )
        object.__setattr__(self, "checkpoints", cps)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def checkpoint_steps(self) -> tuple[int, ...]:
        return tuple(int(round(t / self.dt)) for t in self.checkpoints)


@dataclass
class EnsembleResult:
    """Checkpointed fidelity statistics over completed trajectories."""

    checkpoints: np.ndarray
    mean_fidelity: np.ndarray
    stderr: np.ndarray
    n_traj: int
    aborted: int
    fidelity_samples: np.ndarray  # (n_traj, n_checkpoints), NaN rows = aborted
    obs_mean: Optional[np.ndarray] = None
    obs_stderr: Optional[np.ndarray] = None
    obs_samples: Optional[np.ndarray] = None
    mean_state: Optional[np.ndarray] = None  # (n_checkpoints, N, N)
    worst_trace_dev: Optional[float] = None
    worst_min_eig: Optional[float] = None
    max_second_eig: Optional[float] = None

    @property
    def completed(self) -> int:
        return self.n_traj - self.aborted


@dataclass(frozen=True)
class SubmartingaleReport:
    """One-sided paired z-test of fidelity increments between checkpoints."""

    passed: bool
    worst_violation: float  # most negative mean increment, in stderr units
    z_scores: np.ndarray
    intervals: tuple[tuple[float, float], ...]
    mean_increments: np.ndarray
    stderrs: np.ndarray
    z_crit: float


class _ChunkOutcome:
    __slots__ = ("state_sums", "alive_counts", "trace_dev", "min_eig", "second_eig", "abort_reasons")

    def __init__(self):
        self.state_sums = None
        self.alive_counts = None
        self.trace_dev = 0.0
        self.min_eig = np.inf
        self.second_eig = -np.inf
        self.abort_reasons: dict[str, int] = {}


def _make_stepper(model, cfg, jump_cfg, integrator):
    """Return (noise_maker, step_fn) for the configured driver."""
    if cfg.driver in ("diffusive_kraus", "diffusive_em"):
        ops = StepOperators(model, cfg.dt)
        m = ops.n_channels
        sqrt_dt = math.sqrt(cfg.dt)

        def noise(rng, n_steps):
            return rng.normal(scale=sqrt_dt, size=(n_steps, m))

        if cfg.driver == "diffusive_kraus":

            def step(rho, hat, xi, k):
                dys = expected_increments(rho, ops) * cfg.dt + xi
                out, denom, inc_sq = kraus_core(rho, dys, ops)
                out_h, denom_h, _ = kraus_core(hat, dys, ops)
                bad_denom = (denom <= MIN_STEP_NORM) | (denom_h <= MIN_STEP_NORM)
                bad_inc = inc_sq >= MAX_STEP_INCREMENT**2
                reasons = {}
                if bool(np.any(bad_denom)):
                    reasons["DegenerateNormalization(denominator underflow)"] = int(
                        np.sum(bad_denom)
                    )
                if bool(np.any(bad_inc)):
                    reasons["DegenerateNormalization(step increment too large)"] = int(
                        np.sum(bad_inc)
                    )
                return out, out_h, bad_denom | bad_inc, reasons

            return noise, step

        proj_every = integrator.project_every if integrator else 1
        tol = integrator.domain_tol if integrator else 1e-8

        def step_em(rho, hat, xi, k):
            dys = expected_increments(rho, ops) * cfg.dt + xi
            raw = em_core(rho, xi, ops)
            raw_h = em_core(hat, dys - expected_increments(hat, ops) * cfg.dt, ops)
            bad = np.zeros(raw.shape[:-2], dtype=bool)
            reasons = {}
            if (k + 1) % proj_every == 0:
                raw, bad1 = _project_lanes(raw, tol)
                raw_h, bad2 = _project_lanes(raw_h, tol)
                bad = bad1 | bad2
                if bool(np.any(bad)):
                    reasons["TooFarFromDomain(projection failed)"] = int(np.sum(bad))
            return raw, raw_h, bad, reasons

        return noise, step_em

    if cfg.driver == "jump":
        if jump_cfg is None:
            raise ValidationError("jump driver requires a JumpConfig")
        if abs(jump_cfg.dt - cfg.dt) > 1e-15:
            raise ValidationError("JumpConfig.dt must match the ensemble dt")
        ops = JumpOperators(model, jump_cfg)
        ops.check_rate_bound()

        def noise_u(rng, n_steps):
            return rng.uniform(size=n_steps)

        def step_jump(rho, hat, u, k):
            out, out_h, _, bad = jump_core(rho, hat, u, ops)
            reasons = (
                {"DegenerateOutcome(jump branch)": int(np.sum(bad))}
                if bool(np.any(bad))
                else {}
            )
            return out, out_h, bad, reasons

        return noise_u, step_jump

    # chain driver: normalized Kraus family with eps = dt
    if jump_cfg is None:
        raise ValidationError("chain driver requires a JumpConfig (alpha)")
    stacked = np.stack(
        normalize_kraus_set(build_kraus_set(model, jump_cfg.alpha, cfg.dt)).operators
    )

    def noise_u(rng, n_steps):
        return rng.uniform(size=n_steps)

    def step_chain(chi, hat, u, k):
        out, out_h, _, bad = chain_core(chi, hat, u, stacked)
        reasons = (
            {"DegenerateOutcome(chain outcome)": int(np.sum(bad))}
            if bool(np.any(bad))
            else {}
        )
        return out, out_h, bad, reasons

    return noise_u, step_chain


def _freeze(new, old, ok):
    sel = ok[..., None, None]
    return np.where(sel, new, old)


def run_ensemble(
    model: SystemModel,
    rho0,
    rho_hat0,
    cfg: EnsembleConfig,
    jump_cfg: JumpConfig | None = None,
    observable=None,
    workers: int = 1,
    track_domain: bool = False,
    record_mean_state: bool = False,
    integrator: IntegratorConfig | None = None,
    seed_path: tuple[int, ...] | None = None,
) -> EnsembleResult:
    """Run independent coupled trajectories and collect checkpoint statistics.

    Results are bit-identical for identical (seed, cfg) whatever the worker
    count. Trajectories that raise are counted as aborted and excluded; the
    run fails if more than 1% abort.

    Parameters
    ----------
    observable : optional Hermitian matrix whose expectation on the true
        state is recorded alongside the fidelity.
    track_domain : record worst trace deviation / smallest eigenvalue /
        largest second eigenvalue across every step of every trajectory.
    record_mean_state : accumulate the ensemble-mean true state per
        checkpoint.
    seed_path : prefix of the per-trajectory seed sequence (defaults to
        (cfg.seed,)); trajectory i uses generator seeded by (*seed_path, i).
    """
    rho0 = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(as_matrix(rho0))
    rho_hat0 = (
        rho_hat0 if isinstance(rho_hat0, DensityMatrix) else DensityMatrix(as_matrix(rho_hat0))
    )
    if rho0.dim != model.dim or rho_hat0.dim != model.dim:
        raise ValidationError("initial state dimension does not match the model")
    if seed_path is None:
        seed_path = (cfg.seed,)
    obs = None if observable is None else np.asarray(observable, dtype=complex)

    noise_maker, step_fn = _make_stepper(model, cfg, jump_cfg, integrator)
    n_cp = len(cfg.checkpoints)
    cp_steps = cfg.checkpoint_steps
    cp_index = {s: j for j, s in enumerate(cp_steps)}
    n_steps = cfg.n_steps

    fid_samples = np.full((cfg.n_traj, n_cp), np.nan)
    obs_samples = np.full((cfg.n_traj, n_cp), np.nan) if obs is not None else None
    dim = model.dim

    chunks = [
        range(start, min(start + CHUNK_SIZE, cfg.n_traj))
        for start in range(0, cfg.n_traj, CHUNK_SIZE)
    ]

    def run_chunk(idx_range) -> _ChunkOutcome:
        indices = np.asarray(idx_range)
        b = len(indices)
        rho = np.repeat(rho0.data[None], b, axis=0)
        hat = np.repeat(rho_hat0.data[None], b, axis=0)
        noise = np.stack(
            [noise_maker(np.random.default_rng([*seed_path, int(i)]), n_steps) for i in indices]
        )
        alive = np.ones(b, dtype=bool)
        out = _ChunkOutcome()
        cp_states = (
            np.zeros((b, n_cp, dim, dim), dtype=complex) if record_mean_state else None
        )
        fid_chunk = np.full((b, n_cp), np.nan)
        obs_chunk = np.full((b, n_cp), np.nan) if obs is not None else None

        def record(j):
            fid_chunk[:, j] = fidelity_many(rho, hat)
            if obs_chunk is not None:
                obs_chunk[:, j] = np.real(np.einsum("ij,bji->b", obs, rho))
            if cp_states is not None:
                cp_states[:, j] = rho

        if 0 in cp_index:
            record(cp_index[0])
        for k in range(n_steps):
            new_rho, new_hat, bad, reasons = step_fn(rho, hat, noise[:, k], k)
            newly_dead = alive & bad
            if bool(np.any(newly_dead)):
                for name, _count in reasons.items():
                    out.abort_reasons[name] = out.abort_reasons.get(name, 0) + int(
                        np.sum(newly_dead)
                    )
                    break
            ok = alive & ~bad
            rho = _freeze(new_rho, rho, ok)
            hat = _freeze(new_hat, hat, ok)
            alive = ok
            if track_domain and bool(np.any(alive)):
                w = np.linalg.eigvalsh(hermitize(rho[alive]))
                tr = np.real(trace(rho[alive]))
                out.trace_dev = max(out.trace_dev, float(np.max(np.abs(tr - 1.0))))
                out.min_eig = min(out.min_eig, float(np.min(w[:, 0])))
                out.second_eig = max(out.second_eig, float(np.max(w[:, -2])))
            if (k + 1) in cp_index:
                record(cp_index[k + 1])

        fid_chunk[~alive] = np.nan
        if obs_chunk is not None:
            obs_chunk[~alive] = np.nan
        fid_samples[indices[0] : indices[-1] + 1] = fid_chunk
        if obs_samples is not None:
            obs_samples[indices[0] : indices[-1] + 1] = obs_chunk
        if cp_states is not None:
            out.state_sums = cp_states[alive].sum(axis=0)
            out.alive_counts = int(np.sum(alive))
        n_aborted = int(np.sum(~alive))
        if n_aborted and not out.abort_reasons:
            out.abort_reasons["aborted"] = n_aborted
        return out

    if workers <= 1 or len(chunks) == 1:
        outcomes = [run_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_chunk, chunks))

    completed_mask = np.all(np.isfinite(fid_samples), axis=1)
    aborted = int(cfg.n_traj - np.sum(completed_mask))
    if aborted > 0.01 * cfg.n_traj:
        reasons: dict[str, int] = {}
        for oc in outcomes:
            for name, count in oc.abort_reasons.items():
                reasons[name] = reasons.get(name, 0) + count
        detail = "; ".join(f"{k} x{v}" for k, v in reasons.items()) or "unknown"
        raise EnsembleError(
            f"{aborted}/{cfg.n_traj} trajectories aborted (budget 1%): {detail}"
        )
    if not np.any(completed_mask):
        raise EnsembleError("no trajectory completed")

    good = fid_samples[completed_mask]
    n_done = good.shape[0]
    mean = good.mean(axis=0)
    stderr = (
        good.std(axis=0, ddof=1) / math.sqrt(n_done) if n_done > 1 else np.zeros(n_cp)
    )
    result = EnsembleResult(
        checkpoints=np.asarray(cfg.checkpoints),
        mean_fidelity=mean,
        stderr=stderr,
        n_traj=cfg.n_traj,
        aborted=aborted,
        fidelity_samples=fid_samples,
    )
    if obs_samples is not None:
        og = obs_samples[completed_mask]
        result.obs_samples = obs_samples
        result.obs_mean = og.mean(axis=0)
        result.obs_stderr = (
            og.std(axis=0, ddof=1) / math.sqrt(n_done) if n_done > 1 else np.zeros(n_cp)
        )
    if record_mean_state:
        total = np.zeros((n_cp, dim, dim), dtype=complex)
        count = 0
        for oc in outcomes:
            if oc.state_sums is not None:
                total += oc.state_sums
                count += oc.alive_counts
        result.mean_state = total / max(count, 1)
    if track_domain:
        result.worst_trace_dev = max(oc.trace_dev for oc in outcomes)
        result.worst_min_eig = min(oc.min_eig for oc in outcomes)
        result.max_second_eig = max(oc.second_eig for oc in outcomes)
    return result


def submartingale_test(result: EnsembleResult, z_crit: float = 3.0) -> SubmartingaleReport:
    """Paired one-sided test that mean fidelity increments are nonnegative.

    For each consecutive checkpoint pair the per-trajectory increment mean
    and its standard error are formed; the test passes when every interval
    satisfies mean >= -z_crit * stderr.
    """
    if z_crit <= 0:
        raise ValidationError("z_crit must be positive")
    samples = result.fidelity_samples
    completed = samples[np.all(np.isfinite(samples), axis=1)]
    if samples.shape[1] < 2:
        raise InsufficientData("need at least two checkpoints")
    if completed.shape[0] < 50:
        raise InsufficientData("need at least 50 completed trajectories")
    diffs = np.diff(completed, axis=1)
    means = diffs.mean(axis=0)
    stderrs = diffs.std(axis=0, ddof=1) / math.sqrt(diffs.shape[0])
    z = np.zeros_like(means)
    nonzero = stderrs > 0
    z[nonzero] = means[nonzero] / stderrs[nonzero]
    # zero-spread intervals: pass when the mean itself is nonnegative
    z[~nonzero] = np.where(means[~nonzero] >= -1e-15, 0.0, -np.inf)
    passed = bool(np.all(z >= -z_crit))
    cps = result.checkpoints
    return SubmartingaleReport(
        passed=passed,
        worst_violation=float(min(0.0, np.min(z))),
        z_scores=z,
        intervals=tuple((float(a), float(b)) for a, b in zip(cps[:-1], cps[1:])),
        mean_increments=means,
        stderrs=stderrs,
        z_crit=z_crit,
    )


def final_convergence(result: EnsembleResult, threshold: float) -> bool:
    """Diagnostic only: did the mean fidelity end at or above the threshold?"""
    if not 0 < threshold < 1:
        raise ValidationError("threshold must lie in (0, 1)")
    return bool(result.mean_fidelity[-1] >= threshold)
