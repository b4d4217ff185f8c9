"""Poisson-jump dynamics, the discrete Kraus chain, and diffusion-limit checks.

The homodyne counting model drives both the true state and the filter with
the same two counting records (amplitude shifts +alpha and -alpha). Its
time discretization is the three-outcome Kraus chain: outcome 0 applies the
no-jump drift, outcomes 1 and 2 the two jump maps. The normalized chain is
the exact discrete object behind the fidelity submartingale, checked here
by full enumeration of one-step outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densitymat import (
    DensityMatrix,
    as_matrix,
    fidelity,
    hermitize,
    project_to_density,
    trace,
)
from .exceptions import (
    DegenerateOutcome,
    RateOverflow,
    ShapeMismatch,
    SingularNormalizer,
    ValidationError,
)
from .model import SystemModel, shifted
from .sde import TrajectoryPair

COMPLETENESS_TOL = 1e-12
ZERO_PROBABILITY = 1e-15


@dataclass(frozen=True)
class JumpConfig:
    """Local-oscillator amplitude and step size for the counting model."""

    alpha: float
    dt: float
    max_jump_prob: float = 0.1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if not 0 < self.max_jump_prob < 1:
            raise ValidationError("max_jump_prob must lie in (0, 1)")


@dataclass(frozen=True)
class KrausSet:
    """Measurement operator family; completeness holds when normalized."""

    operators: tuple[np.ndarray, ...]
    normalized: bool = False

    def __post_init__(self):
        ops = tuple(np.asarray(m, dtype=complex) for m in self.operators)
        if not ops:
            raise ValidationError("KrausSet needs at least one operator")
        dim = ops[0].shape[0]
        for m in ops:
            if m.shape != (dim, dim):
                raise ShapeMismatch("Kraus operators must share one square shape")
        object.__setattr__(self, "operators", ops)
        if self.normalized and self.completeness_defect() > COMPLETENESS_TOL:
            raise ValidationError(
                f"completeness defect {self.completeness_defect():.3e} exceeds "
                f"{COMPLETENESS_TOL:.0e} for a normalized set"
            )

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def completeness_defect(self) -> float:
        acc = sum(np.conj(m.T) @ m for m in self.operators)
        return float(np.linalg.norm(acc - np.eye(self.dim)))


def _single_measured_channel(model: SystemModel) -> np.ndarray:
    if model.n_measured != 1 or model.n_unmeasured != 0:
        raise ValidationError(
            "the counting construction needs exactly one measured channel "
            "and no unmeasured channels"
        )
    return model.measured[0]


def jump_rates(rho, L, alpha: float) -> tuple[float, float]:
    """Poisson intensities of the two counting channels at the given state."""
    r = as_matrix(rho)
    k_plus = np.conj(shifted(L, alpha).T) @ shifted(L, alpha)
    k_minus = np.conj(shifted(L, -alpha).T) @ shifted(L, -alpha)
    r1 = 0.5 * float(np.real(trace(k_plus @ r)))
    r2 = 0.5 * float(np.real(trace(k_minus @ r)))
    return r1, r2


def suggested_dt(L, alpha: float, max_jump_prob: float = 0.1) -> float:
    """Largest step keeping per-step jump probabilities below the bound."""
    spec_norm = float(np.linalg.norm(np.asarray(L, dtype=complex), ord=2))
    return max_jump_prob / (alpha**2 + spec_norm**2)


class JumpOperators:
    """Per-(model, alpha, dt) matrices for the counting integrator."""

    def __init__(self, model: SystemModel, cfg: JumpConfig):
        L = _single_measured_channel(model)
        self.dim = model.dim
        self.dt = cfg.dt
        self.alpha = cfg.alpha
        self.max_jump_prob = cfg.max_jump_prob
        self.hamiltonian = model.hamiltonian
        self.l_plus = shifted(L, cfg.alpha)
        self.l_minus = shifted(L, -cfg.alpha)
        self.k_plus = np.conj(self.l_plus.T) @ self.l_plus
        self.k_minus = np.conj(self.l_minus.T) @ self.l_minus
        self.quad = np.conj(L.T) @ L
        # worst-case per-step probabilities over all states
        self.p1_bound = 0.5 * float(np.linalg.eigvalsh(self.k_plus)[-1]) * cfg.dt
        self.p2_bound = 0.5 * float(np.linalg.eigvalsh(self.k_minus)[-1]) * cfg.dt
        self.suggested_dt = suggested_dt(L, cfg.alpha, cfg.max_jump_prob)
        # Euler drift dents eigenvalues by O((|drift| dt)^2); anything beyond
        # this repair budget means the state is corrupted, not drifting.
        drift_scale = 2.0 * float(np.linalg.norm(model.hamiltonian, ord=2)) + 2.0 * float(
            np.linalg.eigvalsh(self.quad)[-1]
        )
        self.projection_tol = max(1e-8, 25.0 * (drift_scale * cfg.dt) ** 2)

    def check_rate_bound(self):
        if max(self.p1_bound, self.p2_bound) > self.max_jump_prob:
            raise RateOverflow(
                f"per-step jump probability up to "
                f"{max(self.p1_bound, self.p2_bound):.3f} exceeds "
                f"{self.max_jump_prob}; use dt <= {self.suggested_dt:.3e}",
                suggested_dt=self.suggested_dt,
            )


def no_jump_drift(ops: JumpOperators, rho: np.ndarray) -> np.ndarray:
    """Drift between jumps: -i[H, rho] plus the mean compensator of both
    counting channels, -{L†L, rho}/2 + tr{L†L rho} rho (alpha cancels)."""
    h = ops.hamiltonian
    q = ops.quad
    expect = np.real(trace(q @ rho))
    out = (
        -1j * (h @ rho - rho @ h)
        - 0.5 * (q @ rho + rho @ q)
        + expect[..., None, None] * rho
    )
    return hermitize(out)


def _project_lanes(x: np.ndarray, tol: float):
    """Batched clamp-and-renormalize; returns (projected, bad_lane_mask)."""
    h = hermitize(x)
    w, v = np.linalg.eigh(h)
    bad = w[..., 0] < -tol
    w = np.clip(w, 0.0, None)
    s = np.sum(w, axis=-1, keepdims=True)
    bad = bad | (np.abs(s[..., 0]) < 0.5)
    safe = np.where(s == 0.0, 1.0, s)
    out = hermitize((v * (w / safe)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2)))
    return out, bad


def jump_core(
    rho: np.ndarray,
    rho_hat: np.ndarray,
    u: np.ndarray,
    ops: JumpOperators,
):
    """One counting step on a flat batch of pairs, outcome from one uniform.

    The two Bernoulli increments are sampled jointly conditioned on not
    firing together (same law as independent draws with double fires
    resampled); at most one jump is applied per step. A jump replaces the
    state by the corresponding normalized map; otherwise the Euler drift
    plus projection applies. Returns (rho, rho_hat, outcome, bad_mask).
    """
    scalar = rho.ndim == 2
    if scalar:
        rho = rho[None]
        rho_hat = rho_hat[None]
        u = np.atleast_1d(np.asarray(u, dtype=float))
    r1 = 0.5 * np.real(np.einsum("ij,bji->b", ops.k_plus, rho))
    r2 = 0.5 * np.real(np.einsum("ij,bji->b", ops.k_minus, rho))
    p1 = r1 * ops.dt
    p2 = r2 * ops.dt
    if float(np.max(p1, initial=0.0)) > ops.max_jump_prob or float(
        np.max(p2, initial=0.0)
    ) > ops.max_jump_prob:
        raise RateOverflow(
            f"per-step jump probability exceeded {ops.max_jump_prob}; "
            f"use dt <= {ops.suggested_dt:.3e}",
            suggested_dt=ops.suggested_dt,
        )
    both = p1 * p2
    q1 = p1 * (1.0 - p2) / (1.0 - both)
    q2 = p2 * (1.0 - p1) / (1.0 - both)
    outcome = np.where(u < q1, 1, np.where(u < q1 + q2, 2, 0))

    new_rho, bad_drift = _project_lanes(
        rho + no_jump_drift(ops, rho) * ops.dt, ops.projection_tol
    )
    new_hat, bad_drift_h = _project_lanes(
        rho_hat + no_jump_drift(ops, rho_hat) * ops.dt, ops.projection_tol
    )
    # drift-projection failures only matter on no-jump lanes
    bad = (bad_drift | bad_drift_h) & (outcome == 0)

    def apply_jump(op, idx):
        sub = hermitize(op @ new_rho[idx] @ np.conj(op.T))
        sub_h = hermitize(op @ new_hat[idx] @ np.conj(op.T))
        tr = np.real(trace(sub))
        tr_h = np.real(trace(sub_h))
        deg = (tr <= ZERO_PROBABILITY) | (tr_h <= ZERO_PROBABILITY)
        new_rho[idx] = sub / np.where(tr == 0.0, 1.0, tr)[:, None, None]
        new_hat[idx] = sub_h / np.where(tr_h == 0.0, 1.0, tr_h)[:, None, None]
        bad[idx] |= deg

    for op, mask in ((ops.l_plus, outcome == 1), (ops.l_minus, outcome == 2)):
        idx = np.nonzero(mask)[0]
        if idx.size:
            # jumps replace the state: undo the drift applied above
            new_rho[idx] = rho[idx]
            new_hat[idx] = rho_hat[idx]
            apply_jump(op, idx)

    if scalar:
        return new_rho[0], new_hat[0], int(outcome[0]), bad[0]
    return new_rho, new_hat, outcome, bad


def jump_step(
    pair: TrajectoryPair,
    rng: np.random.Generator,
    cfg: JumpConfig,
    model: SystemModel,
) -> TrajectoryPair:
    """Advance the coupled pair one counting step with shared records.

    Counting increments are sampled from the TRUE state's intensities; a
    jump replaces the state by the corresponding normalized jump map, a
    no-jump step applies the Euler drift followed by domain projection.
    """
    ops = JumpOperators(model, cfg)
    ops.check_rate_bound()
    u = np.asarray(rng.uniform())
    rho, hat, _, bad = jump_core(pair.rho.data, pair.rho_hat.data, u, ops)
    if bool(np.any(bad)):
        raise DegenerateOutcome("jump step degenerated (zero-probability branch)")
    return TrajectoryPair(
        t=pair.t + cfg.dt,
        rho=project_to_density(rho),
        rho_hat=project_to_density(hat),
    )


def build_kraus_set(model: SystemModel, alpha: float, eps: float) -> KrausSet:
    """Three-outcome operators of the discretized counting model (unnormalized).

    M0 = 1 - (L†+a)(L+a) eps/4 - (L†-a)(L-a) eps/4 - i H eps,
    M1 = (L+a) sqrt(eps/2), M2 = (L-a) sqrt(eps/2); the completeness sum
    equals the identity up to O(eps^2).
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    L = _single_measured_channel(model)
    lp, lm = shifted(L, alpha), shifted(L, -alpha)
    eye = np.eye(model.dim, dtype=complex)
    m0 = (
        eye
        - 0.25 * (np.conj(lp.T) @ lp) * eps
        - 0.25 * (np.conj(lm.T) @ lm) * eps
        - 1j * model.hamiltonian * eps
    )
    m1 = lp * math.sqrt(eps / 2.0)
    m2 = lm * math.sqrt(eps / 2.0)
    return KrausSet(operators=(m0, m1, m2), normalized=False)


def normalize_kraus_set(kset: KrausSet) -> KrausSet:
    """Rescale the family so that the completeness sum is exactly the identity.

    With A the completeness sum, each operator is multiplied on the right
    by the inverse Hermitian square root of A, which makes
    sum_r M_r† M_r = A^{-1/2} A A^{-1/2} = identity.
    """
    acc = sum(np.conj(m.T) @ m for m in kset.operators)
    w, v = np.linalg.eigh(hermitize(acc))
    if float(w[0]) <= 1e-12:
        raise SingularNormalizer(f"normalizer eigenvalue {float(w[0]):.3e} too small")
    inv_root = (v / np.sqrt(w)) @ np.conj(v.T)
    return KrausSet(
        operators=tuple(m @ inv_root for m in kset.operators), normalized=True
    )


def chain_core(
    chi: np.ndarray,
    chi_hat: np.ndarray,
    u: np.ndarray,
    stacked: np.ndarray,
):
    """One normalized-chain step on batched pairs; one uniform per lane.

    ``stacked`` holds the normalized operators with shape (R, N, N).
    Outcome probabilities come from the TRUE state. Returns
    (chi, chi_hat, outcome, bad_mask).
    """
    probs = np.real(np.einsum("rij,...jk,rik->...r", stacked, chi, np.conj(stacked)))
    cum = np.cumsum(probs, axis=-1)
    outcome = np.minimum(
        np.sum(u[..., None] >= cum, axis=-1), stacked.shape[0] - 1
    )
    chosen = stacked[outcome]
    chosen_h = np.conj(np.swapaxes(chosen, -1, -2))
    new = hermitize(chosen @ chi @ chosen_h)
    new_h = hermitize(chosen @ chi_hat @ chosen_h)
    tr = np.real(trace(new))
    tr_h = np.real(trace(new_h))
    bad = (tr <= ZERO_PROBABILITY) | (tr_h <= ZERO_PROBABILITY)
    new = new / np.where(tr == 0.0, 1.0, tr)[..., None, None]
    new_h = new_h / np.where(tr_h == 0.0, 1.0, tr_h)[..., None, None]
    return new, new_h, outcome, bad


def chain_step(
    chi,
    chi_hat,
    rng: np.random.Generator,
    kset: KrausSet,
) -> tuple[DensityMatrix, DensityMatrix, int]:
    """Sample one outcome from the true state and update both states with it."""
    if not kset.normalized:
        raise ValidationError("chain_step requires a normalized Kraus set")
    c, ch = as_matrix(chi), as_matrix(chi_hat)
    stacked = np.stack(kset.operators)
    probs = np.real(np.einsum("rij,jk,rik->r", stacked, c, np.conj(stacked)))
    if abs(float(np.sum(probs)) - 1.0) > 1e-10:
        raise ValidationError(
            f"outcome probabilities sum to {float(np.sum(probs)):.12f}, not 1"
        )
    u = np.asarray(rng.uniform())
    new, new_h, outcome, bad = chain_core(c, ch, u, stacked)
    if bool(np.any(bad)):
        raise DegenerateOutcome(
            f"outcome {int(outcome)} annihilates the filter state"
        )
    return DensityMatrix(new), DensityMatrix(new_h), int(outcome)


def one_step_expected_fidelity(chi, chi_hat, kset: KrausSet) -> tuple[float, float]:
    """Exact conditional expectation of next-step fidelity vs the current one.

    Enumerates every outcome (no sampling): expected = sum_r P_r F(post_r
    of chi, post_r of chi_hat) with P_r taken from the true state.
    """
    if not kset.normalized:
        raise ValidationError("expected-fidelity enumeration requires a normalized set")
    c, ch = as_matrix(chi), as_matrix(chi_hat)
    current = fidelity(c, ch)
    expected = 0.0
    for m in kset.operators:
        post = m @ c @ np.conj(m.T)
        p = float(np.real(trace(post)))
        if p <= ZERO_PROBABILITY:
            continue
        post_h = m @ ch @ np.conj(m.T)
        p_h = float(np.real(trace(post_h)))
        if p_h <= ZERO_PROBABILITY:
            raise DegenerateOutcome("outcome with positive probability kills the filter")
        expected += p * fidelity(hermitize(post) / p, hermitize(post_h) / p_h)
    return expected, current


@dataclass(frozen=True)
class DiffusionLimitReport:
    """Jump-vs-diffusive ensemble gaps per oscillator amplitude and time."""

    alphas: tuple[float, ...]
    checkpoints: np.ndarray
    obs_gap: np.ndarray  # (n_alphas, n_checkpoints)
    fid_gap: np.ndarray
    stderr_obs: np.ndarray
    stderr_fid: np.ndarray
    trend_ok: bool

    def rows(self):
        for i, alpha in enumerate(self.alphas):
            for j, t in enumerate(self.checkpoints):
                yield (
                    alpha,
                    float(t),
                    float(self.obs_gap[i, j]),
                    float(self.fid_gap[i, j]),
                    float(self.stderr_obs[i, j]),
                    float(self.stderr_fid[i, j]),
                )


def _default_observable(dim: int) -> np.ndarray:
    obs = np.zeros((dim, dim), dtype=complex)
    obs[0, 0] = 1.0
    obs[1, 1] = -1.0
    return obs


def diffusion_limit_check(
    model: SystemModel,
    rho0,
    rho_hat0,
    alphas,
    dt: float,
    horizon: float,
    n_traj: int,
    seed: int,
    observable=None,
    max_jump_prob: float = 0.1,
    workers: int = 1,
) -> DiffusionLimitReport:
    """Compare counting ensembles against one diffusive ensemble per amplitude.

    For each alpha the counting model is run with the given dt and compared
    to the Wiener-driven reference of equal size at shared checkpoint times;
    reported gaps are distances between ensemble means of the observable
    expectation on the true state and between mean fidelities. The trend
    flag checks that both gaps at the final checkpoint decrease (within two
    combined standard errors) as alpha grows.
    """
    from .stats import EnsembleConfig, run_ensemble

    alphas = tuple(float(a) for a in alphas)
    if not alphas:
        raise ValidationError("need at least one alpha")
    L = _single_measured_channel(model)
    for alpha in alphas:
        bound = suggested_dt(L, alpha, max_jump_prob)
        if dt > bound:
            raise RateOverflow(
                f"dt={dt:g} violates the rate bound for alpha={alpha:g}; "
                f"use dt <= {bound:.3e}",
                suggested_dt=bound,
            )
    obs = _default_observable(model.dim) if observable is None else np.asarray(
        observable, dtype=complex
    )
    n_steps = int(round(horizon / dt))
    cp_steps = sorted({max(1, round(n_steps * f / 5)) for f in range(1, 6)})
    checkpoints = [k * dt for k in cp_steps]

    def cfg(driver):
        return EnsembleConfig(
            n_traj=n_traj,
            seed=seed,
            dt=dt,
            horizon=horizon,
            checkpoints=checkpoints,
            driver=driver,
        )

    reference = run_ensemble(
        model, rho0, rho_hat0, cfg("diffusive_kraus"),
        observable=obs, workers=workers, seed_path=(seed, 0),
    )
    n_cp = len(checkpoints)
    obs_gap = np.zeros((len(alphas), n_cp))
    fid_gap = np.zeros_like(obs_gap)
    se_obs = np.zeros_like(obs_gap)
    se_fid = np.zeros_like(obs_gap)
    for i, alpha in enumerate(alphas):
        jump_res = run_ensemble(
            model, rho0, rho_hat0, cfg("jump"),
            jump_cfg=JumpConfig(alpha=alpha, dt=dt, max_jump_prob=max_jump_prob),
            observable=obs, workers=workers, seed_path=(seed, 1 + i),
        )
        obs_gap[i] = np.abs(jump_res.obs_mean - reference.obs_mean)
        fid_gap[i] = np.abs(jump_res.mean_fidelity - reference.mean_fidelity)
        se_obs[i] = np.hypot(jump_res.obs_stderr, reference.obs_stderr)
        se_fid[i] = np.hypot(jump_res.stderr, reference.stderr)

    trend_ok = True
    for i in range(len(alphas) - 1):
        slack_obs = 2.0 * math.hypot(se_obs[i, -1], se_obs[i + 1, -1])
        slack_fid = 2.0 * math.hypot(se_fid[i, -1], se_fid[i + 1, -1])
        if obs_gap[i + 1, -1] > obs_gap[i, -1] + slack_obs:
            trend_ok = False
        if fid_gap[i + 1, -1] > fid_gap[i, -1] + slack_fid:
            trend_ok = False
    return DiffusionLimitReport(
        alphas=alphas,
        checkpoints=np.asarray(checkpoints),
        obs_gap=obs_gap,
        fid_gap=fid_gap,
        stderr_obs=se_obs,
        stderr_fid=se_fid,
        trend_ok=trend_ok,
    )
