"""Wiener-driven trajectory integration of the coupled state/filter pair.

The true state and the filter share one measurement record: every step
draws the Wiener increments, forms the observation increments dy from the
TRUE state, and advances both states with the same dy. The default
integrator is the normalized one-step Kraus fraction, which keeps states
inside the density domain by construction for any realization; plain
Euler-Maruyama is retained as a cross-check and needs periodic projection.

Core routines broadcast over leading batch axes so that whole ensembles
advance in lockstep; the public single-pair operations wrap the same code.
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
from .exceptions import DegenerateNormalization, ShapeMismatch, ValidationError
from .model import SystemModel, lambda_superop, lindblad, model_arrays

SCHEMES = ("kraus", "euler_maruyama")

# A healthy step has Frobenius-small increment; reaching 1 means the
# expansion of the one-step Kraus operator is meaningless (dt too large).
MAX_STEP_INCREMENT = 1.0
MIN_STEP_NORM = 1e-15


@dataclass(frozen=True)
class TrajectoryPair:
    """Joint (t, true state, filter state) sharing one measurement record."""

    t: float
    rho: DensityMatrix
    rho_hat: DensityMatrix

    def __post_init__(self):
        if self.rho.dim != self.rho_hat.dim:
            raise ShapeMismatch("true state and filter state dimensions differ")


@dataclass(frozen=True)
class MeasurementRecord:
    """Observation increments per measured channel along one trajectory."""

    times: np.ndarray  # shape (n_steps + 1,), increasing
    dy: np.ndarray  # shape (n_steps, n_channels)

    def __post_init__(self):
        if self.dy.shape[0] != self.times.shape[0] - 1:
            raise ShapeMismatch("record length inconsistent with time grid")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    scheme: str = "kraus"
    domain_tol: float = 1e-8
    project_every: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}")
        if self.project_every < 1:
            raise ValidationError("project_every must be >= 1")


class StepOperators:
    """Per-(model, dt) matrices reused by every integration step."""

    def __init__(self, model: SystemModel, dt: float):
        arrs = model_arrays(model)
        self.dim = arrs.dim
        self.dt = dt
        self.hamiltonian = arrs.hamiltonian
        self.measured = np.array(arrs.measured).reshape(-1, arrs.dim, arrs.dim)
        self.measured_sum = np.array(arrs.measured_sum).reshape(-1, arrs.dim, arrs.dim)
        self.unmeasured = np.array(arrs.unmeasured).reshape(-1, arrs.dim, arrs.dim)
        self.eye = np.eye(arrs.dim, dtype=complex)
        self.det_part = (
            self.eye
            - 1j * arrs.hamiltonian * dt
            - 0.5 * (arrs.quad_sum + arrs.quad_sum_unmeasured) * dt
        )
        self.n_channels = self.measured.shape[0]


def sample_wiener(rng: np.random.Generator, dt: float) -> float:
    """One Wiener increment: centered Gaussian with standard deviation sqrt(dt)."""
    if dt <= 0:
        raise ValidationError("dt must be positive")
    return float(rng.normal(scale=math.sqrt(dt)))


def measurement_increment(rho, L, dW: float, dt: float) -> float:
    """Observation increment dy = tr{(L+L†) rho} dt + dW."""
    r = as_matrix(rho)
    L = np.asarray(L, dtype=complex)
    return float(np.real(trace((L + np.conj(L.T)) @ r))) * dt + dW


def expected_increments(rho: np.ndarray, ops: StepOperators) -> np.ndarray:
    """tr{(L+L†) rho} per measured channel, batched; shape (..., m)."""
    return np.real(np.einsum("...ij,mji->...m", rho, ops.measured_sum))


def kraus_core(rho: np.ndarray, dys: np.ndarray, ops: StepOperators):
    """One normalized-Kraus step on a (possibly batched) state array.

    Returns (new_state, denominator, squared_increment_norm); callers decide
    how to treat degenerate lanes.
    """
    m = ops.det_part + np.einsum("...m,mij->...ij", dys, ops.measured)
    num = m @ rho @ np.conj(np.swapaxes(m, -1, -2))
    if ops.unmeasured.shape[0]:
        num = num + np.einsum(
            "vij,...jk,vlk->...il", ops.unmeasured, rho, np.conj(ops.unmeasured)
        ) * ops.dt
    denom = np.real(trace(num))
    eye = np.eye(ops.dim, dtype=complex)
    dm = m - eye
    inc_sq = np.real(np.einsum("...ij,...ij->...", dm, np.conj(dm)))
    out = hermitize(num) / np.where(denom == 0.0, 1.0, denom)[..., None, None]
    return out, denom, inc_sq


def em_core(rho: np.ndarray, increments: np.ndarray, ops: StepOperators) -> np.ndarray:
    """Euler-Maruyama update rho + drift dt + sum_mu Lambda_mu(rho) inc_mu (raw)."""
    h = ops.hamiltonian
    drift = -1j * (h @ rho - rho @ h)
    for stack in (ops.measured, ops.unmeasured):
        for i in range(stack.shape[0]):
            drift = drift + lindblad(stack[i], rho)
    out = rho + drift * ops.dt
    for mu in range(ops.n_channels):
        out = out + lambda_superop(ops.measured[mu], rho) * increments[..., mu, None, None]
    return out


def _as_channel_vector(value, n_channels: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape != (n_channels,):
        raise ShapeMismatch(
            f"expected {n_channels} per-channel increments, got shape {arr.shape}"
        )
    return arr


def kraus_step(state, dy, dt: float, model: SystemModel) -> DensityMatrix:
    """Advance one state by the normalized Kraus fraction with record dy.

    Output is Hermitian, PSD and unit-trace up to rounding for any dy.
    Raises DegenerateNormalization when the denominator underflows or the
    one-step increment is not small (dt too large for the scheme).
    """
    ops = StepOperators(model, dt)
    r = as_matrix(state)
    dys = _as_channel_vector(dy, ops.n_channels)
    out, denom, inc_sq = kraus_core(r, dys, ops)
    if float(denom) <= MIN_STEP_NORM:
        raise DegenerateNormalization(f"step denominator {float(denom):.3e} underflowed")
    if float(inc_sq) >= MAX_STEP_INCREMENT**2:
        raise DegenerateNormalization(
            f"one-step increment norm {math.sqrt(float(inc_sq)):.3f} >= 1; "
            "reduce dt"
        )
    return DensityMatrix(out)


def em_step(
    state,
    dW,
    dt: float,
    model: SystemModel,
    use_filter_form: bool = False,
    dy_external=None,
) -> np.ndarray:
    """One Euler-Maruyama step; returns a raw matrix, not guaranteed in domain.

    The true-state form is driven directly by the Wiener increments dW; the
    filter form is driven by an external record dy through the innovation
    dy - tr{(L+L†) state} dt and ignores dW.
    """
    ops = StepOperators(model, dt)
    r = as_matrix(state)
    if use_filter_form:
        if dy_external is None:
            raise ValidationError("filter form requires dy_external")
        dys = _as_channel_vector(dy_external, ops.n_channels)
        increments = dys - expected_increments(r, ops) * dt
    else:
        increments = _as_channel_vector(dW, ops.n_channels)
    return em_core(r, increments, ops)


def coupled_step(
    pair: TrajectoryPair,
    rng: np.random.Generator,
    cfg: IntegratorConfig,
    model: SystemModel,
) -> TrajectoryPair:
    """Advance the pair one step, filter consuming the true state's record.

    Draws one Wiener increment per measured channel, forms dy from the true
    state, then advances both states with the same dy. Both outputs are
    valid density matrices (the Euler-Maruyama scheme is projected).
    """
    ops = StepOperators(model, cfg.dt)
    rho = pair.rho.data
    rho_hat = pair.rho_hat.data
    dW = np.array([sample_wiener(rng, cfg.dt) for _ in range(ops.n_channels)])
    dys = expected_increments(rho, ops) * cfg.dt + dW
    if cfg.scheme == "kraus":
        new_rho = kraus_step(rho, dys, cfg.dt, model)
        new_hat = kraus_step(rho_hat, dys, cfg.dt, model)
    else:
        raw_rho = em_core(rho, dW, ops)
        raw_hat = em_core(rho_hat, dys - expected_increments(rho_hat, ops) * cfg.dt, ops)
        new_rho = project_to_density(raw_rho, cfg.domain_tol)
        new_hat = project_to_density(raw_hat, cfg.domain_tol)
    return TrajectoryPair(t=pair.t + cfg.dt, rho=new_rho, rho_hat=new_hat)


@dataclass(frozen=True)
class TrajectoryTable:
    """Per-step diagnostics of one coupled trajectory (for CSV dumps)."""

    times: np.ndarray
    fidelity: np.ndarray
    tr_rho: np.ndarray
    lambda_min_rho: np.ndarray
    purity_rho: np.ndarray
    purity_rho_hat: np.ndarray
    dy: np.ndarray  # (n_steps, n_channels); row k feeds the step ending at times[k+1]


def simulate_pair(
    model: SystemModel,
    rho0,
    rho_hat0,
    cfg: IntegratorConfig,
    n_steps: int,
    rng: np.random.Generator,
) -> tuple[TrajectoryPair, MeasurementRecord, TrajectoryTable]:
    """Integrate one coupled trajectory, keeping the record and diagnostics."""
    ops = StepOperators(model, cfg.dt)
    rho = as_matrix(rho0)
    rho_hat = as_matrix(rho_hat0)
    m = ops.n_channels
    times = np.arange(n_steps + 1) * cfg.dt
    dy_hist = np.zeros((n_steps, m))
    fid = np.zeros(n_steps + 1)
    tr_rho = np.zeros(n_steps + 1)
    lam_min = np.zeros(n_steps + 1)
    pur = np.zeros(n_steps + 1)
    pur_hat = np.zeros(n_steps + 1)

    def observe(k, a, b):
        fid[k] = fidelity(a, b)
        tr_rho[k] = float(np.real(trace(a)))
        lam_min[k] = float(np.linalg.eigvalsh(hermitize(a))[0])
        pur[k] = float(np.real(trace(a @ a)))
        pur_hat[k] = float(np.real(trace(b @ b)))

    observe(0, rho, rho_hat)
    sqrt_dt = math.sqrt(cfg.dt)
    for k in range(n_steps):
        dW = rng.normal(scale=sqrt_dt, size=m)
        dys = expected_increments(rho, ops) * cfg.dt + dW
        dy_hist[k] = dys
        if cfg.scheme == "kraus":
            out, denom, inc_sq = kraus_core(rho, dys, ops)
            out_h, denom_h, _ = kraus_core(rho_hat, dys, ops)
            if min(float(denom), float(denom_h)) <= MIN_STEP_NORM:
                raise DegenerateNormalization(f"denominator underflow at step {k}")
            if float(inc_sq) >= MAX_STEP_INCREMENT**2:
                raise DegenerateNormalization(f"step increment too large at step {k}")
            rho, rho_hat = out, out_h
        else:
            raw = em_core(rho, dW, ops)
            raw_h = em_core(rho_hat, dys - expected_increments(rho_hat, ops) * cfg.dt, ops)
            if (k + 1) % cfg.project_every == 0:
                rho = project_to_density(raw, cfg.domain_tol).data
                rho_hat = project_to_density(raw_h, cfg.domain_tol).data
            else:
                rho, rho_hat = raw, raw_h
        observe(k + 1, rho, rho_hat)

    final = TrajectoryPair(
        t=float(times[-1]),
        rho=project_to_density(rho, cfg.domain_tol),
        rho_hat=project_to_density(rho_hat, cfg.domain_tol),
    )
    record = MeasurementRecord(times=times, dy=dy_hist)
    table = TrajectoryTable(
        times=times,
        fidelity=fid,
        tr_rho=tr_rho,
        lambda_min_rho=lam_min,
        purity_rho=pur,
        purity_rho_hat=pur_hat,
        dy=dy_hist,
    )
    return final, record, table
