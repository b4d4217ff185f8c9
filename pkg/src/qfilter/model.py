"""System specification and superoperators of the measurement dynamics.

A :class:`SystemModel` bundles the Hamiltonian with the measured channels
(each producing its own observation record) and the unmeasured dissipation
channels. The superoperators here are pure functions, broadcast over
leading batch axes of the state argument, and hermitize their output to
suppress rounding asymmetry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .densitymat import as_matrix, hermiticity_defect, hermitize, trace
from .exceptions import ShapeMismatch, ValidationError, ZeroProbabilityJump

HAMILTONIAN_HERMITICITY_TOL = 1e-12

SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class SystemModel:
    """Hamiltonian plus measured and unmeasured coupling channels (hbar = 1)."""

    hamiltonian: np.ndarray
    measured: tuple[np.ndarray, ...] = ()
    unmeasured: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ShapeMismatch(f"hamiltonian must be square, got {h.shape}")
        if h.shape[0] < 2:
            raise ShapeMismatch("system dimension must be >= 2")
        if hermiticity_defect(h) > HAMILTONIAN_HERMITICITY_TOL:
            raise ValidationError("hamiltonian is not Hermitian within 1e-12")
        h = h.copy()
        h.flags.writeable = False
        object.__setattr__(self, "hamiltonian", h)
        for name in ("measured", "unmeasured"):
            ops = []
            for op in getattr(self, name):
                a = np.asarray(op, dtype=complex)
                if a.shape != h.shape:
                    raise ShapeMismatch(
                        f"{name} channel shape {a.shape} does not match dimension {h.shape[0]}"
                    )
                a = a.copy()
                a.flags.writeable = False
                ops.append(a)
            object.__setattr__(self, name, tuple(ops))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_measured(self) -> int:
        return len(self.measured)

    @property
    def n_unmeasured(self) -> int:
        return len(self.unmeasured)


def paper_qubit() -> SystemModel:
    """Built-in two-level preset: sigma_y Hamiltonian, sigma_z measurement."""
    return SystemModel(hamiltonian=SIGMA_Y, measured=(SIGMA_Z,))


def shifted(L: np.ndarray, alpha: float) -> np.ndarray:
    """Operator L + alpha * identity (scalar shift on the diagonal)."""
    return L + alpha * np.eye(L.shape[0], dtype=complex)


def _check_shapes(L: np.ndarray, rho: np.ndarray):
    if L.shape != rho.shape[-2:]:
        raise ShapeMismatch(f"operator shape {L.shape} vs state shape {rho.shape[-2:]}")


def lindblad(L, rho) -> np.ndarray:
    """Dissipator L rho L† - (L†L rho + rho L†L)/2; traceless and Hermitian."""
    L = np.asarray(L, dtype=complex)
    r = as_matrix(rho)
    _check_shapes(L, r)
    ld = np.conj(L.T)
    ldl = ld @ L
    out = L @ r @ ld - 0.5 * (ldl @ r + r @ ldl)
    return hermitize(out)


def lambda_superop(L, rho) -> np.ndarray:
    """Measurement-backaction diffusion term L rho + rho L† - tr{(L+L†)rho} rho."""
    L = np.asarray(L, dtype=complex)
    r = as_matrix(rho)
    _check_shapes(L, r)
    expect = np.real(trace((L + np.conj(L.T)) @ r))
    out = L @ r + r @ np.conj(L.T) - expect[..., None, None] * r
    return hermitize(out)


def lambda_alpha(L, alpha: float, rho) -> np.ndarray:
    """Shifted diffusion term; coincides with lambda_superop on unit-trace states.

    (L+a) rho + rho (L†+a) - tr{(L+L†+2a) rho} rho with a = alpha * identity.
    """
    L = np.asarray(L, dtype=complex)
    r = as_matrix(rho)
    _check_shapes(L, r)
    ls = shifted(L, alpha)
    expect = np.real(trace((ls + np.conj(ls.T)) @ r))
    out = ls @ r + r @ np.conj(ls.T) - expect[..., None, None] * r
    return hermitize(out)


def upsilon_alpha(L, alpha: float, rho) -> np.ndarray:
    """Jump map increment (L+a) rho (L†+a)/tr{...} - rho for the homodyne model."""
    L = np.asarray(L, dtype=complex)
    r = as_matrix(rho)
    _check_shapes(L, r)
    ls = shifted(L, alpha)
    num = ls @ r @ np.conj(ls.T)
    denom = np.real(trace(num))
    if float(np.min(np.atleast_1d(denom))) <= 1e-15:
        raise ZeroProbabilityJump(
            f"jump normalization {float(np.min(np.atleast_1d(denom))):.3e} is not positive"
        )
    return hermitize(num / denom[..., None, None] - r)


def counting_compensator(L, alpha: float, rho) -> np.ndarray:
    """Deterministic drift balancing the mean effect of the +/-alpha jump pair.

    Equals -({K+, rho} + {K-, rho})/4 + (tr{K+ rho} + tr{K- rho}) rho / 2 with
    K± = (L†±a)(L±a); the alpha-dependent parts cancel identically on
    unit-trace states, leaving -{L†L, rho}/2 + tr{L†L rho} rho. Together with
    the jump terms this reproduces the dissipator in the mean.
    """
    L = np.asarray(L, dtype=complex)
    r = as_matrix(rho)
    _check_shapes(L, r)
    out = np.zeros_like(r)
    for sign in (alpha, -alpha):
        k = np.conj(shifted(L, sign).T) @ shifted(L, sign)
        expect = np.real(trace(k @ r))
        out = out - 0.25 * (k @ r + r @ k) + 0.5 * expect[..., None, None] * r
    return hermitize(out)


def hamiltonian_term(H, rho) -> np.ndarray:
    """Coherent drift -i[H, rho] (hbar = 1)."""
    H = np.asarray(H, dtype=complex)
    r = as_matrix(rho)
    _check_shapes(H, r)
    return hermitize(-1j * (H @ r - r @ H))


@dataclass(frozen=True)
class ModelArrays:
    """Precomputed operator products shared by the integrators."""

    dim: int
    hamiltonian: np.ndarray
    measured: tuple[np.ndarray, ...]
    unmeasured: tuple[np.ndarray, ...]
    measured_sum: tuple[np.ndarray, ...] = field(init=False)  # L + L† per channel
    quad_sum: np.ndarray = field(init=False)  # sum of L†L over measured channels
    quad_sum_unmeasured: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "measured_sum",
            tuple(L + np.conj(L.T) for L in self.measured),
        )
        eye = np.zeros((self.dim, self.dim), dtype=complex)
        quad = eye.copy()
        for L in self.measured:
            quad = quad + np.conj(L.T) @ L
        quad_u = eye.copy()
        for L in self.unmeasured:
            quad_u = quad_u + np.conj(L.T) @ L
        object.__setattr__(self, "quad_sum", quad)
        object.__setattr__(self, "quad_sum_unmeasured", quad_u)


def model_arrays(model: SystemModel) -> ModelArrays:
    return ModelArrays(
        dim=model.dim,
        hamiltonian=model.hamiltonian,
        measured=model.measured,
        unmeasured=model.unmeasured,
    )
