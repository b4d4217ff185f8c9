"""Density-matrix kernel: domain checks, Hermitian square roots, fidelity.

All spectral work uses Hermitian-specialized eigendecompositions
(``numpy.linalg.eigh``); matrices are small and dense. Functions accept
either a bare complex ndarray or a :class:`DensityMatrix` wrapper, and the
matrix-valued helpers broadcast over leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NotHermitian, NotPSD, ShapeMismatch, TooFarFromDomain

# Default eigenvalue clamping tolerances. One-step Kraus updates introduce
# O(dt^2) domain violations, so the projection tolerance is the looser one.
SQRT_CLAMP_TOL = 1e-10
PROJECT_TOL = 1e-8

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8


def hermitize(m: np.ndarray) -> np.ndarray:
    """Return (m + m†)/2, broadcasting over leading axes."""
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def trace(m: np.ndarray) -> np.ndarray:
    """Trace along the last two axes (complex)."""
    return np.einsum("...ii->...", m)


def hermiticity_defect(m: np.ndarray) -> float:
    """Largest entrywise deviation of m from its own conjugate transpose."""
    return float(np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2)))))


def as_matrix(state) -> np.ndarray:
    """Coerce a DensityMatrix or array-like to a complex ndarray."""
    if isinstance(state, DensityMatrix):
        return state.data
    return np.asarray(state, dtype=complex)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated quantum state: Hermitian, unit trace, positive semidefinite.

    Construction raises if the matrix violates any invariant beyond the
    stated tolerances; ``data`` is stored read-only.
    """

    data: np.ndarray
    hermiticity_tol: float = HERMITICITY_TOL
    trace_tol: float = TRACE_TOL
    psd_tol: float = PROJECT_TOL

    def __post_init__(self):
        m = np.asarray(self.data, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeMismatch(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] < 2:
            raise ShapeMismatch("density matrices must have dimension >= 2")
        if hermiticity_defect(m) > self.hermiticity_tol:
            raise NotHermitian(
                f"hermiticity defect {hermiticity_defect(m):.3e} exceeds "
                f"tolerance {self.hermiticity_tol:.3e}"
            )
        tr = trace(m)
        if abs(tr - 1.0) > self.trace_tol:
            raise TooFarFromDomain(f"trace {tr:.12g} differs from 1 beyond tolerance")
        lam_min = float(np.linalg.eigvalsh(hermitize(m))[0])
        if lam_min < -self.psd_tol:
            raise NotPSD(f"smallest eigenvalue {lam_min:.3e} below -{self.psd_tol:.3e}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "data", m)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def purity(self) -> float:
        return float(np.real(trace(self.data @ self.data)))


def hermitian_sqrt(m, clamp_tol: float = SQRT_CLAMP_TOL) -> np.ndarray:
    """Hermitian square root of a Hermitian PSD matrix.

    Eigenvalues in [-clamp_tol, 0) are clamped to zero before the root is
    taken; an eigenvalue below -clamp_tol raises NotPSD.
    """
    a = as_matrix(m)
    if hermiticity_defect(a) > HERMITICITY_TOL * max(1.0, float(np.max(np.abs(a)))):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    w, v = np.linalg.eigh(hermitize(a))
    if float(np.min(w)) < -clamp_tol:
        raise NotPSD(f"eigenvalue {float(np.min(w)):.3e} below -{clamp_tol:.3e}")
    root = (v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.conj(
        np.swapaxes(v, -1, -2)
    )
    return hermitize(root)


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity F(rho, sigma) = [tr sqrt(sqrt(rho) sigma sqrt(rho))]^2.

    Symmetric, valued in [0, 1]; equals tr(rho sigma) when either state is
    pure and vanishes exactly when the supports are orthogonal.
    """
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ShapeMismatch(f"state shapes differ: {a.shape} vs {b.shape}")
    return float(fidelity_many(a, b))


def fidelity_many(rho: np.ndarray, sigma: np.ndarray, clamp_tol: float = SQRT_CLAMP_TOL) -> np.ndarray:
    """Fidelity broadcast over leading batch axes of two state arrays."""
    w, v = np.linalg.eigh(hermitize(rho))
    w = np.clip(w, 0.0, None)
    vh = np.conj(np.swapaxes(v, -1, -2))
    root = (v * np.sqrt(w)[..., None, :]) @ vh
    inner = hermitize(root @ sigma @ root)
    lam = np.linalg.eigvalsh(inner)
    if float(np.min(lam)) < -clamp_tol:
        raise NotPSD("fidelity inner matrix has a significantly negative eigenvalue")
    lam = np.clip(lam, 0.0, None)
    return np.sum(np.sqrt(lam), axis=-1) ** 2


def frobenius_inner(rho, sigma) -> float:
    """Inner product tr(rho sigma) of two states; real in [0, 1]."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ShapeMismatch(f"state shapes differ: {a.shape} vs {b.shape}")
    return float(np.real(trace(a @ b)))


def project_to_density(m, tol: float = PROJECT_TOL, return_correction: bool = False):
    """Repair numerical drift: hermitize, clamp small negatives, renormalize.

    Raises TooFarFromDomain when an eigenvalue is below -tol or the trace
    deviates from 1 by more than tol. With ``return_correction=True`` the
    Frobenius norm of the applied change is returned alongside the state.
    """
    a = as_matrix(m)
    h = hermitize(a)
    tr = float(np.real(trace(h)))
    if abs(tr - 1.0) > tol:
        raise TooFarFromDomain(f"trace {tr:.12g} deviates from 1 by more than {tol:.3e}")
    w = np.linalg.eigvalsh(h)
    lam_min = float(w[0])
    if lam_min < -tol:
        raise TooFarFromDomain(f"eigenvalue {lam_min:.3e} below -{tol:.3e}")
    if lam_min >= 0.0 and abs(tr - 1.0) <= 8 * np.finfo(float).eps:
        out, correction = h, float(np.linalg.norm(h - a))
    else:
        w, v = np.linalg.eigh(h)
        w = np.clip(w, 0.0, None)
        w /= np.sum(w)
        out = hermitize((v * w[None, :]) @ np.conj(v.T))
        correction = float(np.linalg.norm(out - a))
    dm = DensityMatrix(out, psd_tol=tol)
    return (dm, correction) if return_correction else dm


def project_many(rho: np.ndarray, tol: float = PROJECT_TOL) -> np.ndarray:
    """Batched clamp-and-renormalize projection onto the density domain.

    Raises TooFarFromDomain if any batch member is beyond repair.
    """
    h = hermitize(rho)
    w, v = np.linalg.eigh(h)
    if float(np.min(w)) < -tol:
        raise TooFarFromDomain(f"eigenvalue {float(np.min(w)):.3e} below -{tol:.3e}")
    w = np.clip(w, 0.0, None)
    s = np.sum(w, axis=-1, keepdims=True)
    if float(np.min(np.abs(s))) < 0.5:
        raise TooFarFromDomain("trace collapsed during projection")
    w = w / s
    return hermitize((v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2)))


def random_density(dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Full-rank random mixed state from the Ginibre ensemble."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ np.conj(g.T)
    return DensityMatrix(m / np.real(trace(m)))


def random_pure(dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Rank-one random state (Haar direction)."""
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    return DensityMatrix(np.outer(psi, np.conj(psi)))


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim, dtype=complex) / dim)
