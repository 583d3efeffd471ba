"""Dense complex linear algebra used throughout the package.

All functions accept either a single ``(N, N)`` matrix or a stack of shape
``(..., N, N)``; the stacked forms are what the path and propagator code use
on long grids.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrum, NotHermitian

HERMITIAN_RTOL = 1e-12
GAP_RTOL = 1e-9


def max_norm(a):
    """Entrywise max-abs norm over the last two axes."""
    a = np.asarray(a)
    return np.max(np.abs(a), axis=(-2, -1))


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def check_hermitian(H, rtol=HERMITIAN_RTOL):
    """Raise NotHermitian unless ``||H - H^+|| <= rtol * ||H||`` for every matrix in the stack."""
    H = np.asarray(H, dtype=complex)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise NotHermitian(f"expected square matrices, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise NotHermitian("matrix has non-finite entries")
    scale = np.maximum(max_norm(H), np.finfo(float).tiny)
    asym = max_norm(H - dagger(H))
    bad = asym > rtol * scale
    if np.any(bad):
        worst = float(np.max(asym / scale))
        raise NotHermitian(f"relative anti-Hermitian part {worst:.3e} exceeds {rtol:.1e}")
    return 0.5 * (H + dagger(H))


def canonical_phase(V):
    """Rotate each eigenvector column so its largest-magnitude entry is real positive."""
    V = np.asarray(V, dtype=complex)
    mags = np.abs(V)
    # near-ties (equal-magnitude entries) resolve to the first index, deterministically
    top = np.max(mags, axis=-2, keepdims=True)
    idx = np.argmax(mags >= top * (1.0 - 1e-10), axis=-2)
    pivot = np.take_along_axis(V, idx[..., None, :], axis=-2)
    return V * (np.conj(pivot) / np.abs(pivot))


@dataclass(frozen=True)
class HermitianEigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def residual(self, H):
        """Max over columns of ``||H v_n - E_n v_n||_inf``."""
        V, E = self.eigenvectors, self.eigenvalues
        return float(np.max(np.abs(H @ V - V * E)))

    def orthonormality_error(self):
        V = self.eigenvectors
        return float(np.max(np.abs(dagger(V) @ V - np.eye(V.shape[-1]))))

    def reconstruct(self):
        V, E = self.eigenvectors, self.eigenvalues
        return (V * E) @ dagger(V)


def eigh_batch(H, assert_nondegenerate=False, gap_floor=None, check=True):
    """Ascending eigenvalues and canonically phased eigenvectors of a Hermitian stack.

    Returns ``(E, V)`` with ``E.shape == H.shape[:-1]`` and eigenvectors in the
    columns of ``V``.
    """
    H = np.asarray(H, dtype=complex)
    if check:
        H = check_hermitian(H)
    E, V = np.linalg.eigh(H)
    V = canonical_phase(V)
    if assert_nondegenerate and E.shape[-1] > 1:
        floor = gap_floor
        if floor is None:
            floor = GAP_RTOL * max_norm(H)
        gaps = np.min(np.diff(E, axis=-1), axis=-1)
        bad = gaps <= floor
        if np.any(bad):
            raise DegenerateSpectrum(
                f"eigenvalue gap {float(np.min(gaps)):.3e} at or below floor"
            )
    return E, V


def hermitian_eigh(H, assert_nondegenerate=False, gap_floor=None):
    """Eigendecomposition of a single Hermitian matrix.

    Eigenvalues come back ascending; each eigenvector's largest-magnitude entry
    is real and positive. With ``assert_nondegenerate`` every consecutive gap
    must exceed ``gap_floor`` (default ``1e-9 * ||H||_inf``), otherwise
    DegenerateSpectrum is raised.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise NotHermitian(f"expected a single square matrix, got shape {H.shape}")
    E, V = eigh_batch(H, assert_nondegenerate, gap_floor)
    return HermitianEigenDecomposition(E, V)


def unitary_step(H, dt):
    """``exp(-i H dt)`` through the eigendecomposition of ``H``.

    ``dt`` may be a scalar or broadcast against the stack dimensions of ``H``.
    """
    H = check_hermitian(H)
    E, V = np.linalg.eigh(H)
    dt = np.asarray(dt, dtype=float)[..., None]
    phases = np.exp(-1j * E * dt)
    return (V * phases[..., None, :]) @ dagger(V)


def unitarity_error(U):
    """``max ||U^+ U - I||_inf`` over a stack."""
    U = np.asarray(U)
    n = U.shape[-1]
    return float(np.max(np.abs(dagger(U) @ U - np.eye(n))))
