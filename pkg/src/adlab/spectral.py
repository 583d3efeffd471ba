"""Instantaneous spectra along the s-grid: continuous labels, gauges, couplings.

Conventions: ``tau[m, n, k] = <E_k(s_m)| d/ds E_n(s_m)>`` and
``gaps[m, n, k] = E_n(s_m) - E_k(s_m)``; level indices are 0-based in arrays
and 1-based in exported headers.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import linalg, models
from .errors import ContinuityLost, DegenerateSpectrum, GapTooSmall, MissingDerivative
from .grid import as_grid, cumtrapz, derivative
from .io import write_csv

FD = "finite-difference"
HF = "hellmann-feynman"
CONTINUITY_MIN = 0.5
PARALLEL_TOL = 1e-11
PARALLEL_CONTRACT = 1e-8


@dataclass(frozen=True)
class SpectralFrame:
    s: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    tau: Optional[np.ndarray]
    gaps: np.ndarray


@dataclass(frozen=True)
class SpectralPath:
    T: float
    grid: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    gauge: str = "raw"
    tau: Optional[np.ndarray] = None
    tau_method: str = FD
    derivs: Optional[np.ndarray] = None
    anchor: Optional[np.ndarray] = None
    label: str = ""

    @property
    def dim(self):
        return self.energies.shape[1]

    @property
    def gaps(self):
        return self.energies[:, :, None] - self.energies[:, None, :]

    def frame(self, j):
        return SpectralFrame(
            float(self.grid[j]),
            self.energies[j],
            self.vectors[j],
            None if self.tau is None else self.tau[j],
            self.gaps[j],
        )

    @property
    def frames(self):
        return [self.frame(j) for j in range(self.grid.size)]

    def off_diagonal_pairs(self):
        n = self.dim
        return [(a, b) for a in range(n) for b in range(n) if a != b]


def _greedy_match(weights):
    # weights[n, b]: |overlap| of label n with candidate column b
    n = weights.shape[0]
    w = weights.copy()
    out = np.empty(n, dtype=int)
    for _ in range(n):
        a, b = np.unravel_index(np.argmax(w), w.shape)
        out[a] = b
        w[a, :] = -1.0
        w[:, b] = -1.0
    return out


def _continuous_labels(V, first):
    # permutation per frame so label n follows its eigenvector; first = labels at s0
    M, N, _ = V.shape
    O = np.abs(linalg.dagger(V[:-1]) @ V[1:])
    perms = np.empty((M, N), dtype=int)
    perms[0] = first
    if N > 1 and np.all(np.argmax(O, axis=2) == np.arange(N)):
        diag = np.diagonal(O, axis1=1, axis2=2)
        if np.min(diag) < CONTINUITY_MIN:
            raise ContinuityLost(f"adjacent eigenvector overlap {np.min(diag):.3f} < 0.5")
        perms[1:] = first
        return perms
    for j in range(M - 1):
        cur = perms[j]
        nxt = _greedy_match(O[j][cur])
        best = O[j][cur, nxt]
        if np.min(best) < CONTINUITY_MIN:
            raise ContinuityLost(
                f"overlap {np.min(best):.3f} < 0.5 between s={j} and s={j + 1}; refine the grid"
            )
        perms[j + 1] = nxt
    return perms


def decompose_path(H, T, grid, anchor=None, gap_floor=None):
    """Eigenvalues and eigenvectors of H on ``grid`` with labels continued frame to frame.

    Labels at the first grid point are ascending in energy unless a reference
    basis is available (``anchor`` argument, the model's eigenbasis, or a grid
    Hamiltonian's anchor), in which case label n is the eigenvector closest to
    reference column n. Phases are left as the eigensolver produced them.
    """
    grid = as_grid(grid)
    mats, derivs = models.sample(H, T, grid)
    E, V = linalg.eigh_batch(mats, assert_nondegenerate=True, gap_floor=gap_floor, check=False)
    if anchor is None:
        if isinstance(H, models.GridHamiltonian):
            anchor = H.anchor
        elif H.eigenbasis is not None:
            anchor = H.anchor(grid[0], T)
    N = E.shape[1]
    if anchor is not None:
        anchor = np.asarray(anchor, dtype=complex)
        first = _greedy_match(np.abs(linalg.dagger(anchor) @ V[0]))
    else:
        first = np.arange(N)
    perms = _continuous_labels(V, first)
    rows = np.arange(grid.size)[:, None]
    E = E[rows, perms]
    V = np.take_along_axis(V, perms[:, None, :], axis=2)
    label = getattr(H, "label", "")
    return SpectralPath(float(T), grid, E, V, "raw", None, FD, derivs, anchor, label)


def _fd_tau(vectors, grid):
    dV = derivative(vectors, grid)
    return np.swapaxes(linalg.dagger(vectors) @ dV, 1, 2)


def _hf_tau(path):
    if path.derivs is None:
        raise MissingDerivative(f"no dH/ds available for {path.label or 'this path'}")
    V = path.vectors
    proj = linalg.dagger(V) @ path.derivs @ V  # proj[k, n] = <E_k|dH|E_n>
    g = path.gaps
    off = ~np.eye(path.dim, dtype=bool)
    if np.any(np.abs(g[:, off]) <= 0):
        raise DegenerateSpectrum("zero gap in Hellmann-Feynman coupling")
    tau = np.zeros_like(proj)
    tau[:, off] = np.swapaxes(proj, 1, 2)[:, off] / g[:, off]
    return tau


def coupling_matrix(path, method=FD):
    """Fill ``tau`` by central finite differences or by the Hellmann-Feynman identity.

    The Hellmann-Feynman route supplies off-diagonal elements only; its
    diagonal is taken from finite differences.
    """
    if path.grid.size < 3:
        raise ValueError("finite differences need at least 3 grid points")
    fd = _fd_tau(path.vectors, path.grid)
    if method == FD:
        tau = fd
    elif method == HF:
        tau = _hf_tau(path)
        idx = np.arange(path.dim)
        tau[:, idx, idx] = fd[:, idx, idx]
    else:
        raise ValueError(f"unknown coupling method {method!r}")
    return replace(path, tau=tau, tau_method=method)


def _phase(z):
    return z / np.maximum(np.abs(z), np.finfo(float).tiny)


def to_parallel_gauge(path, anchor=None, method=None):
    """Re-phase every eigenvector so that tau_nn vanishes along the path.

    The first frame keeps its phases, or takes them from ``anchor`` (or the
    path's stored anchor) so that <anchor_n|E_n(s0)> is real positive. Each
    later frame is rotated so adjacent overlaps are real positive, then the
    residual diagonal coupling is integrated out by the trapezoid rule. A path
    that is already parallel (|tau_nn| <= 1e-8) with an aligned anchor keeps
    its phases, so the operation is idempotent.
    """
    method = path.tau_method if method is None else method
    V = path.vectors.copy()
    anchor = path.anchor if anchor is None else np.asarray(anchor, dtype=complex)
    idx = np.arange(path.dim)
    aligned = True
    if anchor is not None:
        ov = np.einsum("in,in->n", np.conj(anchor), V[0])
        aligned = bool(np.all(np.abs(np.angle(ov)) <= PARALLEL_TOL))
        V[0] = V[0] * np.conj(_phase(ov))
    if aligned and np.max(np.abs(_fd_tau(V, path.grid)[:, idx, idx])) <= PARALLEL_CONTRACT:
        out = replace(path, vectors=V, gauge="parallel", anchor=anchor)
        return coupling_matrix(out, method)
    link = np.einsum("min,min->mn", np.conj(V[:-1]), V[1:])
    chi = np.zeros(path.energies.shape)
    chi[1:] = -np.cumsum(np.angle(link), axis=0)
    V = V * np.exp(1j * chi)[:, None, :]
    for _ in range(4):
        diag = _fd_tau(V, path.grid)[:, idx, idx]
        if np.max(np.abs(diag)) <= PARALLEL_TOL:
            break
        theta = -cumtrapz(diag.imag, path.grid)
        V = V * np.exp(1j * theta)[:, None, :]
    out = replace(path, vectors=V, gauge="parallel", anchor=anchor)
    return coupling_matrix(out, method)


def gauge_transform(path, theta, dtheta=None):
    """Multiply eigenvector n by exp(i Theta_n(s)) and transform tau accordingly.

    ``theta`` (and optionally its derivative) is an ``(M, N)`` array on the
    path grid or a callable of the grid returning one.
    """
    grid = path.grid
    th = np.asarray(theta(grid) if callable(theta) else theta, dtype=float)
    if th.shape != path.energies.shape:
        raise ValueError(f"Theta must have shape {path.energies.shape}, got {th.shape}")
    if dtheta is None:
        dth = derivative(th, grid)
    else:
        dth = np.asarray(dtheta(grid) if callable(dtheta) else dtheta, dtype=float)
    if path.tau is None:
        path = coupling_matrix(path, path.tau_method)
    ph = np.exp(1j * th)
    V = path.vectors * ph[:, None, :]
    tau = path.tau * ph[:, :, None] * np.conj(ph)[:, None, :]
    idx = np.arange(path.dim)
    tau[:, idx, idx] += 1j * dth
    return replace(path, vectors=V, tau=tau, gauge="custom")


def parallel_path(H, T, grid, method=FD, anchor=None):
    """decompose_path followed by to_parallel_gauge."""
    return to_parallel_gauge(decompose_path(H, T, grid, anchor=anchor), method=method)


def gap_floor_of(path):
    return linalg.GAP_RTOL * max(float(np.max(np.abs(path.energies))), np.finfo(float).tiny)


def adiabatic_ratios(path, gap_floor=None):
    """A_nk(s) = tau_nk(s) / g_nk(s) for n != k; the diagonal is left at zero."""
    if path.tau is None:
        raise ValueError("path has no coupling matrix; call coupling_matrix first")
    floor = gap_floor_of(path) if gap_floor is None else gap_floor
    off = ~np.eye(path.dim, dtype=bool)
    g = path.gaps
    if np.any(np.abs(g[:, off]) < floor):
        raise GapTooSmall(f"|g_nk| below gap floor {floor:.3e}")
    A = np.zeros_like(path.tau)
    A[:, off] = path.tau[:, off] / g[:, off]
    return A


def path_to_csv(path, filename):
    n = path.dim
    header = ["s"] + [f"E{i + 1}" for i in range(n)]
    cols = [path.grid] + [path.energies[:, i] for i in range(n)]
    tau = path.tau if path.tau is not None else np.full((path.grid.size, n, n), np.nan)
    for a in range(n):
        for b in range(n):
            header += [f"tau_re_{a + 1}_{b + 1}", f"tau_im_{a + 1}_{b + 1}"]
            cols += [tau[:, a, b].real, tau[:, a, b].imag]
    A = adiabatic_ratios(path) if path.tau is not None else np.full_like(tau, np.nan)
    for a, b in path.off_diagonal_pairs():
        header.append(f"A_abs_{a + 1}_{b + 1}")
        cols.append(np.abs(A[:, a, b]))
    write_csv(filename, header, cols)
