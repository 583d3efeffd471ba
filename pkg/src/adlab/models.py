"""Hamiltonian models: the rotating spin-half, its chirped variant, tabulated
grids, the exact dual construction and the first-order analytic dual."""

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .errors import (
    DegenerateSpectrum,
    GridMismatch,
    InsufficientSamples,
    PropagationFailed,
    RegimeViolation,
)
from .grid import as_grid, nearest_index, same_grid

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class DrivenHamiltonian:
    """H(s, T) as a vectorised callable.

    ``fn(s, T)`` takes a 1-d array of normalized times and returns an
    ``(M, N, N)`` stack. ``deriv`` has the same signature and returns dH/ds.
    ``eigenbasis`` optionally returns reference eigenvectors (columns, ordered
    by ascending energy); paths use it at the first grid point to fix labels
    and phases.
    """

    dim: int
    fn: Callable
    deriv: Optional[Callable] = None
    label: str = ""
    eigenbasis: Optional[Callable] = None
    t_independent: bool = False

    def eval(self, s, T):
        scalar = np.ndim(s) == 0
        out = self.fn(np.atleast_1d(np.asarray(s, dtype=float)), T)
        return out[0] if scalar else out

    def eval_deriv(self, s, T):
        if self.deriv is None:
            return None
        scalar = np.ndim(s) == 0
        out = self.deriv(np.atleast_1d(np.asarray(s, dtype=float)), T)
        return out[0] if scalar else out

    def anchor(self, s, T):
        if self.eigenbasis is None:
            return None
        return self.eigenbasis(np.atleast_1d(float(s)), T)[0]


@dataclass(frozen=True)
class GridHamiltonian:
    """Hermitian matrices tabulated on an ascending s-grid, built at a fixed T."""

    grid: np.ndarray
    matrices: np.ndarray
    T: float
    derivs: Optional[np.ndarray] = None
    anchor: Optional[np.ndarray] = None
    label: str = ""
    propagator: Optional[object] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        grid = as_grid(self.grid)
        mats = np.asarray(self.matrices, dtype=complex)
        if mats.ndim != 3 or mats.shape[0] != grid.size or mats.shape[1] != mats.shape[2]:
            raise GridMismatch(
                f"need one square matrix per grid point, got {mats.shape} for {grid.size} points"
            )
        mats = linalg.check_hermitian(mats)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "matrices", mats)

    @property
    def dim(self):
        return self.matrices.shape[-1]

    def lookup(self, s):
        """Nearest-grid-point value and the cell width as its error bound."""
        idx = nearest_index(self.grid, s)
        width = float(np.max(np.diff(self.grid)))
        return self.matrices[idx], width

    def to_json(self):
        mats = [
            [[[float(z.real), float(z.imag)] for z in row] for row in m] for m in self.matrices
        ]
        return {"grid": [float(x) for x in self.grid], "matrices": mats, "T": float(self.T)}

    @classmethod
    def from_json(cls, data, label="grid_file"):
        try:
            grid = np.asarray(data["grid"], dtype=float)
            raw = np.asarray(data["matrices"], dtype=float)
            T = float(data["T"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad grid Hamiltonian document: {exc}") from exc
        if raw.ndim != 4 or raw.shape[-1] != 2:
            raise ValueError("matrices must be nested [[[re, im], ...], ...] per grid point")
        return cls(grid, raw[..., 0] + 1j * raw[..., 1], T, label=label)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh), label=f"grid_file({path})")


@dataclass(frozen=True)
class RotatingSpinParams:
    omega0: float
    T: float

    def __post_init__(self):
        if not (self.omega0 > 0 and self.T > 0):
            raise ValueError("omega0 and T must be positive")

    @property
    def omega(self):
        return 2 * np.pi / self.T

    @property
    def adiabatic(self):
        return self.omega < 0.1 * self.omega0

    @classmethod
    def from_omega(cls, omega0, omega):
        return cls(omega0, 2 * np.pi / omega)


def _field_in_plane(omega0, angle, rate=None):
    # -(w0/2) [[0, e^{-i a}], [e^{i a}, 0]] and, given da/ds, its s-derivative
    m = np.zeros(angle.shape + (2, 2), dtype=complex)
    m[:, 0, 1] = np.exp(-1j * angle)
    m[:, 1, 0] = np.exp(1j * angle)
    if rate is None:
        return -0.5 * omega0 * m
    d = np.zeros_like(m)
    d[:, 0, 1] = -1j * rate * m[:, 0, 1]
    d[:, 1, 0] = 1j * rate * m[:, 1, 0]
    return -0.5 * omega0 * d


def _in_plane_spinors(angle):
    # parallel-transported eigenvectors, ascending energy: (-w0/2, +w0/2)
    a = np.exp(-0.5j * angle) / np.sqrt(2)
    b = np.exp(0.5j * angle) / np.sqrt(2)
    V = np.empty(angle.shape + (2, 2), dtype=complex)
    V[:, 0, 0], V[:, 1, 0] = a, b
    V[:, 0, 1], V[:, 1, 1] = a, -b
    return V


def rotating_spin(params):
    """Spin-half in a field of fixed magnitude rotating once over the run (omega t = 2 pi s).

    The matrix contains no T, so the same callable serves every total time;
    ``params.T`` only records the identification T = 2 pi / omega.
    """
    omega0 = float(params.omega0)

    def fn(s, T):
        return _field_in_plane(omega0, 2 * np.pi * s)

    def deriv(s, T):
        return _field_in_plane(omega0, 2 * np.pi * s, rate=2 * np.pi * np.ones_like(s))

    def basis(s, T):
        return _in_plane_spinors(2 * np.pi * s)

    return DrivenHamiltonian(2, fn, deriv, f"rotating_spin(omega0={omega0:g})", basis, True)


def chirped_spin(omega0, exponent=2.0, scale=np.pi):
    """Rotating field with a chirped angle 2 pi theta(s), theta(s) = scale * s**exponent."""
    omega0, exponent, scale = float(omega0), float(exponent), float(scale)
    if omega0 <= 0:
        raise ValueError("omega0 must be positive")

    def angle(s):
        return 2 * np.pi * scale * s**exponent

    def rate(s):
        return 2 * np.pi * scale * exponent * s ** (exponent - 1)

    def fn(s, T):
        return _field_in_plane(omega0, angle(s))

    def deriv(s, T):
        return _field_in_plane(omega0, angle(s), rate=rate(s))

    def basis(s, T):
        return _in_plane_spinors(angle(s))

    label = f"chirped_spin(omega0={omega0:g}, exponent={exponent:g})"
    return DrivenHamiltonian(2, fn, deriv, label, basis, True)


def constant(H, label="constant"):
    H = linalg.check_hermitian(np.asarray(H, dtype=complex))
    n = H.shape[0]

    def fn(s, T):
        return np.broadcast_to(H, (len(s), n, n)).copy()

    def deriv(s, T):
        return np.zeros((len(s), n, n), dtype=complex)

    return DrivenHamiltonian(n, fn, deriv, label, None, True)


def sample(H, T, grid):
    """Matrices (and derivatives, if known) of a Driven or Grid Hamiltonian on ``grid``."""
    grid = as_grid(grid)
    if isinstance(H, GridHamiltonian):
        if not same_grid(H.grid, grid):
            raise GridMismatch("grid Hamiltonian sampled off its own grid")
        return H.matrices, H.derivs
    mats = linalg.check_hermitian(H.eval(grid, T))
    derivs = H.eval_deriv(grid, T) if H.deriv is not None else None
    return mats, derivs


def _reference_basis(base, T, grid, mats0):
    if isinstance(base, GridHamiltonian):
        if base.anchor is not None:
            return base.anchor
    elif base.eigenbasis is not None:
        return base.anchor(grid[0], T)
    return linalg.eigh_batch(mats0)[1]


def build_dual(base, T, grid, propagator):
    """Materialize H^b(s) = -U^a(s)^+ H^a(s) U^a(s) on ``grid``.

    ``propagator`` is either a PropagatorTrace for ``base`` on the same grid or a
    callable ``(H, T, grid) -> PropagatorTrace``. The result carries the
    base's s=0 eigenvectors as its labelling anchor, the exact derivative
    -U^+ (dH^a/ds) U when the base has one, and the b-system propagator U^a^+.
    """
    from .evolve import PropagatorTrace, dual_propagator

    grid = as_grid(grid)
    trace = propagator if isinstance(propagator, PropagatorTrace) else propagator(base, T, grid)
    if not same_grid(trace.grid, grid) or abs(trace.T - T) > 1e-12 * max(T, 1.0):
        raise PropagationFailed("propagator trace does not match the requested grid/T")
    Ha, dHa = sample(base, T, grid)
    U = trace.U
    Ud = linalg.dagger(U)
    Hb = -(Ud @ Ha @ U)
    Hb = 0.5 * (Hb + linalg.dagger(Hb))
    dHb = -(Ud @ dHa @ U) if dHa is not None else None

    Ea = np.linalg.eigvalsh(Ha)
    Eb = np.linalg.eigvalsh(Hb)
    if Ea.shape[-1] > 1 and np.min(np.diff(Ea, axis=-1)) <= linalg.GAP_RTOL * np.max(np.abs(Ha)):
        raise DegenerateSpectrum("base Hamiltonian is degenerate on the grid")
    mismatch = float(np.max(np.abs(Eb + Ea[:, ::-1])))
    if mismatch > 1e-8 * max(float(np.max(np.abs(Ea))), 1.0):
        raise PropagationFailed(f"dual spectrum is not the negated base spectrum ({mismatch:.2e})")

    anchor = _reference_basis(base, T, grid, Ha[:1])
    anchor = Ud[0] @ anchor
    label = f"dual_of({getattr(base, 'label', '')})"
    return GridHamiltonian(grid, Hb, T, dHb, anchor, label, dual_propagator(trace))


def dual_first_order(params):
    """First-order (in omega/omega0) analytic dual of the rotating spin, constant shift included.

    eval(s, T) = omega/2 + (omega0/2) sz - (omega/2) [[cos x, i sin x], [-i sin x, -cos x]],
    x = omega0 T s, with omega = 2 pi / T taken from the T argument.
    """
    omega0 = float(params.omega0)
    if params.omega / omega0 >= 0.1:
        raise RegimeViolation(f"omega/omega0 = {params.omega / omega0:.3g} >= 0.1")

    def fn(s, T):
        omega = 2 * np.pi / T
        if omega / omega0 >= 0.1:
            raise RegimeViolation(f"omega/omega0 = {omega / omega0:.3g} >= 0.1")
        x = omega0 * T * s
        c, sn = np.cos(x), np.sin(x)
        rot = np.zeros(s.shape + (2, 2), dtype=complex)
        rot[:, 0, 0], rot[:, 1, 1] = c, -c
        rot[:, 0, 1], rot[:, 1, 0] = 1j * sn, -1j * sn
        return 0.5 * omega * np.eye(2) + 0.5 * omega0 * SIGMA_Z - 0.5 * omega * rot

    return DrivenHamiltonian(2, fn, None, f"dual_first_order(omega0={omega0:g})")


def probe_T_dependence(H, s_samples, T_samples):
    """Largest entrywise change of H(s, T) between any two sampled T at equal s.

    ``H`` is a DrivenHamiltonian or a mapping ``{T: GridHamiltonian}``; grid
    families are read at the grid point nearest each sample.
    """
    s_samples = np.atleast_1d(np.asarray(s_samples, dtype=float))
    Ts = sorted(set(float(t) for t in T_samples))
    if len(Ts) < 2 or s_samples.size == 0:
        raise InsufficientSamples("need at least two distinct T values and one s sample")
    if isinstance(H, dict):
        fam = {float(k): v for k, v in H.items()}
        missing = [t for t in Ts if t not in fam]
        if missing:
            raise InsufficientSamples(f"no grid for T in {missing}")
        vals = [fam[t].lookup(s_samples)[0] for t in Ts]
    else:
        vals = [H.eval(s_samples, t) for t in Ts]
    worst = 0.0
    for i in range(len(Ts)):
        for j in range(i + 1, len(Ts)):
            worst = max(worst, float(np.max(np.abs(vals[i] - vals[j]))))
    return worst
