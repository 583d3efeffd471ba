"""Time-ordered propagation in normalized time and projections onto eigenbases.

The integrator is the exponential midpoint rule: each cell of the output grid
is advanced by ``exp(-i T H(mid) ds)``. ``substeps`` splits every cell into
that many midpoint steps; only the grid-point values are kept.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import GridMismatch, NonUnitaryDrift, StepTooCoarse
from .grid import as_grid, cumtrapz, is_uniform, same_grid
from .io import write_csv
from .models import GridHamiltonian

STEP_PHASE_LIMIT = 0.1
UNITARITY_TOL = 1e-10
_CHUNK = 1 << 16


@dataclass(frozen=True)
class PropagatorTrace:
    T: float
    grid: np.ndarray
    U: np.ndarray

    def unitarity_error(self):
        return linalg.unitarity_error(self.U)

    def to_json(self):
        # same layout as a GridHamiltonian document
        mats = [[[[float(z.real), float(z.imag)] for z in row] for row in m] for m in self.U]
        return {"grid": [float(x) for x in self.grid], "matrices": mats, "T": float(self.T)}

    @classmethod
    def from_json(cls, data):
        raw = np.asarray(data["matrices"], dtype=float)
        return cls(float(data["T"]), np.asarray(data["grid"], dtype=float), raw[..., 0] + 1j * raw[..., 1])


@dataclass(frozen=True)
class StateTrace:
    grid: np.ndarray
    psi: np.ndarray

    def norm_error(self):
        return float(np.max(np.abs(np.linalg.norm(self.psi, axis=1) - 1.0)))


@dataclass(frozen=True)
class AmplitudeTrace:
    grid: np.ndarray
    phi: np.ndarray

    def total_probability(self):
        return np.sum(np.abs(self.phi) ** 2, axis=1)


def _midpoint_hamiltonians(H, T, grid, lo, hi, substeps):
    # Hamiltonians at the substep midpoints of cells lo..hi-1, shape (cells, substeps, N, N)
    frac = (np.arange(substeps) + 0.5) / substeps
    if isinstance(H, GridHamiltonian):
        a = H.matrices[lo:hi][:, None]
        b = H.matrices[lo + 1:hi + 1][:, None]
        f = frac[None, :, None, None]
        return (1 - f) * a + f * b
    left = grid[lo:hi]
    width = grid[lo + 1:hi + 1] - left
    s = (left[:, None] + width[:, None] * frac[None, :]).ravel()
    mats = H.eval(s, T)
    n = mats.shape[-1]
    return mats.reshape(hi - lo, substeps, n, n)


def _reduce_substeps(steps):
    # steps (cells, S, N, N) -> per-cell product steps[S-1] @ ... @ steps[0]
    while steps.shape[1] > 1:
        if steps.shape[1] % 2:
            head = steps[:, :1]
            rest = steps[:, 1:]
            rest = rest[:, 1::2] @ rest[:, 0::2]
            rest[:, :1] = rest[:, :1] @ head
            steps = rest
        else:
            steps = steps[:, 1::2] @ steps[:, 0::2]
    return steps[:, 0]


def _nearest_unitary(U):
    # polar projection; removes roundoff accumulated over many substep products
    W, _, Vh = np.linalg.svd(U)
    return W @ Vh


def _prefix_products(cells):
    # C[i] = cells[i] @ cells[i-1] @ ... @ cells[0] (Hillis-Steele scan)
    C = cells.copy()
    d = 1
    while d < C.shape[0]:
        C[d:] = C[d:] @ C[:-d]
        d *= 2
    return C


def propagate(H, T, grid, psi0, substeps=1, check_step=True):
    """Propagate ``i d/ds psi = T H(s) psi`` over ``grid``.

    Returns ``(PropagatorTrace, StateTrace)`` with ``U(grid[0]) = I``. Raises
    StepTooCoarse when ``T * ||H||_inf * ds / substeps`` exceeds 0.1 and
    NonUnitaryDrift if any ``U`` drifts from unitarity by more than 1e-10.
    """
    grid = as_grid(grid)
    if not is_uniform(grid):
        raise GridMismatch("propagation requires a uniform grid")
    if isinstance(H, GridHamiltonian) and not same_grid(H.grid, grid):
        raise GridMismatch("grid Hamiltonian must be propagated on its own grid")
    substeps = int(substeps)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
        raise ValueError("initial state must be normalized")

    ncell = grid.size - 1
    ds = (grid[-1] - grid[0]) / ncell / substeps
    chunk = max(1, _CHUNK // substeps)
    cells = []
    hmax = 0.0
    for lo in range(0, ncell, chunk):
        hi = min(ncell, lo + chunk)
        mids = linalg.check_hermitian(_midpoint_hamiltonians(H, T, grid, lo, hi, substeps))
        hmax = max(hmax, float(np.max(np.abs(mids))))
        if check_step and T * hmax * ds > STEP_PHASE_LIMIT:
            raise StepTooCoarse(
                f"T*||H||*ds = {T * hmax * ds:.3g} > {STEP_PHASE_LIMIT}; "
                f"use at least {int(np.ceil(T * hmax / STEP_PHASE_LIMIT))} steps"
            )
        cell = _reduce_substeps(linalg.unitary_step(mids, T * ds))
        cells.append(_nearest_unitary(cell) if substeps > 1 else cell)
    cells = np.concatenate(cells)
    n = cells.shape[-1]
    U = np.empty((grid.size, n, n), dtype=complex)
    U[0] = np.eye(n)
    U[1:] = _prefix_products(cells)
    drift = linalg.unitarity_error(U)
    if drift > UNITARITY_TOL:
        raise NonUnitaryDrift(f"unitarity drift {drift:.2e}")
    trace = PropagatorTrace(float(T), grid, U)
    return trace, StateTrace(grid, U @ psi0)


def propagator(H, T, grid, substeps=1):
    """Callable form for :func:`adlab.models.build_dual`."""
    n = H.dim
    e0 = np.zeros(n, dtype=complex)
    e0[0] = 1.0
    return propagate(H, T, grid, e0, substeps=substeps)[0]


def dual_propagator(Ua):
    """U^b(s) = U^a(s)^+ at every grid point."""
    return PropagatorTrace(Ua.T, Ua.grid, linalg.dagger(Ua.U))


def evolve_state(trace, psi0):
    psi0 = np.asarray(psi0, dtype=complex)
    return StateTrace(trace.grid, trace.U @ psi0)


def _check_same(state, path):
    if not same_grid(state.grid, path.grid):
        raise GridMismatch("state and spectral path live on different grids")


def overlaps(state, path):
    """<E_n(s)|psi(s)> for every level, shape (M, N)."""
    _check_same(state, path)
    return np.einsum("mij,mi->mj", np.conj(path.vectors), state.psi)


def amplitudes(state, path, T=None):
    """Rotating-frame amplitudes phi_n(s) = exp(+i T int_0^s E_n) <E_n(s)|psi(s)>."""
    if path.gauge != "parallel":
        raise ValueError("amplitudes need a parallel-gauge path")
    T = path.T if T is None else T
    proj = overlaps(state, path)
    dyn = cumtrapz(path.energies, path.grid)
    return AmplitudeTrace(path.grid, np.exp(1j * T * dyn) * proj)


def fidelity_trace(state, path, n):
    """|<E_n(s)|psi(s)>|^2 on the shared grid (``n`` is a 0-based level index)."""
    return np.abs(overlaps(state, path)[:, n]) ** 2


def trace_to_csv(filename, amps, fidelity):
    n = amps.phi.shape[1]
    header = ["s", "fidelity"] + [f"phi_abs_{i + 1}" for i in range(n)]
    cols = [amps.grid, fidelity] + [np.abs(amps.phi[:, i]) for i in range(n)]
    for i in range(n):
        header += [f"phi_re_{i + 1}", f"phi_im_{i + 1}"]
        cols += [amps.phi[:, i].real, amps.phi[:, i].imag]
    write_csv(filename, header, cols)
