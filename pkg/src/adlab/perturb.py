"""First-order perturbative amplitudes and the boundary/oscillatory (P/Q) split.

A system started in level ``n`` acquires, to first order, the amplitude
``phi_k(s) = (i/T) (P_nk(s) + Q_nk(s))`` in every other level ``k``:

* ``P_nk`` is the boundary term ``A_nk(0) - A_nk(s) exp(-i T int_0^s g_nk)``;
* ``Q_nk`` is the oscillatory integral ``int_0^s exp(-i T int_0^s' g_nk) dA_nk/ds' ds'``.

For a dual pair the b-system amplitudes also follow from the a-system
couplings alone; :func:`simplified_b_first_order`, :func:`q_approx_dual`,
:func:`pq_ratio` and :func:`dA_b_ds` work from the a-path.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DivisionGuard, GridTooCoarse, PreconditionUnmet
from .evolve import AmplitudeTrace
from .grid import cumtrapz, derivative
from .io import write_csv
from .spectral import adiabatic_ratios

RESOLUTION_LIMIT = 0.5
DOMINANCE = 10.0


@dataclass(frozen=True)
class FirstOrderSolution:
    init_level: int
    T: float
    grid: np.ndarray
    P: np.ndarray  # P[:, k] = P_nk(s); column n is zero
    Q: np.ndarray
    phi: np.ndarray

    def channel(self, k):
        return self.P[:, k], self.Q[:, k], self.phi[:, k]


@dataclass(frozen=True)
class PQRatio:
    grid: np.ndarray
    ratio: np.ndarray

    @property
    def dominant(self):
        return self.ratio > DOMINANCE


def _require_parallel(path):
    if path.gauge != "parallel" or path.tau is None:
        raise ValueError("expected a parallel-gauge path with couplings")


def check_resolution(path, T):
    """Raise GridTooCoarse if exp(-i T int g) turns by more than 0.5 rad per cell."""
    ds = float(np.max(np.diff(path.grid)))
    worst = float(T * np.max(np.abs(path.gaps)) * ds)
    if worst > RESOLUTION_LIMIT:
        raise GridTooCoarse(f"T*|g|*ds = {worst:.3g} > {RESOLUTION_LIMIT}")
    return worst


def dynamical_phase(path, T):
    """exp(-i T int_0^s g_nk ds'), shape (M, N, N)."""
    return np.exp(-1j * T * cumtrapz(path.gaps, path.grid))


def first_order(path, T=None, n=0):
    _require_parallel(path)
    T = path.T if T is None else float(T)
    check_resolution(path, T)
    A = adiabatic_ratios(path)
    osc = dynamical_phase(path, T)
    M, N = path.energies.shape
    P = np.zeros((M, N), dtype=complex)
    Q = np.zeros((M, N), dtype=complex)
    for k in range(N):
        if k == n:
            continue
        a = A[:, n, k]
        P[:, k] = a[0] - a * osc[:, n, k]
        Q[:, k] = cumtrapz(osc[:, n, k] * derivative(a, path.grid), path.grid)
    phi = (1j / T) * (P + Q)
    phi[:, n] = 1.0
    return FirstOrderSolution(n, T, path.grid, P, Q, phi)


def simplified_b_first_order(path_a, n=0):
    """phi_k^b(s) = delta_nk - int_0^s tau_nk^a(s') ds' from the a-system couplings."""
    _require_parallel(path_a)
    integ = cumtrapz(path_a.tau[:, n, :], path_a.grid)
    phi = -integ
    phi[:, n] = 1.0
    return AmplitudeTrace(path_a.grid, phi)


def q_approx_dual(path_a, T, n, k, threshold=0.05):
    """Large-T estimate of the b-system's Q_nk: i T int_0^s tau_nk^a(s') ds'."""
    _require_parallel(path_a)
    tau = path_a.tau[:, n, k]
    margin = float(np.max(np.abs(adiabatic_ratios(path_a)))) / T
    if margin > threshold:
        warnings.warn(
            f"a-system traditional margin {margin:.3g} exceeds {threshold}", PreconditionUnmet
        )
    if np.min(np.abs(tau)) <= 1e-8 * max(float(np.max(np.abs(tau))), 1e-300):
        warnings.warn(f"|tau_{n + 1}{k + 1}^a| touches zero on the grid", PreconditionUnmet)
    return 1j * T * cumtrapz(tau, path_a.grid)


def pq_ratio(path_a, T, n, k):
    """|Q^b/P^b| = |1 - T/(A^a(0) + A^a(s)) * i int_0^s tau^a| for channel (n, k)."""
    _require_parallel(path_a)
    A = adiabatic_ratios(path_a)[:, n, k]
    denom = A[0] + A
    if np.any(np.abs(denom) < 1e-12):
        raise DivisionGuard("A(0) + A(s) vanishes on the grid")
    integ = cumtrapz(path_a.tau[:, n, k], path_a.grid)
    return PQRatio(path_a.grid, np.abs(1.0 - T / denom * 1j * integ))


def dA_b_ds(path_a, T, n, k):
    """Closed-form dA_nk^b/ds of the dual system from T-independent a-quantities."""
    _require_parallel(path_a)
    check_resolution(path_a, T)
    tau = path_a.tau[:, n, k]
    g = path_a.gaps[:, n, k]
    osc = dynamical_phase(path_a, T)[:, n, k]
    return osc * (1j * T * tau - derivative(tau / g, path_a.grid))


def channel_to_csv(filename, sol, k, ratio=None):
    P, Q, phi = sol.channel(k)
    if ratio is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(Q) / np.abs(P)
    write_csv(
        filename,
        ["s", "P_re", "P_im", "Q_re", "Q_im", "phi_re", "phi_im", "ratio"],
        [sol.grid, P.real, P.imag, Q.real, Q.imag, phi.real, phi.imag, ratio],
    )
