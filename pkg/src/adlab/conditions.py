"""Adiabatic-condition reports and the Riemann-Lebesgue decay probe.

"Much smaller than" is read as a three-way verdict on the dimensionless
margin: ``satisfied`` at or below ``threshold`` (0.05 by default),
``violated`` at or above 1, ``indeterminate`` in between.
"""

from dataclasses import dataclass, field

import numpy as np

from . import models, spectral
from .errors import PhaseUnwrapFailed, TIndependenceViolated
from .grid import derivative, uniform_grid
from .io import write_csv
from .perturb import first_order

DEFAULT_THRESHOLD = 0.05
VIOLATED = 1.0
CAP = 1e12
POLICY = "policy: satisfied <= {thr:g}, violated >= 1, indeterminate between"


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    margin: float
    worst: tuple  # (n, k, s) with 1-based levels
    threshold: float = DEFAULT_THRESHOLD
    notes: str = ""

    @property
    def verdict(self):
        if self.margin <= self.threshold:
            return "satisfied"
        if self.margin >= VIOLATED:
            return "violated"
        return "indeterminate"

    @property
    def capped(self):
        return self.margin >= CAP

    def to_dict(self):
        n, k, s = self.worst
        return {
            "condition": self.condition,
            "margin": float(self.margin),
            "threshold": float(self.threshold),
            "verdict": self.verdict,
            "worst": {"n": int(n), "k": int(k), "s": float(s)},
            "notes": self.notes,
        }


def _report(condition, ratios, path, threshold, extra=""):
    # ratios: (M, N, N) nonnegative, diagonal ignored
    r = ratios.copy()
    idx = np.arange(path.dim)
    r[:, idx, idx] = -1.0
    if path.dim < 2:
        return ConditionReport(condition, 0.0, (1, 1, float(path.grid[0])), threshold, POLICY.format(thr=threshold))
    m, n, k = np.unravel_index(np.argmax(r), r.shape)
    margin = float(r[m, n, k])
    notes = POLICY.format(thr=threshold)
    if margin >= CAP:
        notes += "; divergent (denominator below floor, margin capped)"
    if extra:
        notes += "; " + extra
    return ConditionReport(condition, margin, (n + 1, k + 1, float(path.grid[m])), threshold, notes)


def traditional_condition(path, threshold=DEFAULT_THRESHOLD):
    """margin = max_{n != k, s} |A_nk(s)| / T."""
    A = spectral.adiabatic_ratios(path)
    return _report("traditional", np.abs(A) / path.T, path, threshold)


def _tau_floor(tau):
    return 1e-9 * max(float(np.max(np.abs(tau))), 0.0) + 1e-14


def phase_velocity(tau, grid):
    """d arg(tau)/ds per off-diagonal channel, from the unwrapped phase; the diagonal is zero.

    Points where |tau| is negligible carry the phase of the nearest earlier
    resolved point. Raises PhaseUnwrapFailed where the sampled phase step
    between neighbouring points disagrees with the local rate by more than
    pi/2, or the rate itself implies more than pi per cell.
    """
    mag = np.abs(tau)
    live = mag > _tau_floor(tau)
    ang = np.angle(tau)
    out = np.zeros(tau.shape)
    flat_tau = tau.reshape(tau.shape[0], -1)
    flat_live = live.reshape(tau.shape[0], -1)
    flat_ang = ang.reshape(tau.shape[0], -1)
    flat_out = out.reshape(tau.shape[0], -1)
    ds = np.diff(grid)
    dim = tau.shape[-1]
    for c in range(flat_tau.shape[1]):
        if c % (dim + 1) == 0:
            continue  # diagonal: zero in the parallel gauge, only noise left
        ok = flat_live[:, c]
        if not np.any(ok):
            continue
        a = flat_ang[:, c].copy()
        first = np.argmax(ok)
        a[:first] = a[first]
        for j in range(first + 1, a.size):
            if not ok[j]:
                a[j] = a[j - 1]
        a = np.unwrap(a)
        rate = np.imag(np.conj(flat_tau[:, c]) * derivative(flat_tau[:, c], grid))
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = np.where(ok, rate / mag.reshape(tau.shape[0], -1)[:, c] ** 2, 0.0)
        # the local rate must predict each sampled increment, else the phase is aliased
        both = ok[:-1] & ok[1:]
        pred = 0.5 * (rate[:-1] + rate[1:]) * ds
        seen = np.diff(a)
        bad = both & ((np.abs(pred) > np.pi) | (np.abs(seen - pred) > 0.5 * np.pi))
        if np.any(bad):
            j = int(np.argmax(bad))
            raise PhaseUnwrapFailed(
                f"phase of tau moves {seen[j]:.2f} rad between s={grid[j]:.6g} and s={grid[j + 1]:.6g}"
                f" against a local rate of {pred[j]:.2f}"
            )
        flat_out[:, c] = derivative(a, grid)
    return out


def _default_denom_floor(path, T):
    return 1e-8 * max(T * float(np.max(np.abs(path.gaps))), 1.0)


def ye_condition(path, T=None, threshold=DEFAULT_THRESHOLD, denom_floor=None):
    """margin = max |A~_nk| / T with A~ = tau / (g - (1/T) d arg tau / ds).

    Where the denominator ``T g - d arg tau/ds`` is below ``denom_floor`` while
    tau is not negligible, the margin is capped at 1e12.
    """
    T = path.T if T is None else float(T)
    floor = _default_denom_floor(path, T) if denom_floor is None else denom_floor
    tau = path.tau
    den = T * path.gaps - phase_velocity(tau, path.grid)
    mag = np.abs(tau)
    live = mag > _tau_floor(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(np.abs(den) < floor, CAP, mag / np.abs(den))
    r = np.where(live, np.minimum(r, CAP), 0.0)
    return _report("ye", r, path, threshold)


def ye_condition_dual_form(path_a, threshold=DEFAULT_THRESHOLD, denom_floor=None):
    """b-system Ye margin from the a-path: max |tau^a_nk| / |d arg tau^a_nk / ds|."""
    floor = _default_denom_floor(path_a, path_a.T) if denom_floor is None else denom_floor
    tau = path_a.tau
    den = phase_velocity(tau, path_a.grid)
    mag = np.abs(tau)
    live = mag > _tau_floor(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(np.abs(den) < floor, CAP, mag / np.abs(den))
    r = np.where(live, np.minimum(r, CAP), 0.0)
    return _report("ye", r, path_a, threshold, "dual form evaluated on the a-path")


@dataclass(frozen=True)
class DecayTable:
    n: int
    k: int
    T: np.ndarray
    max_Q: np.ndarray
    slope: float = field(default=float("nan"))
    floor: float = 0.0

    @property
    def vanishes(self):
        """Q is zero to numerical precision at every T (constant A_nk)."""
        return bool(np.all(self.max_Q <= self.floor))

    @property
    def decays(self):
        return self.vanishes or bool(self.max_Q[-1] <= 0.5 * self.max_Q[0])

    def to_csv(self, filename):
        write_csv(filename, ["T", "max_abs_Q"], [self.T, self.max_Q])


def rl_decay_probe(H, n, k, T_list, grid=None, s_samples=None):
    """max_s |Q_nk(s, T)| along a ladder of total times for a T-independent Hamiltonian.

    ``H`` is a DrivenHamiltonian or a ``{T: GridHamiltonian}`` family; the
    family must not change with T (TIndependenceViolated otherwise).
    """
    T_list = np.asarray(sorted(float(t) for t in T_list))
    if grid is None:
        grid = uniform_grid(16385)
    if s_samples is None:
        s_samples = np.linspace(0.0, 1.0, 64)
    change = models.probe_T_dependence(H, s_samples, T_list)
    if change > 1e-12:
        raise TIndependenceViolated(f"H changes by {change:.3e} across the T ladder")
    maxq = []
    floor = 0.0
    for T in T_list:
        base = H[T] if isinstance(H, dict) else H
        g = base.grid if isinstance(base, models.GridHamiltonian) else grid
        path = spectral.parallel_path(base, T, g)
        sol = first_order(path, T, n)
        # Q from a constant A_nk is pure differentiation noise
        floor = max(floor, 1e-9 * float(np.max(np.abs(spectral.adiabatic_ratios(path)))))
        maxq.append(float(np.max(np.abs(sol.Q[:, k]))))
    maxq = np.array(maxq)
    slope = float("nan")
    if np.all(maxq > floor) and len(T_list) >= 2:
        slope = float(np.polyfit(np.log(T_list), np.log(maxq), 1)[0])
    return DecayTable(n, k, T_list, maxq, slope, floor)
