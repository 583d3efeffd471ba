import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adlab import linalg, models, spectral
from adlab.errors import ContinuityLost, DegenerateSpectrum, GapTooSmall, MissingDerivative
from adlab.grid import cumtrapz, derivative, uniform_grid
from adlab.io import read_csv


def antiherm(tau):
    return np.max(np.abs(tau + np.conj(np.swapaxes(tau, 1, 2))))


def diag_max(tau):
    return np.max(np.abs(np.diagonal(tau, axis1=1, axis2=2)))


@pytest.fixture(scope="module")
def rot_path(rotating):
    return spectral.parallel_path(rotating, 200 * np.pi, uniform_grid(4097))


@pytest.fixture(scope="module")
def chirp():
    return models.chirped_spin(1.0)


def test_constant_path_frames_identical():
    H = models.constant(models.SIGMA_Z)
    p = spectral.decompose_path(H, 1.0, uniform_grid(17))
    assert np.all(p.energies == [-1.0, 1.0])
    assert np.all(p.vectors == p.vectors[0])
    assert p.gauge == "raw"


def test_rotating_levels_ascending_at_origin(rot_path):
    assert np.max(np.abs(rot_path.energies - [-0.5, 0.5])) < 1e-15


def test_eigenvalues_are_pointwise_in_s(rotating):
    coarse = spectral.decompose_path(rotating, 1.0, uniform_grid(3))
    fine = spectral.decompose_path(rotating, 1.0, uniform_grid(4097))
    # labels may differ on a grid too coarse to follow the eigenvectors; the spectrum may not
    assert np.max(np.abs(np.sort(coarse.energies, 1) - np.sort(fine.energies[[0, 2048, 4096]], 1))) <= 1e-12


def test_decompose_rejects_degenerate():
    with pytest.raises(DegenerateSpectrum):
        spectral.decompose_path(models.constant(np.eye(2)), 1.0, uniform_grid(5))


def _rotated_family(n, speed, seed=0):
    # W(s) D W(s)^+ with W(s) = exp(-i s K): eigenvectors turn at rate ~speed
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    K = speed * (A + A.conj().T) / 2
    D = np.diag(np.arange(n, dtype=float))

    def fn(s, T):
        W = linalg.unitary_step(np.broadcast_to(K, (len(s), n, n)), s)
        return W @ D @ linalg.dagger(W)

    return models.DrivenHamiltonian(n, fn)


def test_continuity_lost_on_coarse_grid():
    H = _rotated_family(4, 40.0)
    with pytest.raises(ContinuityLost):
        spectral.decompose_path(H, 1.0, uniform_grid(5))
    p = spectral.decompose_path(H, 1.0, uniform_grid(4097))
    assert np.allclose(p.energies, np.arange(4.0), atol=1e-10)


def test_path_continuity(chirp):
    g = uniform_grid(2049)
    p = spectral.parallel_path(chirp, 1.0, g)
    ov = np.abs(np.einsum("min,min->mn", np.conj(p.vectors[:-1]), p.vectors[1:]))
    assert np.min(ov) >= 0.99
    L = np.max(np.abs(chirp.eval_deriv(g, 1.0))) * 2
    assert np.max(np.abs(np.diff(p.energies, axis=0))) <= L * (g[1] - g[0])


def test_rotating_coupling_is_minus_i_pi(rot_path):
    tau21 = rot_path.tau[:, 1, 0]
    assert np.max(np.abs(tau21 + 1j * np.pi)) <= 1e-6
    assert np.max(np.abs(np.abs(rot_path.tau[:, 0, 1]) - np.pi)) <= 1e-6


def test_hellmann_feynman_agrees_with_finite_differences(rot_path):
    hf = spectral.coupling_matrix(rot_path, spectral.HF)
    assert hf.tau_method == spectral.HF
    assert np.max(np.abs(hf.tau - rot_path.tau)) <= 1e-4
    assert np.max(np.abs(np.abs(hf.tau[:, 1, 0]) - np.pi)) <= 1e-10


def test_hf_fd_disagreement_shrinks_with_grid(chirp):
    errs = []
    for points in (65, 129, 257):
        p = spectral.parallel_path(chirp, 1.0, uniform_grid(points))
        hf = spectral.coupling_matrix(p, spectral.HF)
        errs.append(np.max(np.abs(hf.tau - p.tau)))
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_missing_derivative():
    g = uniform_grid(9)
    H = models.GridHamiltonian(g, np.tile(models.SIGMA_Z, (9, 1, 1)), 1.0)
    p = spectral.decompose_path(H, 1.0, g)
    with pytest.raises(MissingDerivative):
        spectral.coupling_matrix(p, spectral.HF)
    with pytest.raises(ValueError):
        spectral.coupling_matrix(p, "spline")


def test_constant_coupling_vanishes():
    p = spectral.parallel_path(models.constant(models.SIGMA_Z), 1.0, uniform_grid(33))
    # zero up to stencil roundoff
    assert np.max(np.abs(p.tau)) <= 1e-13
    assert np.max(np.abs(spectral.adiabatic_ratios(p))) <= 1e-13


def test_parallel_gauge_invariants(rot_path, ref_pair_odd):
    for p in (rot_path, ref_pair_odd.path_a, ref_pair_odd.path_b):
        assert p.gauge == "parallel"
        assert diag_max(p.tau) <= 1e-8
        assert antiherm(p.tau) <= 1e-6
        assert np.array_equal(p.gaps, -np.swapaxes(p.gaps, 1, 2))


def test_parallel_gauge_idempotent(ref_pair_odd):
    p = ref_pair_odd.path_b
    q = spectral.to_parallel_gauge(p)
    assert np.max(np.abs(q.vectors - p.vectors)) <= 1e-12
    assert np.max(np.abs(q.tau - p.tau)) <= 1e-12


def test_parallel_gauge_removes_random_phase(chirp):
    g = uniform_grid(2049)
    raw = spectral.decompose_path(chirp, 1.0, g)
    ref = spectral.to_parallel_gauge(raw)
    rng = np.random.default_rng(7)
    c = rng.normal(size=(4, 2))
    theta = sum(c[j] * g[:, None] ** j for j in range(4)) + np.sin(3 * g)[:, None]
    twisted = spectral.gauge_transform(spectral.coupling_matrix(raw), theta)
    back = spectral.to_parallel_gauge(twisted)
    assert np.max(np.abs(np.abs(back.tau) - np.abs(ref.tau))) <= 1e-6


def test_gauge_transform_zero_is_identity(rot_path):
    q = spectral.gauge_transform(rot_path, np.zeros(rot_path.energies.shape))
    assert np.array_equal(q.vectors, rot_path.vectors) and np.array_equal(q.tau, rot_path.tau)
    assert q.gauge == "custom"


def test_gauge_transform_linear_phase_shifts_diagonal(rot_path):
    c = np.array([0.7, -1.3])
    q = spectral.gauge_transform(rot_path, lambda s: np.outer(s, c))
    d = np.diagonal(q.tau, axis1=1, axis2=2) - np.diagonal(rot_path.tau, axis1=1, axis2=2)
    assert np.max(np.abs(d - 1j * c)) <= 1e-8


def test_gauge_transform_matches_recomputed_coupling(rot_path):
    g = rot_path.grid
    rng = np.random.default_rng(3)
    c = rng.normal(size=(4, 2))
    theta = sum(c[j] * g[:, None] ** j for j in range(4))
    dtheta = sum(j * c[j] * g[:, None] ** (j - 1) for j in range(1, 4))
    q = spectral.gauge_transform(rot_path, theta, dtheta)
    brute = spectral.coupling_matrix(q, spectral.FD).tau
    assert np.max(np.abs(q.tau - brute)) <= 1e-6
    assert antiherm(q.tau) <= 1e-6


def test_gauge_transform_shape_check(rot_path):
    with pytest.raises(ValueError):
        spectral.gauge_transform(rot_path, np.zeros(3))


def test_dual_coupling_identity(ref_pair_odd):
    p = ref_pair_odd
    a, b = p.path_a, p.path_b
    osc = np.exp(-1j * p.T * cumtrapz(a.gaps, p.grid))
    for n, k in a.off_diagonal_pairs():
        assert np.max(np.abs(b.tau[:, n, k] - a.tau[:, n, k] * osc[:, n, k])) <= 1e-5


def test_adiabatic_ratios_rotating(rot_path):
    A = spectral.adiabatic_ratios(rot_path)
    assert np.max(np.abs(np.abs(A[:, 1, 0]) - np.pi)) <= 1e-6
    assert np.all(np.diagonal(A, axis1=1, axis2=2) == 0)


def test_adiabatic_ratio_magnitudes_agree_for_dual(ref_pair):
    # the dual carries its exact dH/ds, so the Hellmann-Feynman couplings avoid
    # differentiating vectors that oscillate at rate T g
    a = spectral.coupling_matrix(ref_pair.path_a, spectral.HF)
    b = spectral.coupling_matrix(ref_pair.path_b, spectral.HF)
    Aa, Ab = spectral.adiabatic_ratios(a), spectral.adiabatic_ratios(b)
    assert np.max(np.abs(np.abs(Ab) - np.abs(Aa))) <= 1e-8


def test_adiabatic_ratio_magnitudes_dual_finite_differences(ref_pair):
    # finite differences at 8192 points resolve the oscillation to ~pi (T g ds)^4 / 30
    Aa = spectral.adiabatic_ratios(ref_pair.path_a)
    Ab = spectral.adiabatic_ratios(ref_pair.path_b)
    h = ref_pair.grid[1] - ref_pair.grid[0]
    assert np.max(np.abs(np.abs(Ab) - np.abs(Aa))) <= 3 * np.pi * (ref_pair.T * h) ** 4 / 30


def test_gap_floor(rot_path):
    with pytest.raises(GapTooSmall):
        spectral.adiabatic_ratios(rot_path, gap_floor=2.0)
    raw = spectral.decompose_path(models.constant(models.SIGMA_Z), 1.0, uniform_grid(5))
    with pytest.raises(ValueError):
        spectral.adiabatic_ratios(raw)


def test_frames(rot_path):
    f = rot_path.frame(10)
    assert f.s == rot_path.grid[10]
    assert np.allclose(f.gaps, [[0, -1], [1, 0]])
    assert len(rot_path.frames) == rot_path.grid.size


def test_path_csv(tmp_path, rot_path):
    spectral.path_to_csv(rot_path, tmp_path / "p.csv")
    header, cols = read_csv(tmp_path / "p.csv")
    assert header == ["s", "E1", "E2", "tau_re_1_1", "tau_im_1_1", "tau_re_1_2", "tau_im_1_2",
                      "tau_re_2_1", "tau_im_2_1", "tau_re_2_2", "tau_im_2_2", "A_abs_1_2", "A_abs_2_1"]
    assert np.array_equal(cols["s"], rot_path.grid)
    assert np.array_equal(cols["tau_im_2_1"], rot_path.tau[:, 1, 0].imag)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 4))
def test_random_smooth_family_invariants(seed, n):
    # H(s) = H0 + s H1 with a well-separated H0 spectrum
    rng = np.random.default_rng(seed)
    H0 = np.diag(np.arange(n) * 2.0).astype(complex)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H1 = 0.2 * (A + A.conj().T)

    def fn(s, T):
        return H0[None] + s[:, None, None] * H1[None]

    def deriv(s, T):
        return np.broadcast_to(H1, (len(s), n, n)).copy()

    H = models.DrivenHamiltonian(n, fn, deriv)
    p = spectral.parallel_path(H, 1.0, uniform_grid(513))
    assert antiherm(p.tau) <= 1e-6
    assert diag_max(p.tau) <= 1e-8
    hf = spectral.coupling_matrix(p, spectral.HF)
    assert np.max(np.abs(hf.tau - p.tau)) <= 1e-4
    assert np.max(linalg.max_norm(linalg.dagger(p.vectors) @ p.vectors - np.eye(n))) <= 1e-10
