import numpy as np
import pytest
from scipy.integrate import solve_ivp

from husimilab import manybody as mb
from husimilab import meanfield as mf
from husimilab import phasespace as ps
from husimilab.grid import Potential, make_grid


# ---------------------------------------------------------------------------
# orbital families
# ---------------------------------------------------------------------------

def test_orbital_families_orthonormal():
    grid = make_grid(d=1, M=128, L=12.0, hbar=0.5, N=3)
    for family in (mf.plane_wave_orbitals(grid, 3),
                   mf.hermite_orbitals(grid, 3)):
        E = np.stack(family)
        gram = (np.conj(E) @ E.T) * grid.dx
        assert np.max(np.abs(gram - np.eye(3))) < 1e-10


def test_commutator_norms_reported():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=2)
    for family in ("plane", "hermite"):
        orbs = (mf.plane_wave_orbitals(grid, 2) if family == "plane"
                else mf.hermite_orbitals(grid, 2))
        st = mf.MeanFieldState(grid, np.array(orbs))
        out = mf.commutator_norms(st.omega(), grid, [0.5, 1.0])
        assert np.isfinite(out["sup_weighted"])
        assert out["grad_commutator"] >= 0
        if family == "plane":
            # plane-wave projector commutes with the gradient exactly
            assert out["grad_commutator"] < 1e-10


# ---------------------------------------------------------------------------
# Hartree-Fock
# ---------------------------------------------------------------------------

def test_single_orbital_reduces_to_free_propagation():
    grid = make_grid(d=1, M=128, L=16.0, hbar=0.5, N=1)
    V = Potential.gaussian_bump(grid, 1.0, 1.2)
    width, x0, p0 = 0.6, -0.5, 0.3
    orb = mb.gaussian_orbital(grid, width=width, x0=x0, p0=p0)
    state = mf.MeanFieldState(grid, np.array([orb]))
    out = mf.hartree_fock_evolve(state, V, dt=0.01, steps=100)
    free = mb.free_gaussian_evolution(grid, width, x0, p0, 1.0)
    err = np.sqrt(np.sum(np.abs(out.orbitals[0] - free) ** 2) * grid.dx)
    assert err < 1e-8


def test_single_orbital_cancellation_random_initial():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=1)
    V = Potential.cosine(grid, [0.5, 0.2])
    rng = np.random.default_rng(0)
    for _ in range(10):
        raw = rng.standard_normal(grid.M) + 1j * rng.standard_normal(grid.M)
        orb = raw / np.sqrt(np.sum(np.abs(raw) ** 2) * grid.dx)
        state = mf.MeanFieldState(grid, np.array([orb]))
        U = mf.mean_field_matrix(state, V)
        assert np.linalg.norm(U @ orb) * np.sqrt(grid.dx) < 1e-8


def test_trace_conserved_over_thousand_steps():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=2)
    V = Potential.gaussian_bump(grid, 0.8, 1.5)
    state = mf.MeanFieldState(grid, np.array(mf.hermite_orbitals(grid, 2)))
    out = mf.hartree_fock_evolve(state, V, dt=0.001, steps=1000)
    assert abs(np.real(np.trace(out.omega())) * grid.dx - 2.0) < 1e-8
    assert out.orthonormality_defect() < 1e-8
    assert out.idempotency_defect() < 1e-8


def test_free_orbitals_match_dispersion():
    grid = make_grid(d=1, M=128, L=16.0, hbar=0.5, N=2)
    V = Potential.zero(grid)
    w1, w2 = 0.7, 1.1
    orbs = [mb.gaussian_orbital(grid, width=w1, x0=-2.0, p0=0.4),
            mb.gaussian_orbital(grid, width=w2, x0=2.0, p0=-0.3)]
    E = np.stack(orbs)
    gram = (np.conj(E) @ E.T) * grid.dx
    assert np.max(np.abs(gram - np.eye(2))) < 1e-8  # far-separated packets
    state = mf.MeanFieldState(grid, E)
    out = mf.hartree_fock_evolve(state, V, dt=0.005, steps=100)
    for j, (w, x0, p0) in enumerate(((w1, -2.0, 0.4), (w2, 2.0, -0.3))):
        free = mb.free_gaussian_evolution(grid, w, x0, p0, 0.5)
        err = np.sqrt(np.sum(np.abs(out.orbitals[j] - free) ** 2) * grid.dx)
        assert err < 1e-7


def test_hf_energy_conserved():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=3)
    V = Potential.gaussian_bump(grid, 0.8, 1.5)
    state = mf.MeanFieldState(grid, np.array(mf.hermite_orbitals(grid, 3)))
    e0 = mf.hf_energy(state, V)
    out = mf.hartree_fock_evolve(state, V, dt=0.001, steps=1000)
    assert abs(mf.hf_energy(out, V) - e0) < 1e-5  # per unit time


def test_hf_aborts_on_orthonormality_loss():
    grid = make_grid(d=1, M=32, L=8.0, hbar=0.5, N=2)
    V = Potential.zero(grid)
    orbs = np.array(mf.hermite_orbitals(grid, 2))
    orbs[1] *= 1.001  # corrupt normalization beyond the abort threshold
    state = mf.MeanFieldState(grid, orbs)
    with pytest.raises(mf.MeanFieldError, match="orthonormality"):
        mf.hartree_fock_step(state, V, 0.01, abort_tol=1e-6)


# ---------------------------------------------------------------------------
# norm gaps
# ---------------------------------------------------------------------------

def test_norm_gaps_zero_for_identical():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=2)
    state = mb.build_slater(grid, mf.hermite_orbitals(grid, 2))
    kern = mb.gamma1(state)
    hf = mf.MeanFieldState(grid, np.array(mf.hermite_orbitals(grid, 2)))
    hs, tr = mf.norm_gaps(kern, hf.omega_kernel())
    assert hs < 1e-10 and tr < 1e-10


def test_norm_gaps_rank_one_perturbation():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=2)
    hf = mf.MeanFieldState(grid, np.array(mf.hermite_orbitals(grid, 2)))
    kern = hf.omega_kernel()
    g = mb.gaussian_orbital(grid, width=0.33, x0=2.0)
    pert = mb.OneBodyKernel(kern.matrix + 0.25 * np.outer(g, np.conj(g)),
                            grid, 2.0)
    hs, tr = mf.norm_gaps(pert, kern)
    assert hs == pytest.approx(0.25, abs=1e-10)
    assert tr == pytest.approx(0.25, abs=1e-10)


def test_norm_gaps_interacting_reported():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=2)
    V = Potential.gaussian_bump(grid, 0.8, 1.5)
    orbs = mf.hermite_orbitals(grid, 2)
    many = mb.propagate(mb.build_slater(grid, orbs), V, 0.002, 250)
    hf = mf.hartree_fock_evolve(mf.MeanFieldState(grid, np.array(orbs)),
                                V, 0.002, 250)
    hs, tr = mf.norm_gaps(mb.gamma1(many), hf.omega_kernel())
    assert np.isfinite(hs) and np.isfinite(tr)
    assert 0 < hs <= tr
    assert tr / np.sqrt(grid.N) < np.inf


# ---------------------------------------------------------------------------
# Vlasov
# ---------------------------------------------------------------------------

@pytest.fixture()
def gaussian_blob():
    grid = make_grid(d=1, M=256, L=16.0, hbar=0.5, N=1)
    lattice = ps.natural_lattice(grid)
    Q, P = np.meshgrid(lattice.qs, lattice.ps, indexing="ij")
    vals = np.exp(-((Q + 2.0) ** 2 + (P - 1.0) ** 2) / (2.0 * 0.5))
    state = mf.VlasovState(lattice, vals, 0.0,
                           1.0 / (2.0 * np.pi * grid.hbar))
    return grid, state


def test_vlasov_free_transport(gaussian_blob):
    grid, state = gaussian_blob
    V0 = Potential.zero(grid)
    cfl = mf.vlasov_cfl(state, V0, 1.0)
    steps = int(np.ceil(1.0 / (0.9 * cfl["suggested_dt"])))
    out = mf.vlasov_evolve(state, V0, 1.0 / steps, steps)
    exact = mf.free_transport_exact(state, 1.0)
    l1 = np.sum(np.abs(out.values - exact)) * state.lattice.cell
    assert l1 < 1e-3
    assert abs(out.mass() - state.mass()) < 1e-8
    assert out.clipped_mass < 1e-8


def test_vlasov_mass_conserved_per_step(gaussian_blob):
    grid, state = gaussian_blob
    V = Potential.cosine(grid, [0.4])
    cfl = mf.vlasov_cfl(state, V, 1.0)
    dt = 0.5 * cfl["suggested_dt"]
    out = mf.vlasov_step(state, V, dt)
    assert abs(out.mass() - state.mass()) < 1e-8


def test_vlasov_cfl_refusal(gaussian_blob):
    grid, state = gaussian_blob
    V = Potential.cosine(grid, [0.4])
    with pytest.raises(mf.MeanFieldError, match="suggested dt"):
        mf.vlasov_step(state, V, dt=10.0)


def test_vlasov_energy_drift(gaussian_blob):
    grid, state = gaussian_blob
    V = Potential.cosine(grid, [0.4])
    cfl = mf.vlasov_cfl(state, V, 1.0)
    steps = int(np.ceil(0.5 / (0.9 * cfl["suggested_dt"])))
    e0 = mf.vlasov_energy(state, V)
    out = mf.vlasov_evolve(state, V, 0.5 / steps, steps)
    drift = abs(mf.vlasov_energy(out, V) - e0)
    assert drift / 0.5 < 1e-4  # per unit time


def test_vlasov_rotation_period_matches_characteristics():
    """Blob in the self-consistent cosine well: the (mean q, mean p) orbit
    period matches characteristics integrated by a high-order ODE solver
    with the initial force field frozen (the blob is small, so the mean
    field barely moves)."""
    grid = make_grid(d=1, M=128, L=12.0, hbar=0.5, N=1)
    lattice = ps.natural_lattice(grid)
    V = Potential.cosine(grid, [-1.2])  # attractive well at q = 0
    Q, P = np.meshgrid(lattice.qs, lattice.ps, indexing="ij")
    vals = np.exp(-((Q - 0.9) ** 2 + P ** 2) / (2.0 * 0.08))
    state = mf.VlasovState(lattice, vals, 0.0,
                           1.0 / (2.0 * np.pi * grid.hbar))

    force0 = mf.vlasov_force(state, V)

    def rhs(t, y):
        q, p = y
        f = np.interp(q, lattice.qs, force0, period=grid.L)
        return [p, f]

    # oracle: one full period of the frozen-field characteristic
    sol = solve_ivp(rhs, [0.0, 40.0], [0.9, 0.0], dense_output=True,
                    rtol=1e-10, atol=1e-12)
    ts = np.linspace(0.1, 40.0, 8000)
    qs = sol.sol(ts)[0]
    crossings = ts[(qs[:-1] < 0.9) & (qs[1:] >= 0.9)]
    period_oracle = crossings[0]

    cfl = mf.vlasov_cfl(state, V, 1.0)
    dt = 0.45 * cfl["suggested_dt"]
    cur = state
    means = []
    times = []
    while cur.time < 1.25 * period_oracle:
        cur = mf.vlasov_step(cur, V, dt)
        mass = cur.mass()
        mean_q = float(np.sum(Q * cur.values) * lattice.cell / mass)
        means.append(mean_q)
        times.append(cur.time)
    means = np.array(means)
    times = np.array(times)
    up = (means[:-1] < 0.0) & (means[1:] >= 0.0)
    # first return to positive crossing after half a period: two crossings
    # of 0 per period; period = time between alternate crossings
    crossing_times = times[1:][up]
    assert len(crossing_times) >= 2
    period_measured = 2.0 * (crossing_times[1] - crossing_times[0])
    assert abs(period_measured - period_oracle) / period_oracle < 0.02


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def test_distance_identical_fields():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=1)
    lattice = ps.natural_lattice(grid)
    Q, P = np.meshgrid(lattice.qs, lattice.ps, indexing="ij")
    m = np.exp(-(Q ** 2 + P ** 2))
    l1, w1, flag = mf.husimi_vlasov_distance(m, m, lattice)
    assert l1 == 0.0 and w1 == 0.0 and not flag


def test_distance_one_cell_shift():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=1)
    lattice = ps.natural_lattice(grid)
    Q, P = np.meshgrid(lattice.qs, lattice.ps, indexing="ij")
    m = np.exp(-(Q ** 2 + P ** 2))
    shifted = np.roll(m, 1, axis=0)
    _, w1, _ = mf.husimi_vlasov_distance(m, shifted, lattice)
    mass = np.sum(m) * lattice.cell
    assert w1 == pytest.approx(lattice.dq * mass, rel=1e-6)


def test_distance_renormalization_flag():
    grid = make_grid(d=1, M=64, L=12.0, hbar=0.5, N=1)
    lattice = ps.natural_lattice(grid)
    Q, P = np.meshgrid(lattice.qs, lattice.ps, indexing="ij")
    m = np.exp(-(Q ** 2 + P ** 2))
    l1, w1, flag = mf.husimi_vlasov_distance(m, 1.1 * m, lattice)
    assert flag
    assert l1 < 1e-12 and w1 < 1e-12  # identical after renormalization
