"""Effective dynamics: time-dependent Hartree-Fock and the Vlasov equation.

Hartree-Fock advances N orthonormal orbitals with Strang splitting of the
self-consistent one-body Hamiltonian

    h[omega] = -(hbar^2/2) Laplacian + (V * rho) - X,
    rho(x) = omega(x; x)/N,   X(x; y) = V(x - y) omega(x; y) / N,

with the mean field frozen at the step midpoint.  The Vlasov solver is a
Strang-split semi-Lagrangian scheme on the phase-space lattice with the
self-consistent force

    F(q) = -force_scale * (dV/dq * rho)(q),     rho(q) = sum_p m dp,

where force_scale = 1/(N (2 pi hbar)^d) makes the equation the exact
residue-free limit of the reformulated phase-space identity when the
initial datum carries the Husimi normalization (it reduces to the usual
1/(2 pi)^d under the coupling hbar^d = 1/N).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from husimilab.grid import GridError, GridSpec, Potential
from husimilab.manybody import OneBodyKernel
from husimilab.phasespace import HusimiField, PhaseSpaceLattice


class MeanFieldError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# orbital families
# ---------------------------------------------------------------------------

def plane_wave_orbitals(grid: GridSpec, N: int) -> list[np.ndarray]:
    """Lowest |k| plane waves e^{i k x}/sqrt(L); exactly orthonormal."""
    ks = sorted(grid.wavenumbers(), key=abs)[:N]
    x = grid.axis_points()
    return [np.exp(1j * k * x) / np.sqrt(grid.L) for k in ks]


def hermite_orbitals(grid: GridSpec, N: int, center: float = 0.0,
                     scale: float | None = None) -> list[np.ndarray]:
    """Oscillator eigenfunctions at the semiclassical width sqrt(hbar).

    Orthonormality is re-imposed on the lattice by QR so downstream
    Slater construction sees an exactly orthonormal family.
    """
    width = scale if scale is not None else np.sqrt(grid.hbar)
    x = (grid.axis_points() - center) / width
    cols = []
    h_prev = np.zeros_like(x)
    h_cur = np.ones_like(x)
    for n in range(N):
        cols.append(h_cur * np.exp(-0.5 * x ** 2))
        h_prev, h_cur = h_cur, 2.0 * x * h_cur - 2.0 * n * h_prev
    A = np.stack(cols, axis=1).astype(complex)
    Q, _ = np.linalg.qr(A)
    return [Q[:, j] / np.sqrt(grid.dx) for j in range(N)]


def commutator_norms(kernel: np.ndarray, grid: GridSpec, p_values) -> dict:
    """Trace norms of [e^{ipx}, omega] and [hbar d/dx, omega].

    Diagnostics for the semiclassical structure of an initial one-body
    matrix; reported per momentum, no optimality claimed.
    """
    x = grid.axis_points()
    out = {}
    worst = 0.0
    for p in np.atleast_1d(p_values):
        phase = np.exp(1j * p * x)
        comm = phase[:, None] * kernel - kernel * phase[None, :]
        tr = float(np.sum(np.linalg.svd(comm * grid.dx, compute_uv=False)))
        out[float(p)] = tr
        worst = max(worst, tr / (1.0 + abs(p)))
    k = grid.wavenumbers()
    dmat = np.fft.ifft(np.fft.fft(kernel, axis=0) * (1j * k)[:, None], axis=0)
    dmat = dmat - np.fft.ifft(np.fft.fft(kernel, axis=1)
                              * (-1j * k)[None, :], axis=1)
    grad_comm = float(np.sum(np.linalg.svd(grid.hbar * dmat * grid.dx,
                                           compute_uv=False)))
    return {"exp_commutators": out, "sup_weighted": worst,
            "grad_commutator": grad_comm,
            "scale_N_hbar": grid.N * grid.hbar}


# ---------------------------------------------------------------------------
# Hartree-Fock
# ---------------------------------------------------------------------------

@dataclass
class MeanFieldState:
    grid: GridSpec
    orbitals: np.ndarray  # (N, M)
    time: float = 0.0

    def __post_init__(self):
        self.orbitals = np.asarray(self.orbitals, dtype=complex)

    def omega(self) -> np.ndarray:
        """omega(x; y) = sum_j e_j(x) conj(e_j(y))."""
        return self.orbitals.T @ np.conj(self.orbitals)

    def omega_kernel(self) -> OneBodyKernel:
        return OneBodyKernel(self.omega(), self.grid,
                             float(self.orbitals.shape[0]))

    def density(self) -> np.ndarray:
        """rho(x) = omega(x; x)/N, unit mass under the lattice quadrature."""
        return np.sum(np.abs(self.orbitals) ** 2, axis=0) / len(self.orbitals)

    def orthonormality_defect(self) -> float:
        gram = (np.conj(self.orbitals) @ self.orbitals.T) * self.grid.weight
        return float(np.max(np.abs(gram - np.eye(len(self.orbitals)))))

    def idempotency_defect(self) -> float:
        om = self.omega() * self.grid.weight
        return float(np.max(np.abs(om @ om - om)))


def mean_field_matrix(state: MeanFieldState, potential: Potential) -> np.ndarray:
    """Direct-minus-exchange one-body matrix U = diag(V * rho) - X dx."""
    g = state.grid
    N = len(state.orbitals)
    rho = np.sum(np.abs(state.orbitals) ** 2, axis=0) / N
    vk = np.fft.fft(potential.centered_values())
    direct = np.real(np.fft.ifft(vk * np.fft.fft(rho))) * g.dx
    vdiff = potential.difference_table()
    omega = state.omega()
    exchange = vdiff * omega / N
    return np.diag(direct) - exchange * g.dx


def _kinetic_step_factor(grid: GridSpec, dt: float) -> np.ndarray:
    k = grid.wavenumbers()
    return np.exp(-0.5j * dt * grid.hbar * k ** 2)


def _apply_mean_field_exp(U: np.ndarray, orbitals: np.ndarray,
                          dt: float, hbar: float) -> np.ndarray:
    w, V = np.linalg.eigh(U)
    phases = np.exp(-1j * w * dt / hbar)
    return ((V * phases) @ (V.conj().T @ orbitals.T)).T


def hartree_fock_step(state: MeanFieldState, potential: Potential,
                      dt: float, abort_tol: float = 1e-6) -> MeanFieldState:
    """One Strang step: half mean field, full kinetic, half mean field.

    Each potential half-step freezes the mean field of its own input
    state (no inner self-consistent iteration); this keeps the scheme
    second order and makes the rank-1 direct/exchange cancellation exact,
    so a single orbital propagates freely to machine precision.
    """
    g = state.grid
    kin_full = _kinetic_step_factor(g, dt)
    U0 = mean_field_matrix(state, potential)
    orb = _apply_mean_field_exp(U0, state.orbitals, 0.5 * dt, g.hbar)
    orb = np.fft.ifft(kin_full * np.fft.fft(orb, axis=1), axis=1)
    half = MeanFieldState(g, orb, state.time + dt)
    U1 = mean_field_matrix(half, potential)
    orb = _apply_mean_field_exp(U1, orb, 0.5 * dt, g.hbar)
    new = MeanFieldState(g, orb, state.time + dt)
    defect = new.orthonormality_defect()
    if defect > abort_tol:
        raise MeanFieldError(
            f"orthonormality defect {defect:.3e} exceeds {abort_tol:.1e}")
    return new


def hartree_fock_evolve(state: MeanFieldState, potential: Potential,
                        dt: float, steps: int) -> MeanFieldState:
    cur = state
    for _ in range(steps):
        cur = hartree_fock_step(cur, potential, dt)
    return cur


def hf_energy(state: MeanFieldState, potential: Potential) -> float:
    """Kinetic + (direct - exchange)/2 energy; conserved by the exact flow."""
    g = state.grid
    k = g.wavenumbers()
    orb_hat = np.fft.fft(state.orbitals, axis=1)
    kinetic = (0.5 * g.hbar ** 2
               * np.sum(k ** 2 * np.abs(orb_hat) ** 2) * g.dx / g.M)
    N = len(state.orbitals)
    omega = state.omega()
    rho_raw = np.real(np.diag(omega))  # omega(x;x), mass N
    vdiff = potential.difference_table()
    direct = 0.5 / N * float(rho_raw @ vdiff @ rho_raw) * g.dx ** 2
    exchange = 0.5 / N * float(np.sum(vdiff * np.abs(omega) ** 2)) * g.dx ** 2
    return float(kinetic + direct - exchange)


# ---------------------------------------------------------------------------
# norm gaps and phase-space distances
# ---------------------------------------------------------------------------

def norm_gaps(gamma_kernel: OneBodyKernel, omega_kernel: OneBodyKernel):
    """(Hilbert-Schmidt, trace) norms of gamma - omega as operators."""
    if gamma_kernel.grid is not omega_kernel.grid and \
            gamma_kernel.grid != omega_kernel.grid:
        raise GridError("kernels live on different grids")
    diff = (gamma_kernel.matrix - omega_kernel.matrix) * gamma_kernel.grid.weight
    sv = np.linalg.svd(diff, compute_uv=False)
    return float(np.sqrt(np.sum(sv ** 2))), float(np.sum(sv))


def _marginal_w1(a: np.ndarray, b: np.ndarray, spacing: float) -> float:
    """1-d Wasserstein-1 via cumulative distributions on the lattice."""
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    return float(np.sum(np.abs(ca - cb)) * spacing)


def husimi_vlasov_distance(a_values: np.ndarray, b_values: np.ndarray,
                           lattice: PhaseSpaceLattice):
    """(L1 distance, marginal transport distance, renormalized flag).

    The transport proxy is the sum of the exact 1-d Wasserstein-1
    distances of the q and p marginals, computed by cumulative
    distribution transport; a one-cell shift in q therefore costs exactly
    cell width x mass.  Fields whose masses differ by more than 1% are
    renormalized first and flagged.
    """
    cell = lattice.cell
    ma = float(np.sum(a_values) * cell)
    mb = float(np.sum(b_values) * cell)
    flag = False
    a, b = a_values, b_values
    if ma > 0 and mb > 0 and abs(ma - mb) > 0.01 * max(ma, mb):
        a = a / ma
        b = b / mb
        flag = True
    l1 = float(np.sum(np.abs(a - b)) * cell)
    qa = a.sum(axis=1) * lattice.dp
    qb = b.sum(axis=1) * lattice.dp
    pa = a.sum(axis=0) * lattice.dq
    pb = b.sum(axis=0) * lattice.dq
    w1 = _marginal_w1(qa * lattice.dq, qb * lattice.dq, lattice.dq)
    w1 += _marginal_w1(pa * lattice.dp, pb * lattice.dp, lattice.dp)
    return l1, w1, flag


# ---------------------------------------------------------------------------
# Vlasov solver
# ---------------------------------------------------------------------------

@dataclass
class VlasovState:
    lattice: PhaseSpaceLattice
    values: np.ndarray
    time: float = 0.0
    force_scale: float = 1.0
    clipped_mass: float = 0.0

    def mass(self) -> float:
        return float(np.sum(self.values) * self.lattice.cell)

    def spatial_density(self) -> np.ndarray:
        """rho(q) = sum_p m dp."""
        return self.values.sum(axis=1) * self.lattice.dp


def vlasov_from_husimi(field: HusimiField, grid: GridSpec) -> VlasovState:
    """Initial Vlasov datum: the one-particle Husimi field itself."""
    scale = 1.0 / (grid.N * (2.0 * np.pi * grid.hbar) ** grid.d)
    return VlasovState(field.lattice, np.clip(field.values, 0.0, None).copy(),
                       0.0, scale)


def vlasov_force(state: VlasovState, potential: Potential) -> np.ndarray:
    """F(q) = -force_scale (V' * rho)(q) on the q sublattice."""
    lat = state.lattice
    rho = state.spatial_density()
    dq_mat = lat.qs[:, None] - lat.qs[None, :]
    gradv = potential.evaluate_grad(dq_mat.reshape(-1)).reshape(dq_mat.shape)
    return -state.force_scale * (gradv @ rho) * lat.dq


def vlasov_cfl(state: VlasovState, potential: Potential, dt: float) -> dict:
    lat = state.lattice
    pmax = float(np.max(np.abs(lat.ps)))
    fmax = float(np.max(np.abs(vlasov_force(state, potential))))
    q_ok = pmax * dt <= lat.dq + 1e-15
    p_ok = fmax * dt <= lat.dp + 1e-15
    sug = min(lat.dq / pmax if pmax > 0 else np.inf,
              lat.dp / fmax if fmax > 0 else np.inf)
    return {"ok": q_ok and p_ok, "suggested_dt": sug,
            "pmax": pmax, "fmax": fmax}


def _shift_along_q(values: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Periodic cubic-spline advection: out[:, b] = m(q - shift_b, p_b)."""
    nq, npts = values.shape
    rows = (np.arange(nq)[:, None] - shifts[None, :])
    cols = np.broadcast_to(np.arange(npts)[None, :], rows.shape)
    return map_coordinates(values, [rows, cols], order=3, mode="grid-wrap")


def _shift_along_p(values: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """out[a, :] = m(q_a, p - shift_a), periodic wrap in p."""
    nq, npts = values.shape
    cols = (np.arange(npts)[None, :] - shifts[:, None])
    rows = np.broadcast_to(np.arange(nq)[:, None], cols.shape)
    return map_coordinates(values, [rows, cols], order=3, mode="grid-wrap")


def vlasov_step(state: VlasovState, potential: Potential, dt: float,
                enforce_cfl: bool = True) -> VlasovState:
    """Strang: half q-transport, full p-kick, half q-transport.

    Constant per-row shifts with periodic cubic splines conserve the
    lattice sum exactly (B-spline partition of unity); the p axis is
    wrapped too, valid while the field vanishes near the p box edges.
    Negative overshoot is clipped at 0 and the clipped mass logged.
    """
    lat = state.lattice
    if enforce_cfl:
        cfl = vlasov_cfl(state, potential, dt)
        if not cfl["ok"]:
            raise MeanFieldError(
                f"CFL violated (pmax={cfl['pmax']:.3g}, fmax={cfl['fmax']:.3g}); "
                f"suggested dt <= {cfl['suggested_dt']:.3e}")
    vals = state.values
    half_q = lat.ps * (0.5 * dt) / lat.dq
    vals = _shift_along_q(vals, half_q)
    mid = VlasovState(lat, vals, state.time + 0.5 * dt, state.force_scale)
    force = vlasov_force(mid, potential)
    vals = _shift_along_p(vals, force * dt / lat.dp)
    vals = _shift_along_q(vals, half_q)
    clip = float(-np.sum(vals[vals < 0.0]) * lat.cell)
    vals = np.clip(vals, 0.0, None)
    return VlasovState(lat, vals, state.time + dt, state.force_scale,
                       state.clipped_mass + clip)


def vlasov_evolve(state: VlasovState, potential: Potential, dt: float,
                  steps: int) -> VlasovState:
    cur = state
    for _ in range(steps):
        cur = vlasov_step(cur, potential, dt)
    return cur


def vlasov_energy(state: VlasovState, potential: Potential) -> float:
    """Kinetic p^2/2 moment plus the self-consistent pair energy."""
    lat = state.lattice
    kinetic = float(np.sum(state.values * (lat.ps ** 2)[None, :] / 2.0)
                    * lat.cell)
    rho = state.spatial_density()
    dq_mat = lat.qs[:, None] - lat.qs[None, :]
    vmat = potential.evaluate(dq_mat.reshape(-1)).reshape(dq_mat.shape)
    pair = 0.5 * state.force_scale * float(rho @ vmat @ rho) * lat.dq ** 2
    return kinetic + pair


def free_transport_exact(initial: VlasovState, t: float) -> np.ndarray:
    """Method of characteristics for V = 0: m_t(q, p) = m_0(q - p t, p)."""
    lat = initial.lattice
    shifts = lat.ps * t / lat.dq
    return _shift_along_q(initial.values, shifts)
