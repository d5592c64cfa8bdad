"""Memory-kernel master equation for the chain and its algebraic limit.

Treating the reservoirs as unperturbed thermal baths (their reduced state
replaced by the thermal one inside the memory integral) and sending the
ring size to infinity closes the evolution on the chain alone:

    drho_s/dt = -i[H_s, rho_s] + eps^2 sum_{l=1,L} (Lhat_l + Lhat_l^dagger)

    Lhat_l = (|l><l|/4) * integral_{-t}^{0} dtau exp(gamma*tau/2)
             [ JF_l(J_r tau) * I - J0(J_r tau) * rho_s(tau + t) ] U_s(tau)

with U_s(tau) = exp(-i H_s tau), J0 the zeroth Bessel function, and JF the
occupation-weighted band kernel

    JF(J_r t) = (1/2pi) integral dkappa exp(-i J_r cos(kappa) t) * n(kappa),

whose t = 0 value is the mean band filling.  The exponential cutoff at
rate gamma/2 makes the memory integral convergent, so gamma > 0 is
required.  The history convolution is evaluated by trapezoid on the
integration grid over a ring buffer whose depth covers the decayed kernel
envelope; time stepping uses a second-order predictor-corrector matching
the trapezoid accuracy of the memory term.

For a small bias at zero temperature the stationary response matrix rho1
(d rho_s / d mu of the driven contact) obeys the algebraic equation

    i[H_s, rho1] + (eps^2/4)[(C_1 + C_L) rho1 B + h.c.] = (eps^2/4)(C_1 A + h.c.)

in the chain eigenbasis, with B_nn = 1/sqrt(J_r^2 - (E_n + i gamma/2)^2)
(principal branch, Re B >= 0: the retarded transform of the Bessel
kernel), A_nn = d(mu)/(gamma/2 + i(mu - E_n)), d(mu) the reservoir density
of states, and C_l the rank-one site projectors in the eigenbasis.  The
current is then delta_mu * Tr(j_op rho1), independent of how the bias is
split between the contacts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j0 as bessel_j0

from .accel import history_row_conv
from .fulldynamics import (
    CURRENT_FLOOR,
    SolverConfig,
    StationaryResult,
    bond_currents,
    mean_current,
)
from .model import (
    ContactSpec,
    ModelParams,
    base_mu,
    bias_delta_mu,
    chain_eigensystem,
    current_operator,
    slowest_relaxation_rate,
)
from .numerics import (
    NumericalError,
    StationarityMonitor,
    hermitize,
    max_abs,
    quadrature,
    solve_linear,
)

KAPPA_GRID = 4096


class MemoryWindowError(NumericalError):
    """History buffer would exceed its configured capacity."""


def _occupied_arc(contact: ContactSpec, J_r: float) -> float:
    """Zero-temperature Fermi arc half-width arccos(-mu/J_r) in kappa."""
    return float(np.arccos(np.clip(-contact.mu / J_r, -1.0, 1.0)))


def kernel_jF(t: float, contact: ContactSpec, params: ModelParams) -> complex:
    """Occupation-weighted band kernel at a single time (adaptive route)."""
    J_r = params.J_r
    if math.isinf(contact.beta):
        kc = _occupied_arc(contact, J_r)
        if kc == 0.0:
            return 0.0 + 0.0j
        return quadrature(lambda k: np.exp(-1j * J_r * np.cos(k) * t), 0.0, kc) / np.pi

    def integrand(k):
        occ = 1.0 / (np.exp(np.clip(-contact.beta * (J_r * np.cos(k) + contact.mu), -700, 700)) + 1.0)
        return np.exp(-1j * J_r * np.cos(k) * t) * occ

    return quadrature(integrand, -np.pi, np.pi) / (2.0 * np.pi)


def kernel_jF_grid(
    n_steps: int, dt: float, contact: ContactSpec, params: ModelParams
) -> np.ndarray:
    """JF(J_r tau_i) on the grid tau_i = -i*dt, i = 0..n_steps.

    Zero temperature reduces the band integral to the occupied arc, where
    an endpoint-corrected trapezoid stays accurate for strongly oscillatory
    integrands; finite temperature uses the plain periodic trapezoid.
    """
    J_r = params.J_r
    if math.isinf(contact.beta):
        kc = _occupied_arc(contact, J_r)
        if kc == 0.0:
            return np.zeros(n_steps + 1, dtype=complex)
        nodes = np.linspace(0.0, kc, KAPPA_GRID + 1)
        h = kc / KAPPA_GRID
        w = np.full(KAPPA_GRID + 1, h / np.pi)
        w[0] *= 0.5
        w[-1] *= 0.5
        # phase recursion: exp(-i J cos(k) tau_i) with tau_i = -i*dt
        phase = np.exp(1j * J_r * np.cos(nodes) * dt)
        row = np.ones_like(phase)
        out = np.empty(n_steps + 1, dtype=complex)
        for i in range(n_steps + 1):
            out[i] = np.dot(w, row)
            row *= phase
        # Euler-Maclaurin endpoint correction; the kappa = 0 end has zero slope
        z = -J_r * dt * np.arange(n_steps + 1)
        out += -(h * h / (12.0 * np.pi)) * 1j * z * math.sin(kc) * np.exp(
            -1j * z * math.cos(kc)
        )
        return out

    nodes = np.linspace(-np.pi, np.pi, KAPPA_GRID, endpoint=False)
    occ = 1.0 / (
        np.exp(np.clip(-contact.beta * (J_r * np.cos(nodes) + contact.mu), -700, 700))
        + 1.0
    )
    w = occ / KAPPA_GRID
    phase = np.exp(1j * J_r * np.cos(nodes) * dt)
    row = np.ones_like(phase)
    out = np.empty(n_steps + 1, dtype=complex)
    for i in range(n_steps + 1):
        out[i] = np.dot(w, row)
        row *= phase
    return out


def memory_depth(params: ModelParams, dt: float, cutoff: float = 1e-8) -> int:
    """Grid depth covering exp(-gamma*tau/2)*kernel envelope >= cutoff."""
    if params.gamma <= 0:
        raise ValueError("memory depth is finite only for gamma > 0")
    tau = 2.0 * math.log(1.0 / cutoff) / params.gamma
    for _ in range(4):
        env = min(1.0, math.sqrt(2.0 / (np.pi * params.J_r * max(tau, 1e-12))))
        tau = 2.0 * math.log(env / cutoff) / params.gamma
        if tau <= 0:
            tau = dt
            break
    return max(2, int(math.ceil(tau / dt)))


@dataclass(frozen=True)
class KernelTable:
    """Precomputed memory kernels on the integration grid tau_i = -i*dt."""

    dt: float
    J0_values: np.ndarray  # (N+1,)
    JF_values: tuple[np.ndarray, np.ndarray]  # per contact, (N+1,)
    U_s_values: np.ndarray  # (N+1, L, L) chain propagators exp(-i H_s tau_i)


def build_kernel_table(params: ModelParams, dt: float, n_mem: int) -> KernelTable:
    taus = -dt * np.arange(n_mem + 1)
    j0_vals = bessel_j0(params.J_r * taus)
    jf_vals = tuple(
        kernel_jF_grid(n_mem, dt, contact, params) for contact in params.contacts
    )
    spec = chain_eigensystem(params)
    phases = np.exp(-1j * spec.values[None, :] * taus[:, None])
    U = np.einsum("ab,ib,cb->iac", spec.vectors, phases, spec.vectors)
    return KernelTable(dt=dt, J0_values=j0_vals, JF_values=jf_vals, U_s_values=U)


def _auto_dt_nonmarkov(params: ModelParams) -> float:
    dt = 0.02 / max(params.J_s, params.J_r)
    return min(dt, 0.2 / params.gamma)


def _response_operator(params: ModelParams) -> np.ndarray:
    """Vectorized linear operator of the stationary response equation.

    Row-major convention vec(X Y Z) = kron(X, Z.T) vec(Y); the operator is
    bias- and temperature-independent and its eigenvalue real parts are the
    linear relaxation rates of the memory-kernel chain dynamics.
    """
    spec = chain_eigensystem(params)
    E = spec.values
    D = np.diag(E).astype(complex)
    B = np.diag(1.0 / np.sqrt(params.J_r**2 - (E + 0.5j * params.gamma) ** 2))
    w1 = spec.vectors[0, :]
    wL = spec.vectors[params.L - 1, :]
    Csum = (np.outer(w1, w1) + np.outer(wL, wL)).astype(complex)
    eye = np.eye(params.L)
    op = 1j * (np.kron(D, eye) - np.kron(eye, D))
    op += 0.25 * params.epsilon**2 * (np.kron(Csum, B) + np.kron(B.conj(), Csum))
    return op


def chain_relaxation_rate(params: ModelParams) -> float:
    """Slowest relaxation rate of the memory-kernel chain dynamics."""
    if params.epsilon == 0:
        return params.J_s
    rates = np.linalg.eigvals(_response_operator(params)).real
    slowest = float(np.min(rates))
    if slowest <= 0:
        return slowest_relaxation_rate(params)
    # modest safety margin: the operator evaluates the memory transforms at
    # the undamped mode frequencies, slightly overestimating slow rates
    return 0.7 * min(slowest, params.J_s)


def evolve_nonmarkov(
    params: ModelParams, cfg: SolverConfig | None = None
) -> StationaryResult:
    """Integrate the memory-kernel equation from an empty chain."""
    cfg = cfg or SolverConfig()
    L = params.L
    if params.epsilon == 0.0:
        return StationaryResult(
            rho_s=np.zeros((L, L), dtype=complex),
            current=0.0,
            bond_currents=np.zeros(L - 1),
            t_final=0.0,
            converged=True,
            residual=0.0,
        )
    if params.gamma <= 0:
        raise ValueError("the memory integral converges only for gamma > 0")

    dt = cfg.dt if cfg.dt is not None else _auto_dt_nonmarkov(params)
    n_mem = memory_depth(params, dt, cfg.memory_cutoff)
    if n_mem > cfg.max_history:
        raise MemoryWindowError(
            f"memory window needs {n_mem} samples, exceeding the cap {cfg.max_history}"
        )
    table = build_kernel_table(params, dt, n_mem)
    decay = np.exp(-0.5 * params.gamma * dt * np.arange(n_mem + 1))
    conv_coef = decay * table.J0_values * dt
    g_rows = []
    sites = (0, L - 1)
    for idx, site in enumerate(sites):
        g = (decay * table.JF_values[idx])[:, None] * table.U_s_values[:, site, :]
        cum = np.cumsum(g, axis=0)
        rows = dt * (cum - 0.5 * (g[0][None, :] + g))
        rows[0] = 0.0
        g_rows.append(np.ascontiguousarray(rows))

    H_s = np.zeros((L, L), dtype=complex)
    H_s += np.diag(np.full(L - 1, -0.5 * params.J_s), 1)
    H_s += np.diag(np.full(L - 1, -0.5 * params.J_s), -1)
    eps2 = params.epsilon**2
    U = np.ascontiguousarray(table.U_s_values)

    cap = n_mem + 1
    hist = np.zeros((cap, L, L), dtype=complex)
    rho = np.zeros((L, L), dtype=complex)

    def rhs(n: int, state: np.ndarray, head: int) -> np.ndarray:
        m = min(n, n_mem)
        out = -1j * (H_s @ state - state @ H_s)
        for idx, site in enumerate(sites):
            conv = history_row_conv(hist, head, m, site, U, conv_coef)
            v = 0.25 * (g_rows[idx][m] - conv)
            out[site, :] += eps2 * v
            out[:, site] += eps2 * np.conj(v)
        return out

    r_slow = chain_relaxation_rate(params)
    window = cfg.window_factor / r_slow
    t_max = cfg.t_max if cfg.t_max is not None else (
        (math.log(10.0 / max(cfg.tol, 1e-14)) + 12.0) / r_slow
    )
    monitor = StationarityMonitor(window, cfg.tol, floor=CURRENT_FLOOR, check_every=32)

    head = 0
    n = 0
    t = 0.0
    converged = False
    n_steps = int(math.ceil(t_max / dt))
    for _ in range(n_steps):
        f1 = rhs(n, rho, head)
        pred = rho + dt * f1
        head_next = (head + 1) % cap
        hist[head_next] = pred
        f2 = rhs(n + 1, pred, head_next)
        rho = rho + 0.5 * dt * (f1 + f2)
        if cfg.hermitize:
            rho = hermitize(rho)
        hist[head_next] = rho
        head = head_next
        n += 1
        t = n * dt
        j = params.J_s * float(np.mean(np.imag(np.diag(rho, -1))))
        if monitor.push(t, j):
            converged = True
            break

    rho = hermitize(rho)
    return StationaryResult(
        rho_s=rho,
        current=mean_current(rho, params),
        bond_currents=bond_currents(rho, params),
        t_final=t,
        converged=converged,
        residual=monitor.residual,
    )


def contact_dos(mu: float, J_r: float) -> float:
    """Reservoir density of states J_r/(pi*sqrt(J_r^2 - mu^2)) in the band."""
    if abs(abs(mu) - abs(J_r)) < 1e-14:
        raise ValueError("density of states is singular exactly at the band edge")
    if abs(mu) > abs(J_r):
        return 0.0
    return J_r / (np.pi * math.sqrt(J_r**2 - mu**2))


@dataclass(frozen=True)
class LinearResponseMatrices:
    """Ingredients of the algebraic stationary equation, chain eigenbasis."""

    energies: np.ndarray
    vectors: np.ndarray
    A: np.ndarray  # diagonal source factor
    B: np.ndarray  # diagonal retarded band factor, Re B >= 0
    C1: np.ndarray
    CL: np.ndarray
    d_mu: float


def linear_response_matrices(params: ModelParams, mu: float) -> LinearResponseMatrices:
    if params.gamma <= 0:
        raise ValueError("linear response requires gamma > 0")
    spec = chain_eigensystem(params)
    E = spec.values
    d = contact_dos(mu, params.J_r)
    B = 1.0 / np.sqrt(params.J_r**2 - (E + 0.5j * params.gamma) ** 2)
    assert np.all(B.real >= 0.0)
    A = d / (0.5 * params.gamma + 1j * (mu - E))
    w1 = spec.vectors[0, :]
    wL = spec.vectors[params.L - 1, :]
    return LinearResponseMatrices(
        energies=E,
        vectors=spec.vectors,
        A=A,
        B=B,
        C1=np.outer(w1, w1),
        CL=np.outer(wL, wL),
        d_mu=d,
    )


@dataclass(frozen=True)
class LinearResponseResult:
    """Stationary response matrix rho1 (site basis) and metadata."""

    rho1: np.ndarray
    in_band: bool
    residual: float


def linear_response_stationary(
    params: ModelParams, mu: float | None = None
) -> LinearResponseResult:
    """Solve the algebraic stationary equation for the response matrix.

    Requires zero-temperature reservoirs; outside the band (d(mu) = 0) the
    response vanishes and the returned matrix is zero with in_band=False.
    """
    for contact in params.contacts:
        if not math.isinf(contact.beta):
            raise ValueError("the algebraic response is derived at beta = inf")
    mu = mu if mu is not None else base_mu(params)
    L = params.L
    if params.epsilon == 0.0:
        return LinearResponseResult(np.zeros((L, L), dtype=complex), True, 0.0)
    if abs(mu) >= params.J_r:
        contact_dos(mu, params.J_r)  # raises on the exact band edge
        return LinearResponseResult(np.zeros((L, L), dtype=complex), False, 0.0)

    mats = linear_response_matrices(params, mu)
    A = np.diag(mats.A)
    op = _response_operator(params)
    src = 0.25 * params.epsilon**2 * (mats.C1 @ A + A.conj() @ mats.C1)
    x = solve_linear(op, src.reshape(-1))
    rho1_eig = x.reshape(L, L)
    residual = float(np.linalg.norm(op @ x - src.reshape(-1)))
    defect = max_abs(rho1_eig - rho1_eig.conj().T)
    if defect > 1e-10 * max(max_abs(rho1_eig), 1e-300):
        raise NumericalError(f"response matrix not Hermitian: defect {defect:.3e}")
    rho1_site = mats.vectors @ hermitize(rho1_eig) @ mats.vectors.T
    return LinearResponseResult(rho1=rho1_site, in_band=True, residual=residual)


def conductance_current(
    rho1: np.ndarray, delta_mu: float, params: ModelParams
) -> float:
    """Linear-response current delta_mu * Tr(j_op rho1)."""
    j_op = current_operator(params.L, params.J_s)
    val = delta_mu * np.trace(j_op @ rho1)
    if abs(val.imag) > 1e-10 * max(abs(val), 1e-300):
        raise NumericalError(f"current has spurious imaginary part {val.imag:.3e}")
    return float(val.real)


def linear_response_current(params: ModelParams, mu: float | None = None) -> float:
    """Convenience: conductance current at the model's own bias."""
    res = linear_response_stationary(params, mu)
    return conductance_current(res.rho1, bias_delta_mu(params), params)
