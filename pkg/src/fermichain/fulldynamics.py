"""Exact single-particle dynamics of the chain plus both reservoirs.

The composite single-particle density matrix rho (dimension 2M+L) evolves
under

    drho/dt = -i[H, rho] + gamma * P rho0 P - (gamma/2) * (P rho + rho P)

where P projects onto all reservoir modes and rho0 is the block-diagonal
thermal reservoir state.  Restricted to the blocks of a single contact this
is exactly the coupled chain / coherence / reservoir system: the chain
block carries no dissipator, chain-reservoir coherences decay at gamma/2,
and reservoir blocks relax at gamma toward their thermal state.

Two integrators are provided.  ``spectral`` (default) diagonalizes the
non-Hermitian generator A = -iH - (gamma/2)P once and propagates the exact
solution rho(t) = Sigma + S (X * exp(D t)) S^dagger, where Sigma solves the
stationarity condition A Sigma + Sigma A^dagger = -gamma*rho0 elementwise
in the eigenbasis; this makes the cost of reaching stationarity independent
of gamma.  ``rk4`` is the plain fixed-step reference integrator, kept for
cross-validation; the two agree to solver tolerance (see the test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    BlockLayout,
    ModelParams,
    OperatorSet,
    build_operators,
    contact_occupations,
    slowest_relaxation_rate,
)
from .numerics import NumericalError, StationarityMonitor, hermitize, max_abs

CURRENT_FLOOR = 1e-6  # scale floor for relative stationarity of the current
OCCUPANCY_SLACK = 1e-8  # fermionic eigenvalue bounds [-slack, 1+slack]


class PositivityError(NumericalError):
    """Occupancy bounds of the density matrix violated beyond tolerance."""


@dataclass
class SolverConfig:
    """Settings shared by the time-domain solvers.

    ``dt`` and ``t_max`` default to parameter-dependent choices; ``tol`` is
    the relative stationarity tolerance of the mean current over a trailing
    window of ``window_factor`` slow-relaxation times.
    """

    dt: float | None = None
    t_max: float | None = None
    tol: float = 1e-5
    integrator: str = "spectral"
    window_factor: float = 10.0
    positivity_tol: float = 1e-6
    check_occupancy: bool = True
    hermitize: bool = True
    memory_cutoff: float = 1e-8
    max_history: int = 500_000
    trajectory_path: str | None = None


@dataclass(frozen=True)
class StationaryResult:
    """Stationary chain state and current with convergence metadata."""

    rho_s: np.ndarray
    current: float
    bond_currents: np.ndarray
    t_final: float
    converged: bool
    residual: float


class FullSPDM:
    """Composite density matrix with named views into the block layout."""

    def __init__(self, matrix: np.ndarray, layout: BlockLayout):
        if matrix.shape != (layout.dim, layout.dim):
            raise ValueError("matrix does not match layout dimension")
        self.matrix = matrix
        self.layout = layout

    @property
    def rho_r1(self) -> np.ndarray:
        return self.matrix[self.layout.r1, self.layout.r1]

    @property
    def rho_s(self) -> np.ndarray:
        return self.matrix[self.layout.s, self.layout.s]

    @property
    def rho_rL(self) -> np.ndarray:
        return self.matrix[self.layout.rL, self.layout.rL]

    @property
    def rho_c1(self) -> np.ndarray:
        return self.matrix[self.layout.r1, self.layout.s]

    @property
    def rho_cL(self) -> np.ndarray:
        return self.matrix[self.layout.rL, self.layout.s]

    @property
    def rho_r1rL(self) -> np.ndarray:
        return self.matrix[self.layout.r1, self.layout.rL]

    def occupancy_bounds_ok(self, slack: float = OCCUPANCY_SLACK) -> bool:
        ev = np.linalg.eigvalsh(hermitize(self.matrix))
        return bool(ev[0] >= -slack and ev[-1] <= 1.0 + slack)


def thermal_reservoir_diagonal(params: ModelParams, layout: BlockLayout) -> np.ndarray:
    """Diagonal of rho0: thermal occupations on both reservoirs, chain empty."""
    d = np.zeros(layout.dim)
    d[layout.r1] = contact_occupations(params.contacts[0], params)
    d[layout.rL] = contact_occupations(params.contacts[1], params)
    return d


def initial_spdm(params: ModelParams, layout: BlockLayout) -> np.ndarray:
    """Initial condition: reservoirs thermal, chain empty, no coherences."""
    return np.diag(thermal_reservoir_diagonal(params, layout)).astype(complex)


def full_rhs(rho: np.ndarray, ops: OperatorSet, params: ModelParams) -> np.ndarray:
    """Time derivative of the composite single-particle density matrix."""
    if rho.shape != ops.H_total.shape:
        raise ValueError(
            f"state shape {rho.shape} does not match operators {ops.H_total.shape}"
        )
    H = ops.H_total
    drho = -1j * (H @ rho - rho @ H)
    if params.gamma > 0:
        p = ops.layout.contact_indicator()
        rho0 = thermal_reservoir_diagonal(params, ops.layout)
        # projector dissipator: gamma*P rho0 P - (gamma/2)(P rho + rho P)
        drho -= 0.5 * params.gamma * (p[:, None] * rho + rho * p[None, :])
        drho[np.diag_indices_from(drho)] += params.gamma * rho0
    return drho


def bond_currents(rho_s: np.ndarray, params: ModelParams) -> np.ndarray:
    """Per-bond currents J_s * Im rho[l+1, l]; positive toward contact L."""
    return params.J_s * np.imag(np.diag(rho_s, -1))


def mean_current(rho_s: np.ndarray, params: ModelParams) -> float:
    """Bond-averaged current, Tr(j_op rho_s)."""
    return float(np.mean(bond_currents(rho_s, params)))


def _auto_dt(params: ModelParams) -> float:
    # resolve the fastest rates actually present in this generator:
    # band dynamics at J and reservoir relaxation at gamma/2
    dt = 0.02 / max(params.J_s, params.J_r)
    if params.gamma > 0:
        dt = min(dt, 0.5 / params.gamma)
    return dt


def _auto_t_max(params: ModelParams, tol: float) -> float:
    r = slowest_relaxation_rate(params)
    # decay budget: reach tol relative amplitude plus a full trailing window
    return (math.log(10.0 / max(tol, 1e-14)) + 12.0) / r


def _window(params: ModelParams, cfg: SolverConfig) -> float:
    return cfg.window_factor / slowest_relaxation_rate(params)


def _result_from_state(
    rho: np.ndarray,
    params: ModelParams,
    layout: BlockLayout,
    t_final: float,
    converged: bool,
    residual: float,
    cfg: SolverConfig,
) -> StationaryResult:
    full = FullSPDM(rho, layout)
    if cfg.check_occupancy:
        ev = np.linalg.eigvalsh(hermitize(rho))
        if ev[0] < -cfg.positivity_tol or ev[-1] > 1.0 + cfg.positivity_tol:
            raise PositivityError(
                f"occupancy bounds violated: eigenvalues in [{ev[0]:.3e}, {ev[-1]:.3e}]"
            )
    rho_s = hermitize(full.rho_s.copy())
    bonds = bond_currents(rho_s, params)
    return StationaryResult(
        rho_s=rho_s,
        current=mean_current(rho_s, params),
        bond_currents=bonds,
        t_final=t_final,
        converged=converged,
        residual=residual,
    )


class SpectralPropagator:
    """Closed-form propagator of the composite linear evolution.

    Diagonalizes A = -iH - (gamma/2)P once; the stationary state and the
    value of rho(t) or of any linear observable at arbitrary t then follow
    from elementwise exponentials in the eigenbasis.
    """

    COND_LIMIT = 1e9

    def __init__(self, params: ModelParams, ops: OperatorSet | None = None):
        self.params = params
        self.ops = ops if ops is not None else build_operators(params)
        layout = self.ops.layout
        self.layout = layout
        p = layout.contact_indicator()
        rho0 = thermal_reservoir_diagonal(params, layout)
        A = -1j * self.ops.H_total.astype(complex)
        A[np.diag_indices_from(A)] -= 0.5 * params.gamma * p

        w, S = np.linalg.eig(A)
        Sinv = np.linalg.inv(S)
        cond = np.linalg.norm(S, 1) * np.linalg.norm(Sinv, 1)
        if cond > self.COND_LIMIT:
            raise NumericalError(
                f"propagator eigenbasis badly conditioned (cond ~ {cond:.2e})"
            )
        self._decay = w[:, None] + w[None, :].conj()

        rho_init = np.diag(rho0).astype(complex)
        if params.gamma > 0:
            Qhat = Sinv @ (params.gamma * np.diag(rho0)) @ Sinv.conj().T
            sigma_hat = -Qhat / self._decay
            self.sigma = S @ sigma_hat @ S.conj().T
        else:
            self.sigma = np.zeros_like(rho_init)
        self._S = S
        self._X = Sinv @ (rho_init - self.sigma) @ Sinv.conj().T

        j_emb = np.zeros((layout.dim, layout.dim), dtype=complex)
        j_emb[layout.s, layout.s] = self.ops.J_op
        self._j_weights = self._X * (S.conj().T @ j_emb @ S).T
        self.stationary_current = float(np.trace(j_emb @ self.sigma).real)

        p_s = np.zeros((layout.dim, layout.dim), dtype=complex)
        p_s[layout.s, layout.s] = np.eye(layout.L)
        self._trace_weights = self._X * (S.conj().T @ p_s @ S).T
        self._trace_sigma = float(np.trace(self.sigma[layout.s, layout.s]).real)

    def current_at(self, t: float) -> float:
        e = np.exp(self._decay * t)
        return self.stationary_current + float(np.sum(self._j_weights * e).real)

    def chain_trace_at(self, t: float) -> float:
        e = np.exp(self._decay * t)
        return self._trace_sigma + float(np.sum(self._trace_weights * e).real)

    def rho_at(self, t: float) -> np.ndarray:
        e = np.exp(self._decay * t)
        return self.sigma + self._S @ (self._X * e) @ self._S.conj().T

    def current_transients(self) -> tuple[np.ndarray, np.ndarray]:
        """Amplitudes and decay rates of the current transient terms.

        j(t) = stationary_current + sum_k w_k exp(decay_k * t) with
        Re(decay_k) <= 0; returned as (|w_k|, -Re(decay_k)).
        """
        w = np.abs(self._j_weights).ravel()
        rates = -self._decay.real.ravel()
        keep = w > 1e-300
        return w[keep], rates[keep]

    def time_to_stationary(self, tol: float, scale: float) -> float | None:
        """Earliest time at which the current transient is provably small.

        Uses the union bound sum_k w_k exp(-r_k t) <= tol*scale; returns
        None when some non-decaying term stays above threshold (gamma=0).
        """
        w, rates = self.current_transients()
        thresh = tol * scale / max(len(w), 1)
        mask = w > thresh
        if not np.any(mask):
            return 0.0
        if np.any(rates[mask] <= 1e-300):
            return None
        return float(np.max(np.log(w[mask] / thresh) / rates[mask]))

    def slowest_visible_rate(self, tol: float, scale: float) -> float:
        """Slowest decay rate among transient terms above threshold."""
        w, rates = self.current_transients()
        mask = w > tol * scale
        if not np.any(mask):
            return slowest_relaxation_rate(self.params)
        return float(np.min(rates[mask]))


def full_spdm_at(
    params: ModelParams, t: float, ops: OperatorSet | None = None
) -> FullSPDM:
    """Composite density matrix at time t from the thermal/empty start."""
    prop = SpectralPropagator(params, ops)
    return FullSPDM(hermitize(prop.rho_at(t)), prop.layout)


def _decoupled_result(params: ModelParams, layout: BlockLayout) -> StationaryResult:
    # epsilon = 0: the chain stays empty, reservoirs relax independently
    rho_s = np.zeros((params.L, params.L), dtype=complex)
    return StationaryResult(
        rho_s=rho_s,
        current=0.0,
        bond_currents=np.zeros(params.L - 1),
        t_final=0.0,
        converged=True,
        residual=0.0,
    )


def _evolve_spectral(
    params: ModelParams, cfg: SolverConfig, ops: OperatorSet
) -> StationaryResult:
    prop = SpectralPropagator(params, ops)
    scale = max(abs(prop.stationary_current), CURRENT_FLOOR)
    window = cfg.window_factor / prop.slowest_visible_rate(cfg.tol, scale)
    # the whole trailing window must sit in the stationary regime
    t_req = prop.time_to_stationary(0.25 * cfg.tol, scale)
    t_stop = None if t_req is None else t_req + window
    t_max = cfg.t_max if cfg.t_max is not None else (
        4.0 * t_stop if t_stop is not None else _auto_t_max(params, cfg.tol)
    )

    def window_residual(t_end: float) -> float:
        ts = np.linspace(max(0.0, t_end - window), max(t_end, window / 64.0), 65)
        js = np.array([prop.current_at(t) for t in ts])
        spread_scale = max(float(np.max(np.abs(js))), CURRENT_FLOOR)
        res = float(np.ptp(js)) / spread_scale
        if params.gamma > 0:
            res = max(res, abs(js[-1] - prop.stationary_current) / spread_scale)
        return res

    converged = False
    t_final = min(t_stop, t_max) if t_stop is not None else t_max
    residual = window_residual(t_final)
    while not converged:
        if residual <= cfg.tol:
            converged = True
        elif t_final < t_max:
            t_final = min(1.5 * t_final + window, t_max)
            residual = window_residual(t_final)
        else:
            break

    if cfg.trajectory_path:
        traj_ts = np.linspace(0.0, t_final, 512)
        _write_trajectory(
            cfg.trajectory_path,
            [(t, prop.current_at(t), prop.chain_trace_at(t)) for t in traj_ts],
        )
    rho = hermitize(prop.rho_at(t_final))
    return _result_from_state(rho, params, prop.layout, t_final, converged, residual, cfg)


def _evolve_rk4(
    params: ModelParams, cfg: SolverConfig, ops: OperatorSet
) -> StationaryResult:
    layout = ops.layout
    dt = cfg.dt if cfg.dt is not None else _auto_dt(params)
    t_max = cfg.t_max if cfg.t_max is not None else _auto_t_max(params, cfg.tol)
    window = _window(params, cfg)
    monitor = StationarityMonitor(
        window, cfg.tol, floor=CURRENT_FLOOR, check_every=16
    )
    H = ops.H_total.astype(complex)
    p = layout.contact_indicator()
    rho0 = thermal_reservoir_diagonal(params, layout)
    gamma = params.gamma

    def rhs(_t, rho):
        d = -1j * (H @ rho - rho @ H)
        if gamma > 0:
            d -= 0.5 * gamma * (p[:, None] * rho + rho * p[None, :])
            d[np.diag_indices_from(d)] += gamma * rho0
        return d

    rho = initial_spdm(params, layout)
    t = 0.0
    converged = False
    traj = [] if cfg.trajectory_path else None
    n_steps = int(math.ceil(t_max / dt))
    check_positivity_every = max(1, n_steps // 20)
    sub = layout.s
    for step in range(n_steps):
        k1 = rhs(t, rho)
        k2 = rhs(t, rho + 0.5 * dt * k1)
        k3 = rhs(t, rho + 0.5 * dt * k2)
        k4 = rhs(t, rho + dt * k3)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if cfg.hermitize:
            rho = hermitize(rho)
        t += dt
        j = params.J_s * float(np.mean(np.imag(np.diag(rho[sub, sub], -1))))
        if traj is not None:
            traj.append((t, j, float(np.trace(rho[sub, sub]).real)))
        if monitor.push(t, j):
            converged = True
            break
        if cfg.check_occupancy and (step + 1) % check_positivity_every == 0:
            ev = np.linalg.eigvalsh(hermitize(rho))
            if ev[0] < -cfg.positivity_tol or ev[-1] > 1.0 + cfg.positivity_tol:
                raise PositivityError(
                    f"occupancy bounds violated at t={t:.2f}: "
                    f"[{ev[0]:.3e}, {ev[-1]:.3e}]"
                )
    if traj is not None:
        _write_trajectory(cfg.trajectory_path, traj)
    return _result_from_state(rho, params, layout, t, converged, monitor.residual, cfg)


def _write_trajectory(path: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write("# t current chain_trace\n")
        for t, j, tr in rows:
            fh.write(f"{t:.10g} {j:.12g} {tr:.12g}\n")


def evolve_to_stationary(
    params: ModelParams,
    cfg: SolverConfig | None = None,
    ops: OperatorSet | None = None,
) -> StationaryResult:
    """Evolve from the thermal/empty start until the current is stationary.

    Stationarity means the relative spread of the mean current over a
    trailing window of ``window_factor`` slow-relaxation times drops below
    ``tol``; if ``t_max`` is reached first the best estimate is returned
    with ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    ops = ops if ops is not None else build_operators(params)
    if params.epsilon == 0.0:
        return _decoupled_result(params, ops.layout)
    if cfg.integrator == "spectral":
        try:
            return _evolve_spectral(params, cfg, ops)
        except NumericalError:
            if params.gamma <= 0:
                raise
            return _evolve_rk4(params, cfg, ops)
    if cfg.integrator == "rk4":
        return _evolve_rk4(params, cfg, ops)
    raise ValueError(f"unknown integrator {cfg.integrator!r}")
