"""Cross-method analysis: coherence spectra, peaks, slopes, exact oracles.

The regime labels used in reports are artifact heuristics encoding the
stated validity conditions of the approximate solvers (memoryless
reduction needs gamma well above epsilon; the thermal-bath closure fails
at small gamma); they are not sharp boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .fulldynamics import (
    CURRENT_FLOOR,
    SolverConfig,
    StationaryResult,
    bond_currents,
    mean_current,
)
from .manybody import (
    BlockDiagonalEvolver,
    LindbladModel,
    auto_dt_manybody,
    build_quadratic_model,
    chain_current_from_spdm,
    fock_dimension_ok,
)
from .markov import effective_rate
from .model import (
    ModelParams,
    build_operators,
    contact_occupations,
    slowest_relaxation_rate,
)
from .numerics import NumericalError, StationarityMonitor, hermiticity_defect, hermitize


def transporting_spectrum(rho1: np.ndarray) -> tuple[np.ndarray, float]:
    """Eigenvalues of a response matrix, descending by magnitude.

    Returns (eigenvalues, purity fraction max|lambda| / sum|lambda|); the
    fraction is 1 for a rank-one matrix and 1/L for a maximally mixed one.
    """
    if hermiticity_defect(np.asarray(rho1)) > 1e-10:
        raise NumericalError("transporting-state matrix must be Hermitian")
    ev = np.linalg.eigvalsh(hermitize(np.asarray(rho1)))
    order = np.argsort(-np.abs(ev))
    ev = ev[order]
    total = float(np.sum(np.abs(ev)))
    fraction = float(np.abs(ev[0]) / total) if total > 0 else 0.0
    return ev, fraction


@dataclass(frozen=True)
class Peak:
    position: float
    height: float
    prominence: float


def detect_peaks(
    x: np.ndarray, y: np.ndarray, prominence_frac: float = 0.1
) -> list[Peak]:
    """Local maxima with prominence above a fraction of the series range."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 5:
        raise ValueError("peak detection needs at least 5 samples")
    if np.any(np.diff(x) <= 0):
        raise ValueError("samples must be sorted by the sweep coordinate")
    span = float(np.max(y) - np.min(y))
    if span == 0.0:
        return []
    idx, props = find_peaks(y, prominence=prominence_frac * span)
    return [
        Peak(position=float(x[i]), height=float(y[i]), prominence=float(p))
        for i, p in zip(idx, props["prominences"])
    ]


def asymptotic_slope(
    gammas: np.ndarray, currents: np.ndarray
) -> tuple[float, float]:
    """Least-squares log-log slope of j(gamma) with its standard error."""
    g = np.asarray(gammas, dtype=float)
    j = np.asarray(currents, dtype=float)
    if len(g) < 4:
        raise ValueError("slope fit needs at least 4 points")
    if np.any(j <= 0):
        raise ValueError("slope fit requires positive currents")
    lx = np.log(g)
    ly = np.log(j)
    coef, cov = np.polyfit(lx, ly, 1, cov=True)
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


def regime(params: ModelParams) -> str:
    """Heuristic dynamical-regime label: I (small), II (middle), III (large)."""
    if params.gamma >= 5.0 * params.epsilon:
        return "III"
    if params.gamma <= params.epsilon**2 / params.J_s:
        return "I"
    return "II"


def _ring_contact_model(params: ModelParams) -> tuple[LindbladModel, np.ndarray]:
    n_modes = params.dim
    if not fock_dimension_ok(n_modes):
        raise ValueError(
            f"Fock-space oracle limited to 2M+L <= 12 modes, got {n_modes}"
        )
    ops = build_operators(params)
    driven = []
    occ0 = np.zeros(n_modes)
    for contact, block in zip(params.contacts, ops.layout.contact_slices()):
        nbar = contact_occupations(contact, params)
        occ0[block] = nbar
        for k in range(params.M):
            driven.append((block.start + k, params.gamma, float(nbar[k])))
    return build_quadratic_model(ops.H_total, driven), occ0


def oracle_spdm_at(
    params: ModelParams, t_final: float, dt: float | None = None
) -> np.ndarray:
    """Composite correlation matrix at time t from the exact Fock dynamics."""
    model, occ0 = _ring_contact_model(params)
    max_rate = max(params.J_s, params.J_r, params.gamma, params.epsilon)
    dt = dt if dt is not None else auto_dt_manybody(max_rate)
    evolver = BlockDiagonalEvolver(model)
    R = evolver.evolve(model.product_state(occ0), t_final, dt)
    return model.spdm(R)


def fock_space_oracle(
    params: ModelParams, cfg: SolverConfig | None = None
) -> StationaryResult:
    """Evolve the exact many-body dynamics until the current is stationary."""
    cfg = cfg or SolverConfig()
    model, occ0 = _ring_contact_model(params)
    layout = build_operators(params).layout
    max_rate = max(params.J_s, params.J_r, params.gamma, params.epsilon)
    dt = cfg.dt if cfg.dt is not None else auto_dt_manybody(max_rate)
    r_slow = slowest_relaxation_rate(params)
    window = cfg.window_factor / r_slow
    t_max = cfg.t_max if cfg.t_max is not None else (
        (math.log(10.0 / max(cfg.tol, 1e-14)) + 12.0) / r_slow
    )
    monitor = StationarityMonitor(window, cfg.tol, floor=CURRENT_FLOOR)

    # current needs only the chain bond correlators a_{l+1}^+ a_l
    pairs = [
        (layout.chain_site_index(site) + 1, layout.chain_site_index(site))
        for site in range(params.L - 1)
    ]
    evolver = BlockDiagonalEvolver(model)

    state = {"t": 0.0, "converged": False}
    sample_every = max(1, int(round(window / (64.0 * dt))))

    def sample(t, flat):
        if state["converged"]:
            return
        coh = evolver.bond_coherences(flat, pairs)
        j = params.J_s * float(np.mean(np.imag(coh)))
        state["t"] = t
        if monitor.push(t, j):
            state["converged"] = True

    flat = evolver.evolve_packed(
        evolver.pack(model.product_state(occ0)),
        t_max,
        dt,
        sample_every=sample_every,
        sample_fn=sample,
    )
    rho = model.spdm(hermitize(evolver.unpack(flat)))
    rho_s = hermitize(rho[layout.s, layout.s])
    return StationaryResult(
        rho_s=rho_s,
        current=mean_current(rho_s, params),
        bond_currents=bond_currents(rho_s, params),
        t_final=state["t"] if state["converged"] else t_max,
        converged=state["converged"],
        residual=monitor.residual,
    )


def hubbard_chain_oracle(
    L: int, J_s: float, gtilde: float, nbar1: float, nbarL: float, t_max: float | None = None
) -> np.ndarray:
    """Stationary chain correlation matrix of the edge-driven open chain.

    Exact many-body evolution of the chain with thermal gain/drain at rate
    gtilde on the edge sites; the memoryless single-particle equation must
    reproduce this correlation matrix.
    """
    h = np.zeros((L, L))
    h += np.diag(np.full(L - 1, -0.5 * J_s), 1)
    h += np.diag(np.full(L - 1, -0.5 * J_s), -1)
    model = build_quadratic_model(
        h, [(0, gtilde, nbar1), (L - 1, gtilde, nbarL)]
    )
    occ0 = np.zeros(L)
    occ0[0] = nbar1
    occ0[L - 1] = nbarL
    R = model.product_state(occ0)
    t_max = t_max if t_max is not None else 60.0 / min(gtilde, J_s)
    dt = auto_dt_manybody(max(J_s, gtilde)) / 2.0
    R = model.evolve(R, t_max, dt)
    return hermitize(model.spdm(R))


def oracle_current(params: ModelParams, cfg: SolverConfig | None = None) -> float:
    return fock_space_oracle(params, cfg).current


def chain_current(rho_s: np.ndarray, J_s: float) -> float:
    return chain_current_from_spdm(rho_s, J_s)
