"""Memoryless (Markovian) reduction of the chain master equation.

When gamma is large compared to the chain-reservoir coupling epsilon, the
memory integral collapses and the chain obeys a local-in-time equation
with edge gain/drain at the effective rate

    gtilde = epsilon^2 / gamma:

    drho_s/dt = -i[H_s, rho_s]
                - gtilde * sum_{l=1,L} ( {|l><l|, rho_s}/2 - nbar_l |l><l| )

where nbar_l is the mean band filling of reservoir l (the t = 0 value of
the band kernel, not the Fermi factor at a single energy).  The stationary
state is the unique solution of a linear system and the mean current has
the closed form

    j = (J_s^2 * gtilde / (J_s^2 + gtilde^2)) * (nbar_1 - nbar_L) / 2,

which carries no resonance structure: only the mean fillings enter.
"""

from __future__ import annotations

import numpy as np

from .fulldynamics import StationaryResult, bond_currents, mean_current
from .model import ModelParams, chain_hamiltonian, mean_band_occupation
from .numerics import hermitize, solve_linear


def effective_rate(epsilon: float, gamma: float) -> float:
    """Effective chain relaxation rate epsilon^2/gamma."""
    if gamma <= 0:
        raise ValueError("the effective rate requires gamma > 0")
    return epsilon**2 / gamma


def markov_validity(epsilon: float, gamma: float) -> bool:
    """Memoryless reduction is trustworthy only for gamma well above epsilon."""
    return gamma >= 5.0 * epsilon


def contact_fillings(params: ModelParams) -> tuple[float, float]:
    return tuple(
        mean_band_occupation(contact, params.J_r) for contact in params.contacts
    )


def markov_rhs(
    rho: np.ndarray, params: ModelParams, fillings: tuple[float, float] | None = None
) -> np.ndarray:
    """Time derivative under the memoryless chain equation."""
    L = params.L
    n1, nL = fillings if fillings is not None else contact_fillings(params)
    gt = effective_rate(params.epsilon, params.gamma)
    H = chain_hamiltonian(L, params.J_s)
    d = -1j * (H @ rho - rho @ H)
    p = np.zeros(L)
    p[0] = 1.0
    p[L - 1] = 1.0
    d -= 0.5 * gt * (p[:, None] * rho + rho * p[None, :])
    d[0, 0] += gt * n1
    d[L - 1, L - 1] += gt * nL
    return d


def stationary_markov(params: ModelParams) -> StationaryResult:
    """Stationary chain state by direct solve of the vectorized equation."""
    L = params.L
    gt = effective_rate(params.epsilon, params.gamma)
    n1, nL = contact_fillings(params)
    H = chain_hamiltonian(L, params.J_s).astype(complex)
    eye = np.eye(L)
    p = np.zeros((L, L))
    p[0, 0] = 1.0
    p[L - 1, L - 1] = 1.0
    op = -1j * (np.kron(H, eye) - np.kron(eye, H))
    op -= 0.5 * gt * (np.kron(p, eye) + np.kron(eye, p))
    src = np.zeros((L, L), dtype=complex)
    src[0, 0] = -gt * n1
    src[L - 1, L - 1] = -gt * nL
    x = solve_linear(op, src.reshape(-1))
    rho = hermitize(x.reshape(L, L))
    residual = float(np.max(np.abs(markov_rhs(rho, params, (n1, nL)))))
    return StationaryResult(
        rho_s=rho,
        current=mean_current(rho, params),
        bond_currents=bond_currents(rho, params),
        t_final=0.0,
        converged=True,
        residual=residual,
    )


def closed_form_current(params: ModelParams) -> float:
    """Mean current of the memoryless chain in closed form."""
    gt = effective_rate(params.epsilon, params.gamma)
    n1, nL = contact_fillings(params)
    J2 = params.J_s**2
    return float(J2 * gt / (J2 + gt**2) * (n1 - nL) / 2.0)
