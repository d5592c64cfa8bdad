"""Spectral stationary solution, valid for small relaxation rates.

In this limit the composite system relaxes as a whole at rate gamma and
the evolution is well approximated by drho/dt = -i[H, rho] - gamma*(rho -
rho0) with rho0 the thermal reservoir state.  In the eigenbasis Psi_n of
the composite Hamiltonian the stationary state is closed-form,

    rho = sum_{n,m} gamma <Psi_n|rho0|Psi_m> / (gamma + i(E_m - E_n))
          |Psi_n><Psi_m|,

and the current follows either by tracing the current observable against
the chain block, or by the equivalent eigenpair sum over energy-ordered
pairs (n, n+p).  The known limitation of this route is its large-gamma
tail: the predicted current falls off as 1/gamma^2 instead of 1/gamma.

The module also provides the energy-resolved diagnostics built from the
chain parts psi_n of the composite eigenvectors: the current spectral
weight j(E) and the chain-projected local density of states.  Delta peaks
are regularized as normalized Lorentzians of width eta, defaulting to
about the mean level spacing 4*J_r/(2M+L).  The current matrix elements
enter through their magnitude, since the sign of real eigenvectors is an
arbitrary gauge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fulldynamics import mean_current, thermal_reservoir_diagonal
from .model import ModelParams, OperatorSet, build_operators
from .numerics import hermitian_eigendecomposition, hermitize


@dataclass(frozen=True)
class TotalSpectrum:
    """Eigen-decomposition of the composite Hamiltonian with chain parts."""

    values: np.ndarray
    vectors: np.ndarray
    chain_parts: np.ndarray  # (L, dim): column n is psi_n


def total_spectrum(params: ModelParams, ops: OperatorSet | None = None) -> TotalSpectrum:
    ops = ops if ops is not None else build_operators(params)
    spec = hermitian_eigendecomposition(ops.H_total)
    return TotalSpectrum(
        values=spec.values,
        vectors=spec.vectors,
        chain_parts=spec.vectors[ops.layout.s, :],
    )


def default_broadening(params: ModelParams) -> float:
    return 4.0 * params.J_r / params.dim


def _weight_matrix(values: np.ndarray, gamma: float) -> np.ndarray:
    # rho_nm = gamma*rho0_nm/(gamma + i(E_n - E_m)) is the stationary point
    # of drho/dt = -i[H,rho] - gamma*(rho - rho0) in this package's element
    # convention; the orientation is pinned by agreement with the composite
    # dynamics (a global transpose flips the current sign).
    return gamma / (gamma + 1j * (values[:, None] - values[None, :]))


def stationary_spdm_smallgamma(
    params: ModelParams, ops: OperatorSet | None = None
) -> np.ndarray:
    """Closed-form stationary composite density matrix (gamma > 0)."""
    if params.gamma <= 0:
        raise ValueError("the spectral stationary formula requires gamma > 0")
    ops = ops if ops is not None else build_operators(params)
    spec = total_spectrum(params, ops)
    rho0 = np.diag(thermal_reservoir_diagonal(params, ops.layout)).astype(complex)
    r0_eig = spec.vectors.conj().T @ rho0 @ spec.vectors
    rho_eig = _weight_matrix(spec.values, params.gamma) * r0_eig
    return hermitize(spec.vectors @ rho_eig @ spec.vectors.conj().T)


def current_smallgamma(
    params: ModelParams,
    ops: OperatorSet | None = None,
    max_p: int | None = None,
) -> float:
    """Stationary current from the eigenpair sum.

    Sums energy-ordered pairs (n, n+p) for p = 1..max_p together with their
    conjugates; the p = 0 term is retained but vanishes by symmetry.  With
    ``max_p=None`` the full sum is taken and the result equals the trace of
    the current observable against the chain block of the stationary state.
    Truncation to p = 1 already reproduces the resonance peak structure.
    """
    if params.gamma <= 0:
        raise ValueError("the spectral stationary formula requires gamma > 0")
    ops = ops if ops is not None else build_operators(params)
    spec = total_spectrum(params, ops)
    rho0 = np.diag(thermal_reservoir_diagonal(params, ops.layout)).astype(complex)
    r0_eig = spec.vectors.conj().T @ rho0 @ spec.vectors
    c = _weight_matrix(spec.values, params.gamma) * r0_eig
    # current matrix elements between chain parts: jmat[m, n] = <psi_m|j|psi_n>
    jmat = spec.chain_parts.conj().T @ ops.J_op @ spec.chain_parts
    dim = params.dim
    p_max = dim - 1 if max_p is None else min(max_p, dim - 1)
    total = np.sum(np.diag(c, 0) * np.diag(jmat, 0))  # p = 0, ~0 by symmetry
    for p in range(1, p_max + 1):
        term = np.sum(np.diag(c, p) * np.diag(jmat, -p))
        total += 2.0 * term.real
    return float(np.real(total))


def current_smallgamma_trace(
    params: ModelParams, ops: OperatorSet | None = None
) -> float:
    """Stationary current by tracing against the chain block directly."""
    ops = ops if ops is not None else build_operators(params)
    rho = stationary_spdm_smallgamma(params, ops)
    return mean_current(rho[ops.layout.s, ops.layout.s], params)


def _lorentzian(e_grid: np.ndarray, centers: np.ndarray, eta: float) -> np.ndarray:
    """(n_E, n_centers) table of normalized Lorentzians."""
    return (eta / np.pi) / ((e_grid[:, None] - centers[None, :]) ** 2 + eta**2)


def current_spectral_function(
    params: ModelParams,
    e_grid: np.ndarray,
    eta: float | None = None,
    ops: OperatorSet | None = None,
) -> np.ndarray:
    """Energy-resolved current weight |<psi_n|j|psi_{n+1}>| on e_grid."""
    ops = ops if ops is not None else build_operators(params)
    eta = eta if eta is not None else default_broadening(params)
    if eta <= 0:
        raise ValueError("broadening eta must be positive")
    spec = total_spectrum(params, ops)
    jmat = spec.chain_parts.conj().T @ ops.J_op @ spec.chain_parts
    weights = np.abs(np.diag(jmat, 1))
    table = _lorentzian(np.asarray(e_grid, dtype=float), spec.values[:-1], eta)
    return table @ weights


def local_density_of_states(
    params: ModelParams,
    e_grid: np.ndarray,
    eta: float | None = None,
    ops: OperatorSet | None = None,
) -> np.ndarray:
    """Chain-projected density of states sum_n L_eta(E - E_n) <psi_n|psi_n>."""
    ops = ops if ops is not None else build_operators(params)
    eta = eta if eta is not None else default_broadening(params)
    if eta <= 0:
        raise ValueError("broadening eta must be positive")
    spec = total_spectrum(params, ops)
    weights = np.sum(np.abs(spec.chain_parts) ** 2, axis=0)
    table = _lorentzian(np.asarray(e_grid, dtype=float), spec.values, eta)
    return table @ weights


def export_series(path: str, e_grid: np.ndarray, values: np.ndarray) -> None:
    """Write a two-column (E, value) text file for plotting."""
    with open(path, "w") as fh:
        fh.write("# E value\n")
        for e, v in zip(e_grid, values):
            fh.write(f"{e:.10g} {v:.12g}\n")
