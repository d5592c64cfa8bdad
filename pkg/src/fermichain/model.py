"""Model definition: chain, ring reservoirs, couplings, and thermal occupations.

Geometry and conventions
------------------------
A linear tight-binding chain of L sites is attached at site 1 and site L to
two identical tight-binding rings of M sites each ("contacts").  The rings
are described in their Bloch basis, where the ring Hamiltonian is diagonal
with energies -J_r*cos(2*pi*k/M), k = 1..M.  The chain Hamiltonian is
tridiagonal with hopping -J_s/2.  Each contact couples to one chain site
through a single column of amplitude 1/(2*sqrt(M)), scaled by epsilon.

The single-particle Hilbert space is ordered as

    [contact 1 modes | chain sites | contact L modes]

and every block view in the package indexes through :class:`BlockLayout`,
the single source of truth for this ordering.

Isolated contacts relax at rate gamma toward a Fermi-Dirac-filled state
with per-contact chemical potential mu and inverse temperature beta.
``beta = math.inf`` is the zero-temperature sentinel; the occupation is
then a step function with value 1/2 exactly at the Fermi edge.

Single-particle density matrices rho use the element convention
rho[p, q] = <a_q^dagger a_p>, the ordering for which the coherent part of
the evolution is drho/dt = -i[H, rho].

Positive current flows from contact 1 toward contact L; contact 1 carries
the higher chemical potential under the default symmetric bias split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import Spectrum, hermitian_eigendecomposition

DEFAULT_DIM_CAP = 4096


@dataclass(frozen=True)
class ContactSpec:
    """Thermodynamic state of one reservoir: chemical potential and 1/T."""

    mu: float
    beta: float = math.inf

    def __post_init__(self):
        if not (self.beta >= 0.0):
            raise ValueError(f"beta must be >= 0 or inf, got {self.beta}")


@dataclass(frozen=True)
class ModelParams:
    """All physical constants of the chain + two-ring-reservoir model."""

    L: int
    M: int
    J_s: float = 1.0
    J_r: float = 1.0
    epsilon: float = 0.4
    gamma: float = 0.1
    contacts: tuple[ContactSpec, ContactSpec] = (
        ContactSpec(0.0),
        ContactSpec(0.0),
    )

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"chain length L must be >= 2, got {self.L}")
        if self.M < 3:
            raise ValueError(f"ring size M must be >= 3, got {self.M}")
        if self.J_s <= 0 or self.J_r <= 0:
            raise ValueError("hoppings J_s, J_r must be positive")
        if self.epsilon < 0:
            raise ValueError("coupling epsilon must be >= 0")
        if self.gamma < 0:
            raise ValueError("relaxation rate gamma must be >= 0")
        if len(self.contacts) != 2:
            raise ValueError("exactly two contacts required")

    @property
    def dim(self) -> int:
        """Total single-particle dimension 2M + L."""
        return 2 * self.M + self.L

    def with_contacts(self, left: ContactSpec, right: ContactSpec) -> "ModelParams":
        return replace(self, contacts=(left, right))


def exchange_contacts(params: ModelParams) -> ModelParams:
    """Swap the two reservoirs' thermodynamic specs."""
    return params.with_contacts(params.contacts[1], params.contacts[0])


@dataclass(frozen=True)
class BlockLayout:
    """Index ranges of the (contact 1 | chain | contact L) block ordering."""

    M: int
    L: int

    @property
    def dim(self) -> int:
        return 2 * self.M + self.L

    @property
    def r1(self) -> slice:
        return slice(0, self.M)

    @property
    def s(self) -> slice:
        return slice(self.M, self.M + self.L)

    @property
    def rL(self) -> slice:
        return slice(self.M + self.L, 2 * self.M + self.L)

    def contact_slices(self) -> tuple[slice, slice]:
        return (self.r1, self.rL)

    def contact_indicator(self) -> np.ndarray:
        """Diagonal 0/1 vector selecting all reservoir modes."""
        p = np.zeros(self.dim)
        p[self.r1] = 1.0
        p[self.rL] = 1.0
        return p

    def chain_site_index(self, site: int) -> int:
        """Global index of chain site (0-based within the chain)."""
        return self.M + site


@dataclass(frozen=True)
class OperatorSet:
    """Dense single-particle operators of the model.

    ``H_total`` is assembled from the blocks with off-diagonal coupling
    epsilon*V; V matrices are stored without the epsilon factor.
    """

    H_s: np.ndarray
    H_r_diag: np.ndarray
    V1: np.ndarray
    VL: np.ndarray
    H_total: np.ndarray
    J_op: np.ndarray
    layout: BlockLayout = field(repr=False)

    @property
    def H_r(self) -> np.ndarray:
        return np.diag(self.H_r_diag)


def chain_hamiltonian(L: int, J_s: float) -> np.ndarray:
    h = np.zeros((L, L))
    off = -0.5 * J_s * np.ones(L - 1)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def ring_energies(M: int, J_r: float) -> np.ndarray:
    """Bloch energies -J_r*cos(2*pi*k/M) for k = 1..M."""
    k = np.arange(1, M + 1)
    return -J_r * np.cos(2.0 * np.pi * k / M)


def coupling_matrix(M: int, L: int, site: int) -> np.ndarray:
    """M x L coupling with one nonzero column of entries 1/(2*sqrt(M))."""
    V = np.zeros((M, L))
    V[:, site] = 1.0 / (2.0 * math.sqrt(M))
    return V


def current_operator(L: int, J_s: float) -> np.ndarray:
    """Bond-averaged current observable (includes the 1/(L-1) factor)."""
    j = np.zeros((L, L), dtype=complex)
    amp = 1j * J_s / (2.0 * (L - 1))
    for site in range(L - 1):
        j[site + 1, site] = amp
        j[site, site + 1] = -amp
    return j


def build_operators(params: ModelParams, max_dim: int = DEFAULT_DIM_CAP) -> OperatorSet:
    """Construct all dense operators for the given parameters.

    Rejects systems with 2M + L beyond ``max_dim`` to guard against
    accidental memory blowups in sweeps.
    """
    if params.dim > max_dim:
        raise ValueError(
            f"total dimension 2M+L = {params.dim} exceeds cap {max_dim}"
        )
    M, L = params.M, params.L
    layout = BlockLayout(M=M, L=L)
    H_s = chain_hamiltonian(L, params.J_s)
    H_r_diag = ring_energies(M, params.J_r)
    V1 = coupling_matrix(M, L, 0)
    VL = coupling_matrix(M, L, L - 1)

    H = np.zeros((layout.dim, layout.dim))
    H[layout.r1, layout.r1] = np.diag(H_r_diag)
    H[layout.rL, layout.rL] = np.diag(H_r_diag)
    H[layout.s, layout.s] = H_s
    H[layout.r1, layout.s] = params.epsilon * V1
    H[layout.s, layout.r1] = params.epsilon * V1.T
    H[layout.rL, layout.s] = params.epsilon * VL
    H[layout.s, layout.rL] = params.epsilon * VL.T

    return OperatorSet(
        H_s=H_s,
        H_r_diag=H_r_diag,
        V1=V1,
        VL=VL,
        H_total=H,
        J_op=current_operator(L, params.J_s),
        layout=layout,
    )


def fermi_occupation(k: int, contact: ContactSpec, params: ModelParams) -> float:
    """Occupation of Bloch mode k (1-based) of an isolated reservoir.

    Returns 1/(exp(-beta*[J_r*cos(2*pi*k/M) + mu]) + 1); at beta = inf the
    step value, with exactly 1/2 on the Fermi edge.
    """
    if not 1 <= k <= params.M:
        raise ValueError(f"mode index k must be in 1..{params.M}, got {k}")
    x = params.J_r * math.cos(2.0 * math.pi * k / params.M) + contact.mu
    return _fermi_of_x(np.asarray(x), contact.beta).item()


def _fermi_of_x(x: np.ndarray, beta: float) -> np.ndarray:
    # x = J_r*cos(kappa) + mu; occupied where x > 0 at zero temperature
    if math.isinf(beta):
        return np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))
    # clip the exponent so beta ~ 1e3 stays overflow-free
    z = np.clip(-beta * x, -700.0, 700.0)
    return 1.0 / (np.exp(z) + 1.0)


def contact_occupations(contact: ContactSpec, params: ModelParams) -> np.ndarray:
    """Vector of fermi_occupation(k) for k = 1..M."""
    x = params.J_r * np.cos(2.0 * np.pi * np.arange(1, params.M + 1) / params.M)
    return _fermi_of_x(x + contact.mu, contact.beta)


def thermal_contact_spdm(contact: ContactSpec, params: ModelParams) -> np.ndarray:
    """Diagonal thermal single-particle density matrix of one reservoir."""
    return np.diag(contact_occupations(contact, params))


def mean_band_occupation(contact: ContactSpec, J_r: float, n_grid: int = 4096) -> float:
    """Band-averaged filling of an infinite reservoir.

    Equals (1/2pi) * integral over kappa in [-pi, pi] of the Fermi factor
    at energy -J_r*cos(kappa).  At beta = inf this reduces to
    arccos(-mu/J_r)/pi, clipped outside the band.
    """
    if math.isinf(contact.beta):
        u = np.clip(-contact.mu / J_r, -1.0, 1.0)
        return float(np.arccos(u) / np.pi)
    kappa = np.linspace(-np.pi, np.pi, n_grid, endpoint=False)
    occ = _fermi_of_x(J_r * np.cos(kappa) + contact.mu, contact.beta)
    return float(np.mean(occ))


def chain_eigensystem(params: ModelParams) -> Spectrum:
    """Eigenvalues/vectors of the isolated chain (-J_s*cos(pi*n/(L+1)))."""
    return hermitian_eigendecomposition(chain_hamiltonian(params.L, params.J_s))


def kappa_to_mu(kappa_F: float, J_r: float, M: int) -> tuple[float, float]:
    """Map the Fermi quasimomentum to (mu, delta_mu).

    mu = -J_r*cos(kappa_F) places the Fermi level in the reservoir band;
    delta_mu = J_r*sin(kappa_F)*(2*pi/M) is the reservoir level spacing at
    that energy, the natural bias scale for the linear-response regime.
    """
    if not 0.0 <= kappa_F <= np.pi:
        raise ValueError(f"kappa_F must lie in [0, pi], got {kappa_F}")
    mu = -J_r * math.cos(kappa_F)
    delta_mu = J_r * math.sin(kappa_F) * (2.0 * math.pi / M)
    return mu, delta_mu


def params_for_point(
    kappa_F: float,
    gamma: float,
    delta_mu: float | str = "level-spacing",
    bias: str = "symmetric",
    beta: float = math.inf,
    L: int = 5,
    M: int = 100,
    J_s: float = 1.0,
    J_r: float = 1.0,
    epsilon: float = 0.4,
) -> ModelParams:
    """Build ModelParams for one (kappa_F, gamma) grid point.

    ``delta_mu='level-spacing'`` applies the J_r*sin(kappa_F)*(2*pi/M) rule;
    a float fixes the bias directly.  ``bias='symmetric'`` splits the bias
    as mu +/- delta_mu/2; ``bias='left'`` applies it to contact 1 only.
    """
    mu, dmu_rule = kappa_to_mu(kappa_F, J_r, M)
    dmu = dmu_rule if delta_mu == "level-spacing" else float(delta_mu)
    if bias == "symmetric":
        mu1, muL = mu + dmu / 2.0, mu - dmu / 2.0
    elif bias == "left":
        mu1, muL = mu + dmu, mu
    else:
        raise ValueError(f"unknown bias mode {bias!r}")
    return ModelParams(
        L=L,
        M=M,
        J_s=J_s,
        J_r=J_r,
        epsilon=epsilon,
        gamma=gamma,
        contacts=(ContactSpec(mu1, beta), ContactSpec(muL, beta)),
    )


def base_mu(params: ModelParams) -> float:
    """Mean chemical potential of the two reservoirs."""
    return 0.5 * (params.contacts[0].mu + params.contacts[1].mu)


def bias_delta_mu(params: ModelParams) -> float:
    """Chemical-potential difference mu_1 - mu_L."""
    return params.contacts[0].mu - params.contacts[1].mu


def slowest_relaxation_rate(params: ModelParams) -> float:
    """Slowest rate at which observables approach stationarity.

    The composite system equilibrates at ~gamma when gamma is small and at
    the effective rate epsilon^2/gamma when gamma is large; the slowest of
    these (never faster than the chain bandwidth scale J_s) sets the
    stationarity window used by all time-domain solvers.
    """
    rates = [params.J_s]
    if params.gamma > 0:
        rates.append(params.gamma)
        if params.epsilon > 0:
            rates.append(params.epsilon**2 / params.gamma)
    return min(rates)
