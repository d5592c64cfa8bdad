"""Exact many-body Lindblad dynamics on small Fock spaces.

Serves as ground truth for the single-particle solvers: the full density
matrix of n <= 12 fermionic modes is evolved under the quadratic
Hamiltonian with thermal gain/drain on selected modes,

    dR/dt = -i[H, R] + sum_k rate_k * [ (1 - nbar_k) D[a_k] + nbar_k D[a_k^+] ] R,

with D[A]R = A R A^+ - {A^+ A, R}/2.  Operators are built by the
Jordan-Wigner mapping; the anticommutator part of the dissipator is
diagonal in the occupation basis, and the jump sandwiches a_k R a_k^+
reduce to sign-weighted copies between the bit-k halves of the basis, so
no superoperator matrix is ever formed.

:class:`LindbladModel` holds the dense reference right-hand side.
:class:`BlockDiagonalEvolver` exploits exact particle-number conservation
(valid for any initial state without cross-number coherences, e.g. every
product of per-mode diagonal states) to evolve only the diagonal number
blocks; it agrees with the dense route to roundoff and is the fast path
used by the oracle drivers.

Correlation matrices follow the package convention rho[p, q] =
<a_q^dagger a_p>, under which the mean-field coherent evolution is
-i[h, rho] for a real-symmetric single-particle matrix h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numerics import NumericalError, hermitize

DIM_CAP = 4096


def fock_dimension_ok(n_modes: int) -> bool:
    return 2**n_modes <= DIM_CAP


def jordan_wigner_annihilators(n_modes: int) -> list[sp.csr_matrix]:
    """Sparse annihilation operators a_p, p = 0..n_modes-1.

    Mode p occupies bit (n_modes-1-p); per-mode basis is (empty, occupied)
    and the parity string acts on all modes q < p.
    """
    if not fock_dimension_ok(n_modes):
        raise ValueError(f"Fock dimension 2^{n_modes} exceeds cap {DIM_CAP}")
    lower = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    zpar = sp.csr_matrix(np.diag([1.0, -1.0]))
    eye2 = sp.identity(2, format="csr")
    ops = []
    for p in range(n_modes):
        op = sp.identity(1, format="csr")
        for q in range(n_modes):
            factor = zpar if q < p else (lower if q == p else eye2)
            op = sp.kron(op, factor, format="csr")
        ops.append(op.tocsr())
    return ops


def mode_occupation_diagonal(n_modes: int, p: int) -> np.ndarray:
    """Diagonal of a_p^+ a_p in the occupation basis (bit extraction)."""
    idx = np.arange(2**n_modes)
    return ((idx >> (n_modes - 1 - p)) & 1).astype(float)


def _parity_signs(states: np.ndarray, bit: int) -> np.ndarray:
    """(-1)^(number of occupied modes above the given bit) per state."""
    above = states >> (bit + 1)
    parity = np.array([bin(int(v)).count("1") & 1 for v in above])
    return 1.0 - 2.0 * parity


@dataclass(frozen=True)
class _JumpSpec:
    """Strided-view form of the thermal jumps on one mode (dense route)."""

    shape6: tuple[int, ...]
    drain_mat: np.ndarray | None
    gain_mat: np.ndarray | None


def _jump_spec(n_modes: int, mode: int, rate: float, nbar: float) -> _JumpSpec:
    bit = n_modes - 1 - mode
    upper = 2 ** (n_modes - 1 - bit)
    lower = 2**bit
    half = 2 ** (n_modes - 1)
    # states with the bit clear, in (upper, lower) raster order
    rows0 = np.arange(half)
    u = rows0 // lower
    l = rows0 % lower
    states0 = (u << (bit + 1)) + l
    signs = _parity_signs(states0, bit)
    souter = np.outer(signs, signs).reshape(upper, lower, upper, lower)
    drain = rate * (1.0 - nbar)
    gain = rate * nbar
    return _JumpSpec(
        shape6=(upper, 2, lower, upper, 2, lower),
        drain_mat=drain * souter if drain > 0 else None,
        gain_mat=gain * souter if gain > 0 else None,
    )


@dataclass
class LindbladModel:
    """Quadratic Hamiltonian with thermal driving on a subset of modes."""

    n_modes: int
    H: sp.csr_matrix
    driven: list[tuple[int, float, float]]  # (mode, rate, nbar)
    jump_specs: list[_JumpSpec]
    damping_diag: np.ndarray  # sum_k rate_k*[(1-nbar_k) n_k + nbar_k (1-n_k)]
    annihilators: list[sp.csr_matrix]

    def __post_init__(self):
        self._half_damping = 0.5 * self.damping_diag

    @property
    def dim(self) -> int:
        return 2**self.n_modes

    def rhs(self, R: np.ndarray) -> np.ndarray:
        d = self.H @ R
        d -= R @ self.H
        d *= -1j
        if self.jump_specs:
            d -= self._half_damping[:, None] * R
            d -= R * self._half_damping[None, :]
            for spec in self.jump_specs:
                dv = d.reshape(spec.shape6)
                rv = R.reshape(spec.shape6)
                if spec.drain_mat is not None:
                    dv[:, 0, :, :, 0, :] += spec.drain_mat * rv[:, 1, :, :, 1, :]
                if spec.gain_mat is not None:
                    dv[:, 1, :, :, 1, :] += spec.gain_mat * rv[:, 0, :, :, 0, :]
        return d

    def product_state(self, occupations: np.ndarray) -> np.ndarray:
        """Diagonal density matrix with independent mode occupations."""
        diag = np.ones(self.dim)
        for p, n in enumerate(occupations):
            diag *= np.where(mode_occupation_diagonal(self.n_modes, p) > 0.5, n, 1.0 - n)
        return np.diag(diag).astype(complex)

    def spdm(self, R: np.ndarray) -> np.ndarray:
        """Correlation matrix rho[p, q] = Tr(a_q^+ a_p R)."""
        n = self.n_modes
        rho = np.empty((n, n), dtype=complex)
        aR = [a @ R for a in self.annihilators]
        for q in range(n):
            adag = self.annihilators[q].conj().T.tocsr()
            for p in range(n):
                rho[p, q] = (adag.multiply(aR[p].T)).sum()
        return rho

    def evolve(
        self,
        R: np.ndarray,
        t_final: float,
        dt: float,
        hermitize_state: bool = True,
        check_trace: bool = True,
    ) -> np.ndarray:
        """Fixed-step RK4 propagation (dense reference route)."""
        n_steps = int(round(t_final / dt))
        for _ in range(n_steps):
            k1 = self.rhs(R)
            k2 = self.rhs(R + 0.5 * dt * k1)
            k3 = self.rhs(R + 0.5 * dt * k2)
            k4 = self.rhs(R + dt * k3)
            k2 += k3
            R = R + (dt / 6.0) * (k1 + 2.0 * k2 + k4)
            if hermitize_state:
                R = hermitize(R)
        if check_trace:
            tr = np.trace(R)
            if abs(tr - 1.0) > 1e-8:
                raise NumericalError(f"many-body trace drifted to {tr}")
        return R


def build_quadratic_model(
    h_single: np.ndarray,
    driven: list[tuple[int, float, float]],
) -> LindbladModel:
    """Assemble the many-body model for single-particle matrix h_single.

    ``driven`` lists (mode index, rate, nbar) for thermally driven modes.
    """
    n_modes = h_single.shape[0]
    ann = jordan_wigner_annihilators(n_modes)
    dim = 2**n_modes
    H = sp.csr_matrix((dim, dim), dtype=complex)
    for p in range(n_modes):
        for q in range(n_modes):
            if h_single[p, q] != 0.0:
                H = H + h_single[p, q] * (ann[p].conj().T @ ann[q])
    H = H.tocsr()

    driven = [(m, r, nb) for m, r, nb in driven if r > 0]
    specs = []
    damping = np.zeros(dim)
    for mode, rate, nbar in driven:
        occ = mode_occupation_diagonal(n_modes, mode)
        damping += rate * ((1.0 - nbar) * occ + nbar * (1.0 - occ))
        specs.append(_jump_spec(n_modes, mode, rate, nbar))
    return LindbladModel(
        n_modes=n_modes,
        H=H,
        driven=driven,
        jump_specs=specs,
        damping_diag=damping,
        annihilators=ann,
    )


class BlockDiagonalEvolver:
    """Number-sector evolution of a number-conserving Lindblad model.

    Valid whenever the initial state carries no coherences between total
    particle numbers; the state is stored as the packed diagonal blocks,
    shrinking 4^n entries to sum_N binom(n, N)^2 and replacing the dense
    commutator by small per-sector multiplies.
    """

    def __init__(self, model: LindbladModel):
        self.model = model
        n = model.n_modes
        dim = model.dim
        pops = np.array([bin(i).count("1") for i in range(dim)])
        self.perm = np.argsort(pops, kind="stable")
        self.inv_perm = np.argsort(self.perm)
        counts = np.bincount(pops, minlength=n + 1)
        bounds = np.concatenate(([0], np.cumsum(counts)))
        self.sector_sizes = counts
        self.sector_bounds = bounds

        Hp = model.H.toarray()[np.ix_(self.perm, self.perm)]
        self.H_blocks = []
        for N in range(n + 1):
            sl = slice(bounds[N], bounds[N + 1])
            self.H_blocks.append(np.ascontiguousarray(Hp[sl, sl]))
            Hp[sl, sl] = 0.0
        if float(np.max(np.abs(Hp))) > 1e-12:
            raise NumericalError("Hamiltonian does not conserve particle number")
        damping_perm = model.damping_diag[self.perm]
        self.half_damp_blocks = [
            0.5 * damping_perm[bounds[N] : bounds[N + 1]] for N in range(n + 1)
        ]

        self.block_offsets = np.concatenate(([0], np.cumsum(counts.astype(int) ** 2)))
        self.packed_size = int(self.block_offsets[-1])

        # all jump sandwiches flattened into one gather / scatter pass
        src_list: list[np.ndarray] = []
        dst_list: list[np.ndarray] = []
        coef_list: list[np.ndarray] = []
        states = np.arange(dim)

        def _block_flat(sector: int, idx: np.ndarray) -> np.ndarray:
            c = int(self.sector_sizes[sector])
            base = int(self.block_offsets[sector])
            return base + (idx[:, None] * c + idx[None, :]).ravel()

        for mode, rate, nbar in model.driven:
            bit = n - 1 - mode
            drain = rate * (1.0 - nbar)
            gain = rate * nbar
            for N in range(1, n + 1):
                with_bit = (pops == N) & (((states >> bit) & 1) == 1)
                src_states = states[with_bit]
                if src_states.size == 0:
                    continue
                dst_states = src_states - (1 << bit)
                src_idx = self.inv_perm[src_states] - bounds[N]
                dst_idx = self.inv_perm[dst_states] - bounds[N - 1]
                signs = _parity_signs(src_states, bit)
                souter = np.outer(signs, signs).ravel()
                flat_hi = _block_flat(N, src_idx)
                flat_lo = _block_flat(N - 1, dst_idx)
                if drain > 0:
                    src_list.append(flat_hi)
                    dst_list.append(flat_lo)
                    coef_list.append(drain * souter)
                if gain > 0:
                    src_list.append(flat_lo)
                    dst_list.append(flat_hi)
                    coef_list.append(gain * souter)

        if src_list:
            self.jump_src = np.concatenate(src_list)
            self.jump_dst = np.concatenate(dst_list)
            self.jump_coef = np.concatenate(coef_list)
        else:
            self.jump_src = np.empty(0, dtype=int)
            self.jump_dst = np.empty(0, dtype=int)
            self.jump_coef = np.empty(0)

    def _blocks(self, flat: np.ndarray) -> list[np.ndarray]:
        return [
            flat[self.block_offsets[N] : self.block_offsets[N + 1]].reshape(c, c)
            for N, c in enumerate(self.sector_sizes)
        ]

    def pack(self, R: np.ndarray, check: bool = True) -> np.ndarray:
        """Pack a dense density matrix into its number-diagonal blocks."""
        Rp = R[np.ix_(self.perm, self.perm)]
        flat = np.empty(self.packed_size, dtype=complex)
        b = self.sector_bounds
        norm_off = 0.0
        for N, c in enumerate(self.sector_sizes):
            sl = slice(b[N], b[N + 1])
            block = Rp[sl, sl]
            flat[self.block_offsets[N] : self.block_offsets[N + 1]] = block.ravel()
            if check:
                Rp[sl, sl] = 0.0
                norm_off = max(norm_off, float(np.max(np.abs(Rp[sl, :]))))
        if check and norm_off > 1e-12:
            raise NumericalError(
                "state has cross-number coherences; use the dense route"
            )
        return flat

    def unpack(self, flat: np.ndarray) -> np.ndarray:
        dim = self.model.dim
        Rp = np.zeros((dim, dim), dtype=complex)
        b = self.sector_bounds
        for N, block in enumerate(self._blocks(flat)):
            Rp[b[N] : b[N + 1], b[N] : b[N + 1]] = block
        return Rp[np.ix_(self.inv_perm, self.inv_perm)]

    def rhs_packed(self, flat: np.ndarray) -> np.ndarray:
        out = np.empty_like(flat)
        rb = self._blocks(flat)
        ob = self._blocks(out)
        for N, H in enumerate(self.H_blocks):
            R = rb[N]
            d = H @ R
            d -= R @ H
            d *= -1j
            hd = self.half_damp_blocks[N]
            d -= hd[:, None] * R
            d -= R * hd[None, :]
            ob[N][...] = d
        if self.jump_src.size:
            vals = self.jump_coef * flat[self.jump_src]
            n = self.packed_size
            out += np.bincount(self.jump_dst, vals.real, minlength=n)
            out += 1j * np.bincount(self.jump_dst, vals.imag, minlength=n)
        return out

    def evolve_packed(
        self,
        flat: np.ndarray,
        t_final: float,
        dt: float,
        sample_every: int = 0,
        sample_fn=None,
    ) -> np.ndarray:
        n_steps = int(round(t_final / dt))
        for step in range(n_steps):
            k1 = self.rhs_packed(flat)
            k2 = self.rhs_packed(flat + 0.5 * dt * k1)
            k3 = self.rhs_packed(flat + 0.5 * dt * k2)
            k4 = self.rhs_packed(flat + dt * k3)
            k2 += k3
            flat = flat + (dt / 6.0) * (k1 + 2.0 * k2 + k4)
            if sample_fn is not None and sample_every and (step + 1) % sample_every == 0:
                sample_fn((step + 1) * dt, flat)
        return flat

    def evolve(self, R: np.ndarray, t_final: float, dt: float) -> np.ndarray:
        """Dense-in, dense-out convenience wrapper around the packed loop."""
        flat = self.evolve_packed(self.pack(R), t_final, dt)
        R_out = hermitize(self.unpack(flat))
        tr = np.trace(R_out)
        if abs(tr - 1.0) > 1e-8:
            raise NumericalError(f"many-body trace drifted to {tr}")
        return R_out

    def bond_coherences(self, flat: np.ndarray, pairs: list[tuple[int, int]]) -> np.ndarray:
        """<a_q^+ a_p> for the given (p, q) pairs from the packed state."""
        R = self.unpack(flat)
        out = np.empty(len(pairs), dtype=complex)
        for i, (p, q) in enumerate(pairs):
            op = self.model.annihilators[q].conj().T @ self.model.annihilators[p]
            out[i] = (op.tocsr().multiply(R.T)).sum()
        return out


def auto_dt_manybody(max_rate: float) -> float:
    return 0.01 / max(max_rate, 1e-12)


def min_eigenvalue(R: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitize(R))[0])


def chain_current_from_spdm(rho_s: np.ndarray, J_s: float) -> float:
    return float(J_s * np.mean(np.imag(np.diag(rho_s, -1))))
