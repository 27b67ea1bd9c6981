"""Excitation-diagonal block storage for the structured Lindblad propagator.

The Hamiltonian conserves ``N = s + n_a + n_b`` and every jump operator
shifts ``N`` by the same amount on both sides of the density matrix, so
the blocks ``rho[N, N]`` evolve independently of the coherences between
different ``N``.  Populations, photon statistics and the atomic state
only depend on those blocks; everything else is dropped.

States are reordered by ``N`` and each block is stored row-major in one
flat complex array.  The propagator works in the interaction picture of
``D(t)|e><e| - delta n_b``, where the coupling elements carry the phases
``exp(+-i phi_a)`` (mode a) and ``exp(+-i phi_b)`` (mode b) with
``phi_a = int D dt`` and ``phi_b = phi_a + delta t``.
"""

from __future__ import annotations

import numpy as np

from .fockspace import DensityOperator, FockSpaceConfig, basis_index

# per-state integer table columns
BLOCK, POS, NBR0, NBR1, UP_A, DN_A, UP_B, DN_B, SEL0, SEL1 = range(10)
# per-state float table columns
COEF0, COEF1, F_UP_A, F_DN_A, F_UP_B, F_DN_B, N_A, N_B, M_A, M_B = range(10)


class SectorLayout:
    """Index tables for the excitation-diagonal part of one truncated space."""

    def __init__(self, space: FockSpaceConfig):
        self.space = space
        s, na, nb = space.label_arrays()
        n_exc = s + na + nb
        # stable sort keeps basis order inside each block
        self.perm = np.argsort(n_exc, kind="stable")
        self.inv = np.empty_like(self.perm)
        self.inv[self.perm] = np.arange(space.dim)
        self.s, self.na, self.nb = s[self.perm], na[self.perm], nb[self.perm]
        exc = n_exc[self.perm]

        self.n_blocks = int(exc.max()) + 1
        self.block_size = np.bincount(exc, minlength=self.n_blocks).astype(np.int64)
        self.block_start = np.concatenate([[0], np.cumsum(self.block_size)[:-1]]).astype(np.int64)
        self.block_offset = np.concatenate([[0], np.cumsum(self.block_size**2)[:-1]]).astype(np.int64)
        self.length = int(np.sum(self.block_size**2))
        self.excitation = np.arange(self.n_blocks)

        dim = space.dim
        itab = np.full((dim, 10), -1, dtype=np.int64)
        ftab = np.zeros((dim, 10))
        itab[:, BLOCK] = exc
        itab[:, POS] = np.arange(dim) - self.block_start[exc]

        def u_of(level, a, b):
            return int(self.inv[basis_index(level, a, b, space)])

        for u in range(dim):
            su, au, bu = int(self.s[u]), int(self.na[u]), int(self.nb[u])
            # phase selectors: 0 -> e^{+i phi_a}, 1 -> e^{-i phi_a}, 2 -> e^{+i phi_b}, 3 -> e^{-i phi_b}
            if su == 1:
                if au < space.n_max_a:
                    itab[u, NBR0], itab[u, SEL0], ftab[u, COEF0] = u_of(0, au + 1, bu), 0, np.sqrt(au + 1)
                if bu < space.n_max_b:
                    itab[u, NBR1], itab[u, SEL1], ftab[u, COEF1] = u_of(0, au, bu + 1), 2, np.sqrt(bu + 1)
            else:
                if au > 0:
                    itab[u, NBR0], itab[u, SEL0], ftab[u, COEF0] = u_of(1, au - 1, bu), 1, np.sqrt(au)
                if bu > 0:
                    itab[u, NBR1], itab[u, SEL1], ftab[u, COEF1] = u_of(1, au, bu - 1), 3, np.sqrt(bu)
            if au < space.n_max_a:
                itab[u, UP_A], ftab[u, F_UP_A] = u_of(su, au + 1, bu), np.sqrt(au + 1)
            if au > 0:
                itab[u, DN_A], ftab[u, F_DN_A] = u_of(su, au - 1, bu), np.sqrt(au)
            if bu < space.n_max_b:
                itab[u, UP_B], ftab[u, F_UP_B] = u_of(su, au, bu + 1), np.sqrt(bu + 1)
            if bu > 0:
                itab[u, DN_B], ftab[u, F_DN_B] = u_of(su, au, bu - 1), np.sqrt(bu)
            ftab[u, N_A], ftab[u, N_B] = au, bu
            ftab[u, M_A] = au + 1 if au < space.n_max_a else 0
            ftab[u, M_B] = bu + 1 if bu < space.n_max_b else 0
        itab[itab[:, SEL0] < 0, SEL0] = 0
        itab[itab[:, SEL1] < 0, SEL1] = 0
        self.itab = np.ascontiguousarray(itab)
        self.ftab = np.ascontiguousarray(ftab)

        # (u, v) for every stored entry
        rows, cols = [], []
        for start, size in zip(self.block_start, self.block_size):
            idx = np.arange(start, start + size)
            rows.append(np.repeat(idx, size))
            cols.append(np.tile(idx, size))
        self.entry_u = np.concatenate(rows)
        self.entry_v = np.concatenate(cols)
        self.transpose_index = self.flat_index(self.entry_v, self.entry_u)
        self._gather = None

    # -- conversions -----------------------------------------------------------

    def flat_index(self, u, v):
        """Flat position of entry ``(u, v)``; both must share a block."""
        blk = self.itab[u, BLOCK]
        size = self.block_size[blk]
        return self.block_offset[blk] + self.itab[u, POS] * size + self.itab[v, POS]

    def from_matrix(self, matrix: np.ndarray) -> np.ndarray:
        """Excitation-diagonal entries of a matrix in basis order."""
        m = np.asarray(matrix)
        return np.ascontiguousarray(m[self.perm[self.entry_u], self.perm[self.entry_v]], dtype=complex)

    def to_matrix(self, flat: np.ndarray) -> np.ndarray:
        out = np.zeros((self.space.dim, self.space.dim), complex)
        out[self.perm[self.entry_u], self.perm[self.entry_v]] = flat
        return out

    def to_density(self, flat: np.ndarray, check: bool = True) -> DensityOperator:
        return DensityOperator(self.to_matrix(flat), self.space.dims, check=check)

    def diagonal(self, flat: np.ndarray) -> np.ndarray:
        """Populations in basis order."""
        u = np.arange(self.space.dim)
        d = flat[self.flat_index(u, u)].real
        out = np.empty_like(d)
        out[self.perm] = d
        return out

    def blocks(self, flat: np.ndarray):
        for off, size in zip(self.block_offset, self.block_size):
            yield flat[off:off + size * size].reshape(size, size)

    def trace(self, flat: np.ndarray) -> float:
        return float(sum(np.trace(b).real for b in self.blocks(flat)))

    def min_eigenvalue(self, flat: np.ndarray) -> float:
        return float(min(np.linalg.eigvalsh(0.5 * (b + b.conj().T))[0] for b in self.blocks(flat)))

    def interaction_phases(self, phase_a: float, elapsed: float, delta: float) -> np.ndarray:
        """Per-entry factors ``exp(-i(theta_u - theta_v))`` mapping the
        interaction picture back to the rotating frame."""
        theta = self.s * phase_a - delta * self.nb * elapsed
        return np.exp(-1j * (theta[self.entry_u] - theta[self.entry_v]))

    def symmetrize(self, flat: np.ndarray) -> None:
        flat[:] = 0.5 * (flat + flat[self.transpose_index].conj())

    # -- numpy propagator ----------------------------------------------------

    def gather_tables(self):
        """Branch-free update program over the upper-triangle entries.

        Missing neighbours point at the sentinel slot ``length`` which
        always holds zero.  ``target``/``mirror`` are the flat positions
        of ``(u, v)`` and ``(v, u)``.
        """
        if self._gather is not None:
            return self._gather
        it, ft = self.itab, self.ftab
        upper = it[self.entry_u, POS] <= it[self.entry_v, POS]
        u, v = self.entry_u[upper], self.entry_v[upper]
        sentinel = self.length

        def pair_index(a, b):
            ok = (a >= 0) & (b >= 0)
            out = np.full(a.shape, sentinel, dtype=np.int64)
            out[ok] = self.flat_index(a[ok], b[ok])
            return out

        g = {"target": self.flat_index(u, v).astype(np.int32), "mirror": self.flat_index(v, u).astype(np.int32)}
        g["diag"] = g["target"] == g["mirror"]
        comm_idx, comm_coef, comm_sel = [], [], []
        for nbr, sel, coef in ((NBR0, SEL0, COEF0), (NBR1, SEL1, COEF1)):
            comm_idx.append(pair_index(it[u, nbr], v))
            comm_coef.append(ft[u, coef])
            comm_sel.append(it[u, sel])
        for nbr, sel, coef in ((NBR0, SEL0, COEF0), (NBR1, SEL1, COEF1)):
            comm_idx.append(pair_index(u, it[v, nbr]))
            # (rho H)_uv enters with a minus sign and H_kv = conj(H_vk)
            comm_coef.append(-ft[v, coef])
            comm_sel.append(it[v, sel] ^ 1)
        jump_idx, jump_fac = [], []
        for col, fac in ((UP_A, F_UP_A), (DN_A, F_DN_A), (UP_B, F_UP_B), (DN_B, F_DN_B)):
            idx = pair_index(it[u, col], it[v, col])
            jump_idx.append(idx)
            jump_fac.append(np.where(idx == sentinel, 0.0, ft[u, fac] * ft[v, fac]))
        g["comm_idx"] = np.ascontiguousarray(comm_idx, dtype=np.int32)
        g["comm_coef"] = np.ascontiguousarray(comm_coef)
        g["comm_sel"] = np.ascontiguousarray(comm_sel, dtype=np.int32)
        g["jump_idx"] = np.ascontiguousarray(jump_idx, dtype=np.int32)
        g["jump_fac"] = np.ascontiguousarray(jump_fac)
        # damping weights per rate: [n_a, m_a, n_b, m_b] summed over u and v
        g["damp_w"] = np.ascontiguousarray(
            [ft[u, c] + ft[v, c] for c in (N_A, M_A, N_B, M_B)]
        )
        self._gather = g
        return g

    def damping(self, rates: np.ndarray) -> np.ndarray:
        return 0.5 * (np.asarray(rates) @ self.gather_tables()["damp_w"])


def decay_rates(kappa_a: float, n_th_a: float, kappa_b: float, n_th_b: float) -> np.ndarray:
    """``[a-loss, a-gain, b-loss, b-gain]`` rates."""
    return np.array([kappa_a * (1 + n_th_a), kappa_a * n_th_a, kappa_b * (1 + n_th_b), kappa_b * n_th_b])


def rk4_steps_numpy(layout: SectorLayout, rho: np.ndarray, half_om: np.ndarray,
                    phase_a: np.ndarray, phase_b: np.ndarray, rates: np.ndarray, dt: float) -> None:
    """Advance ``rho`` in place by ``(len(half_om) - 1) // 2`` RK4 steps.

    ``half_om``, ``phase_a`` and ``phase_b`` are sampled at every half step.
    """
    g = layout.gather_tables()
    damp = layout.damping(rates)
    cidx, ccoef, csel = g["comm_idx"], g["comm_coef"], g["comm_sel"]
    jumps = [(g["jump_idx"][c], rates[c] * g["jump_fac"][c]) for c in range(4) if rates[c] > 0]
    target, mirror, diag = g["target"], g["mirror"], g["diag"]
    n = layout.length
    ext = np.zeros(n + 1, complex)
    out = np.empty(n, complex)

    def rhs(r, k):
        ext[:n] = r
        ph = np.exp(1j * np.array([phase_a[k], -phase_a[k], phase_b[k], -phase_b[k]]))
        comm = np.einsum("se,se->e", ccoef * ph[csel], ext[cidx])
        acc = (-1j * half_om[k]) * comm - damp * ext[target]
        for idx, fac in jumps:
            acc += fac * ext[idx]
        acc[diag] = acc[diag].real
        out[mirror] = acc.conj()
        out[target] = acc
        return out.copy()

    steps = (len(half_om) - 1) // 2
    for step in range(steps):
        k = 2 * step
        k1 = rhs(rho, k)
        k2 = rhs(rho + 0.5 * dt * k1, k + 1)
        k3 = rhs(rho + 0.5 * dt * k2, k + 1)
        k4 = rhs(rho + dt * k3, k + 2)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
