# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 propagator for the excitation-diagonal density matrix.

Runs the update program built by
:meth:`cavity_raman.sector.SectorLayout.gather_tables`; the arithmetic is
identical to :func:`cavity_raman.sector.rk4_steps_numpy`.
"""

import numpy as np
from libc.math cimport cos, sin
from libc.string cimport memcpy

ctypedef double complex cplx
ctypedef long long idx_t
ctypedef int pidx_t  # program indices


cdef struct Program:
    idx_t n_entries
    idx_t length
    const pidx_t* comm_idx    # (4, E)
    const double* comm_coef  # (4, E)
    const pidx_t* comm_sel    # (4, E)
    const pidx_t* jump_idx    # (4, E)
    const double* jump_fac   # (4, E), already multiplied by the rates
    const double* damp       # (E,)
    const pidx_t* target
    const pidx_t* mirror
    const unsigned char* diag
    int njump
    int jumps[4]


cdef void rhs(const Program* P, const cplx* r, cplx* out, double half_om, const cplx* ph) noexcept nogil:
    cdef idx_t e, E = P.n_entries
    cdef int s, c
    cdef cplx comm, acc
    cdef cplx mi_hom = -1j * half_om
    for e in range(E):
        comm = 0.0
        for s in range(4):
            comm = comm + P.comm_coef[s * E + e] * ph[P.comm_sel[s * E + e]] * r[P.comm_idx[s * E + e]]
        acc = mi_hom * comm - P.damp[e] * r[P.target[e]]
        for s in range(P.njump):
            c = P.jumps[s]
            acc = acc + P.jump_fac[c * E + e] * r[P.jump_idx[c * E + e]]
        if P.diag[e]:
            out[P.target[e]] = acc.real
        else:
            out[P.target[e]] = acc
            out[P.mirror[e]] = acc.conjugate()


cdef inline void phases(cplx* ph, double pa, double pb) noexcept nogil:
    ph[0] = cos(pa) + 1j * sin(pa)
    ph[1] = cos(pa) - 1j * sin(pa)
    ph[2] = cos(pb) + 1j * sin(pb)
    ph[3] = cos(pb) - 1j * sin(pb)


def rk4_steps(cplx[::1] rho, const pidx_t[:, ::1] comm_idx, const double[:, ::1] comm_coef,
              const pidx_t[:, ::1] comm_sel, const pidx_t[:, ::1] jump_idx, const double[:, ::1] jump_fac,
              const double[::1] damp, const pidx_t[::1] target, const pidx_t[::1] mirror,
              const unsigned char[::1] diag,
              const double[::1] half_om, const double[::1] phase_a, const double[::1] phase_b,
              double dt):
    """Advance ``rho`` in place by ``(len(half_om) - 1) // 2`` RK4 steps.

    ``jump_fac`` must already include the channel rates; channels whose
    factors are all zero are skipped.
    """
    cdef idx_t n = rho.shape[0]
    cdef idx_t steps = (half_om.shape[0] - 1) // 2
    # one extra zero slot per buffer for missing neighbours
    cdef cplx[:, ::1] work = np.zeros((6, n + 1), dtype=complex)
    cdef cplx* r = &work[0, 0]
    cdef cplx* k1 = &work[1, 0]
    cdef cplx* k2 = &work[2, 0]
    cdef cplx* k3 = &work[3, 0]
    cdef cplx* k4 = &work[4, 0]
    cdef cplx* tmp = &work[5, 0]
    cdef cplx ph[4]
    cdef idx_t i, step, k
    cdef double h6 = dt / 6.0
    cdef double hh = 0.5 * dt
    cdef Program P
    cdef int c
    P.n_entries = target.shape[0]
    P.length = n
    P.comm_idx = &comm_idx[0, 0]
    P.comm_coef = &comm_coef[0, 0]
    P.comm_sel = &comm_sel[0, 0]
    P.jump_idx = &jump_idx[0, 0]
    P.jump_fac = &jump_fac[0, 0]
    P.damp = &damp[0]
    P.target = &target[0]
    P.mirror = &mirror[0]
    P.diag = &diag[0]
    P.njump = 0
    for c in range(4):
        if np.any(np.asarray(jump_fac[c])):
            P.jumps[P.njump] = c
            P.njump += 1
    memcpy(r, &rho[0], n * sizeof(cplx))
    with nogil:
        for step in range(steps):
            k = 2 * step
            phases(ph, phase_a[k], phase_b[k])
            rhs(&P, r, k1, half_om[k], ph)
            for i in range(n):
                tmp[i] = r[i] + hh * k1[i]
            phases(ph, phase_a[k + 1], phase_b[k + 1])
            rhs(&P, tmp, k2, half_om[k + 1], ph)
            for i in range(n):
                tmp[i] = r[i] + hh * k2[i]
            rhs(&P, tmp, k3, half_om[k + 1], ph)
            for i in range(n):
                tmp[i] = r[i] + dt * k3[i]
            phases(ph, phase_a[k + 2], phase_b[k + 2])
            rhs(&P, tmp, k4, half_om[k + 2], ph)
            for i in range(n):
                r[i] = r[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    memcpy(&rho[0], r, n * sizeof(cplx))
