# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled session kernels; operation-for-operation mirror of ``_ref``.

All reductions are sequential left-to-right (matching numpy's cumsum), so
the 1-bit kernel is bit-identical to the pure backend; the full-measurement
kernel differs from it by at most libm-vs-numpy exp rounding.
"""

from libc.math cimport exp, fabs

from ..posterior import DegenerateUpdateError

name = "compiled"


cdef inline Py_ssize_t _descend(const double* cs, int levels, Py_ssize_t M) nogil:
    cdef int cur_l = 0
    cdef Py_ssize_t cur_k = 1, left_k, a, b, m
    cdef double cur_mass = 1.0, parent_mass = 1.0, m_left, m_right
    while cur_l < levels and cur_mass > 0.5:
        m = M >> (cur_l + 1)
        left_k = 2 * cur_k - 1
        a = (left_k - 1) * m
        b = left_k * m
        m_left = cs[b - 1] - (cs[a - 1] if a else 0.0)
        m_right = cs[b + m - 1] - cs[b - 1]
        parent_mass = cur_mass
        if m_left >= m_right:
            cur_k = left_k
            cur_mass = m_left
        else:
            cur_k = left_k + 1
            cur_mass = m_right
        cur_l += 1
    if fabs(cur_mass - 0.5) <= fabs(parent_mass - 0.5):
        return ((<Py_ssize_t>1) << cur_l) - 2 + (cur_k - 1)
    return ((<Py_ssize_t>1) << (cur_l - 1)) - 2 + ((cur_k + 1) // 2 - 1)


def run_onebit_session(double[::1] pi, int levels, const double[::1] p_node,
                       const double[::1] v_node, const double[::1] nu_true,
                       double noise_scale, const double[::1] normals,
                       long fixed_n, double vl_eps, long max_steps,
                       long[::1] out_nodes, signed char[::1] out_bits,
                       double[::1] out_maxpi, double[::1] scratch):
    """Run one 1-bit hiePM session in place; returns the number of steps taken."""
    cdef Py_ssize_t M = pi.shape[0]
    cdef double stop_at = 1.0 - vl_eps
    cdef long t = 0
    cdef Py_ssize_t i, node, lo, hi, m
    cdef int level, z, degenerate = 0
    cdef double acc, yr, yi, p, like_in, like_out, total, mx
    with nogil:
        while t < max_steps:
            acc = 0.0
            for i in range(M):
                acc += pi[i]
                scratch[i] = acc
            node = _descend(&scratch[0], levels, M)
            level = 0
            while (((<Py_ssize_t>1) << (level + 1)) - 2) <= node:
                level += 1
            m = M >> level
            lo = (node - (((<Py_ssize_t>1) << level) - 2)) * m
            hi = lo + m
            yr = nu_true[node] + noise_scale * normals[2 * t]
            yi = noise_scale * normals[2 * t + 1]
            z = 1 if yr * yr + yi * yi > v_node[node] else 0
            p = p_node[node]
            if z:
                like_in = 1.0 - p
                like_out = p
            else:
                like_in = p
                like_out = 1.0 - p
            for i in range(lo):
                pi[i] *= like_out
            for i in range(lo, hi):
                pi[i] *= like_in
            for i in range(hi, M):
                pi[i] *= like_out
            acc = 0.0
            for i in range(M):
                acc += pi[i]
                scratch[i] = acc
            total = scratch[M - 1]
            if total <= 0.0:
                degenerate = 1
                break
            for i in range(M):
                pi[i] /= total
            mx = pi[0]
            for i in range(1, M):
                if pi[i] > mx:
                    mx = pi[i]
            out_nodes[t] = node
            out_bits[t] = z
            out_maxpi[t] = mx
            t += 1
            if fixed_n > 0:
                if t >= fixed_n:
                    break
            elif vl_eps > 0.0:
                if mx > stop_at:
                    break
            elif mx >= 1.0:
                break
    if degenerate:
        raise DegenerateUpdateError("1-bit update annihilated the posterior")
    return t


def run_full_session(double[::1] loglik, double[::1] pi, int levels,
                     const double[:, ::1] resp_re, const double[:, ::1] resp_im,
                     double ahat_re, double ahat_im,
                     const double[::1] true_re, const double[::1] true_im,
                     double sigma2, double noise_scale, const double[::1] normals,
                     long fixed_n, double vl_eps, long max_steps,
                     long[::1] out_nodes, double[::1] out_maxpi,
                     double[::1] scratch):
    """Run one full-measurement hiePM session; log-domain posterior updates."""
    cdef Py_ssize_t M = pi.shape[0]
    cdef double stop_at = 1.0 - vl_eps
    cdef long t = 0
    cdef Py_ssize_t i, node
    cdef double acc, yr, yi, mr, mi, dr, di, total, mx
    with nogil:
        while t < max_steps:
            acc = 0.0
            for i in range(M):
                acc += pi[i]
                scratch[i] = acc
            node = _descend(&scratch[0], levels, M)
            yr = true_re[node] + noise_scale * normals[2 * t]
            yi = true_im[node] + noise_scale * normals[2 * t + 1]
            for i in range(M):
                mr = ahat_re * resp_re[node, i] - ahat_im * resp_im[node, i]
                mi = ahat_re * resp_im[node, i] + ahat_im * resp_re[node, i]
                dr = yr - mr
                di = yi - mi
                loglik[i] -= (dr * dr + di * di) / sigma2
            mx = loglik[0]
            for i in range(1, M):
                if loglik[i] > mx:
                    mx = loglik[i]
            for i in range(M):
                loglik[i] -= mx
            acc = 0.0
            for i in range(M):
                pi[i] = exp(loglik[i])
                acc += pi[i]
                scratch[i] = acc
            total = scratch[M - 1]
            for i in range(M):
                pi[i] /= total
            mx = pi[0]
            for i in range(1, M):
                if pi[i] > mx:
                    mx = pi[i]
            out_nodes[t] = node
            out_maxpi[t] = mx
            t += 1
            if fixed_n > 0:
                if t >= fixed_n:
                    break
            elif vl_eps > 0.0:
                if mx > stop_at:
                    break
            elif mx >= 1.0:
                break
    return t
