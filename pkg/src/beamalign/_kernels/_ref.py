"""Pure-numpy session kernels (fallback backend).

These mirror the compiled kernels in ``_fast.pyx`` operation for operation.
The 1-bit kernel uses only elementwise multiply/divide and sequential
cumulative sums, so its output is bit-identical to the compiled backend;
the full-measurement kernel additionally calls exp, where the two backends
agree to rounding (and on every integer decision in practice).

Shared conventions:

* posteriors live on a grid of M = 2^levels points; codeword (l, k) has the
  flat node id 2^l - 2 + (k - 1) and support [(k-1) * M >> l, k * M >> l)
* each step consumes two standard normals from ``normals`` (real, imag)
* ``fixed_n > 0`` runs exactly that many steps; otherwise ``vl_eps > 0``
  stops once max pi exceeds 1 - vl_eps, and ``vl_eps <= 0`` runs the full
  horizon (used to record max-posterior trajectories for calibration),
  exiting early only when the posterior saturates at exactly 1.0, which is
  an absorbing state
"""

from __future__ import annotations

import numpy as np

from ..posterior import DegenerateUpdateError

name = "python"


def _descend(cs, levels, M):
    """hiePM codeword choice from the cumulative posterior; returns a node id.

    Walks to the larger child while the current cell holds more than half
    the mass, then picks whichever of the exit cell and its parent is closer
    to mass 1/2 (ties to the deeper cell; the root is not a codeword).
    """
    cur_l = 0
    cur_k = 1
    cur_mass = 1.0
    parent_mass = 1.0
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
    if abs(cur_mass - 0.5) <= abs(parent_mass - 0.5):
        return (1 << cur_l) - 2 + (cur_k - 1)
    return (1 << (cur_l - 1)) - 2 + ((cur_k + 1) // 2 - 1)


def run_onebit_session(pi, levels, p_node, v_node, nu_true, noise_scale, normals,
                       fixed_n, vl_eps, max_steps, out_nodes, out_bits, out_maxpi,
                       scratch):
    """Run one 1-bit hiePM session in place; returns the number of steps taken."""
    M = pi.shape[0]
    stop_at = 1.0 - vl_eps
    t = 0
    while t < max_steps:
        cs = np.cumsum(pi, out=scratch)
        node = _descend(cs, levels, M)
        level = (node + 2).bit_length() - 1
        m = M >> level
        lo = (node - ((1 << level) - 2)) * m
        hi = lo + m
        yr = nu_true[node] + noise_scale * normals[2 * t]
        yi = noise_scale * normals[2 * t + 1]
        z = 1 if yr * yr + yi * yi > v_node[node] else 0
        p = p_node[node]
        like_in, like_out = (1.0 - p, p) if z else (p, 1.0 - p)
        pi[:lo] *= like_out
        pi[lo:hi] *= like_in
        pi[hi:] *= like_out
        total = np.cumsum(pi, out=scratch)[-1]
        if total <= 0.0:
            raise DegenerateUpdateError("1-bit update annihilated the posterior")
        pi /= total
        out_nodes[t] = node
        out_bits[t] = z
        out_maxpi[t] = pi.max()
        t += 1
        if fixed_n > 0:
            if t >= fixed_n:
                break
        elif vl_eps > 0.0:
            if out_maxpi[t - 1] > stop_at:
                break
        elif out_maxpi[t - 1] >= 1.0:
            break
    return t


def run_full_session(loglik, pi, levels, resp_re, resp_im, ahat_re, ahat_im,
                     true_re, true_im, sigma2, noise_scale, normals,
                     fixed_n, vl_eps, max_steps, out_nodes, out_maxpi, scratch):
    """Run one full-measurement hiePM session; log-domain posterior updates.

    ``loglik`` and ``pi`` must be consistent on entry (pi the normalized
    exponential of loglik); both are updated in place.
    """
    M = pi.shape[0]
    stop_at = 1.0 - vl_eps
    t = 0
    while t < max_steps:
        cs = np.cumsum(pi, out=scratch)
        node = _descend(cs, levels, M)
        yr = true_re[node] + noise_scale * normals[2 * t]
        yi = true_im[node] + noise_scale * normals[2 * t + 1]
        rr = resp_re[node]
        ri = resp_im[node]
        mr = ahat_re * rr - ahat_im * ri
        mi = ahat_re * ri + ahat_im * rr
        loglik -= ((yr - mr) ** 2 + (yi - mi) ** 2) / sigma2
        loglik -= loglik.max()
        np.exp(loglik, out=pi)
        total = np.cumsum(pi, out=scratch)[-1]
        pi /= total
        out_nodes[t] = node
        out_maxpi[t] = pi.max()
        t += 1
        if fixed_n > 0:
            if t >= fixed_n:
                break
        elif vl_eps > 0.0:
            if out_maxpi[t - 1] > stop_at:
                break
        elif out_maxpi[t - 1] >= 1.0:
            break
    return t
