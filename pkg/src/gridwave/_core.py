"""Compiled integration kernel.

One flat state vector, fixed-step RK4 with histories frozen at the step
start (method-of-steps), ring buffers for transmitted frames / commanded
values on the uniform step grid, and the wave encode/decode evaluated per
comm edge.  The pure-numpy modules define the same dynamics function by
function; this mirror exists so 200k-step runs finish in seconds, and the
test suite cross-checks the two paths against each other.

Controller kind codes: 0 open loop, 1 naive (redundant edge copies),
2 xi variant, 3 reform, 4 scatter, 5 tieline, 6 bounds, 7 observer.

State vector layout: [eta | omega_g | pM | controller blocks], where the
controller blocks are, per kind:
  naive            psi_tail[m], psi_head[m], pc[n]
  xi / reform      cons[n], pc[n]
  scatter          rho_z[n], zeta[n], rho_p[n], pc[n]
  tieline          scatter blocks + rho_pi[n], pi[n], rho_phi[n], phi[n]
  bounds           scatter blocks + lam[ng], mu[ng]
  observer         scatter blocks + chi_g[ng], b[ng]
"""

from __future__ import annotations

import numpy as np
from numba import njit

HALF_PI = 0.5 * np.pi
SQRT2 = np.sqrt(2.0)

OPEN, NAIVE, XI, REFORM, SCATTER, TIELINE, BOUNDS, OBSERVER = range(8)

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_POSITIVITY = 2


@njit(cache=True, inline="always")
def _read_ring1(buf, count, cap, pos, pre):
    """Linear interpolation of a scalar ring history at grid position pos."""
    if pos < 0.0 or count == 0:
        return pre
    last = count - 1
    if pos >= last:
        return buf[last % cap]
    i0 = int(pos)
    w = pos - i0
    return (1.0 - w) * buf[i0 % cap] + w * buf[(i0 + 1) % cap]


@njit(cache=True, inline="always")
def _read_frame(buf, count, cap, pos, pre, out, ns):
    if pos < 0.0 or count == 0:
        for i in range(ns):
            out[i] = pre[i]
        return
    last = count - 1
    if pos >= last:
        row = buf[last % cap]
        for i in range(ns):
            out[i] = row[i]
        return
    i0 = int(pos)
    w = pos - i0
    a = buf[i0 % cap]
    b = buf[(i0 + 1) % cap]
    for i in range(ns):
        out[i] = (1.0 - w) * a[i] + w * b[i]


@njit(cache=True, inline="always")
def _rotate(x, out, ns):
    for i in range(0, ns, 2):
        out[i] = -x[i + 1]
        out[i + 1] = x[i]


@njit(cache=True, inline="always")
def _dist_value(dist_kind, d, tau, dist_e, noise, h):
    if dist_kind == 1:
        return 1.0 / (dist_e[d] + tau)
    if dist_kind == 2:
        idx = int(tau / h + 1e-9)
        if idx >= noise.shape[0]:
            idx = noise.shape[0] - 1
        return noise[idx, d]
    return 0.0


@njit(cache=True)
def _pair_eval(e, tau, h, T_fwd, T_bwd, S, count, cap, s_pre, ns,
               y_tail, y_head, dist_fwd, dist_bwd,
               r_fwd, r_bwd, s_fwd, s_bwd, tmp1, tmp2):
    """Decode both directions of one edge and produce the outgoing frames.

    ``r_fwd`` is what the head decodes about the tail (channel 2e), r_bwd
    the reverse.  With both directions undelayed, the encode/decode
    algebraic loop is solved explicitly; a single zero-delay direction is
    chained through live values.
    """
    d_fwd = 2 * e
    d_bwd = 2 * e + 1
    if T_fwd == 0.0 and T_bwd == 0.0:
        for i in range(ns):
            tmp2[i] = dist_fwd
        _rotate(tmp2, tmp1, ns)           # rotated fwd-channel disturbance
        _rotate(y_head, tmp2, ns)
        for i in range(ns):
            s_fwd[i] = 0.5 * (tmp1[i] + dist_bwd) + (y_tail[i] - tmp2[i]) / SQRT2
        _rotate(s_fwd, tmp1, ns)          # frame arriving at the head
        for i in range(ns):
            s_in = tmp1[i] + dist_fwd
            r_fwd[i] = SQRT2 * s_in - y_head[i]
            s_bwd[i] = s_in - SQRT2 * y_head[i]
        _rotate(s_bwd, tmp1, ns)          # frame arriving back at the tail
        for i in range(ns):
            s_in = tmp1[i] + dist_bwd
            r_bwd[i] = -SQRT2 * s_in - y_tail[i]
    elif T_fwd == 0.0:
        # the tail decodes a delayed frame; its outgoing wave then reaches
        # the head instantaneously
        _read_frame(S[d_bwd], count, cap, (tau - T_bwd) / h, s_pre[d_bwd], tmp2, ns)
        _rotate(tmp2, tmp1, ns)
        for i in range(ns):
            s_in_tail = tmp1[i] + dist_bwd
            r_bwd[i] = -SQRT2 * s_in_tail - y_tail[i]
            s_fwd[i] = s_in_tail + SQRT2 * y_tail[i]
        _rotate(s_fwd, tmp1, ns)
        for i in range(ns):
            s_in_head = tmp1[i] + dist_fwd
            r_fwd[i] = SQRT2 * s_in_head - y_head[i]
            s_bwd[i] = s_in_head - SQRT2 * y_head[i]
    elif T_bwd == 0.0:
        _read_frame(S[d_fwd], count, cap, (tau - T_fwd) / h, s_pre[d_fwd], tmp2, ns)
        _rotate(tmp2, tmp1, ns)
        for i in range(ns):
            s_in_head = tmp1[i] + dist_fwd
            r_fwd[i] = SQRT2 * s_in_head - y_head[i]
            s_bwd[i] = s_in_head - SQRT2 * y_head[i]
        _rotate(s_bwd, tmp1, ns)
        for i in range(ns):
            s_in_tail = tmp1[i] + dist_bwd
            r_bwd[i] = -SQRT2 * s_in_tail - y_tail[i]
            s_fwd[i] = s_in_tail + SQRT2 * y_tail[i]
    else:
        _read_frame(S[d_fwd], count, cap, (tau - T_fwd) / h, s_pre[d_fwd], tmp2, ns)
        _rotate(tmp2, tmp1, ns)
        for i in range(ns):
            s_in_head = tmp1[i] + dist_fwd
            r_fwd[i] = SQRT2 * s_in_head - y_head[i]
            s_bwd[i] = s_in_head - SQRT2 * y_head[i]
        _read_frame(S[d_bwd], count, cap, (tau - T_bwd) / h, s_pre[d_bwd], tmp2, ns)
        _rotate(tmp2, tmp1, ns)
        for i in range(ns):
            s_in_tail = tmp1[i] + dist_bwd
            r_bwd[i] = -SQRT2 * s_in_tail - y_tail[i]
            s_fwd[i] = s_in_tail + SQRT2 * y_tail[i]


@njit(cache=True)
def _comm_eval(kind, tau, h, y, n, nE, ng, m, ns,
               ce_tail, ce_head, sigma,
               T_dir, S, count, cap, s_pre,
               dist_kind, dist_e, noise,
               r_all, s_all, yt, yh, tmp1, tmp2):
    """Wave-channel evaluation at time tau; fills r_all and s_all (2m, ns)."""
    c0 = nE + 2 * ng
    zeta = y[c0 + n: c0 + 2 * n]
    pc = y[c0 + 3 * n: c0 + 4 * n]
    tieline = kind == TIELINE
    if tieline:
        pi = y[c0 + 5 * n: c0 + 6 * n]
        phi = y[c0 + 7 * n: c0 + 8 * n]
    else:
        pi = zeta
        phi = zeta
    for e in range(m):
        a = ce_tail[e]
        b = ce_head[e]
        yt[0] = zeta[a]
        yt[1] = -pc[a]
        yh[0] = zeta[b]
        yh[1] = -pc[b]
        if tieline:
            sg = sigma[e]
            yt[2] = pi[a]
            yt[3] = -zeta[a]
            yt[4] = sg * phi[a]
            yt[5] = -sg * pi[a]
            yh[2] = pi[b]
            yh[3] = -zeta[b]
            yh[4] = sg * phi[b]
            yh[5] = -sg * pi[b]
        df = _dist_value(dist_kind, 2 * e, tau, dist_e, noise, h)
        db = _dist_value(dist_kind, 2 * e + 1, tau, dist_e, noise, h)
        _pair_eval(e, tau, h, T_dir[2 * e], T_dir[2 * e + 1],
                   S, count, cap, s_pre, ns,
                   yt, yh, df, db,
                   r_all[2 * e], r_all[2 * e + 1],
                   s_all[2 * e], s_all[2 * e + 1], tmp1, tmp2)


@njit(cache=True)
def _rhs(kind, tau, h, y, dy, pl, n, nE, ng, m, ns,
         pe_tail, pe_head, Yv, gen_pos, load_pos,
         Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
         ce_tail, ce_head, alpha, sigma, inject,
         lo_b, hi_b, lo_act, hi_act, tau_chi,
         T_dir, S, PC, ZB, count, cap, s_pre, pc_pre, z_pre,
         dist_kind, dist_e, noise,
         flows, inflow, omega, chi,
         acc1, acc2, acc3, acc4, acc5, acc6,
         r_all, s_all, yt, yh, tmp1, tmp2):
    nl = n - ng
    for e in range(nE):
        flows[e] = Yv[e] * np.sin(y[e])
    for j in range(n):
        inflow[j] = 0.0
    for e in range(nE):
        inflow[pe_tail[e]] -= flows[e]
        inflow[pe_head[e]] += flows[e]
    for g in range(ng):
        omega[gen_pos[g]] = y[nE + g]
    for l in range(nl):
        j = load_pos[l]
        omega[j] = (inflow[j] - pl[j]) / Lam_bus[j]

    pM = y[nE + ng: nE + 2 * ng]
    c0 = nE + 2 * ng

    for e in range(nE):
        dy[e] = omega[pe_tail[e]] - omega[pe_head[e]]
    for g in range(ng):
        j = gen_pos[g]
        dy[nE + g] = (-pl[j] + pM[g] - Lam_bus[j] * y[nE + g] + inflow[j]) / Mv[g]

    if kind == OPEN:
        for g in range(ng):
            dy[nE + ng + g] = -pM[g] / tauv[g]
        return

    # commanded power visible to every controller family
    if kind == NAIVE:
        pc = y[c0 + 2 * m: c0 + 2 * m + n]
    elif kind == XI or kind == REFORM:
        pc = y[c0 + n: c0 + 2 * n]
    else:
        pc = y[c0 + 3 * n: c0 + 4 * n]

    # generation input (multiplier correction patched below for bounds)
    for g in range(ng):
        j = gen_pos[g]
        u = kcv[g] * (pc[j] - y[nE + g]) + pM[g] / kgv[g] \
            - kcv[g] * qv[g] * (pM[g] - cv[g])
        if kind == BOUNDS:
            lam = y[c0 + 4 * n + g]
            mu = y[c0 + 4 * n + ng + g]
            if lo_act[g]:
                u += kcv[g] * lam * lam
            if hi_act[g]:
                u -= kcv[g] * mu * mu
        dy[nE + ng + g] = (-pM[g] + kgv[g] * u) / tauv[g]

    if kind == NAIVE:
        psi_tail = y[c0: c0 + m]
        psi_head = y[c0 + m: c0 + 2 * m]
        for j in range(n):
            acc1[j] = 0.0
        for e in range(m):
            a = ce_tail[e]
            b = ce_head[e]
            pcA = _read_ring1(PC[a], count, cap, (tau - T_dir[2 * e]) / h, pc_pre[a])
            pcB = _read_ring1(PC[b], count, cap, (tau - T_dir[2 * e + 1]) / h, pc_pre[b])
            dy[c0 + m + e] = pcA - pc[b]          # head's copy of the edge state
            dy[c0 + e] = pc[a] - pcB              # tail's copy
            acc1[b] += psi_head[e]
            acc1[a] -= psi_tail[e]
        for j in range(n):
            dy[c0 + 2 * m + j] = pl[j] + acc1[j]
        for g in range(ng):
            dy[c0 + 2 * m + gen_pos[g]] -= pM[g]
        return

    if kind == XI or kind == REFORM:
        cons = y[c0: c0 + n]
        for j in range(n):
            acc1[j] = 0.0
            acc2[j] = 0.0
        for e in range(m):
            a = ce_tail[e]
            b = ce_head[e]
            al = alpha[e]
            df = _dist_value(dist_kind, 2 * e, tau, dist_e, noise, h)
            db = _dist_value(dist_kind, 2 * e + 1, tau, dist_e, noise, h)
            pcA = _read_ring1(PC[a], count, cap, (tau - T_dir[2 * e]) / h, pc_pre[a]) + df
            pcB = _read_ring1(PC[b], count, cap, (tau - T_dir[2 * e + 1]) / h, pc_pre[b]) + db
            acc1[b] += al * (pcA - pc[b])
            acc1[a] += al * (pcB - pc[a])
            if kind == REFORM:
                zA = _read_ring1(ZB[a], count, cap, (tau - T_dir[2 * e]) / h, z_pre[a]) + df
                zB = _read_ring1(ZB[b], count, cap, (tau - T_dir[2 * e + 1]) / h, z_pre[b]) + db
                acc2[b] += al * (zA - cons[b])
                acc2[a] += al * (zB - cons[a])
        for j in range(n):
            dy[c0 + j] = acc1[j]
            if kind == REFORM:
                dy[c0 + n + j] = pl[j] - acc2[j]
            else:
                dy[c0 + n + j] = pl[j] + cons[j]
        for g in range(ng):
            dy[c0 + n + gen_pos[g]] -= pM[g]
        return

    # wave-channel families
    _comm_eval(kind, tau, h, y, n, nE, ng, m, ns,
               ce_tail, ce_head, sigma, T_dir, S, count, cap, s_pre,
               dist_kind, dist_e, noise,
               r_all, s_all, yt, yh, tmp1, tmp2)

    rho_z = y[c0: c0 + n]
    zeta = y[c0 + n: c0 + 2 * n]
    rho_p = y[c0 + 2 * n: c0 + 3 * n]
    tieline = kind == TIELINE
    if tieline:
        pi = y[c0 + 5 * n: c0 + 6 * n]
        phi = y[c0 + 7 * n: c0 + 8 * n]
    else:
        pi = zeta
        phi = zeta

    for j in range(n):
        acc1[j] = 0.0   # sum alpha (r^p - pc)
        acc2[j] = 0.0   # sum alpha (r^zeta - zeta)
        acc3[j] = 0.0   # sum alpha (r^zeta' - zeta)
        acc4[j] = 0.0   # sum alpha (r^pi' - pi)
        acc5[j] = 0.0   # intra-area: sum alpha (r^pi'' - pi)
        acc6[j] = 0.0   # intra-area: sum alpha (r^phi'' - phi)
    for e in range(m):
        a = ce_tail[e]
        b = ce_head[e]
        al = alpha[e]
        rf = r_all[2 * e]
        rb = r_all[2 * e + 1]
        acc1[b] += al * (rf[0] - pc[b])
        acc1[a] += al * (rb[0] - pc[a])
        acc2[b] += al * (rf[1] - zeta[b])
        acc2[a] += al * (rb[1] - zeta[a])
        if tieline:
            acc3[b] += al * (rf[2] - zeta[b])
            acc3[a] += al * (rb[2] - zeta[a])
            acc4[b] += al * (rf[3] - pi[b])
            acc4[a] += al * (rb[3] - pi[a])
            if sigma[e] != 0.0:
                acc5[b] += al * (rf[4] - pi[b])
                acc5[a] += al * (rb[4] - pi[a])
                acc6[b] += al * (rf[5] - phi[b])
                acc6[a] += al * (rb[5] - phi[a])

    # demand as seen by the controller: measured, or observed
    if kind == OBSERVER:
        chi_g = y[c0 + 4 * n: c0 + 4 * n + ng]
        for g in range(ng):
            chi[gen_pos[g]] = chi_g[g]
        for l in range(nl):
            j = load_pos[l]
            chi[j] = -Lam_bus[j] * omega[j] + inflow[j]
    else:
        for j in range(n):
            chi[j] = pl[j]

    for j in range(n):
        dy[c0 + j] = -rho_z[j] + acc1[j]
        dy[c0 + n + j] = -rho_z[j] + 2.0 * acc1[j]
        dy[c0 + 2 * n + j] = -rho_p[j] + chi[j] - acc2[j]
        dy[c0 + 3 * n + j] = -rho_p[j] + 2.0 * chi[j] - 2.0 * acc2[j]
    for g in range(ng):
        j = gen_pos[g]
        dy[c0 + 2 * n + j] -= pM[g]
        dy[c0 + 3 * n + j] -= 2.0 * pM[g]

    if tieline:
        for j in range(n):
            dy[c0 + j] -= acc4[j]
            dy[c0 + n + j] -= 2.0 * acc4[j]
            rho_pi_j = y[c0 + 4 * n + j]
            rho_phi_j = y[c0 + 6 * n + j]
            dy[c0 + 4 * n + j] = -rho_pi_j + acc3[j] - acc6[j] - inject[j]
            dy[c0 + 5 * n + j] = -rho_pi_j + 2.0 * acc3[j] - 2.0 * acc6[j] \
                - 2.0 * inject[j]
            dy[c0 + 6 * n + j] = -rho_phi_j + acc5[j]
            dy[c0 + 7 * n + j] = -rho_phi_j + 2.0 * acc5[j]
    elif kind == BOUNDS:
        for g in range(ng):
            lam = y[c0 + 4 * n + g]
            mu = y[c0 + 4 * n + ng + g]
            dy[c0 + 4 * n + g] = 2.0 * lam * (lo_b[g] - pM[g]) if lo_act[g] else 0.0
            dy[c0 + 4 * n + ng + g] = 2.0 * mu * (pM[g] - hi_b[g]) if hi_act[g] else 0.0
    elif kind == OBSERVER:
        chi_g = y[c0 + 4 * n: c0 + 4 * n + ng]
        bb = y[c0 + 4 * n + ng: c0 + 4 * n + 2 * ng]
        for g in range(ng):
            j = gen_pos[g]
            dy[c0 + 4 * n + g] = (bb[g] - omega[j] - pc[j] - chi_g[g]) / tau_chi[g]
            dy[c0 + 4 * n + ng + g] = (-chi_g[g] + pM[g] - Lam_bus[j] * omega[j]
                                       + inflow[j]) / Mv[g]


@njit(cache=True)
def _rk4_step(kind, t, h, y, y_out, pl, n, nE, ng, m, ns,
              pe_tail, pe_head, Yv, gen_pos, load_pos,
              Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
              ce_tail, ce_head, alpha, sigma, inject,
              lo_b, hi_b, lo_act, hi_act, tau_chi,
              T_dir, S, PC, ZB, count, cap, s_pre, pc_pre, z_pre,
              dist_kind, dist_e, noise,
              flows, inflow, omega, chi,
              acc1, acc2, acc3, acc4, acc5, acc6,
              r_all, s_all, yt, yh, tmp1, tmp2,
              k1, k2, k3, k4, ytmp):
    nq = y.shape[0]
    _rhs(kind, t, h, y, k1, pl, n, nE, ng, m, ns,
         pe_tail, pe_head, Yv, gen_pos, load_pos,
         Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
         ce_tail, ce_head, alpha, sigma, inject,
         lo_b, hi_b, lo_act, hi_act, tau_chi,
         T_dir, S, PC, ZB, count, cap, s_pre, pc_pre, z_pre,
         dist_kind, dist_e, noise,
         flows, inflow, omega, chi, acc1, acc2, acc3, acc4, acc5, acc6,
         r_all, s_all, yt, yh, tmp1, tmp2)
    for i in range(nq):
        ytmp[i] = y[i] + 0.5 * h * k1[i]
    _rhs(kind, t + 0.5 * h, h, ytmp, k2, pl, n, nE, ng, m, ns,
         pe_tail, pe_head, Yv, gen_pos, load_pos,
         Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
         ce_tail, ce_head, alpha, sigma, inject,
         lo_b, hi_b, lo_act, hi_act, tau_chi,
         T_dir, S, PC, ZB, count, cap, s_pre, pc_pre, z_pre,
         dist_kind, dist_e, noise,
         flows, inflow, omega, chi, acc1, acc2, acc3, acc4, acc5, acc6,
         r_all, s_all, yt, yh, tmp1, tmp2)
    for i in range(nq):
        ytmp[i] = y[i] + 0.5 * h * k2[i]
    _rhs(kind, t + 0.5 * h, h, ytmp, k3, pl, n, nE, ng, m, ns,
         pe_tail, pe_head, Yv, gen_pos, load_pos,
         Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
         ce_tail, ce_head, alpha, sigma, inject,
         lo_b, hi_b, lo_act, hi_act, tau_chi,
         T_dir, S, PC, ZB, count, cap, s_pre, pc_pre, z_pre,
         dist_kind, dist_e, noise,
         flows, inflow, omega, chi, acc1, acc2, acc3, acc4, acc5, acc6,
         r_all, s_all, yt, yh, tmp1, tmp2)
    for i in range(nq):
        ytmp[i] = y[i] + h * k3[i]
    _rhs(kind, t + h, h, ytmp, k4, pl, n, nE, ng, m, ns,
         pe_tail, pe_head, Yv, gen_pos, load_pos,
         Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
         ce_tail, ce_head, alpha, sigma, inject,
         lo_b, hi_b, lo_act, hi_act, tau_chi,
         T_dir, S, PC, ZB, count, cap, s_pre, pc_pre, z_pre,
         dist_kind, dist_e, noise,
         flows, inflow, omega, chi, acc1, acc2, acc3, acc4, acc5, acc6,
         r_all, s_all, yt, yh, tmp1, tmp2)
    for i in range(nq):
        y_out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, inline="always")
def _state_ok(kind, y, n, nE, ng, lo_act, hi_act):
    for i in range(y.shape[0]):
        if not np.isfinite(y[i]):
            return STATUS_NONFINITE
    if kind == BOUNDS:
        c0 = nE + 2 * ng
        for g in range(ng):
            if lo_act[g] and y[c0 + 4 * n + g] <= 0.0:
                return STATUS_POSITIVITY
            if hi_act[g] and y[c0 + 4 * n + ng + g] <= 0.0:
                return STATUS_POSITIVITY
    return STATUS_OK


@njit(cache=True)
def commit_sample(kind, k, h, y, pl, n, nE, ng, m, ns,
                  ce_tail, ce_head, sigma, T_dir, S, PC, ZB, cap,
                  s_pre, pc_pre, z_pre,
                  dist_kind, dist_e, noise,
                  r_all, s_all, yt, yh, tmp1, tmp2,
                  diag_on, s_star, diag_f, diag_r, diag_y):
    """Append the communicated values of committed sample k to the rings.

    Reads use the samples already present (count = k), so delayed lookups
    stay causal; the new row becomes sample k.
    """
    c0 = nE + 2 * ng
    if kind == NAIVE:
        pc = y[c0 + 2 * m: c0 + 2 * m + n]
        for j in range(n):
            PC[j, k % cap] = pc[j]
    elif kind == XI or kind == REFORM:
        for j in range(n):
            PC[j, k % cap] = y[c0 + n + j]
            ZB[j, k % cap] = y[c0 + j]
    elif kind != OPEN:
        _comm_eval(kind, k * h, h, y, n, nE, ng, m, ns,
                   ce_tail, ce_head, sigma, T_dir, S, k, cap, s_pre,
                   dist_kind, dist_e, noise,
                   r_all, s_all, yt, yh, tmp1, tmp2)
        for d in range(2 * m):
            for i in range(ns):
                S[d, k % cap, i] = s_all[d, i]
        if diag_on:
            for d in range(2 * m):
                acc = 0.0
                for i in range(ns):
                    dv = s_all[d, i] - s_star[d, i]
                    acc += dv * dv
                    diag_r[k, d, i] = r_all[d, i]
                diag_f[k, d] = acc
    if diag_on:
        for i in range(y.shape[0]):
            diag_y[k, i] = y[i]


@njit(cache=True)
def integrate_chunk(kind, k_start, n_sub, h, y, pl, n, nE, ng, m, ns,
                    pe_tail, pe_head, Yv, gen_pos, load_pos,
                    Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
                    ce_tail, ce_head, alpha, sigma, inject,
                    lo_b, hi_b, lo_act, hi_act, tau_chi,
                    T_dir, S, PC, ZB, cap, s_pre, pc_pre, z_pre,
                    dist_kind, dist_e, noise,
                    flows, inflow, omega, chi,
                    acc1, acc2, acc3, acc4, acc5, acc6,
                    r_all, s_all, yt, yh, tmp1, tmp2,
                    k1, k2, k3, k4, ytmp, ysub, ycand,
                    diag_on, s_star, diag_f, diag_r, diag_y,
                    angle_flag):
    """Advance n_sub steps from sample k_start; returns (status, k_fail).

    On entry the rings hold samples 0..k_start.  The demand vector is
    constant over the chunk (events are aligned to chunk boundaries).
    A step that breaks multiplier positivity or produces non-finite values
    is retried with 2, 4, ..., 64 substeps against the same frozen history
    before giving up.
    """
    for s in range(n_sub):
        k = k_start + s
        t = k * h
        count = k + 1
        _rk4_step(kind, t, h, y, ycand, pl, n, nE, ng, m, ns,
                  pe_tail, pe_head, Yv, gen_pos, load_pos,
                  Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
                  ce_tail, ce_head, alpha, sigma, inject,
                  lo_b, hi_b, lo_act, hi_act, tau_chi,
                  T_dir, S, PC, ZB, count, cap, s_pre, pc_pre, z_pre,
                  dist_kind, dist_e, noise,
                  flows, inflow, omega, chi,
                  acc1, acc2, acc3, acc4, acc5, acc6,
                  r_all, s_all, yt, yh, tmp1, tmp2,
                  k1, k2, k3, k4, ytmp)
        status = _state_ok(kind, ycand, n, nE, ng, lo_act, hi_act)
        if status != STATUS_OK:
            nsub = 2
            while nsub <= 64:
                for i in range(y.shape[0]):
                    ysub[i] = y[i]
                hs = h / nsub
                ok = True
                for q in range(nsub):
                    _rk4_step(kind, t + q * hs, hs, ysub, ycand, pl,
                              n, nE, ng, m, ns,
                              pe_tail, pe_head, Yv, gen_pos, load_pos,
                              Mv, Lam_bus, tauv, kgv, kcv, qv, cv,
                              ce_tail, ce_head, alpha, sigma, inject,
                              lo_b, hi_b, lo_act, hi_act, tau_chi,
                              T_dir, S, PC, ZB, count, cap, s_pre, pc_pre,
                              z_pre, dist_kind, dist_e, noise,
                              flows, inflow, omega, chi,
                              acc1, acc2, acc3, acc4, acc5, acc6,
                              r_all, s_all, yt, yh, tmp1, tmp2,
                              k1, k2, k3, k4, ytmp)
                    if _state_ok(kind, ycand, n, nE, ng, lo_act, hi_act) != STATUS_OK:
                        ok = False
                        break
                    for i in range(y.shape[0]):
                        ysub[i] = ycand[i]
                if ok:
                    status = STATUS_OK
                    break
                nsub *= 2
            if status != STATUS_OK:
                return status, k
        for i in range(y.shape[0]):
            y[i] = ycand[i]
        if angle_flag[0] < 0:
            for e in range(nE):
                if abs(y[e]) >= HALF_PI:
                    angle_flag[0] = k + 1
                    break
        commit_sample(kind, k + 1, h, y, pl, n, nE, ng, m, ns,
                      ce_tail, ce_head, sigma, T_dir, S, PC, ZB, cap,
                      s_pre, pc_pre, z_pre,
                      dist_kind, dist_e, noise,
                      r_all, s_all, yt, yh, tmp1, tmp2,
                      diag_on, s_star, diag_f, diag_r, diag_y)
    return STATUS_OK, k_start + n_sub
