"""Numerical evaluation of the storage and energy functionals.

These functionals certify convergence and passivity along recorded
trajectories: quadratic terms for frequencies, generation, commands and
compensators, a path-integral term for the angle differences, window
integrals over the transmitted wave frames, and the multiplier/observer
extensions.  All evaluators broadcast over a leading time axis so a whole
trajectory can be scored with one call.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .equilibrium import EquilibriumPoint
from .network import NetworkModel


def _sq(x: np.ndarray) -> np.ndarray:
    return np.sum(np.square(x), axis=-1)


def angle_potential(eta: np.ndarray, eta_star: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Path integral of the flow deviation between the stationary angles and
    the current ones, summed over edges; locally nonnegative for |eta| < pi/2."""
    term = (np.cos(eta_star) - np.cos(eta)) - np.sin(eta_star) * (eta - eta_star)
    return np.sum(Y * term, axis=-1)


def core_components(
    model: NetworkModel,
    eq: EquilibriumPoint,
    eta: np.ndarray,
    omega_g: np.ndarray,
    pM: np.ndarray,
    p_c: np.ndarray,
    zeta: Optional[np.ndarray] = None,
    rho_zeta: Optional[np.ndarray] = None,
    rho_p: Optional[np.ndarray] = None,
    psi: Optional[np.ndarray] = None,
) -> dict[str, np.ndarray]:
    """Quadratic/potential components and, when the compensator states are
    supplied, the controller storage V_B."""
    gi = model.gen_indices
    M = model.param("M", gi)
    tau = model.param("tau", gi)
    kg = model.param("k_g", gi)
    kc = model.param("k_c", gi)
    Y = np.array([e.Y for e in model.phys_edges])

    out = {
        "V_F": 0.5 * np.sum(M * np.square(omega_g), axis=-1),
        "V_P": angle_potential(eta, eq.eta, Y),
        "V_C": 0.5 * _sq(p_c - eq.p_c),
        "V_D": np.sum(tau / (2.0 * kg * kc) * np.square(pM - eq.pM), axis=-1),
    }
    if psi is not None:
        out["V_psi"] = 0.5 * _sq(psi - eq.psi)
    if zeta is not None and rho_zeta is not None and rho_p is not None:
        v_pc = 0.5 * _sq(rho_p) + 0.5 * _sq(p_c - rho_p - eq.p_c)
        v_ze = 0.5 * _sq(rho_zeta) + 0.5 * _sq(zeta - rho_zeta - eq.zeta)
        out["V_pc_rho"] = v_pc
        out["V_zeta_rho"] = v_ze
        out["V_B"] = out["V_F"] + out["V_P"] + v_pc + out["V_D"] + v_ze
    return out


def tieline_extra(
    eq: EquilibriumPoint,
    pi: np.ndarray, rho_pi: np.ndarray,
    phi: np.ndarray, rho_phi: np.ndarray,
) -> np.ndarray:
    """Additional compensated quadratics of the interchange extension."""
    v_pi = 0.5 * _sq(rho_pi) + 0.5 * _sq(pi - rho_pi - eq.pi)
    v_phi = 0.5 * _sq(rho_phi) + 0.5 * _sq(phi - rho_phi - eq.phi)
    return v_pi + v_phi


def multiplier_storage(
    lam: np.ndarray, mu: np.ndarray,
    lam_star: np.ndarray, mu_star: np.ndarray,
    active_lo: Optional[np.ndarray] = None,
    active_hi: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Logarithmic storage for the bound multipliers (x*ln(x) := 0 at 0).

    Lower-bounded below by the quadratic 0.25*(x - x*)^2 in each variable.
    Raises if a multiplier is nonpositive where its bound exists.
    """

    def term(x, xs, mask):
        if mask is None:
            mask = np.ones(x.shape[-1], dtype=bool)
        x = np.where(mask, x, 1.0)
        xs = np.where(mask, xs, 1.0)
        if np.any(x <= 0):
            raise ValueError("nonpositive multiplier in storage evaluation")
        with np.errstate(divide="ignore"):
            log_xs = np.where(xs > 0, np.log(np.where(xs > 0, xs, 1.0)), 0.0)
        piece = 0.25 * (np.square(x) - np.square(xs)) \
            - 0.5 * np.square(xs) * (np.log(x) - log_xs)
        return np.sum(np.where(mask, piece, 0.0), axis=-1)

    return term(lam, lam_star, active_lo) + term(mu, mu_star, active_hi)


def multiplier_storage_lower_bound(lam, mu, lam_star, mu_star) -> np.ndarray:
    return 0.25 * _sq(lam - lam_star) + 0.25 * _sq(mu - mu_star)


def observer_storage(
    model: NetworkModel, eq: EquilibriumPoint,
    b: np.ndarray, chi_g: np.ndarray, omega_g: np.ndarray,
    tau_chi: np.ndarray,
) -> np.ndarray:
    gi = model.gen_indices
    M = model.param("M", gi)
    db = (b - eq.b) - omega_g
    return 0.5 * np.sum(M * np.square(db) + tau_chi * np.square(chi_g - eq.chi_g),
                        axis=-1)


# ---------------------------------------------------------------------------
# channel window storage
# ---------------------------------------------------------------------------

def channel_storage_series(
    f: np.ndarray, h: float, delays: np.ndarray, f_pre: np.ndarray
) -> np.ndarray:
    """Per-directed-channel window integrals along a trajectory.

    ``f[k, d]`` is the squared frame deviation at sample ``k`` on the step
    grid; ``f_pre[d]`` its constant value before t = 0.  Returns the array
    of integrals of ``f`` over the trailing window of length ``delays[d]``,
    trapezoidal on the grid with interpolated fractional lower ends.
    """
    f = np.asarray(f, float)
    n_t, n_dir = f.shape
    t = np.arange(n_t) * h
    # prefix integral C[k] = int_0^{t_k} f
    C = np.zeros((n_t, n_dir))
    if n_t > 1:
        np.cumsum(0.5 * h * (f[1:] + f[:-1]), axis=0, out=C[1:])
    out = np.empty((n_t, n_dir))
    for d in range(n_dir):
        T = delays[d]
        lower = t - T
        frac = np.clip(lower, 0.0, t[-1] if n_t > 1 else 0.0) / h
        i0 = np.floor(frac).astype(int)
        i0 = np.minimum(i0, n_t - 2) if n_t > 1 else np.zeros_like(i0)
        w = frac - i0
        C_lower = (1 - w) * C[i0, d] + w * C[np.minimum(i0 + 1, n_t - 1), d]
        window = C[:, d] - C_lower
        # pre-history contribution where the window reaches below t = 0
        window += f_pre[d] * np.maximum(0.0, -lower)
        out[:, d] = window
    return out


def frame_deviation(s_hist: np.ndarray, s_star: np.ndarray) -> np.ndarray:
    """Squared deviation of transmitted frames from their stationary values.

    ``s_hist`` has shape (n_t, n_dir, n_slots).
    """
    return np.sum(np.square(s_hist - s_star[None, :, :]), axis=-1)


def eval_channel_storage(pair, t: float, s_star_fwd: np.ndarray,
                         s_star_bwd: np.ndarray) -> float:
    """Window storage of one channel pair at a single time (test helper)."""
    total = 0.0
    for direction, s_star in ((0, s_star_fwd), (1, s_star_bwd)):
        T = pair.T[direction]
        if T == 0.0:
            continue
        hist = pair.hist[direction]
        h = hist.h
        n_sub = max(1, int(round(T / h)) * 4)
        taus = np.linspace(t - T, t, n_sub + 1)
        vals = np.array([np.sum((hist.read(tau) - s_star) ** 2) for tau in taus])
        total += 0.5 * np.trapz(vals, taus)
    return total


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

def monotonicity_probe(values: np.ndarray) -> float:
    """Largest positive per-sample increment of a functional series."""
    values = np.asarray(values, float)
    if len(values) < 2:
        return 0.0
    return float(np.diff(values).max())


def monotonicity_budget(h: float, v0: float, scale: float = 1e-6) -> float:
    return scale * h * (1.0 + v0)


def controller_supply_series(
    layout, eq: EquilibriumPoint,
    r: np.ndarray, zeta: np.ndarray, p_c: np.ndarray,
) -> np.ndarray:
    """Passivity supply rate of the compensated controller along a run.

    ``r`` has shape (n_t, n_dir, 2).  Pairing is the aggregated received
    deviation against (zeta - zeta*, -(p_c - p_c*)) at the receiving bus.
    """
    n_t = r.shape[0]
    n = zeta.shape[-1]
    rt = r - eq.r_star[None, :, :2]
    w = layout.alpha_dir()
    agg_p = np.zeros((n_t, n))
    agg_z = np.zeros((n_t, n))
    for d in range(layout.n_dir):
        j = layout.receiver[d]
        agg_p[:, j] += w[d] * rt[:, d, 0]
        agg_z[:, j] += w[d] * rt[:, d, 1]
    zt = zeta - eq.zeta
    pt = p_c - eq.p_c
    return np.sum(agg_p * zt, axis=-1) + np.sum(agg_z * (-pt), axis=-1)


def channel_supply_series(
    layout, eq: EquilibriumPoint,
    r: np.ndarray, zeta: np.ndarray, p_c: np.ndarray,
) -> np.ndarray:
    """Per-edge supply rate absorbed by each wave-channel pair.

    Returns shape (n_t, n_edges); the window storage of edge ``e`` satisfies
    dV_S/dt <= supply[:, e] along any trajectory (equality in continuous
    time).  Unweighted, matching the per-channel storage definition.
    """
    n_t = r.shape[0]
    rt = r - eq.r_star[None, :, :2]
    zt = zeta - eq.zeta
    pt = p_c - eq.p_c
    m = len(layout.edges)
    out = np.zeros((n_t, m))
    for d in range(layout.n_dir):
        j = layout.receiver[d]
        out[:, d // 2] -= rt[:, d, 0] * zt[:, j] + rt[:, d, 1] * (-pt[:, j])
    return out


def aggregate_storage(v_b: np.ndarray, v_s: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Total functional: controller storage plus weighted channel windows.

    ``v_s`` has one column per directed channel; columns 2e and 2e+1 belong
    to edge e and enter with its weight (unit weights reduce to the plain
    sum of parts).
    """
    w = np.repeat(alpha, 2)
    return v_b + np.sum(v_s * w[None, :], axis=-1)
