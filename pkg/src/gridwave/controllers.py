"""Cyber-layer controller dynamics.

Every controller is a pure derivative evaluator: given its own state, the
values received from neighbours (delayed or decoded, depending on the
protocol), and the local generation/demand mismatch, it returns time
derivatives.  Delay handling lives entirely in :mod:`gridwave.channels`.

Directed channel indexing used throughout: for the canonical comm edge
``e = (a, b)``, channel ``2e`` carries a -> b (received at ``b``) and
channel ``2e + 1`` carries b -> a (received at ``a``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import NetworkModel


@dataclass
class CommLayout:
    """Index arrays shared by all controllers and channels."""

    edges: np.ndarray        # (m, 2) canonical (tail, head) bus positions
    alpha: np.ndarray        # (m,)
    intra: np.ndarray        # (m,) bool, endpoints in the same area
    receiver: np.ndarray     # (2m,) receiving bus per directed channel
    sender: np.ndarray       # (2m,) sending bus per directed channel
    J_flag: np.ndarray       # (n,) 1.0 at the informed bus of each area
    Phat_bus: np.ndarray     # (n,) schedule value at the informed bus, else 0

    @property
    def n_dir(self) -> int:
        return 2 * len(self.edges)

    def alpha_dir(self) -> np.ndarray:
        return np.repeat(self.alpha, 2)

    def intra_dir(self) -> np.ndarray:
        return np.repeat(self.intra, 2)


def comm_layout(model: NetworkModel) -> CommLayout:
    ce = model.edge_indices(model.comm_edges)
    m = len(ce)
    alpha = np.array([e.alpha for e in model.comm_edges], dtype=float)
    area_of = model.area_of()
    intra = (
        np.array([area_of[a] == area_of[b] for a, b in ce], dtype=bool)
        if m else np.zeros(0, dtype=bool)
    )
    receiver = np.empty(2 * m, dtype=np.int64)
    sender = np.empty(2 * m, dtype=np.int64)
    receiver[0::2] = ce[:, 1] if m else []
    receiver[1::2] = ce[:, 0] if m else []
    sender[0::2] = ce[:, 0] if m else []
    sender[1::2] = ce[:, 1] if m else []
    n = model.n_buses
    J_flag = np.zeros(n)
    Phat_bus = np.zeros(n)
    for k, bus_id in enumerate(model.informed_buses or ()):
        j = model.index_of(bus_id)
        J_flag[j] = 1.0
        if model.tieline_schedule:
            Phat_bus[j] = model.tieline_schedule[k]
    return CommLayout(ce, alpha, intra, receiver, sender, J_flag, Phat_bus)


def _bus_sum(layout: CommLayout, per_channel: np.ndarray, n: int,
             intra_only: bool = False) -> np.ndarray:
    """Sum alpha-weighted per-directed-channel values at the receiving bus."""
    w = layout.alpha_dir() * per_channel
    if intra_only:
        w = w * layout.intra_dir()
    out = np.zeros(n)
    np.add.at(out, layout.receiver, w)
    return out


# ---------------------------------------------------------------------------
# edge-redundant controller (two copies of each edge integrator)
# ---------------------------------------------------------------------------

@dataclass
class NaiveState:
    psi_tail: np.ndarray   # copy held at the canonical tail bus
    psi_head: np.ndarray   # copy held at the canonical head bus
    p_c: np.ndarray


def naive_derivatives(
    state: NaiveState,
    pc_delayed: np.ndarray,     # (2m,) delayed sender p^c per directed channel
    pM_bus: np.ndarray,
    pL: np.ndarray,
    model: NetworkModel,
    layout: Optional[CommLayout] = None,
) -> NaiveState:
    layout = layout or comm_layout(model)
    tails, heads = layout.edges[:, 0], layout.edges[:, 1]
    pc = state.p_c
    # head copy integrates the delayed tail command; tail copy the reverse
    d_psi_head = pc_delayed[0::2] - pc[heads]
    d_psi_tail = pc[tails] - pc_delayed[1::2]
    n = model.n_buses
    flux = np.zeros(n)
    np.add.at(flux, heads, state.psi_head)
    np.subtract.at(flux, tails, state.psi_tail)
    d_pc = -(pM_bus - pL) + flux
    return NaiveState(d_psi_tail, d_psi_head, d_pc)


# ---------------------------------------------------------------------------
# node-based reformulations
# ---------------------------------------------------------------------------

@dataclass
class ReformState:
    consensus: np.ndarray   # per-bus integrator
    p_c: np.ndarray


def reform_derivatives(
    state: ReformState,
    pc_delayed: np.ndarray,
    zeta_delayed: np.ndarray,
    pM_bus: np.ndarray,
    pL: np.ndarray,
    model: NetworkModel,
    layout: Optional[CommLayout] = None,
) -> ReformState:
    layout = layout or comm_layout(model)
    n = model.n_buses
    d_zeta = _bus_sum(layout, pc_delayed - state.p_c[layout.receiver], n)
    d_pc = -(pM_bus - pL) - _bus_sum(
        layout, zeta_delayed - state.consensus[layout.receiver], n
    )
    return ReformState(d_zeta, d_pc)


def xi_derivatives(
    state: ReformState,
    pc_delayed: np.ndarray,
    pM_bus: np.ndarray,
    pL: np.ndarray,
    model: NetworkModel,
    layout: Optional[CommLayout] = None,
) -> ReformState:
    """Demonstration-only variant: single consensus integrator fed back
    directly; requires sum(xi(0)) = 0 and loses that invariant under delay."""
    layout = layout or comm_layout(model)
    n = model.n_buses
    d_xi = _bus_sum(layout, pc_delayed - state.p_c[layout.receiver], n)
    d_pc = -(pM_bus - pL) + state.consensus
    return ReformState(d_xi, d_pc)


# ---------------------------------------------------------------------------
# compensated controller used with the wave-variable channel
# ---------------------------------------------------------------------------

@dataclass
class ScatterState:
    rho_zeta: np.ndarray
    zeta: np.ndarray
    rho_p: np.ndarray
    p_c: np.ndarray

    def blocks(self):
        return (self.rho_zeta, self.zeta, self.rho_p, self.p_c)


def scatter_controller_derivatives(
    state: ScatterState,
    r: np.ndarray,              # (2m, 2) decoded (r^p, r^zeta) at the receiver
    pM_bus: np.ndarray,
    pL: np.ndarray,
    model: NetworkModel,
    layout: Optional[CommLayout] = None,
) -> ScatterState:
    layout = layout or comm_layout(model)
    n = model.n_buses
    recv = layout.receiver
    sum_p = _bus_sum(layout, r[:, 0] - state.p_c[recv], n)
    sum_z = _bus_sum(layout, r[:, 1] - state.zeta[recv], n)
    mismatch = pM_bus - pL
    d_rho_zeta = -state.rho_zeta + sum_p
    d_zeta = -state.rho_zeta + 2.0 * sum_p
    d_rho_p = -state.rho_p - mismatch - sum_z
    d_pc = -state.rho_p - 2.0 * mismatch - 2.0 * sum_z
    return ScatterState(d_rho_zeta, d_zeta, d_rho_p, d_pc)


# ---------------------------------------------------------------------------
# interchange-regulating extension (three communicated pairs)
# ---------------------------------------------------------------------------

@dataclass
class TieLineState:
    rho_zeta: np.ndarray
    zeta: np.ndarray
    rho_p: np.ndarray
    p_c: np.ndarray
    rho_pi: np.ndarray
    pi: np.ndarray
    rho_phi: np.ndarray
    phi: np.ndarray

    def blocks(self):
        return (self.rho_zeta, self.zeta, self.rho_p, self.p_c,
                self.rho_pi, self.pi, self.rho_phi, self.phi)


def tieline_derivatives(
    state: TieLineState,
    r6: np.ndarray,             # (2m, 6) decoded frames at the receiver
    pM_bus: np.ndarray,
    pL: np.ndarray,
    model: NetworkModel,
    layout: Optional[CommLayout] = None,
) -> TieLineState:
    layout = layout or comm_layout(model)
    n = model.n_buses
    recv = layout.receiver
    sum_p = _bus_sum(layout, r6[:, 0] - state.p_c[recv], n)
    sum_z = _bus_sum(layout, r6[:, 1] - state.zeta[recv], n)
    sum_z2 = _bus_sum(layout, r6[:, 2] - state.zeta[recv], n)
    sum_pi = _bus_sum(layout, r6[:, 3] - state.pi[recv], n)
    sum_pi2 = _bus_sum(layout, r6[:, 4] - state.pi[recv], n, intra_only=True)
    sum_phi = _bus_sum(layout, r6[:, 5] - state.phi[recv], n, intra_only=True)
    mismatch = pM_bus - pL
    inject = layout.J_flag * layout.Phat_bus
    d_rho_zeta = -state.rho_zeta + sum_p - sum_pi
    d_zeta = -state.rho_zeta + 2.0 * sum_p - 2.0 * sum_pi
    d_rho_p = -state.rho_p - mismatch - sum_z
    d_pc = -state.rho_p - 2.0 * mismatch - 2.0 * sum_z
    d_rho_pi = -state.rho_pi + sum_z2 - sum_phi - inject
    d_pi = -state.rho_pi + 2.0 * sum_z2 - 2.0 * sum_phi - 2.0 * inject
    d_rho_phi = -state.rho_phi + sum_pi2
    d_phi = -state.rho_phi + 2.0 * sum_pi2
    return TieLineState(d_rho_zeta, d_zeta, d_rho_p, d_pc,
                        d_rho_pi, d_pi, d_rho_phi, d_phi)


# ---------------------------------------------------------------------------
# generation-bound multipliers
# ---------------------------------------------------------------------------

@dataclass
class BoundsState:
    lam: np.ndarray   # per generator; meaningful where a lower bound exists
    mu: np.ndarray    # per generator; meaningful where an upper bound exists


def bounds_derivatives(
    lam: np.ndarray, mu: np.ndarray, pM: np.ndarray,
    pM_min: np.ndarray, pM_max: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Multiplier-root dynamics; the sign of lam/mu is invariant, so positive
    initialisation keeps them positive for all time.  Entries with an
    infinite bound are frozen."""
    d_lam = np.where(np.isfinite(pM_min), 2.0 * lam * (pM_min - pM), 0.0)
    d_mu = np.where(np.isfinite(pM_max), 2.0 * mu * (pM - pM_max), 0.0)
    return d_lam, d_mu


# ---------------------------------------------------------------------------
# demand observer
# ---------------------------------------------------------------------------

@dataclass
class ObserverState:
    chi_g: np.ndarray   # demand estimate at generator buses
    b: np.ndarray       # auxiliary frequency-like observer state


def observer_load_chi(
    omega_loads: np.ndarray, net_inflow_loads: np.ndarray, Lambda_loads: np.ndarray
) -> np.ndarray:
    """Load-bus demand estimate from the instantaneous balance."""
    return -Lambda_loads * omega_loads + net_inflow_loads


def observer_derivatives(
    scatter: ScatterState,
    obs: ObserverState,
    r: np.ndarray,
    net_inflow: np.ndarray,
    omega: np.ndarray,
    pM_bus: np.ndarray,
    model: NetworkModel,
    tau_chi: np.ndarray,
    layout: Optional[CommLayout] = None,
) -> tuple[ScatterState, ObserverState]:
    """Controller derivatives with the measured demand replaced by the
    observer estimate; the plant demand never enters."""
    layout = layout or comm_layout(model)
    gi, li = model.gen_indices, model.load_indices
    n = model.n_buses
    chi = np.zeros(n)
    chi[gi] = obs.chi_g
    if len(li):
        chi[li] = observer_load_chi(
            omega[li], net_inflow[li], model.param("Lambda", li)
        )
    d_scatter = scatter_controller_derivatives(
        scatter, r, pM_bus, chi, model, layout
    )
    Mg = model.param("M", gi)
    Lam_g = model.param("Lambda", gi)
    d_chi = (obs.b - omega[gi] - scatter.p_c[gi] - obs.chi_g) / tau_chi
    d_b = (-obs.chi_g + pM_bus[gi] - Lam_g * omega[gi] + net_inflow[gi]) / Mg
    return d_scatter, ObserverState(d_chi, d_b)
