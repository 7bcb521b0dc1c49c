"""Closed-loop equilibrium construction.

Builds the full stationary point every convergence test and energy
functional compares against: optimal dispatch from the oracle, edge angles
from a lossless flow solve, and controller states from their stationarity
conditions.  Components that are only determined up to a graph null space
(the consensus integrators) are fixed mean-zero; trajectory limits may
differ by that constant, which the diagnostics account for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import channels, dispatch, plant
from .controllers import CommLayout, comm_layout
from .network import NetworkModel, area_matrices, incidence_matrix, laplacian


@dataclass
class EquilibriumPoint:
    model: NetworkModel
    controller_kind: str
    solution: dispatch.DispatchSolution
    eta: np.ndarray
    flows: np.ndarray
    pM: np.ndarray            # per generator
    pM_bus: np.ndarray        # per bus (zero at loads)
    p_c: np.ndarray           # per bus
    zeta: np.ndarray          # per bus (mean-zero representative)
    pi: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    chi_g: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None     # per comm edge (redundant controller)
    xi: Optional[np.ndarray] = None
    r_star: np.ndarray = field(default=None)       # (2m, slots)
    s_star: np.ndarray = field(default=None)       # (2m, slots)
    n_slots: int = 2

    @property
    def omega(self) -> np.ndarray:
        return np.zeros(self.model.n_buses)


def _mean_zero_solve(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    sol, *_ = np.linalg.lstsq(L, rhs, rcond=None)
    return sol - sol.mean()


def output_vectors(eq: EquilibriumPoint, layout: CommLayout) -> np.ndarray:
    """Per-directed-channel sender output y* in the channel frame layout."""
    m2 = layout.n_dir
    y = np.zeros((m2, eq.n_slots))
    send = layout.sender
    y[:, 0] = eq.zeta[send]
    y[:, 1] = -eq.p_c[send]
    if eq.n_slots == 6:
        sigma = layout.intra_dir().astype(float)
        y[:, 2] = eq.pi[send]
        y[:, 3] = -eq.zeta[send]
        y[:, 4] = sigma * eq.phi[send]
        y[:, 5] = -sigma * eq.pi[send]
    return y


def build(model: NetworkModel, controller_kind: str,
          solution: Optional[dispatch.DispatchSolution] = None,
          pL: Optional[np.ndarray] = None) -> EquilibriumPoint:
    """Construct the equilibrium for a controller family.

    ``pL`` defaults to the model demand (the post-step values when the
    scenario applies loads through an event).
    """
    if solution is None:
        solution = dispatch.oracle_for(model, controller_kind)
    pL = model.param("pL") if pL is None else np.asarray(pL, float)
    n = model.n_buses
    gi = model.gen_indices
    pM_bus = np.zeros(n)
    pM_bus[gi] = solution.pM_star
    eta, flows = plant.solve_flow_angles(model, pM_bus - pL)

    layout = comm_layout(model)
    ce = model.edge_indices(model.comm_edges)
    alphas = np.array([e.alpha for e in model.comm_edges])
    L = laplacian(ce, alphas, n)
    zeta = _mean_zero_solve(L, pM_bus - pL)

    if solution.problem == "ogr2":
        area_of = model.area_of()
        p_c = solution.beta[area_of]
    else:
        p_c = np.full(n, float(solution.beta[0]))

    eq = EquilibriumPoint(
        model=model, controller_kind=controller_kind, solution=solution,
        eta=eta, flows=flows, pM=solution.pM_star.copy(), pM_bus=pM_bus,
        p_c=p_c, zeta=zeta,
    )

    if controller_kind == "tieline":
        _, _, J, L_intra = area_matrices(model)
        Phat = np.array(model.tieline_schedule, dtype=float)
        eq.pi = p_c.copy()
        rhs = (pM_bus - pL) + J @ Phat
        phi, *_ = np.linalg.lstsq(L_intra, rhs, rcond=None)
        area_of = model.area_of()
        for k in range(model.n_areas):
            sel = area_of == k
            phi[sel] -= phi[sel].mean()
        eq.phi = phi
        eq.n_slots = 6
    elif controller_kind == "bounds":
        eq.lam = np.sqrt(np.maximum(solution.lam_bar, 0.0))
        eq.mu = np.sqrt(np.maximum(solution.mu_bar, 0.0))
    elif controller_kind == "observer":
        eq.chi_g = pL[gi].copy()
        eq.b = p_c[gi] + pL[gi]
    elif controller_kind == "naive":
        D_comm = incidence_matrix(ce, n)
        eq.psi, *_ = np.linalg.lstsq(D_comm, pM_bus - pL, rcond=None)
    elif controller_kind == "xi":
        eq.xi = pM_bus - pL

    y = output_vectors(eq, layout)
    # decoded neighbour values equal the sender outputs rotated pairwise
    r_star = channels.rotate(y)
    s_star = np.zeros_like(y)
    for d in range(layout.n_dir):
        opp = d + 1 if d % 2 == 0 else d - 1
        s_star[d] = channels.channel_sign(d) / channels.SQRT2 * (r_star[opp] - y[d])
    eq.r_star = r_star
    eq.s_star = s_star
    return eq
