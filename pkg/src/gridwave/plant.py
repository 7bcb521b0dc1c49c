"""Physical layer: swing dynamics, algebraic load-bus balance, line flows,
first-order generation, and the generation input laws.

State is carried in edge coordinates (one angle difference per physical
line) rather than absolute bus phases, which removes the rotational null
space; cycle consistency of the angles is a test, not a constraint.  All
functions here are pure and reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .costs import Cost, QuadraticCost
from .network import NetworkModel, incidence_matrix


@dataclass
class PlantState:
    eta: np.ndarray       # per physical edge (rad)
    omega_g: np.ndarray   # per generator
    pM: np.ndarray        # per generator

    def copy(self) -> "PlantState":
        return PlantState(self.eta.copy(), self.omega_g.copy(), self.pM.copy())


@dataclass
class PlantInput:
    u: np.ndarray         # per generator
    pL: np.ndarray        # per bus


def line_flows(eta: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Per-edge transferred power Y * sin(eta)."""
    return Y * np.sin(eta)


def load_bus_frequencies(
    net_inflow_loads: np.ndarray, pL_loads: np.ndarray, Lambda_loads: np.ndarray
) -> np.ndarray:
    """Algebraic frequency at load buses from the instantaneous balance.

    The load-bus balance has no derivative term, so the frequency there is
    an output of the flows and demand: omega = (net inflow - demand) / Lambda.
    """
    if np.any(Lambda_loads <= 0):
        raise ValueError("load bus with nonpositive damping")
    return (net_inflow_loads - pL_loads) / Lambda_loads


def full_frequencies(
    state: PlantState, pL: np.ndarray, model: NetworkModel,
    flows: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the per-bus frequency vector and return (omega, flows, inflow)."""
    pe = model.edge_indices(model.phys_edges)
    Y = np.array([e.Y for e in model.phys_edges])
    if flows is None:
        flows = line_flows(state.eta, Y)
    n = model.n_buses
    inflow = np.zeros(n)
    np.add.at(inflow, pe[:, 1], flows)
    np.subtract.at(inflow, pe[:, 0], flows)
    omega = np.zeros(n)
    gi, li = model.gen_indices, model.load_indices
    omega[gi] = state.omega_g
    if len(li):
        omega[li] = load_bus_frequencies(
            inflow[li], pL[li], model.param("Lambda", li)
        )
    return omega, flows, inflow


def plant_derivatives(
    state: PlantState, inp: PlantInput, model: NetworkModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time derivatives (d_eta, d_omega_g, d_pM)."""
    omega, flows, inflow = full_frequencies(state, inp.pL, model)
    pe = model.edge_indices(model.phys_edges)
    d_eta = omega[pe[:, 0]] - omega[pe[:, 1]]
    gi = model.gen_indices
    M = model.param("M", gi)
    Lam = model.param("Lambda", gi)
    d_omega = (-inp.pL[gi] + state.pM - Lam * state.omega_g + inflow[gi]) / M
    tau = model.param("tau", gi)
    kg = model.param("k_g", gi)
    d_pM = (-state.pM + kg * inp.u) / tau
    return d_eta, d_omega, d_pM


def generation_input(
    p_c: np.ndarray, omega_g: np.ndarray, pM: np.ndarray,
    model: NetworkModel, costs: Optional[Sequence[Cost]] = None,
) -> np.ndarray:
    """Primal-dual generation input u per generator."""
    gi = model.gen_indices
    kc = model.param("k_c", gi)
    kg = model.param("k_g", gi)
    if costs is None:
        costs = [QuadraticCost(b.cost_q, b.cost_c) for b in model.buses if b.is_generator]
    grad = np.array([c.grad(p) for c, p in zip(costs, pM)])
    return kc * (p_c - omega_g) + pM / kg - kc * grad


def generation_input_bounded(
    p_c: np.ndarray, omega_g: np.ndarray, pM: np.ndarray,
    lam: np.ndarray, mu: np.ndarray,
    model: NetworkModel, costs: Optional[Sequence[Cost]] = None,
) -> np.ndarray:
    """Generation input with multiplier corrections for generation bounds.

    ``lam`` and ``mu`` are the square roots of the bound multipliers; their
    squares enter the input so the closed loop stays smooth.
    """
    gi = model.gen_indices
    kc = model.param("k_c", gi)
    base = generation_input(p_c, omega_g, pM, model, costs)
    return base + kc * (lam**2 - mu**2)


def solve_flow_angles(
    model: NetworkModel, injection: np.ndarray, tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the lossless flow equations for edge angles.

    Finds bus potentials theta (reference bus 0) such that the sinusoidal
    flows balance the given net injection vector (sum must be zero), then
    returns (eta, flows) in edge coordinates.  Newton iteration; the desk
    scale networks here converge in a handful of steps.
    """
    if abs(injection.sum()) > 1e-9:
        raise ValueError("injections do not sum to zero")
    n = model.n_buses
    pe = model.edge_indices(model.phys_edges)
    Y = np.array([e.Y for e in model.phys_edges])
    D = incidence_matrix(pe, n)
    theta = np.zeros(n)
    for _ in range(60):
        eta = theta[pe[:, 0]] - theta[pe[:, 1]]
        flows = Y * np.sin(eta)
        # residual of: injection + net inflow = 0
        res = injection + D @ flows
        if np.abs(res).max() < tol:
            break
        Jac = -D @ np.diag(Y * np.cos(eta)) @ D.T
        step = np.zeros(n)
        step[1:] = np.linalg.solve(Jac[1:, 1:], -res[1:])
        theta += step
    else:
        raise RuntimeError("flow solve did not converge")
    eta = theta[pe[:, 0]] - theta[pe[:, 1]]
    return eta, Y * np.sin(eta)


def equilibrium_residual(
    state: PlantState, p_c: np.ndarray, pL: np.ndarray, model: NetworkModel,
    costs: Optional[Sequence[Cost]] = None,
) -> dict[str, float]:
    """Largest violation of each stationarity equation group.

    Returns per-group maxima plus the overall ``max``:
      * ``sync``: frequency agreement across physical edges,
      * ``balance``: bus power balance (generators and loads),
      * ``input``: generation-vs-input consistency through the input law.
    """
    omega, flows, inflow = full_frequencies(state, pL, model)
    pe = model.edge_indices(model.phys_edges)
    sync = float(np.abs(omega[pe[:, 0]] - omega[pe[:, 1]]).max(initial=0.0))

    gi, li = model.gen_indices, model.load_indices
    bal_g = -pL[gi] + state.pM - model.param("Lambda", gi) * state.omega_g + inflow[gi]
    bal_l = -pL[li] - model.param("Lambda", li) * omega[li] + inflow[li]
    balance = float(max(np.abs(bal_g).max(initial=0.0), np.abs(bal_l).max(initial=0.0)))

    u = (
        generation_input(p_c[gi], state.omega_g, state.pM, model, costs)
    )
    kg = model.param("k_g", gi)
    inp = float(np.abs(state.pM - kg * u).max(initial=0.0))
    out = {"sync": sync, "balance": balance, "input": inp}
    out["max"] = max(out.values())
    return out
