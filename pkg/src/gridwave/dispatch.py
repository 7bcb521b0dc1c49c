"""Optimal dispatch oracle.

Solves the generation allocation problems that the controllers converge to:
power balance only, power balance with per-area interchange schedules, and
power balance with generation bounds.  Everything reduces to a scalar
bisection on the marginal price, exploiting separability; quadratic costs
without bounds are solved in closed form.

Sign convention for interchange schedules: the per-area tie-line incidence
is ``E_K @ D``, so a schedule value is the net boundary inflow of the area
(area generation total = area load - schedule).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .costs import Cost, QuadraticCost
from .network import NetworkModel


class InfeasibleDispatch(ValueError):
    pass


@dataclass
class DispatchSolution:
    problem: str
    pM_star: np.ndarray            # per generator, model gen order
    beta: np.ndarray               # scalar price as shape-(1,) or per-area
    lam_bar: Optional[np.ndarray] = None   # lower-bound multipliers (ogr3)
    mu_bar: Optional[np.ndarray] = None    # upper-bound multipliers (ogr3)
    feasible: bool = True
    gen_bus_ids: tuple = ()
    kkt_residual: float = field(default=np.nan)


def costs_of(model: NetworkModel) -> list[Cost]:
    return [
        QuadraticCost(b.cost_q, b.cost_c) for b in model.buses if b.is_generator
    ]


def _grad_check(cost: Cost, p: float, rel_tol: float = 1e-6) -> bool:
    h = 1e-6 * max(1.0, abs(p))
    fd = (cost.value(p + h) - cost.value(p - h)) / (2 * h)
    g = cost.grad(p)
    return abs(fd - g) <= rel_tol * max(1.0, abs(g))


def _balance_dispatch(costs: list[Cost], total: float) -> tuple[np.ndarray, float]:
    """Equal-marginal-price dispatch hitting a generation total."""
    if not costs:
        if abs(total) > 0:
            raise InfeasibleDispatch("no generators but nonzero load")
        return np.zeros(0), 0.0
    if all(isinstance(c, QuadraticCost) for c in costs):
        inv_q = sum(1.0 / c.q for c in costs)
        beta = (total - sum(c.c for c in costs)) / inv_q
        pM = np.array([c.grad_inverse(beta) for c in costs])
        return pM, beta
    lo, hi = -1.0, 1.0
    supply = lambda b: sum(c.grad_inverse(b) for c in costs)
    for _ in range(200):
        if supply(lo) <= total:
            break
        lo *= 2.0
    for _ in range(200):
        if supply(hi) >= total:
            break
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if supply(mid) < total:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    return np.array([c.grad_inverse(beta) for c in costs]), beta


def solve_ogr(model: NetworkModel, costs: Optional[list[Cost]] = None) -> DispatchSolution:
    """Minimum-cost generation meeting the total demand."""
    costs = costs if costs is not None else costs_of(model)
    total = float(model.param("pL").sum())
    pM, beta = _balance_dispatch(costs, total)
    gen_ids = tuple(b.id for b in model.buses if b.is_generator)
    sol = DispatchSolution("ogr", pM, np.array([beta]), gen_bus_ids=gen_ids)
    sol.kkt_residual = _residual_ogr(sol, costs, total)
    return sol


def solve_ogr2(model: NetworkModel, costs: Optional[list[Cost]] = None) -> DispatchSolution:
    """Per-area dispatch honouring the interchange schedule."""
    if not model.areas:
        return solve_ogr(model, costs)
    costs = costs if costs is not None else costs_of(model)
    schedule = model.tieline_schedule or tuple(0.0 for _ in model.areas)
    if abs(sum(schedule)) > 1e-9:
        raise InfeasibleDispatch("interchange schedule does not sum to zero")

    area_of = model.area_of()
    gen_pos = model.gen_indices
    pL = model.param("pL")
    pM = np.zeros(len(gen_pos))
    betas = np.zeros(model.n_areas)
    for k in range(model.n_areas):
        members = area_of == k
        local = [g for g, pos in enumerate(gen_pos) if members[pos]]
        target = float(pL[members].sum()) - schedule[k]
        pM_k, betas[k] = _balance_dispatch([costs[g] for g in local], target)
        pM[local] = pM_k
    gen_ids = tuple(b.id for b in model.buses if b.is_generator)
    sol = DispatchSolution("ogr2", pM, betas, gen_bus_ids=gen_ids)
    res = 0.0
    for k in range(model.n_areas):
        members = area_of == k
        local = [g for g, pos in enumerate(gen_pos) if members[pos]]
        target = float(pL[members].sum()) - schedule[k]
        res = max(
            res,
            abs(pM[local].sum() - target),
            max((abs(costs[g].grad(pM[g]) - betas[k]) for g in local), default=0.0),
        )
    sol.kkt_residual = res
    return sol


def solve_ogr3(model: NetworkModel, costs: Optional[list[Cost]] = None) -> DispatchSolution:
    """Dispatch with per-generator bounds; bisection on the price over the
    clamped aggregate supply curve, which is monotone in the price."""
    costs = costs if costs is not None else costs_of(model)
    gens = [b for b in model.buses if b.is_generator]
    lo_b = np.array([b.pM_min if b.pM_min is not None else -np.inf for b in gens])
    hi_b = np.array([b.pM_max if b.pM_max is not None else np.inf for b in gens])
    total = float(model.param("pL").sum())
    finite_lo = np.where(np.isfinite(lo_b), lo_b, 0.0)
    if np.isfinite(lo_b).all() and finite_lo.sum() > total + 1e-12:
        raise InfeasibleDispatch("sum of lower bounds exceeds total load")
    if np.isfinite(hi_b).all() and hi_b.sum() < total - 1e-12:
        raise InfeasibleDispatch("sum of upper bounds below total load")

    def supply(beta):
        return sum(
            min(max(c.grad_inverse(beta), lo), hi)
            for c, lo, hi in zip(costs, lo_b, hi_b)
        )

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if supply(lo) <= total:
            break
        lo *= 2.0
    for _ in range(200):
        if supply(hi) >= total:
            break
        hi *= 2.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if supply(mid) < total:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)

    # classify the active set at the bisected price, then re-solve the free
    # units exactly so the stationarity residual is at machine precision
    at_lo = np.array([c.grad_inverse(beta) <= l for c, l in zip(costs, lo_b)])
    at_hi = np.array([c.grad_inverse(beta) >= h for c, h in zip(costs, hi_b)])
    free = ~(at_lo | at_hi)
    pM = np.where(at_lo, lo_b, np.where(at_hi, hi_b, 0.0))
    if free.any():
        residual_total = total - pM[~free].sum()
        pM_free, beta = _balance_dispatch(
            [c for c, f in zip(costs, free) if f], residual_total
        )
        pM[free] = pM_free
    lam = np.where(at_lo, [max(0.0, c.grad(p) - beta) for c, p in zip(costs, pM)], 0.0)
    mu = np.where(at_hi, [max(0.0, beta - c.grad(p)) for c, p in zip(costs, pM)], 0.0)
    gen_ids = tuple(b.id for b in model.buses if b.is_generator)
    sol = DispatchSolution(
        "ogr3", pM, np.array([beta]), lam_bar=lam, mu_bar=mu, gen_bus_ids=gen_ids
    )
    sol.kkt_residual = _residual_ogr3(sol, costs, total, lo_b, hi_b)
    return sol


def _residual_ogr(sol: DispatchSolution, costs, total) -> float:
    beta = float(sol.beta[0])
    stat = max(
        (abs(c.grad(p) - beta) for c, p in zip(costs, sol.pM_star)), default=0.0
    )
    return max(stat, abs(sol.pM_star.sum() - total))


def _residual_ogr3(sol, costs, total, lo_b, hi_b) -> float:
    beta = float(sol.beta[0])
    pM, lam, mu = sol.pM_star, sol.lam_bar, sol.mu_bar
    stat = max(
        abs(c.grad(p) - l + m - beta)
        for c, p, l, m in zip(costs, pM, lam, mu)
    )
    primal = max(
        abs(pM.sum() - total),
        float(np.maximum(lo_b - pM, 0.0).max(initial=0.0)),
        float(np.maximum(pM - hi_b, 0.0).max(initial=0.0)),
    )
    slack = max(
        float(np.abs(lam * np.where(np.isfinite(lo_b), lo_b - pM, 0.0)).max(initial=0.0)),
        float(np.abs(mu * np.where(np.isfinite(hi_b), pM - hi_b, 0.0)).max(initial=0.0)),
    )
    return max(stat, primal, slack)


def oracle_for(model: NetworkModel, controller_kind: str) -> DispatchSolution:
    """Pick the dispatch problem matching a controller family."""
    if controller_kind == "tieline":
        return solve_ogr2(model)
    if controller_kind == "bounds":
        return solve_ogr3(model)
    return solve_ogr(model)
