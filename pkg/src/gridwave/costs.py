"""Generation cost interface.

Any strictly convex, continuously differentiable cost works; the dispatch
oracle only requires ``grad`` to be strictly increasing.  The quadratic
family 0.5*q*(p - c)^2 is the default and admits closed-form dispatch.
"""

from __future__ import annotations

from dataclasses import dataclass


class Cost:
    def value(self, p: float) -> float:
        raise NotImplementedError

    def grad(self, p: float) -> float:
        raise NotImplementedError

    def grad_inverse(self, y: float) -> float:
        """Solve grad(p) = y by bisection on a geometrically grown bracket."""
        lo, hi = -1.0, 1.0
        for _ in range(200):
            if self.grad(lo) <= y:
                break
            lo *= 2.0
        for _ in range(200):
            if self.grad(hi) >= y:
                break
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.grad(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuadraticCost(Cost):
    q: float
    c: float

    def value(self, p: float) -> float:
        return 0.5 * self.q * (p - self.c) ** 2

    def grad(self, p: float) -> float:
        return self.q * (p - self.c)

    def grad_inverse(self, y: float) -> float:
        return self.c + y / self.q
