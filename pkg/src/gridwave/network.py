"""Network topology, bus/line parameters, and graph-algebra objects.

Buses are identified by arbitrary integer ids; internally everything is
indexed by position in ``NetworkModel.buses``. Undirected edges are stored
once with the canonical orientation (low id -> high id), which fixes the
sign of incidence columns and makes outputs reproducible; the dynamics do
not depend on the choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

GENERATOR = "generator"
LOAD = "load"


@dataclass(frozen=True)
class BusParams:
    """Static parameters of one bus.

    Generator buses carry inertia ``M``, generation time constant ``tau``,
    gains ``k_g``/``k_c`` and a quadratic cost 0.5*q*(p - c)^2.  Load buses
    only need a damping coefficient and demand.
    """

    id: int
    kind: str
    Lambda: float
    pL: float = 0.0
    M: Optional[float] = None
    tau: Optional[float] = None
    k_g: Optional[float] = None
    k_c: Optional[float] = None
    cost_q: Optional[float] = None
    cost_c: Optional[float] = None
    pM_min: Optional[float] = None
    pM_max: Optional[float] = None

    @property
    def is_generator(self) -> bool:
        return self.kind == GENERATOR

    def violations(self) -> list[str]:
        v = []
        if self.kind not in (GENERATOR, LOAD):
            v.append(f"bus {self.id}: unknown kind {self.kind!r}")
            return v
        if not self.Lambda > 0:
            v.append(f"bus {self.id}: damping Lambda must be > 0")
        if self.is_generator:
            for name in ("M", "tau", "k_g", "k_c"):
                val = getattr(self, name)
                if val is None or not val > 0:
                    v.append(f"bus {self.id}: generator parameter {name} must be > 0")
            if self.cost_q is None or not self.cost_q > 0:
                v.append(f"bus {self.id}: cost_q must be > 0 (strictly convex cost)")
            if self.cost_c is None:
                v.append(f"bus {self.id}: generator needs cost_c")
            if (
                self.pM_min is not None
                and self.pM_max is not None
                and self.pM_min > self.pM_max
            ):
                v.append(f"bus {self.id}: pM_min > pM_max")
        return v


@dataclass(frozen=True)
class LineParams:
    """One undirected edge; ``Y`` for physical lines, ``alpha`` for comm edges."""

    a: int
    b: int
    Y: Optional[float] = None
    alpha: Optional[float] = None

    def canonical(self) -> "LineParams":
        if self.a <= self.b:
            return self
        return LineParams(self.b, self.a, Y=self.Y, alpha=self.alpha)


@dataclass(frozen=True)
class NetworkModel:
    """Buses, physical lines, communication edges and the area partition."""

    buses: tuple[BusParams, ...]
    phys_edges: tuple[LineParams, ...]
    comm_edges: tuple[LineParams, ...]
    areas: tuple[tuple[int, ...], ...] = ()
    tieline_schedule: tuple[float, ...] = ()
    informed_buses: tuple[int, ...] = ()

    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {bus.id: k for k, bus in enumerate(self.buses)}
        )

    # -- indexing helpers -------------------------------------------------

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def index_of(self, bus_id: int) -> int:
        return self._index[bus_id]

    @property
    def gen_indices(self) -> np.ndarray:
        return np.array(
            [k for k, b in enumerate(self.buses) if b.is_generator], dtype=np.int64
        )

    @property
    def load_indices(self) -> np.ndarray:
        return np.array(
            [k for k, b in enumerate(self.buses) if not b.is_generator],
            dtype=np.int64,
        )

    def edge_indices(self, edges: Sequence[LineParams]) -> np.ndarray:
        """(n_edges, 2) array of (tail, head) positions, canonical orientation."""
        out = np.empty((len(edges), 2), dtype=np.int64)
        for e, line in enumerate(edges):
            out[e, 0] = self.index_of(line.a)
            out[e, 1] = self.index_of(line.b)
        return out

    @property
    def n_areas(self) -> int:
        return len(self.areas) if self.areas else 1

    def area_of(self) -> np.ndarray:
        """Area index per bus position (all zero when no partition given)."""
        out = np.zeros(self.n_buses, dtype=np.int64)
        for k, members in enumerate(self.areas):
            for bus_id in members:
                out[self.index_of(bus_id)] = k
        return out

    # -- parameter vectors -------------------------------------------------

    def param(self, name: str, subset: Optional[np.ndarray] = None) -> np.ndarray:
        vals = np.array(
            [getattr(b, name) if getattr(b, name) is not None else np.nan for b in self.buses]
        )
        return vals if subset is None else vals[subset]


def incidence_matrix(edges: np.ndarray, n_nodes: int) -> np.ndarray:
    """Dense node-edge incidence matrix: -1 at the tail, +1 at the head.

    ``edges`` is an (m, 2) integer array of (tail, head) node positions.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n_nodes):
        raise ValueError("edge references node outside 0..n_nodes-1")
    D = np.zeros((n_nodes, edges.shape[0]))
    for e, (a, b) in enumerate(edges):
        D[a, e] = -1.0
        D[b, e] = 1.0
    return D


def laplacian(edges: np.ndarray, weights: np.ndarray, n_nodes: int) -> np.ndarray:
    """Weighted graph Laplacian D W D^T; symmetric PSD with zero row sums."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("edge weights must be > 0")
    D = incidence_matrix(edges, n_nodes)
    return D @ np.diag(weights) @ D.T


def area_matrices(model: NetworkModel):
    """Area indicator, tie-line incidence, knowledge matrix, intra-area Laplacian.

    Returns ``(E_K, D_hat, J, L_intra)`` where ``D_hat = E_K @ D`` selects the
    boundary-line columns with the orientation inherited from the incidence
    matrix, ``J`` has one unit column per area at the informed bus, and
    ``L_intra`` is the communication Laplacian with inter-area edges removed.
    """
    n = model.n_buses
    K = model.n_areas
    area_of = model.area_of()

    E_K = np.zeros((K, n))
    E_K[area_of, np.arange(n)] = 1.0

    D = incidence_matrix(model.edge_indices(model.phys_edges), n)
    D_hat = E_K @ D

    J = np.zeros((n, K))
    informed = model.informed_buses or ()
    for k, bus_id in enumerate(informed):
        j = model.index_of(bus_id)
        if area_of[j] != k:
            raise ValueError(f"informed bus {bus_id} is not inside area {k + 1}")
        J[j, k] = 1.0

    ce = model.edge_indices(model.comm_edges)
    alphas = np.array([line.alpha for line in model.comm_edges], dtype=float)
    intra = np.array(
        [area_of[a] == area_of[b] for a, b in ce], dtype=bool
    ) if len(ce) else np.zeros(0, dtype=bool)
    if intra.any():
        L_intra = laplacian(ce[intra], alphas[intra], n)
    else:
        L_intra = np.zeros((n, n))
    return E_K, D_hat, J, L_intra


def _connected(n_nodes: int, edges: np.ndarray) -> bool:
    if n_nodes <= 1:
        return True
    adj = [[] for _ in range(n_nodes)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(n_nodes, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def validate(model: NetworkModel) -> list[str]:
    """Collect invariant violations; an empty list means the model is usable.

    Violations are data, not exceptions: callers decide whether to abort.
    """
    v: list[str] = []
    ids = [b.id for b in model.buses]
    if len(set(ids)) != len(ids):
        v.append("duplicate bus ids")
        return v
    for bus in model.buses:
        v.extend(bus.violations())

    def check_edges(edges, attr, label):
        seen = set()
        for line in edges:
            if line.a == line.b:
                v.append(f"{label} ({line.a},{line.b}): self-loop")
                continue
            if line.a not in model._index or line.b not in model._index:
                v.append(f"{label} ({line.a},{line.b}): unknown bus id")
                continue
            key = (min(line.a, line.b), max(line.a, line.b))
            if key in seen:
                v.append(f"{label} ({line.a},{line.b}): duplicate edge")
            seen.add(key)
            if line.a > line.b:
                v.append(f"{label} ({line.a},{line.b}): not in canonical orientation")
            val = getattr(line, attr)
            if val is None or not val > 0:
                v.append(f"{label} ({line.a},{line.b}): {attr} must be > 0")

    check_edges(model.phys_edges, "Y", "physical line")
    check_edges(model.comm_edges, "alpha", "comm edge")
    if v:
        return v

    n = model.n_buses
    if not _connected(n, model.edge_indices(model.phys_edges)):
        v.append("physical graph is not connected")
    if not _connected(n, model.edge_indices(model.comm_edges)):
        v.append("communication graph is not connected")

    if model.areas:
        area_ids = [bus_id for members in model.areas for bus_id in members]
        if len(set(area_ids)) != len(area_ids):
            v.append("areas overlap")
        if set(area_ids) != set(ids):
            v.append("area partition is not exhaustive")
        if v:
            return v
        area_of = model.area_of()
        ce = model.edge_indices(model.comm_edges)
        for k, members in enumerate(model.areas):
            positions = np.array(sorted(model.index_of(b) for b in members))
            relabel = {p: i for i, p in enumerate(positions)}
            intra = [
                (relabel[a], relabel[b])
                for a, b in ce
                if area_of[a] == k and area_of[b] == k
            ]
            if not _connected(len(positions), np.array(intra).reshape(-1, 2)):
                v.append(f"intra-area comm subgraph of area {k + 1} is not connected")
        if model.informed_buses:
            if len(model.informed_buses) != len(model.areas):
                v.append("need exactly one informed bus per area")
            else:
                for k, bus_id in enumerate(model.informed_buses):
                    if bus_id not in model.areas[k]:
                        v.append(f"informed bus {bus_id} not inside area {k + 1}")
        if model.tieline_schedule:
            if len(model.tieline_schedule) != len(model.areas):
                v.append("tie-line schedule length differs from number of areas")
            elif abs(sum(model.tieline_schedule)) > 1e-12:
                v.append("tie-line schedule does not sum to zero")
    return v
