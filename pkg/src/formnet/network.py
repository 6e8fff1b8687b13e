"""Directed mesh communication graphs and distributed reference generation.

Agents sit on a D-dimensional grid with extents ``[r1, ..., rD]``.  The
leader is the origin; every other agent listens to its immediate
predecessor along each direction in which its index is non-zero.  Agent
ids follow row-major (C) order of the multi-index, which is also a
topological order of the graph.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .controller import ReferencePoint
from .errors import ConfigurationError, GraphError
from .phcore import PlantModel, matvec

__all__ = [
    "MeshGraph",
    "FormationSpec",
    "NetworkSnapshot",
    "GcoTrajectory",
    "StaticTrajectory",
    "PolynomialTrajectory",
    "build_mesh",
    "leader_reference",
    "follower_reference",
    "formation_errors",
    "network_references",
]


@dataclass(frozen=True)
class MeshGraph:
    dims: int
    extents: tuple
    leader_index: tuple = None

    def __post_init__(self):
        extents = tuple(int(r) for r in self.extents)
        if self.dims < 1 or len(extents) != self.dims:
            raise ConfigurationError(
                f"mesh needs dims >= 1 and one extent per direction, got dims={self.dims}, extents={extents}")
        if any(r < 1 for r in extents):
            raise ConfigurationError(f"mesh extents must be positive, got {list(extents)}")
        origin = (0,) * self.dims
        leader = origin if self.leader_index is None else tuple(int(i) for i in self.leader_index)
        if leader != origin:
            raise GraphError("exactly one leader at the grid origin is supported")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "leader_index", leader)

    @property
    def n_agents(self) -> int:
        return math.prod(self.extents)

    @property
    def leader_id(self) -> int:
        return 0

    def agent_id(self, index) -> int:
        return int(np.ravel_multi_index(tuple(index), self.extents))

    def multi_index(self, agent_id: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(agent_id, self.extents))

    def indices(self):
        """All multi-indices in id order."""
        return list(product(*(range(r) for r in self.extents)))

    def predecessors(self, agent) -> list:
        """``[(predecessor id, direction)]`` for an agent given by id or multi-index."""
        idx = self.multi_index(agent) if np.isscalar(agent) else tuple(agent)
        out = []
        for k in range(self.dims):
            if idx[k] > 0:
                j = list(idx)
                j[k] -= 1
                out.append((self.agent_id(j), k))
        return out

    @cached_property
    def predecessor_ids(self) -> tuple:
        return tuple(tuple(j for j, _ in self.predecessors(i)) for i in range(self.n_agents))

    def in_degree(self, agent) -> int:
        return len(self.predecessors(agent))

    def is_leader(self, agent) -> bool:
        idx = self.multi_index(agent) if np.isscalar(agent) else tuple(agent)
        return idx == self.leader_index

    @property
    def edges(self) -> list:
        """Directed edges ``(from, to)`` in the information-flow direction."""
        return [(j, i) for i in range(self.n_agents) for j in self.predecessor_ids[i]]

    @property
    def expected_edge_count(self) -> int:
        N = self.n_agents
        return sum((r - 1) * (N // r) for r in self.extents)

    def reachable_from_leader(self) -> set:
        succ = [[] for _ in range(self.n_agents)]
        for j, i in self.edges:
            succ[j].append(i)
        seen = {self.leader_id}
        queue = deque([self.leader_id])
        while queue:
            j = queue.popleft()
            for i in succ[j]:
                if i not in seen:
                    seen.add(i)
                    queue.append(i)
        return seen

    def averaging_matrix(self) -> np.ndarray:
        """Row-stochastic predecessor average ``W`` (leader row is zero)."""
        N = self.n_agents
        W = np.zeros((N, N))
        for i, preds in enumerate(self.predecessor_ids):
            for j in preds:
                W[i, j] = 1.0 / len(preds)
        return W

    def grid_location(self, agent) -> np.ndarray:
        """Position of the agent in the unit cell ``[0, 1]^D`` (0 for single-agent directions)."""
        idx = self.multi_index(agent) if np.isscalar(agent) else tuple(agent)
        return np.array([i / (r - 1) if r > 1 else 0.0 for i, r in zip(idx, self.extents)])


def build_mesh(dims: int, extents) -> MeshGraph:
    """Directed D-dimensional mesh with the leader at the origin."""
    extents = list(extents)
    if any(int(r) != r for r in extents):
        raise ConfigurationError(f"mesh extents must be integers, got {extents}")
    return MeshGraph(int(dims), tuple(extents))


class GcoTrajectory:
    """Circular relative orbit of radius ``d`` about the Hill-frame origin.

    ``x = d/2 cos(n0 t)``, ``y = -d sin(n0 t)``, ``z = sqrt(3)/2 d cos(n0 t)``.
    """

    def __init__(self, radius: float = 5.0, n0: float = 0.5307):
        self.radius = float(radius)
        self.n0 = float(n0)

    def __call__(self, t):
        d, w = self.radius, self.n0
        c, s = math.cos(w * t), math.sin(w * t)
        amp = np.array([0.5 * d, -d, 0.5 * math.sqrt(3.0) * d])
        q = amp * np.array([c, s, c])
        qd = amp * w * np.array([-s, c, -s])
        qdd = -w * w * q
        return q, qd, qdd

    def __repr__(self):
        return f"GcoTrajectory(radius={self.radius}, n0={self.n0})"


class StaticTrajectory:
    def __init__(self, position):
        self.position = np.asarray(position, dtype=float)

    def __call__(self, t):
        z = np.zeros_like(self.position)
        return self.position.copy(), z, z.copy()


class PolynomialTrajectory:
    """``q(t) = sum_k c_k t^k`` with ``coefficients`` of shape ``(degree + 1, n)``."""

    def __init__(self, coefficients):
        self.coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))

    def __call__(self, t):
        c = self.coefficients
        k = np.arange(c.shape[0], dtype=float)
        tp = np.array([t ** int(j) for j in k])
        q = tp @ c
        d1 = k[1:, None] * c[1:]
        qd = tp[:-1] @ d1 if len(d1) else np.zeros(c.shape[1])
        d2 = (k[2:] * (k[2:] - 1))[:, None] * c[2:]
        qdd = tp[:-2] @ d2 if len(d2) else np.zeros(c.shape[1])
        return q, qd, qdd


@dataclass(frozen=True, eq=False)
class FormationSpec:
    """Formation geometry plus the leader's exogenous trajectory.

    ``axis_offsets[k]`` is the desired displacement of an agent from its
    predecessor along grid direction ``k``.  Pairwise offsets are sums of
    these, which makes them path independent.
    """

    axis_offsets: np.ndarray
    leader_trajectory: object

    def __post_init__(self):
        off = np.atleast_2d(np.asarray(self.axis_offsets, dtype=float))
        object.__setattr__(self, "axis_offsets", off)

    @property
    def n(self) -> int:
        return self.axis_offsets.shape[1]

    def offset(self, i, j) -> np.ndarray:
        """Desired ``q_i - q_j`` for multi-indices ``i`` and ``j``."""
        di = np.asarray(i, dtype=float) - np.asarray(j, dtype=float)
        return di @ self.axis_offsets[: len(di)]

    def offsets_to_leader(self, graph: MeshGraph) -> np.ndarray:
        """``Delta_{i, leader}`` for every agent, shape ``(N, n)``."""
        self.check_graph(graph)
        idx = np.array(graph.indices(), dtype=float).reshape(graph.n_agents, graph.dims)
        return (idx - np.asarray(graph.leader_index, dtype=float)) @ self.axis_offsets[: graph.dims]

    def check_graph(self, graph: MeshGraph):
        if self.axis_offsets.shape[0] < graph.dims:
            raise ConfigurationError(
                f"formation defines {self.axis_offsets.shape[0]} axis offsets, mesh needs {graph.dims}")

    def derivative_consistency(self, times, h=1e-6) -> float:
        """Worst relative mismatch between the stated velocity and a central difference of position."""
        worst = 0.0
        for t in times:
            _, qd, _ = self.leader_trajectory(t)
            fd = (self.leader_trajectory(t + h)[0] - self.leader_trajectory(t - h)[0]) / (2 * h)
            worst = max(worst, np.linalg.norm(fd - qd) / max(1.0, np.linalg.norm(qd)))
        return float(worst)


@dataclass(frozen=True, eq=False)
class NetworkSnapshot:
    """States of all agents at time ``t``, with the latest state derivatives.

    ``q``, ``p``, ``qdot``, ``pdot`` have shape ``(N, n)``.  ``qdot`` and
    ``pdot`` may be ``None`` before the first evaluation.
    """

    t: float
    q: np.ndarray
    p: np.ndarray
    qdot: np.ndarray = None
    pdot: np.ndarray = None

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape:
            raise ConfigurationError(f"snapshot q and p shapes differ: {q.shape} vs {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        for name in ("qdot", "pdot"):
            v = getattr(self, name)
            if v is not None:
                v = np.atleast_2d(np.asarray(v, dtype=float))
                if v.shape != q.shape:
                    raise ConfigurationError(f"snapshot {name} has shape {v.shape}, expected {q.shape}")
                object.__setattr__(self, name, v)

    @property
    def n_agents(self) -> int:
        return self.q.shape[0]


def leader_reference(spec: FormationSpec, plant: PlantModel, t: float) -> ReferencePoint:
    q_r, qd_r, qdd_r = spec.leader_trajectory(t)
    return ReferencePoint(q_r, plant.M0 @ qd_r, plant.M0 @ qdd_r)


def follower_reference(agent, graph: MeshGraph, spec: FormationSpec,
                       snapshot: NetworkSnapshot, plant: PlantModel) -> ReferencePoint:
    """Average of the predecessors' positions (shifted by the formation offset) and motion.

    Velocities come from ``snapshot.qdot`` when present, else from
    ``M0^{-1} p``; the momentum derivative uses ``snapshot.pdot``.
    """
    idx = graph.multi_index(agent) if np.isscalar(agent) else tuple(agent)
    preds = graph.predecessors(idx)
    if not preds:
        raise GraphError(f"agent {idx} has no predecessors and cannot follow")
    if snapshot.pdot is None:
        raise ConfigurationError("follower reference needs neighbour momentum derivatives")
    ids = [j for j, _ in preds]
    Q = len(ids)
    qdot = snapshot.qdot if snapshot.qdot is not None else matvec(plant.M0_inv, snapshot.p)
    q_star = sum(snapshot.q[j] + spec.offset(idx, graph.multi_index(j)) for j in ids) / Q
    qd_star = sum(qdot[j] for j in ids) / Q
    pdot_star = sum(snapshot.pdot[j] for j in ids) / Q
    return ReferencePoint(q_star, plant.M0 @ qd_star, pdot_star)


def network_references(graph: MeshGraph, spec: FormationSpec, snapshot: NetworkSnapshot,
                       plant: PlantModel, W=None, offset_avg=None):
    """Vectorized references ``(q*, p*, p*')`` of all agents, each of shape ``(N, n)``.

    Equivalent to calling ``leader_reference`` for the leader and
    ``follower_reference`` for every follower on the same snapshot.
    """
    if W is None:
        W = graph.averaging_matrix()
    if offset_avg is None:
        d = spec.offsets_to_leader(graph)
        offset_avg = d - W @ d
    qdot = snapshot.qdot if snapshot.qdot is not None else matvec(plant.M0_inv, snapshot.p)
    q_star = W @ snapshot.q + offset_avg
    p_star = (W @ qdot) @ plant.M0.T
    pdot_star = W @ snapshot.pdot
    lead = leader_reference(spec, plant, snapshot.t)
    l = graph.leader_id
    q_star[l], p_star[l], pdot_star[l] = lead.q_star, lead.p_star, lead.pdot_star
    return q_star, p_star, pdot_star


def formation_errors(snapshot: NetworkSnapshot, graph: MeshGraph, spec: FormationSpec,
                     plant: PlantModel):
    """Errors relative to the leader-defined formation: ``(q~, p~)``, each ``(N, n)``."""
    q_r, qd_r, _ = spec.leader_trajectory(snapshot.t)
    eq = snapshot.q - (q_r + spec.offsets_to_leader(graph))
    ep = snapshot.p - plant.M0 @ qd_r
    return eq, ep
