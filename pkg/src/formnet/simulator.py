"""Fixed-step integration of the closed-loop formation network."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .controller import ControllerGains, ReferencePoint, certify_contractivity, control_law
from .errors import ConfigurationError, SimulationAbort
from .network import FormationSpec, MeshGraph, NetworkSnapshot, leader_reference
from .phcore import PlantModel, matvec, open_loop_rhs

__all__ = [
    "SimConfig",
    "TrajectoryLog",
    "ClosedLoopNetwork",
    "Evaluation",
    "closed_loop_rhs",
    "integration_step_rk4",
    "integration_step_euler",
    "initial_state",
    "simulate",
]

log = logging.getLogger(__name__)

INTEGRATORS = ("rk4", "euler")
ACCEL_MODES = ("exact", "fd-accel")
PERTURBATIONS = ("sphere", "ball", "cube", "none")


@dataclass
class SimConfig:
    """Integration and initial-condition settings.

    Time is in hours and lengths in km for the spacecraft scenarios.
    ``perturbation`` selects how per-agent position offsets of size
    ``alpha`` are drawn: ``sphere`` (norm exactly ``alpha``, random
    direction), ``ball`` (uniform in the ball), ``cube`` (uniform in
    ``[-alpha, alpha]^n``) or ``none``.  Explicit ``initial_positions`` /
    ``initial_velocities`` offsets, shape ``(N, n)``, override the draw.
    """

    dt: float = 0.005
    t_end: float = 20.0
    integrator: str = "rk4"
    accel_mode: str = "exact"
    alpha: float = 1.0
    seed: int = 0
    perturbation: str = "sphere"
    initial_positions: Optional[np.ndarray] = field(default=None, repr=False)
    initial_velocities: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigurationError(f"t_end must be positive, got {self.t_end}")
        if self.dt >= self.t_end:
            raise ConfigurationError(f"dt={self.dt} must be smaller than t_end={self.t_end}")
        if self.integrator not in INTEGRATORS:
            raise ConfigurationError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.accel_mode == "fd":
            self.accel_mode = "fd-accel"
        if self.accel_mode not in ACCEL_MODES:
            raise ConfigurationError(f"accel_mode must be one of {ACCEL_MODES}, got {self.accel_mode!r}")
        if self.perturbation not in PERTURBATIONS:
            raise ConfigurationError(
                f"perturbation must be one of {PERTURBATIONS}, got {self.perturbation!r}")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be non-negative")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigurationError(
                f"t_end={self.t_end} is not an integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def echo(self) -> dict:
        d = {k: v for k, v in asdict(self).items()
             if k not in ("initial_positions", "initial_velocities")}
        for k in ("initial_positions", "initial_velocities"):
            v = getattr(self, k)
            if v is not None:
                d[k] = np.asarray(v).tolist()
        return d


def integration_step_rk4(y, t, rhs: Callable, dt: float, k1=None):
    """One classical Runge-Kutta step; ``k1`` may be supplied if already known."""
    if k1 is None:
        k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise SimulationAbort(f"non-finite right-hand side near t={t:.6g}", time=t)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integration_step_euler(y, t, rhs: Callable, dt: float, k1=None):
    if k1 is None:
        k1 = rhs(t, y)
    if not np.all(np.isfinite(k1)):
        raise SimulationAbort(f"non-finite right-hand side at t={t:.6g}", time=t)
    return y + dt * k1


def _check_finite(t, what, *arrays):
    """Abort naming the first agent whose row is non-finite in any of ``arrays``."""
    # any inf/nan makes the sum non-finite; an overflowing sum only costs the slow scan
    if math.isfinite(sum(float(a.sum()) for a in arrays)):
        return
    ok = np.ones(arrays[0].shape[0], dtype=bool)
    for a in arrays:
        ok &= np.isfinite(a).all(axis=1)
    if not ok.all():
        agent = int(np.flatnonzero(~ok)[0])
        raise SimulationAbort(f"non-finite {what} for agent {agent} at t={t:.6g}",
                              agent=agent, time=float(t))


class _PlantStack:
    """Duck-typed plant evaluating heterogeneous agents that share one mass matrix."""

    def __init__(self, plants):
        self.plants = list(plants)
        self.M0 = self.plants[0].M0
        self.M0_inv = self.plants[0].M0_inv
        self.Rdiss = np.stack([pl.Rdiss for pl in self.plants])
        self.n = self.plants[0].n
        self.potential = None

    def potential_force(self, q):
        return np.stack([pl.potential_force(qi) for pl, qi in zip(self.plants, q)])

    def check_dims(self, *vectors):
        self.plants[0].check_dims(*vectors)


@dataclass
class Evaluation:
    """Closed-loop right-hand side plus the quantities that produced it (all ``(N, n)``)."""

    qdot: np.ndarray
    pdot: np.ndarray
    u: np.ndarray
    q_star: np.ndarray
    p_star: np.ndarray
    pdot_star: np.ndarray


class ClosedLoopNetwork:
    """Every agent under its tIDA-PBC law with distributed references.

    Followers need their predecessors' momentum derivatives at the same
    instant.  Because each ``p_i'`` is affine in the average of its
    predecessors' ``p_j'`` with unit coefficient, the whole network solves
    ``p' = b + W p'`` with ``W`` the predecessor-averaging matrix; ``b`` is
    the derivative computed with zero neighbour acceleration.  ``W`` is
    nilpotent on a directed acyclic graph, so the solution is unique.

    ``predecessors`` and ``offsets`` may be given explicitly to describe an
    arbitrary relabelling of a mesh.
    """

    def __init__(self, graph: MeshGraph, spec: FormationSpec, gains, plants,
                 predecessors: Sequence[Sequence[int]] = None, leader: int = None,
                 offsets: np.ndarray = None):
        if predecessors is None:
            spec.check_graph(graph)
            predecessors = graph.predecessor_ids
            leader = graph.leader_id
            offsets = spec.offsets_to_leader(graph)
        N = len(predecessors)
        roots = [i for i, pr in enumerate(predecessors) if len(pr) == 0]
        if roots != [leader]:
            raise ConfigurationError(f"exactly one leader expected, found agents {roots}")
        self.N = N
        self.leader = leader
        self.spec = spec
        self.graph = graph
        self.predecessors = [tuple(p) for p in predecessors]
        W = np.zeros((N, N))
        for i, preds in enumerate(self.predecessors):
            for j in preds:
                W[i, j] = 1.0 / len(preds)
        self.W = W
        self.S = np.linalg.solve(np.eye(N) - W, np.eye(N))
        self.offsets = np.asarray(offsets, dtype=float)
        self.offset_avg = self.offsets - W @ self.offsets

        plants = list(plants) if isinstance(plants, (list, tuple)) else [plants] * N
        gains = list(gains) if isinstance(gains, (list, tuple)) else [gains] * N
        if len(plants) != N or len(gains) != N:
            raise ConfigurationError(f"need {N} plants and gains, got {len(plants)} and {len(gains)}")
        M0 = plants[0].M0
        if any(not np.array_equal(pl.M0, M0) for pl in plants):
            raise ConfigurationError("all agents must share the same mass matrix")
        if any(g.n != plants[0].n for g in gains) or spec.n != plants[0].n:
            raise ConfigurationError("gain, plant and formation dimensions disagree")
        self.plants = plants
        self.gains_list = gains
        self.plant = plants[0] if all(pl is plants[0] for pl in plants) else _PlantStack(plants)
        self.gains = gains[0] if all(g is gains[0] for g in gains) else ControllerGains.stack(gains)
        self.n = plants[0].n

    def references(self, t, q, p, pdot_neighbors, lead=None):
        v = matvec(self.plant.M0_inv, p)
        q_star = self.W @ q + self.offset_avg
        p_star = (self.W @ v) @ self.plant.M0.T
        pdot_star = self.W @ pdot_neighbors
        if lead is None:
            lead = leader_reference(self.spec, self.plants[self.leader], t)
        l = self.leader
        q_star[l], p_star[l], pdot_star[l] = lead.q_star, lead.p_star, lead.pdot_star
        return q_star, p_star, pdot_star

    def _input(self, t, q, p, refs):
        _check_finite(t, "reference", *refs)
        ref = ReferencePoint(*refs)
        u = control_law((q, p), ref, self.gains, self.plant, t)
        qdot, pdot = open_loop_rhs((q, p), self.plant, u)
        return u, qdot, pdot

    def evaluate(self, t, q, p, neighbor_pdot=None) -> Evaluation:
        """Closed-loop derivative at ``(t, q, p)``.

        ``neighbor_pdot=None`` uses exact same-instant accelerations;
        otherwise the given ``(N, n)`` array stands in for them.
        """
        _check_finite(t, "state", q, p)
        lead = leader_reference(self.spec, self.plants[self.leader], t)
        if neighbor_pdot is None:
            refs0 = self.references(t, q, p, np.zeros_like(p), lead)
            _, _, b = self._input(t, q, p, refs0)
            neighbor_pdot = self.S @ b
        refs = self.references(t, q, p, neighbor_pdot, lead)
        u, qdot, pdot = self._input(t, q, p, refs)
        return Evaluation(qdot, pdot, u, *refs)

    def error_channels(self, t, q, p, pdot):
        q_r, qd_r, qdd_r = self.spec.leader_trajectory(t)
        eq = q - (q_r + self.offsets)
        ep = p - self.plant.M0 @ qd_r
        eacc = matvec(self.plant.M0_inv, pdot) - qdd_r
        return eq, ep, eacc


def closed_loop_rhs(snapshot: NetworkSnapshot, graph: MeshGraph, spec: FormationSpec,
                    gains, plants, accel_mode: str = "exact"):
    """``(q', p')`` of every agent, each ``(N, n)``.

    In ``exact`` mode neighbour accelerations are solved at the snapshot
    instant; in ``fd-accel`` mode ``snapshot.pdot`` supplies them.
    """
    net = ClosedLoopNetwork(graph, spec, gains, plants)
    if accel_mode == "exact":
        ev = net.evaluate(snapshot.t, snapshot.q, snapshot.p)
    elif accel_mode in ("fd-accel", "fd"):
        if snapshot.pdot is None:
            raise ConfigurationError("fd-accel mode needs snapshot.pdot")
        ev = net.evaluate(snapshot.t, snapshot.q, snapshot.p, neighbor_pdot=snapshot.pdot)
    else:
        raise ConfigurationError(f"unknown accel_mode {accel_mode!r}")
    return ev.qdot, ev.pdot


def _draw_offsets(config: SimConfig, N: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    a = config.alpha
    if config.perturbation == "none" or a == 0:
        return np.zeros((N, n))
    if config.perturbation == "cube":
        return rng.uniform(-a, a, size=(N, n))
    out = np.empty((N, n))
    for i in range(N):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        r = a if config.perturbation == "sphere" else a * rng.uniform() ** (1.0 / n)
        out[i] = r * d
    return out


def initial_state(config: SimConfig, net: ClosedLoopNetwork):
    """Formation-consistent state at ``t = 0`` plus seeded position offsets."""
    N, n = net.N, net.n
    q_r, qd_r, _ = net.spec.leader_trajectory(0.0)
    dq = (_draw_offsets(config, N, n) if config.initial_positions is None
          else np.asarray(config.initial_positions, dtype=float).reshape(N, n))
    dv = (np.zeros((N, n)) if config.initial_velocities is None
          else np.asarray(config.initial_velocities, dtype=float).reshape(N, n))
    q = q_r + net.offsets + dq
    p = (qd_r + dv) @ net.plant.M0.T
    return q, p


@dataclass
class TrajectoryLog:
    """Time series of every agent; arrays are ``(T, N, n)`` with ``T = steps + 1``."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    u: np.ndarray
    eq: np.ndarray
    ep: np.ndarray
    pdot: Optional[np.ndarray] = None
    eacc: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return self.q.shape[1]

    @property
    def n(self) -> int:
        return self.q.shape[2]

    def error_norms(self) -> np.ndarray:
        """``||q~_i(t)||``, shape ``(T, N)``."""
        return np.linalg.norm(self.eq, axis=2)

    def summary(self) -> dict:
        en = self.error_norms()
        return {
            "n_agents": self.n_agents,
            "n_steps": len(self.times) - 1,
            "t_end": float(self.times[-1]),
            "peak_error": [float(x) for x in en.max(axis=0)],
            "final_error": [float(x) for x in en[-1]],
            "max_peak_error": float(en.max()),
            "max_final_error": float(en[-1].max()),
            "metadata": self.metadata,
        }

    def _axis_names(self):
        return ["x", "y", "z"] if self.n == 3 else [str(k) for k in range(self.n)]

    def csv_header(self) -> list:
        ax = self._axis_names()
        cols = ["t"]
        for i in range(self.n_agents):
            for ch in ("q", "p", "u", "eq"):
                cols += [f"agent_{i}_{ch}{a}" for a in ax]
        return cols

    def to_csv(self, path):
        T = len(self.times)
        blocks = [self.times[:, None]]
        for i in range(self.n_agents):
            blocks += [self.q[:, i], self.p[:, i], self.u[:, i], self.eq[:, i]]
        data = np.hstack([b.reshape(T, -1) for b in blocks])
        np.savetxt(path, data, delimiter=",", fmt="%.17g",
                   header=",".join(self.csv_header()), comments="")

    def error_norms_to_csv(self, path):
        data = np.hstack([self.times[:, None], self.error_norms()])
        header = ",".join(["t"] + [f"agent_{i}" for i in range(self.n_agents)])
        np.savetxt(path, data, delimiter=",", fmt="%.17g", header=header, comments="")

    def write_summary(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _certificate_warning(gains_list, plants):
    seen = set()
    for g, pl in zip(gains_list, plants):
        if id(g) in seen:
            continue
        seen.add(id(g))
        if g.K.ndim == 2 and not certify_contractivity(g, pl).certified:
            warnings.warn("controller gains fail the contractivity certificate; "
                          "tracking is not guaranteed", RuntimeWarning, stacklevel=3)
            return


def simulate(config: SimConfig, graph: MeshGraph, spec: FormationSpec, gains, plants,
             metadata: dict = None, network: ClosedLoopNetwork = None,
             check_certificate: bool = True) -> TrajectoryLog:
    """Integrate the closed-loop network and log every step.

    Deterministic given the configuration: the only randomness is the
    seeded initial offset draw.
    """
    net = network if network is not None else ClosedLoopNetwork(graph, spec, gains, plants)
    if check_certificate:
        _certificate_warning(net.gains_list, net.plants)
    N, n, K, dt = net.N, net.n, config.n_steps, config.dt
    step = integration_step_rk4 if config.integrator == "rk4" else integration_step_euler
    fd_mode = config.accel_mode == "fd-accel"

    shape = (K + 1, N, n)
    Q, P, U, PD, EQ, EP, EA = (np.empty(shape) for _ in range(7))
    times = np.arange(K + 1) * dt

    q, p = initial_state(config, net)
    held = None
    prev_v = None

    def rhs(t, y):
        ev = net.evaluate(t, y[: N * n].reshape(N, n), y[N * n:].reshape(N, n), held)
        _check_finite(t, "derivative", ev.qdot, ev.pdot)
        return np.concatenate([ev.qdot.ravel(), ev.pdot.ravel()])

    y = np.concatenate([q.ravel(), p.ravel()])
    for k in range(K + 1):
        t = times[k]
        q, p = y[: N * n].reshape(N, n), y[N * n:].reshape(N, n)
        _check_finite(t, "state", q, p)
        if fd_mode:
            v = matvec(net.plant.M0_inv, p)
            if prev_v is not None:
                held = ((v - prev_v) / dt) @ net.plant.M0.T
            prev_v = v
        ev = net.evaluate(t, q, p, held)
        Q[k], P[k], U[k], PD[k] = q, p, ev.u, ev.pdot
        EQ[k], EP[k], EA[k] = net.error_channels(t, q, p, ev.pdot)
        if k == K:
            break
        k1 = np.concatenate([ev.qdot.ravel(), ev.pdot.ravel()])
        try:
            y = step(y, t, rhs, dt, k1=k1)
        except SimulationAbort as exc:
            raise SimulationAbort(f"{exc} (step {k})", agent=exc.agent,
                                  time=float(t) if exc.time is None else exc.time) from None

    meta = {"config": config.echo()}
    if metadata:
        meta.update(metadata)
    meta.setdefault("scenario_hash", hashlib.sha256(
        json.dumps(meta, sort_keys=True, default=str).encode()).hexdigest())
    return TrajectoryLog(times=times, q=Q, p=P, u=U, eq=EQ, ep=EP, pdot=PD, eacc=EA, metadata=meta)
