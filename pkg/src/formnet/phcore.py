"""Port-Hamiltonian mechanical agents.

Each agent is a fully actuated mechanical system with constant mass matrix

    q' = M0^{-1} p
    p' = -grad U(q) - Rdiss M0^{-1} p + u

and Hamiltonian ``H = 1/2 p^T M0^{-1} p + U(q)``.  All functions broadcast
over leading axes, so ``q`` and ``p`` may be ``(n,)`` for one agent or
``(N, n)`` for a stack of agents sharing the same plant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError

__all__ = [
    "AgentState",
    "PlantModel",
    "QuadraticPotential",
    "HillPotential",
    "SpacecraftPlantParams",
    "hamiltonian",
    "open_loop_rhs",
    "passive_output",
    "mechanical_plant",
    "spacecraft_plant",
    "gradient_consistency_error",
    "matvec",
]

Array = NDArray[np.float64]


def matvec(M: Array, v: Array) -> Array:
    """Batched ``M @ v`` for ``M`` of shape (..., n, n) and ``v`` of shape (..., n)."""
    if M.ndim == 2:
        return v @ M.T
    return np.einsum("...ij,...j->...i", M, v)


@dataclass(frozen=True)
class AgentState:
    """Position/momentum pair of one agent."""

    q: Array
    p: Array

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.shape[-1] < 1:
            raise ConfigurationError(
                f"q and p must have identical non-empty shapes, got {q.shape} and {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ConfigurationError("AgentState entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[-1]


class QuadraticPotential:
    """``U(q) = 1/2 q^T S q`` with symmetric ``S`` (``S = 0`` gives a free particle)."""

    def __init__(self, stiffness: ArrayLike):
        S = np.atleast_2d(np.asarray(stiffness, dtype=float))
        self.stiffness = 0.5 * (S + S.T)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", q, self.stiffness, q)

    def gradient(self, q):
        return np.asarray(q, dtype=float) @ self.stiffness.T

    def __repr__(self):
        return f"QuadraticPotential({self.stiffness.tolist()})"


class HillPotential:
    """Gravity-gradient potential of the linearized circular-orbit relative motion.

    ``U(q) = -3/2 n0^2 x^2 + 1/2 n0^2 z^2``.  The Coriolis coupling is
    workless and lives in the skew part of the plant's ``Rdiss``.
    """

    def __init__(self, n0: float):
        self.n0 = float(n0)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        n2 = self.n0 ** 2
        return -1.5 * n2 * q[..., 0] ** 2 + 0.5 * n2 * q[..., 2] ** 2

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        n2 = self.n0 ** 2
        g = np.zeros_like(q)
        g[..., 0] = -3.0 * n2 * q[..., 0]
        g[..., 2] = n2 * q[..., 2]
        return g

    def __repr__(self):
        return f"HillPotential(n0={self.n0})"


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Open-loop data of one agent.

    ``Rdiss`` need not be symmetric: only its symmetric part has to be
    positive semi-definite, and a skew part models gyroscopic forces.
    """

    M0: Array
    Rdiss: Array
    potential_force: Callable[[Array], Array]
    potential: Optional[Callable[[Array], Array]] = None
    name: str = "mechanical"
    psd_tol: float = 1e-12
    M0_inv: Array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        M0 = np.atleast_2d(np.array(self.M0, dtype=float))
        R = np.atleast_2d(np.array(self.Rdiss, dtype=float))
        n = M0.shape[0]
        if M0.shape != (n, n) or R.shape != (n, n):
            raise ConfigurationError(
                f"M0 and Rdiss must be square of equal size, got {M0.shape} and {R.shape}")
        if not np.allclose(M0, M0.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M0).max())):
            raise ConfigurationError("M0 must be symmetric")
        lam = np.linalg.eigvalsh(M0)
        if lam.min() <= 0:
            raise ConfigurationError(
                f"M0 must be positive definite (min eigenvalue {lam.min():.6g})")
        lam_r = np.linalg.eigvalsh(0.5 * (R + R.T))
        if lam_r.min() < -self.psd_tol * max(1.0, np.abs(R).max()):
            raise ConfigurationError(
                f"sym(Rdiss) must be positive semi-definite (min eigenvalue {lam_r.min():.6g})")
        M0.flags.writeable = False
        R.flags.writeable = False
        M0_inv = np.linalg.inv(M0)
        M0_inv.flags.writeable = False
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "Rdiss", R)
        object.__setattr__(self, "M0_inv", M0_inv)
        if self.potential is not None:
            err = gradient_consistency_error(self, n_points=10)
            if err > 1e-5:
                raise ConfigurationError(
                    f"potential_force is not the gradient of potential (relative error {err:.3g})")

    @property
    def n(self) -> int:
        return self.M0.shape[0]

    def check_dims(self, *vectors):
        for v in vectors:
            if np.shape(v)[-1:] != (self.n,):
                raise ConfigurationError(
                    f"dimension mismatch: plant has n={self.n}, got vector of shape {np.shape(v)}")


def _unpack(state):
    if isinstance(state, AgentState):
        return state.q, state.p
    q, p = state
    return np.asarray(q, dtype=float), np.asarray(p, dtype=float)


def hamiltonian(state, plant: PlantModel):
    """Total energy ``1/2 p^T M0^{-1} p + U(q)``.

    A plant without a ``potential`` callable is treated as ``U = 0``.
    """
    q, p = _unpack(state)
    plant.check_dims(q, p)
    kinetic = 0.5 * np.einsum("...i,...i->...", p, matvec(plant.M0_inv, p))
    if plant.potential is None:
        return kinetic
    return kinetic + plant.potential(q)


def passive_output(state, plant: PlantModel):
    """Collocated passive output ``y = g^T grad H = M0^{-1} p`` (the velocity)."""
    q, p = _unpack(state)
    plant.check_dims(q, p)
    return np.linalg.solve(plant.M0, p[..., None])[..., 0]


def open_loop_rhs(state, plant: PlantModel, u):
    """Return ``(q', p')`` of the open-loop agent under input ``u``."""
    q, p = _unpack(state)
    u = np.asarray(u, dtype=float)
    plant.check_dims(q, p, u)
    v = matvec(plant.M0_inv, p)
    pdot = -plant.potential_force(q) - matvec(plant.Rdiss, v) + u
    return v, pdot


def mechanical_plant(M0: ArrayLike, Rdiss: ArrayLike | None = None,
                     stiffness: ArrayLike | None = None) -> PlantModel:
    """Generic agent with a quadratic potential (zero by default)."""
    M0 = np.atleast_2d(np.asarray(M0, dtype=float))
    n = M0.shape[0]
    R = np.zeros((n, n)) if Rdiss is None else Rdiss
    pot = QuadraticPotential(np.zeros((n, n)) if stiffness is None else stiffness)
    return PlantModel(M0=M0, Rdiss=R, potential_force=pot.gradient, potential=pot)


@dataclass(frozen=True)
class SpacecraftPlantParams:
    """Reference-orbit mean motion ``n0`` (rad per time unit; rad/h by convention)."""

    n0: float = 0.5307

    def __post_init__(self):
        if not np.isfinite(self.n0) or self.n0 <= 0:
            raise ConfigurationError(f"n0 must be positive, got {self.n0}")


def spacecraft_plant(params: SpacecraftPlantParams) -> PlantModel:
    """Point-mass spacecraft in the Hill frame of a circular orbit.

    Reproduces the Hill-Clohessy-Wiltshire equations

        x'' = 3 n0^2 x + 2 n0 y' + ux
        y'' = -2 n0 x'            + uy
        z'' = -n0^2 z             + uz

    with ``M0 = I``.  Gravity gradient enters through ``HillPotential``; the
    Coriolis terms are the skew-symmetric ``Rdiss`` (no dissipation).
    """
    if not isinstance(params, SpacecraftPlantParams):
        params = SpacecraftPlantParams(float(params))
    n0 = params.n0
    gyro = np.array([[0.0, -2.0 * n0, 0.0],
                     [2.0 * n0, 0.0, 0.0],
                     [0.0, 0.0, 0.0]])
    pot = HillPotential(n0)
    return PlantModel(M0=np.eye(3), Rdiss=gyro, potential_force=pot.gradient,
                      potential=pot, name="spacecraft-hcw")


def gradient_consistency_error(plant: PlantModel, n_points: int = 100,
                               scale: float = 10.0, seed: int = 0) -> float:
    """Worst relative mismatch between ``potential_force`` and central differences of ``potential``."""
    if plant.potential is None:
        raise ConfigurationError("plant has no potential to differentiate")
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = plant.n
    for q in rng.uniform(-scale, scale, size=(n_points, n)):
        g = plant.potential_force(q)
        fd = np.empty(n)
        for k in range(n):
            h = 1e-5 * max(1.0, abs(q[k]))
            e = np.zeros(n)
            e[k] = h
            fd[k] = (plant.potential(q + e) - plant.potential(q - e)) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0))
    return float(worst)
