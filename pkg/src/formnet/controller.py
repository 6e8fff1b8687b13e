"""Timed IDA-PBC tracking law for a fully actuated mechanical agent.

The closed loop is shaped into the target system

    q' = M0^{-1} p
    p' = -K (q - L(t)) + (Jbar - Rbar) M0^{-1} p

whose Hamiltonian ``Hd = 1/2 p^T M0^{-1} p + 1/2 (q-L)^T K (q-L)`` is
quadratic.  ``L(t)`` is chosen so that the reference sample ``x*(t)`` is
itself a solution of the target system.

Gains and references broadcast: matrices may be ``(n, n)`` or stacked
``(N, n, n)`` to evaluate a whole network in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from .errors import CertificationError, ConfigurationError
from .phcore import PlantModel, _unpack, matvec

__all__ = [
    "ControllerGains",
    "ReferencePoint",
    "ContractivityReport",
    "DEFAULT_EPSILON_GRID",
    "desired_hamiltonian",
    "compute_L",
    "control_law",
    "target_rhs",
    "target_matrix",
    "hessian_bounds",
    "certify_contractivity",
    "on_imaginary_axis",
]

DEFAULT_EPSILON_GRID = (1e-8, 1e-6, 1e-4, 1e-2)
AXIS_TOL = 1e-9


def _square(name, A):
    A = np.array(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ConfigurationError(f"{name} must be a square matrix, got shape {A.shape}")
    return A


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """Desired stiffness ``K``, interconnection ``Jbar`` and damping ``Rbar``.

    ``Rbar`` is accepted when only positive semi-definite so that undamped
    designs can be built and then rejected by the certificates.
    """

    K: np.ndarray
    Jbar: np.ndarray
    Rbar: np.ndarray

    def __post_init__(self):
        K = _square("K", self.K)
        J = _square("Jbar", self.Jbar)
        R = _square("Rbar", self.Rbar)
        if not (K.shape == J.shape == R.shape):
            raise ConfigurationError(
                f"K, Jbar, Rbar shapes differ: {K.shape}, {J.shape}, {R.shape}")
        KT = np.swapaxes(K, -1, -2)
        if np.abs(K - KT).max() > 1e-12 * max(1.0, np.abs(K).max()):
            raise ConfigurationError("K must be symmetric")
        lam_k = np.linalg.eigvalsh(K)
        if lam_k.min() <= 0:
            raise ConfigurationError(
                f"K must be positive definite; eigenvalues {np.round(lam_k, 12).tolist()}")
        if np.abs(J + np.swapaxes(J, -1, -2)).max() >= 1e-12:
            raise ConfigurationError("Jbar skew-symmetry violated")
        if np.abs(R - np.swapaxes(R, -1, -2)).max() > 1e-12 * max(1.0, np.abs(R).max()):
            raise ConfigurationError("Rbar must be symmetric")
        lam_r = np.linalg.eigvalsh(R)
        if lam_r.min() < -1e-12:
            raise ConfigurationError(
                f"Rbar must be positive semi-definite; eigenvalues {lam_r.tolist()}")
        for name, A in (("K", K), ("Jbar", J), ("Rbar", R),
                        ("K_inv", np.linalg.inv(K)), ("J_minus_R", J - R)):
            A.flags.writeable = False
            object.__setattr__(self, name, A)

    @property
    def n(self) -> int:
        return self.K.shape[-1]

    @property
    def damping_is_definite(self) -> bool:
        return bool(np.linalg.eigvalsh(self.Rbar).min() > 0)

    @classmethod
    def stack(cls, gains_list):
        """Stack per-agent gains into one batched ``ControllerGains``."""
        return cls(K=np.stack([g.K for g in gains_list]),
                   Jbar=np.stack([g.Jbar for g in gains_list]),
                   Rbar=np.stack([g.Rbar for g in gains_list]))

    def to_dict(self):
        return {"K": self.K.tolist(), "Jbar": self.Jbar.tolist(), "Rbar": self.Rbar.tolist()}


@dataclass(frozen=True, eq=False)
class ReferencePoint:
    """Sample ``(q*, p*, p*')`` of a feasible desired trajectory."""

    q_star: np.ndarray
    p_star: np.ndarray
    pdot_star: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.q_star, self.p_star, self.pdot_star)]
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape):
            raise ConfigurationError("reference components must have consistent shapes")
        if not all(np.isfinite(a).all() for a in arrs):
            raise ConfigurationError("reference contains non-finite entries")
        object.__setattr__(self, "q_star", arrs[0])
        object.__setattr__(self, "p_star", arrs[1])
        object.__setattr__(self, "pdot_star", arrs[2])


def desired_hamiltonian(state, L: ArrayLike, gains: ControllerGains, plant: PlantModel):
    """Target energy ``1/2 p^T M0^{-1} p + 1/2 (q-L)^T K (q-L)``."""
    q, p = _unpack(state)
    L = np.asarray(L, dtype=float)
    plant.check_dims(q, p, L)
    e = q - L
    return 0.5 * (np.einsum("...i,...i->...", p, matvec(plant.M0_inv, p))
                  + np.einsum("...i,...i->...", e, matvec(gains.K, e)))


def compute_L(t, ref: ReferencePoint, gains: ControllerGains, plant: PlantModel):
    """Time-varying minimizer of the desired potential.

    ``L = q* - K^{-1} ((Jbar - Rbar) M0^{-1} p* - p*')``, which makes the
    reference a trajectory of the target system.  ``t`` is carried for
    interface symmetry; the dependence on time enters through ``ref``.
    """
    plant.check_dims(ref.q_star)
    rhs = matvec(gains.J_minus_R, matvec(plant.M0_inv, ref.p_star)) - ref.pdot_star
    return ref.q_star - matvec(gains.K_inv, rhs)


def control_law(state, ref: ReferencePoint, gains: ControllerGains,
                plant: PlantModel, t=0.0, L=None):
    """tIDA-PBC input that cancels the open-loop forces and imposes the target dynamics."""
    q, p = _unpack(state)
    plant.check_dims(q, p, ref.q_star)
    if L is None:
        L = compute_L(t, ref, gains, plant)
    v = matvec(plant.M0_inv, p)
    return (plant.potential_force(q)
            - matvec(gains.K, q - L)
            + matvec(plant.Rdiss, v)
            + matvec(gains.J_minus_R, v))


def target_rhs(state, L, gains: ControllerGains, plant: PlantModel):
    """Right-hand side ``F_d grad Hd`` of the target system, split as ``(q', p')``."""
    q, p = _unpack(state)
    v = matvec(plant.M0_inv, p)
    return v, -matvec(gains.K, q - np.asarray(L, dtype=float)) + matvec(gains.J_minus_R, v)


def target_matrix(gains: ControllerGains) -> np.ndarray:
    """Structure matrix ``F_d = [[0, I], [-I, Jbar - Rbar]]``."""
    n = gains.n
    I = np.eye(n)
    return np.block([[np.zeros((n, n)), I], [-I, gains.Jbar - gains.Rbar]])


def hessian_bounds(gains: ControllerGains, plant: PlantModel):
    """Extremal eigenvalues of the (constant) Hessian ``blockdiag(K, M0^{-1})``."""
    lam = np.concatenate([np.linalg.eigvalsh(gains.K), np.linalg.eigvalsh(plant.M0_inv)])
    return float(lam.min()), float(lam.max())


def on_imaginary_axis(eigs, tol=AXIS_TOL):
    """Mask of eigenvalues with ``|Re| <= tol * max(1, |lambda|)``."""
    eigs = np.asarray(eigs)
    return np.abs(eigs.real) <= tol * np.maximum(1.0, np.abs(eigs))


def _complex_list(eigs):
    return [[float(z.real), float(z.imag)] for z in np.asarray(eigs, dtype=complex)]


@dataclass
class ContractivityReport:
    alpha: float
    beta: float
    eta: float
    fd_eigenvalues: list
    fd_hurwitz: bool
    n_matrix_eigenvalues: list
    epsilon_passed: list
    n_has_imaginary_axis_eig: bool
    epsilon_grid: list
    certified: bool
    tol: float = AXIS_TOL
    note: str = field(default=(
        "Hessian of Hd is constant; alpha/beta are its exact extremal eigenvalues, "
        "so the strict bounds hold with any positive margin."))

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "eta": self.eta,
            "fd_eigenvalues": _complex_list(self.fd_eigenvalues),
            "fd_hurwitz": self.fd_hurwitz,
            "n_matrix_eigenvalues": [_complex_list(e) for e in self.n_matrix_eigenvalues],
            "epsilon_passed": list(self.epsilon_passed),
            "n_has_imaginary_axis_eig": self.n_has_imaginary_axis_eig,
            "epsilon_grid": list(self.epsilon_grid),
            "certified": self.certified,
            "tol": self.tol,
            "note": self.note,
        }


def certify_contractivity(gains: ControllerGains, plant: PlantModel,
                          epsilon_grid=DEFAULT_EPSILON_GRID, tol=AXIS_TOL) -> ContractivityReport:
    """Spectral contraction test of the target system.

    Checks that ``F_d`` is Hurwitz and that, for at least one probed
    ``eps``, the matrix

        N = [[F_d, eta F_d F_d^T], [-(eta + eps) I, -F_d^T]]

    has no eigenvalue on the imaginary axis, where ``eta = 1 - alpha/beta``.
    """
    if gains.K.ndim != 2:
        raise CertificationError("certify one agent's gains at a time")
    if gains.n != plant.n:
        raise CertificationError(f"gain size {gains.n} does not match plant size {plant.n}")
    eps_grid = [float(e) for e in epsilon_grid]
    if not eps_grid or min(eps_grid) <= 0:
        raise CertificationError("epsilon grid must be non-empty and positive")
    if tol <= 0:
        raise CertificationError("tol must be positive")
    if np.linalg.eigvalsh(gains.K).min() <= 0:
        raise CertificationError("K is not positive definite")
    if np.linalg.eigvalsh(plant.M0).min() <= 0:
        raise CertificationError("M0 is not positive definite")

    alpha, beta = hessian_bounds(gains, plant)
    eta = 1.0 - alpha / beta
    Fd = target_matrix(gains)
    fd_eigs = np.linalg.eigvals(Fd)
    fd_hurwitz = bool(np.all(fd_eigs.real < -tol))

    m = Fd.shape[0]
    n_eigs, passed = [], []
    for eps in eps_grid:
        N = np.block([[Fd, eta * Fd @ Fd.T],
                      [-(eta + eps) * np.eye(m), -Fd.T]])
        ev = np.linalg.eigvals(N)
        n_eigs.append(ev)
        passed.append(not bool(on_imaginary_axis(ev, tol).any()))

    return ContractivityReport(
        alpha=alpha, beta=beta, eta=eta,
        fd_eigenvalues=fd_eigs, fd_hurwitz=fd_hurwitz,
        n_matrix_eigenvalues=n_eigs, epsilon_passed=passed,
        n_has_imaginary_axis_eig=not any(passed),
        epsilon_grid=eps_grid, certified=fd_hurwitz and any(passed), tol=tol)
