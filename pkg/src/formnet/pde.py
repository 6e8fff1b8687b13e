"""Continuum (PDE) analysis of mesh networks with identical controllers.

The error dynamics of a follower ``i`` with predecessors ``j``,

    Q_i q~_i'' = -F1 (Q_i q~_i - sum_j q~_j) + sum_j q~_j''
                 - F2 (Q_i q~_i' - sum_j q~_j'),

with ``F1 = M0^{-1} K0`` and ``F2 = -M0^{-1} (Jbar0 - Rbar0)``, is an
upwind finite-difference discretization of a linear PDE on ``[0, 1]^D``.
Separating variables leaves the size-independent temporal system

    T'' + F2 T' + F1 T = 0,

whose stability yields a bound on the formation error that holds for
every network size.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .controller import AXIS_TOL, ControllerGains, _complex_list
from .errors import CertificationError, DegenerateDirectionError, FormnetError, InputError
from .network import FormationSpec, MeshGraph, build_mesh
from .phcore import PlantModel
from .simulator import SimConfig, TrajectoryLog, simulate

__all__ = [
    "PdeCoefficients",
    "TemporalStabilityReport",
    "SasSweepResult",
    "SweepError",
    "build_pde_coefficients",
    "discretization_residual",
    "certify_temporal_stability",
    "temporal_matrix",
    "sas_sweep",
]


@dataclass(frozen=True, eq=False)
class PdeCoefficients:
    F1: np.ndarray
    F2: np.ndarray
    deltas: tuple
    M0: np.ndarray

    def to_dict(self):
        return {"F1": self.F1.tolist(), "F2": self.F2.tolist(), "deltas": list(self.deltas)}


def build_pde_coefficients(gains: ControllerGains, plant: PlantModel, extents) -> PdeCoefficients:
    """``F1 = M0^{-1} K0``, ``F2 = -M0^{-1}(Jbar0 - Rbar0)`` and steps ``delta_k = 1/(r_k - 1)``."""
    extents = [int(r) for r in extents]
    for k, r in enumerate(extents):
        if r < 2:
            raise DegenerateDirectionError(
                f"direction {k} has r={r}; drop it from the mesh before building the PDE")
    F1 = plant.M0_inv @ gains.K
    F2 = -plant.M0_inv @ (gains.Jbar - gains.Rbar)
    return PdeCoefficients(F1=F1, F2=F2, deltas=tuple(1.0 / (r - 1) for r in extents),
                           M0=plant.M0)


def discretization_residual(log: TrajectoryLog, graph: MeshGraph, coeffs: PdeCoefficients) -> float:
    """Largest violation of the discrete error relation over followers and logged times.

    Uses the logged formation errors ``q~``, ``p~`` and error accelerations.
    """
    if log.eq is None or log.ep is None or log.eacc is None:
        raise InputError("log lacks q~, p~ or error-acceleration channels")
    if log.n_agents != graph.n_agents:
        raise InputError(f"log has {log.n_agents} agents, graph has {graph.n_agents}")
    M0_inv = np.linalg.inv(coeffs.M0)
    e, ed, edd = log.eq, log.ep @ M0_inv.T, log.eacc
    worst = 0.0
    for i, preds in enumerate(graph.predecessor_ids):
        if not preds:
            continue
        Q = len(preds)
        s0 = e[:, list(preds)].sum(axis=1)
        s1 = ed[:, list(preds)].sum(axis=1)
        s2 = edd[:, list(preds)].sum(axis=1)
        rhs = (-(Q * e[:, i] - s0) @ coeffs.F1.T + s2
               - (Q * ed[:, i] - s1) @ coeffs.F2.T)
        r = np.linalg.norm(Q * edd[:, i] - rhs, axis=1).max()
        worst = max(worst, float(r))
    return worst


def temporal_matrix(coeffs: PdeCoefficients) -> np.ndarray:
    n = coeffs.F1.shape[0]
    return np.block([[np.zeros((n, n)), np.eye(n)], [-coeffs.F1, -coeffs.F2]])


@dataclass
class TemporalStabilityReport:
    B: np.ndarray
    b_eigenvalues: np.ndarray
    b_hurwitz: bool
    lyapunov_decrescent: bool
    gamma: float
    max_vdot: float
    max_skew_contribution: float
    max_identity_error: float
    n_samples: int

    @property
    def certified(self) -> bool:
        return self.b_hurwitz and self.lyapunov_decrescent

    def to_dict(self):
        return {
            "B": self.B.tolist(),
            "b_eigenvalues": _complex_list(self.b_eigenvalues),
            "b_hurwitz": self.b_hurwitz,
            "lyapunov_decrescent": self.lyapunov_decrescent,
            "gamma": self.gamma,
            "max_vdot": self.max_vdot,
            "max_skew_contribution": self.max_skew_contribution,
            "max_identity_error": self.max_identity_error,
            "n_samples": self.n_samples,
            "certified": self.certified,
        }


def certify_temporal_stability(coeffs: PdeCoefficients, gains: ControllerGains,
                               plant: PlantModel, n_samples: int = 1000, seed: int = 0,
                               tol: float = AXIS_TOL) -> TemporalStabilityReport:
    """Stability certificate of ``T'' + F2 T' + F1 T = 0``.

    ``V(y) = 1/2 y1^T K0 y1 + 1/2 y2^T M0 y2`` is sampled on random points;
    its derivative along ``y' = B y`` must equal ``-y2^T Rbar0 y2 <= 0``.
    ``gamma`` bounds ``||y(t)||`` for a unit initial condition through the
    Lyapunov level set.
    """
    K0, M0 = gains.K, plant.M0
    if K0.ndim != 2:
        raise CertificationError("temporal certificate needs identical (unstacked) gains")
    if np.abs(K0 - K0.T).max() > 1e-12 * max(1.0, np.abs(K0).max()) or np.linalg.eigvalsh(K0).min() <= 0:
        raise CertificationError("K0 must be symmetric positive definite")
    if np.linalg.eigvalsh(M0).min() <= 0:
        raise CertificationError("M0 must be positive definite")

    B = temporal_matrix(coeffs)
    eigs = np.linalg.eigvals(B)
    b_hurwitz = bool(np.all(eigs.real < -tol))

    n = K0.shape[0]
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-1.0, 1.0, size=(n_samples, 2 * n))
    y1, y2 = Y[:, :n], Y[:, n:]
    Yd = Y @ B.T
    # grad V . y'
    vdot = np.einsum("si,ij,sj->s", y1, K0, Yd[:, :n]) + np.einsum("si,ij,sj->s", y2, M0, Yd[:, n:])
    dissipation = -np.einsum("si,ij,sj->s", y2, gains.Rbar, y2)
    skew = np.einsum("si,ij,sj->s", y2, gains.Jbar, y2)
    identity_error = np.abs(vdot - dissipation)
    lyap_ok = bool(np.all(vdot <= 1e-12) and identity_error.max() <= 1e-10 * max(1.0, np.abs(B).max()))

    P = np.block([[K0, np.zeros((n, n))], [np.zeros((n, n)), M0]])
    lam = np.linalg.eigvalsh(P)
    gamma = float(np.sqrt(lam.max() / lam.min()))
    return TemporalStabilityReport(
        B=B, b_eigenvalues=eigs, b_hurwitz=b_hurwitz, lyapunov_decrescent=lyap_ok,
        gamma=gamma, max_vdot=float(vdot.max()), max_skew_contribution=float(np.abs(skew).max()),
        max_identity_error=float(identity_error.max()), n_samples=n_samples)


class SweepError(FormnetError):
    def __init__(self, message, size=None):
        super().__init__(message)
        self.size = size


@dataclass
class SasSweepResult:
    sizes: list
    n_agents: list
    peak_errors: list
    final_errors: list
    initial_errors: list
    uniform_bound: float
    convergence_threshold: float
    temporal: TemporalStabilityReport
    slope: float
    slope_ci: tuple
    sas_pass: bool
    reasons: list = field(default_factory=list)
    slope_ci_raw: tuple = None
    slope_resolution: float = 0.0

    @property
    def slope_not_positive(self) -> bool:
        """Least-squares slope of peak error against N is not significantly positive (95%).

        ``slope_ci`` is the regression interval widened by ``slope_resolution``,
        the slope that floating-point rounding of the peaks alone can produce.
        """
        return bool(self.slope_ci[0] <= 0.0)

    def to_dict(self):
        return {
            "sizes": [list(s) for s in self.sizes],
            "n_agents": self.n_agents,
            "peak_errors": self.peak_errors,
            "final_errors": self.final_errors,
            "initial_errors": self.initial_errors,
            "uniform_bound": self.uniform_bound,
            "convergence_threshold": self.convergence_threshold,
            "slope": self.slope,
            "slope_ci95": list(self.slope_ci),
            "slope_ci95_raw": None if self.slope_ci_raw is None else list(self.slope_ci_raw),
            "slope_resolution": self.slope_resolution,
            "slope_not_positive": self.slope_not_positive,
            "temporal_certificate": self.temporal.to_dict(),
            "sas_pass": self.sas_pass,
            "reasons": self.reasons,
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "peak_error", "final_error", "bound"])
            for N, pk, fe in zip(self.n_agents, self.peak_errors, self.final_errors):
                w.writerow([N, repr(pk), repr(fe), repr(self.uniform_bound)])

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _slope_ci(x, y, level=0.95):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        return 0.0, (-np.inf, np.inf)
    fit = stats.linregress(x, y)
    tcrit = stats.t.ppf(0.5 + level / 2, len(x) - 2)
    half = tcrit * fit.stderr
    return float(fit.slope), (float(fit.slope - half), float(fit.slope + half))


def _slope_resolution(n_agents, peaks, scales):
    """Slope attributable to rounding of the peaks.

    Each peak is a difference of positions of magnitude ``scales[i]``, so it
    is only known to a few ulps of that magnitude.
    """
    n_agents = np.asarray(n_agents, dtype=float)
    if len(n_agents) < 2 or np.ptp(n_agents) == 0:
        return 0.0
    u = 8 * np.finfo(float).eps * (np.asarray(scales, dtype=float) + np.asarray(peaks, dtype=float))
    return float(2 * u.max() / np.ptp(n_agents))


def _default_threads(n_jobs):
    env = os.environ.get("FORMNET_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def sas_sweep(size_grid, gains: ControllerGains, plant: PlantModel, formation: FormationSpec,
              config: SimConfig, convergence_threshold: float = 1e-3,
              threads: int = None) -> SasSweepResult:
    """Simulate each mesh size and compare its errors with the size-independent bound.

    Every size reuses ``config`` (same ``alpha`` and seed policy).  The bound
    is ``gamma * alpha`` with the temporal factor normalized to unit norm at
    ``t0``.  Passing needs every peak below the bound, every final error
    below ``convergence_threshold``, and the temporal certificate.
    """
    sizes = [tuple(int(r) for r in np.atleast_1d(s)) for s in size_grid]
    if not sizes:
        raise SweepError("size grid is empty")
    ref_extents = [r for r in max(sizes, key=lambda s: np.prod(s)) if r > 1] or [2]
    coeffs = build_pde_coefficients(gains, plant, ref_extents)
    temporal = certify_temporal_stability(coeffs, gains, plant)
    bound = temporal.gamma * config.alpha

    def run(ext):
        graph = build_mesh(len(ext), ext)
        try:
            log = simulate(config, graph, formation, gains, plant, check_certificate=False,
                           metadata={"size": list(ext)})
        except FormnetError as exc:
            raise SweepError(f"run with extents {list(ext)} failed: {exc}", size=ext) from exc
        en = log.error_norms()
        scale = float(np.abs(log.q).max())
        return graph.n_agents, float(en.max()), float(en[-1].max()), float(en[0].max()), scale

    nthreads = threads if threads is not None else _default_threads(len(sizes))
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            results = list(ex.map(run, sizes))
    else:
        results = [run(s) for s in sizes]

    n_agents = [r[0] for r in results]
    peaks = [r[1] for r in results]
    finals = [r[2] for r in results]
    initials = [r[3] for r in results]
    slope, ci_raw = _slope_ci(n_agents, peaks)
    res = _slope_resolution(n_agents, peaks, [r[4] for r in results])
    ci = (ci_raw[0] - res, ci_raw[1] + res)

    reasons = []
    if not temporal.b_hurwitz:
        reasons.append("temporal matrix B is not Hurwitz")
    if not temporal.lyapunov_decrescent:
        reasons.append("Lyapunov derivative check failed")
    if max(peaks) > bound:
        reasons.append(f"peak error {max(peaks):.6g} exceeds uniform bound {bound:.6g}")
    bad = [list(s) for s, f in zip(sizes, finals) if not f < convergence_threshold]
    if bad:
        reasons.append(f"final error above {convergence_threshold:g} for sizes {bad}")
    return SasSweepResult(
        sizes=sizes, n_agents=n_agents, peak_errors=peaks, final_errors=finals,
        initial_errors=initials, uniform_bound=bound,
        convergence_threshold=convergence_threshold, temporal=temporal,
        slope=slope, slope_ci=ci, sas_pass=not reasons, reasons=reasons,
        slope_ci_raw=ci_raw, slope_resolution=res)
