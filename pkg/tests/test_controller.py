import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from formnet.controller import (ControllerGains, ReferencePoint, certify_contractivity, compute_L,
                                control_law, desired_hamiltonian, target_matrix, target_rhs)
from formnet.errors import CertificationError, ConfigurationError
from formnet.network import GcoTrajectory, leader_reference, FormationSpec
from formnet.phcore import mechanical_plant, open_loop_rhs

from conftest import JBAR0, K0, N0, RBAR0


def scalar(K=1.0, J=0.0, R=2.0):
    return ControllerGains([[K]], [[J]], [[R]]), mechanical_plant([[1.0]])


class TestGainValidation:
    def test_skew_violation(self):
        with pytest.raises(ConfigurationError, match="Jbar skew-symmetry violated"):
            ControllerGains(np.eye(2), [[0.0, 1.0], [1.0, 0.0]], np.eye(2))

    def test_tiny_skew_violation_rejected(self):
        with pytest.raises(ConfigurationError, match="skew"):
            ControllerGains(np.eye(2), [[0.0, 1.0], [-1.0 + 1e-11, 0.0]], np.eye(2))

    def test_singular_K(self):
        with pytest.raises(ConfigurationError, match="positive definite"):
            ControllerGains(np.diag([1.0, 0.0]), np.zeros((2, 2)), np.eye(2))

    def test_asymmetric_K(self):
        with pytest.raises(ConfigurationError, match="symmetric"):
            ControllerGains([[1.0, 0.5], [0.0, 1.0]], np.zeros((2, 2)), np.eye(2))

    def test_negative_damping(self):
        with pytest.raises(ConfigurationError, match="semi-definite"):
            ControllerGains(np.eye(2), np.zeros((2, 2)), np.diag([1.0, -1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            ControllerGains(np.eye(2), np.zeros((3, 3)), np.eye(2))

    def test_gains_are_read_only(self, gains):
        with pytest.raises(ValueError):
            gains.K[0, 0] = 1.0


class TestDesiredHamiltonian:
    def test_position_term(self):
        g = ControllerGains(np.diag([2.0, 2.0, 2.0]), np.zeros((3, 3)), np.eye(3))
        pl = mechanical_plant(np.eye(3))
        assert desired_hamiltonian(([1, 1, 1], [0, 0, 0]), [0, 0, 0], g, pl) == pytest.approx(3.0)

    def test_kinetic_term(self, gains):
        pl = mechanical_plant(np.diag([1.0, 2.0, 3.0]))
        val = desired_hamiltonian(([0, 0, 0], [0.3, 0.0, 0.0]), [0, 0, 0], gains, pl)
        assert val == pytest.approx(0.045)
        pl2 = mechanical_plant(np.eye(3) * 0.3)
        assert desired_hamiltonian(([0, 0, 0], [0.3, 0, 0]), [0, 0, 0], gains, pl2) == pytest.approx(0.15)

    def test_zero_at_minimum(self, gains, plant, rng):
        L = rng.standard_normal(3)
        assert desired_hamiltonian((L, np.zeros(3)), L, gains, plant) == 0.0

    def test_positive_elsewhere(self, gains, plant, rng):
        for _ in range(100):
            q, p, L = rng.standard_normal((3, 3))
            assert desired_hamiltonian((q, p), L, gains, plant) > 0


class TestComputeL:
    def test_static_reference(self, gains, plant):
        ref = ReferencePoint([1.0, 2.0, 3.0], np.zeros(3), np.zeros(3))
        np.testing.assert_allclose(compute_L(0.0, ref, gains, plant), [1.0, 2.0, 3.0], atol=1e-15)

    def test_scalar_example(self):
        g, pl = scalar(K=2.0, R=1.0)
        # L = q* - K^{-1}(-R p* - p*') = 0 - 0.5 (-1 - 1) = 1
        ref = ReferencePoint([0.0], [1.0], [1.0])
        np.testing.assert_allclose(compute_L(0.0, ref, g, pl), [1.0])

    def test_dimension_mismatch(self, gains, plant):
        with pytest.raises(ConfigurationError):
            compute_L(0.0, ReferencePoint(np.zeros(2), np.zeros(2), np.zeros(2)), gains, plant)

    @pytest.mark.parametrize("t", [0.0, 1.3, 7.7, 19.99])
    def test_reference_is_feasible(self, gains, plant, t):
        spec = FormationSpec([[10.0, 0, 0]], GcoTrajectory(5.0, N0))
        ref = leader_reference(spec, plant, t)
        L = compute_L(t, ref, gains, plant)
        qd, pd = target_rhs((ref.q_star, ref.p_star), L, gains, plant)
        _, vd_r, _ = spec.leader_trajectory(t)
        assert np.linalg.norm(qd - vd_r) < 1e-10
        assert np.linalg.norm(pd - ref.pdot_star) < 1e-10


def test_matching_residual(gains, plant, rng):
    """Open loop under the law equals the target system at random points."""
    worst = 0.0
    for _ in range(100):
        q, p, qs, ps, pds = rng.uniform(-20, 20, (5, 3))
        ref = ReferencePoint(qs, ps, pds)
        L = compute_L(0.0, ref, gains, plant)
        u = control_law((q, p), ref, gains, plant)
        _, pd = open_loop_rhs((q, p), plant, u)
        _, pd_target = target_rhs((q, p), L, gains, plant)
        worst = max(worst, np.abs(pd - pd_target).max() / max(1.0, np.abs(pd_target).max()))
    assert worst < 1e-12


def test_batched_control_law_matches_loop(gains, plant, rng):
    q, p, qs, ps, pds = rng.standard_normal((5, 4, 3))
    u = control_law((q, p), ReferencePoint(qs, ps, pds), gains, plant)
    for i in range(4):
        ui = control_law((q[i], p[i]), ReferencePoint(qs[i], ps[i], pds[i]), gains, plant)
        np.testing.assert_allclose(u[i], ui, atol=1e-12)


def _fd_eigs_oracle():
    # F_d eigenvalues solve det(lam^2 I - lam (Jbar - Rbar) + I) = 0; the z axis decouples.
    a, b, j, c = RBAR0[0, 0], RBAR0[1, 1], JBAR0[0, 1], RBAR0[2, 2]
    pa, pb = np.poly1d([1, a, 1]), np.poly1d([1, b, 1])
    xy = pa * pb + np.poly1d([j**2, 0, 0])
    return np.concatenate([xy.roots, np.poly1d([1, c, 1]).roots])


class TestContractivity:
    def test_scalar_example(self):
        g, pl = scalar()
        rep = certify_contractivity(g, pl)
        assert rep.alpha == 1.0 and rep.beta == 1.0 and rep.eta == 0.0
        np.testing.assert_allclose(np.sort_complex(rep.fd_eigenvalues), [-1, -1], atol=1e-7)
        # eta = 0 makes N block triangular: spectrum {-1, -1, 1, 1} for every eps
        for ev in rep.n_matrix_eigenvalues:
            np.testing.assert_allclose(np.sort(ev.real), [-1, -1, 1, 1], atol=1e-7)
        assert rep.fd_hurwitz and all(rep.epsilon_passed) and rep.certified

    def test_preset_gains(self, gains, plant):
        rep = certify_contractivity(gains, plant)
        assert rep.alpha == pytest.approx(1.0) and rep.beta == pytest.approx(30.0)
        assert rep.eta == pytest.approx(29 / 30)
        np.testing.assert_allclose(np.sort_complex(rep.fd_eigenvalues),
                                   np.sort_complex(_fd_eigs_oracle()), rtol=1e-9)
        assert rep.fd_hurwitz and rep.certified and not rep.n_has_imaginary_axis_eig

    def test_preset_frozen_values(self, gains, plant):
        ev = np.sort(certify_contractivity(gains, plant).fd_eigenvalues.real)
        np.testing.assert_allclose(ev, [-42.13096, -34.51633, -10.49471, -0.09528607,
                                        -0.02897179, -0.02373551], rtol=1e-6)

    def test_undamped_is_not_certified(self, plant):
        g = ControllerGains(K0, JBAR0, np.zeros((3, 3)))
        rep = certify_contractivity(g, plant)
        assert not rep.fd_hurwitz and not rep.certified

    def test_bad_inputs(self, gains, plant):
        with pytest.raises(CertificationError):
            certify_contractivity(gains, plant, epsilon_grid=[])
        with pytest.raises(CertificationError):
            certify_contractivity(gains, mechanical_plant(np.eye(2)))
        with pytest.raises(CertificationError):
            certify_contractivity(ControllerGains.stack([gains, gains]), plant)

    def test_report_serializable(self, gains, plant):
        import json
        d = certify_contractivity(gains, plant).to_dict()
        assert json.loads(json.dumps(d))["certified"] is True

    @settings(max_examples=30, deadline=None)
    @given(st.permutations([0, 1, 2]))
    def test_permutation_invariance(self, perm):
        P = np.eye(3)[list(perm)]
        g = ControllerGains(K0, JBAR0, RBAR0)
        gp = ControllerGains(P @ K0 @ P.T, P @ JBAR0 @ P.T, P @ RBAR0 @ P.T)
        pl = mechanical_plant(np.eye(3))
        a, b = certify_contractivity(g, pl), certify_contractivity(gp, pl)
        assert a.certified == b.certified
        assert (a.alpha, a.beta) == pytest.approx((b.alpha, b.beta))
        np.testing.assert_allclose(np.sort_complex(a.fd_eigenvalues),
                                   np.sort_complex(b.fd_eigenvalues), rtol=1e-9, atol=1e-12)


def test_target_matrix_structure(gains):
    Fd = target_matrix(gains)
    np.testing.assert_array_equal(Fd[:3, 3:], np.eye(3))
    np.testing.assert_array_equal(Fd[3:, :3], -np.eye(3))
    np.testing.assert_array_equal(Fd[3:, 3:], JBAR0 - RBAR0)


def test_single_agent_tracks_exponentially(gains, plant):
    """Error of one agent tracking a GCO reference decays at the slowest F_d-derived rate."""
    from formnet.network import build_mesh
    from formnet.simulator import SimConfig, simulate
    spec = FormationSpec([[10.0, 0, 0]], GcoTrajectory(5.0, N0))
    cfg = SimConfig(dt=0.01, t_end=20.0, initial_positions=[[0.6, -0.3, 0.2]])
    log = simulate(cfg, build_mesh(1, [1]), spec, gains, plant)
    e = log.error_norms()[:, 0]
    t = log.times
    mask = (t > 5) & (e > 1e-10)
    rate = -np.polyfit(t[mask], np.log(e[mask]), 1)[0]
    assert rate > 0.5
    assert e[-1] < 1e-3 * e[0]
