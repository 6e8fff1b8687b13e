import numpy as np
import pytest

from formnet.controller import ControllerGains
from formnet.errors import ConfigurationError, SimulationAbort
from formnet.network import FormationSpec, GcoTrajectory, NetworkSnapshot, StaticTrajectory, build_mesh
from formnet.phcore import mechanical_plant
from formnet.simulator import (ClosedLoopNetwork, SimConfig, closed_loop_rhs, integration_step_euler,
                               integration_step_rk4, simulate)

from conftest import JBAR0, K0, N0, RBAR0


class TestSteppers:
    def test_rk4_exponential(self):
        y = integration_step_rk4(np.array([1.0]), 0.0, lambda t, y: y, 0.1)
        assert y[0] == pytest.approx(1.10517091, abs=1e-7)

    def test_euler_exponential(self):
        y = integration_step_euler(np.array([1.0]), 0.0, lambda t, y: y, 0.1)
        assert y[0] == pytest.approx(1.1)

    def test_rk4_order(self):
        def run(dt):
            y = np.array([1.0, 0.0])
            for k in range(int(round(2.0 / dt))):
                y = integration_step_rk4(y, k * dt, lambda t, y: np.array([y[1], -y[0]]), dt)
            return np.linalg.norm(y - [np.cos(2.0), -np.sin(2.0)])
        e = [run(dt) for dt in (0.1, 0.05, 0.025)]
        orders = np.log2(np.array(e[:-1]) / e[1:])
        assert np.all(np.abs(orders - 4) < 0.3)

    def test_oscillator_energy_per_period(self):
        dt = 2 * np.pi / 200
        y = np.array([1.0, 0.0])
        for k in range(200):
            y = integration_step_rk4(y, k * dt, lambda t, y: np.array([y[1], -y[0]]), dt)
        assert abs(0.5 * y @ y - 0.5) < 1e-6

    def test_non_finite_aborts(self):
        with pytest.raises(SimulationAbort):
            integration_step_rk4(np.array([1.0]), 0.0, lambda t, y: y * np.inf, 0.1)


class TestSimConfig:
    @pytest.mark.parametrize("kw", [dict(dt=0), dict(dt=-1), dict(dt=30.0), dict(t_end=1.0, dt=0.3),
                                    dict(integrator="rk45"), dict(accel_mode="lagged"),
                                    dict(perturbation="gauss"), dict(alpha=-1)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigurationError):
            SimConfig(**kw)

    def test_fd_alias(self):
        assert SimConfig(accel_mode="fd").accel_mode == "fd-accel"
        assert SimConfig().n_steps == 4000


def _short(**kw):
    base = dict(dt=0.005, t_end=2.0)
    base.update(kw)
    return SimConfig(**base)


def test_determinism(gains, plant, formation, mesh32):
    a = simulate(_short(seed=7), mesh32, formation, gains, plant)
    b = simulate(_short(seed=7), mesh32, formation, gains, plant)
    for name in ("q", "p", "u", "eq"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = simulate(_short(seed=8), mesh32, formation, gains, plant)
    assert not np.array_equal(a.q, c.q)


def test_sphere_perturbation_norm(gains, plant, formation, mesh32):
    log = simulate(_short(alpha=0.7, t_end=0.1), mesh32, formation, gains, plant)
    np.testing.assert_allclose(log.error_norms()[0], 0.7, rtol=1e-12)


def test_zero_perturbation_stays_in_formation(gains, plant, formation, mesh32):
    log = simulate(_short(perturbation="none", t_end=5.0), mesh32, formation, gains, plant)
    assert log.error_norms().max() < 1e-9


def _hcw_single_agent(q0, v0, dt, steps):
    """Independent single-agent loop: HCW plant, GCO reference, tIDA-PBC written out by hand."""
    n, d = N0, 5.0
    Kinv = np.linalg.inv(K0)
    JR = JBAR0 - RBAR0

    def ref(t):
        c, s = np.cos(n * t), np.sin(n * t)
        q = np.array([d / 2 * c, -d * s, np.sqrt(3) / 2 * d * c])
        v = n * np.array([-d / 2 * s, -d * c, -np.sqrt(3) / 2 * d * s])
        return q, v, -n**2 * q

    def f(t, y):
        q, v = y[:3], y[3:]
        qs, vs, as_ = ref(t)
        L = qs - Kinv @ (JR @ vs - as_)
        drift = np.array([3 * n**2 * q[0] + 2 * n * v[1], -2 * n * v[0], -n**2 * q[2]])
        gradU = np.array([-3 * n**2 * q[0], 0.0, n**2 * q[2]])
        Rv = np.array([-2 * n * v[1], 2 * n * v[0], 0.0])
        u = gradU - K0 @ (q - L) + Rv + JR @ v
        return np.concatenate([v, drift + u])

    y = np.concatenate([q0, v0])
    out = [y]
    for k in range(steps):
        t = k * dt
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y)
    return np.array(out)


def test_single_agent_matches_hand_written_loop(gains, plant, formation):
    g = build_mesh(1, [1])
    cfg = _short(dt=0.01, t_end=5.0, initial_positions=[[0.3, -0.4, 0.5]])
    log = simulate(cfg, g, formation, gains, plant)
    q_r, v_r, _ = formation.leader_trajectory(0.0)
    ref = _hcw_single_agent(q_r + [0.3, -0.4, 0.5], v_r, 0.01, 500)
    np.testing.assert_allclose(log.q[:, 0], ref[:, :3], atol=1e-12)
    np.testing.assert_allclose(log.p[:, 0], ref[:, 3:], atol=1e-12)


def test_two_agent_relative_error_dynamics(gains, plant, formation):
    """The follower's error relative to the leader obeys the target system exactly."""
    g = build_mesh(1, [2])
    log = simulate(_short(), g, formation, gains, plant)
    e = log.eq[:, 1] - log.eq[:, 0]
    ed = log.ep[:, 1] - log.ep[:, 0]
    edd = log.eacc[:, 1] - log.eacc[:, 0]
    res = edd - (-e @ K0.T + ed @ (JBAR0 - RBAR0).T)
    assert np.abs(res).max() < 1e-10


def test_follower_errors_do_not_amplify(gains, plant, formation):
    log = simulate(_short(t_end=10.0), build_mesh(1, [6]), formation, gains, plant)
    en = log.error_norms()
    assert en.max() <= 1.0 + 1e-9
    assert np.all(en[-1] < en[0])


def test_rk4_self_convergence(gains, plant, formation, mesh32):
    def final(dt):
        return simulate(SimConfig(dt=dt, t_end=1.0), mesh32, formation, gains, plant).q[-1]
    ref = final(0.000625)
    errs = [np.abs(final(dt) - ref).max() for dt in (0.01, 0.005, 0.0025)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(orders - 4) < 0.3), orders


def test_rk4_beats_euler(gains, plant, formation):
    """rk4(dt) is closer to rk4(dt/100) than euler(dt) is; euler converges at first order."""
    g = build_mesh(1, [2])
    def run(dt, integ):
        return simulate(SimConfig(dt=dt, t_end=1.0, integrator=integ), g, formation, gains, plant).q[-1]
    dt = 0.01
    ref = run(dt / 100, "rk4")
    e_rk4 = np.abs(run(dt, "rk4") - ref).max()
    e_eu = [np.abs(run(h, "euler") - ref).max() for h in (dt, dt / 10)]
    assert e_rk4 < e_eu[0]
    assert 0.8 < np.log10(e_eu[0] / e_eu[1]) < 1.2


def test_relabelled_network_gives_permuted_trajectory(gains, plant, formation, mesh32, rng):
    N = mesh32.n_agents
    perm = rng.permutation(N)          # new id of old agent i is perm[i]
    preds = [None] * N
    for i, pr in enumerate(mesh32.predecessor_ids):
        preds[perm[i]] = [int(perm[j]) for j in pr]
    offsets = np.empty((N, 3))
    offsets[perm] = formation.offsets_to_leader(mesh32)
    dq = rng.uniform(-1, 1, (N, 3))
    dq_perm = np.empty_like(dq)
    dq_perm[perm] = dq
    net = ClosedLoopNetwork(mesh32, formation, gains, plant, predecessors=preds,
                            leader=int(perm[0]), offsets=offsets)
    a = simulate(_short(initial_positions=dq), mesh32, formation, gains, plant)
    b = simulate(_short(initial_positions=dq_perm), mesh32, formation, gains, plant, network=net)
    np.testing.assert_allclose(b.q[:, perm], a.q, atol=1e-10)


def test_nan_aborts_with_agent_and_time(formation):
    pl = mechanical_plant(np.eye(3))
    stiff = ControllerGains(np.eye(3) * 1e8, np.zeros((3, 3)), np.eye(3))
    with np.errstate(all="ignore"), pytest.warns(RuntimeWarning, match="contractivity"):
        with pytest.raises(SimulationAbort) as info:
            simulate(SimConfig(dt=1.0, t_end=500.0), build_mesh(1, [3]), formation, stiff, pl)
    assert info.value.agent is not None and info.value.time is not None


def test_uncertified_gains_warn(plant, formation):
    g = ControllerGains(K0, JBAR0, np.zeros((3, 3)))
    with pytest.warns(RuntimeWarning, match="contractivity"):
        simulate(_short(t_end=0.1), build_mesh(1, [2]), formation, g, plant)


def test_fd_accel_mode_converges_to_exact_at_first_order(gains, plant, formation, mesh32):
    def gap(dt):
        a = simulate(_short(dt=dt), mesh32, formation, gains, plant)
        b = simulate(_short(dt=dt, accel_mode="fd-accel"), mesh32, formation, gains, plant)
        return np.abs(a.q - b.q).max()
    g1, g2 = gap(0.01), gap(0.005)
    assert 0 < g2 < g1
    assert 0.8 < np.log2(g1 / g2) < 1.2


def test_closed_loop_rhs_modes(gains, plant, formation, mesh32, rng):
    N = mesh32.n_agents
    snap = NetworkSnapshot(0.3, rng.standard_normal((N, 3)), rng.standard_normal((N, 3)))
    qd, pd = closed_loop_rhs(snap, mesh32, formation, gains, plant)
    snap2 = NetworkSnapshot(0.3, snap.q, snap.p, pdot=pd)
    qd2, pd2 = closed_loop_rhs(snap2, mesh32, formation, gains, plant, accel_mode="fd-accel")
    # feeding the exact accelerations back is a fixed point
    np.testing.assert_allclose(pd2, pd, atol=1e-10)
    with pytest.raises(ConfigurationError):
        closed_loop_rhs(snap, mesh32, formation, gains, plant, accel_mode="fd-accel")


def test_heterogeneous_plants_and_gains(formation):
    g = build_mesh(1, [3])
    plants = [mechanical_plant(np.eye(3), stiffness=np.eye(3) * s) for s in (0.0, 1.0, 2.0)]
    gains = [ControllerGains(np.eye(3) * k, np.zeros((3, 3)), np.eye(3) * 3) for k in (1.0, 2.0, 4.0)]
    log = simulate(SimConfig(dt=0.01, t_end=20.0), g, formation, gains, plants)
    assert log.error_norms()[-1].max() < 1e-3


def test_log_outputs(tmp_path, gains, plant, formation, mesh32):
    log = simulate(_short(t_end=0.05), mesh32, formation, gains, plant)
    log.to_csv(tmp_path / "t.csv")
    header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "agent_0_qx", "agent_0_qy", "agent_0_qz"]
    assert len(header) == 1 + 6 * 12
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1:4], log.q[:, 0])
    s = log.summary()
    assert s["n_steps"] == 10 and "scenario_hash" in s["metadata"]
