"""Tests for the fixed-step simulation, dropout, and metrics extraction."""

import math
import warnings

import numpy as np
import pytest

from fencesim import (AgentState, CollisionDetected, Diverged, Gains,
                      MetricsReport, PotentialParams, Scenario, TargetState,
                      Thresholds, TrajectoryLog, ValidationError, Vec2,
                      metrics, random_scenario, rk4_step, run,
                      target_state_at, world_derivative)

from scenarios import (C2_GAINS, PAPER_GAINS, POTENTIAL, PAPER_TARGET,
                      SQUARE_OFFSETS, equilibrium_formation, paper_scenario)


class TestScenarioValidation:
    def test_c1_enforced(self):
        agents = (AgentState.at_rest(Vec2(0, 0)), AgentState.at_rest(Vec2(1, 0)))
        with pytest.raises(ValidationError):
            Scenario(n=2, initial_agents=agents, target0=PAPER_TARGET,
                     gains=PAPER_GAINS, potential=POTENTIAL)

    def test_dropout_bounds(self):
        agents = tuple(AgentState.at_rest(Vec2(10 * i, 0)) for i in range(3))
        with pytest.raises(ValidationError):
            Scenario(n=3, initial_agents=agents, target0=PAPER_TARGET,
                     gains=PAPER_GAINS, potential=POTENTIAL,
                     dropout=(5, 10.0))
        with pytest.raises(ValidationError):
            Scenario(n=3, initial_agents=agents, target0=PAPER_TARGET,
                     gains=PAPER_GAINS, potential=POTENTIAL,
                     dropout=(0, 250.0))

    def test_label_fixed_needs_offsets(self):
        agents = tuple(AgentState.at_rest(Vec2(10 * i, 0)) for i in range(3))
        with pytest.raises(ValidationError):
            Scenario(n=3, initial_agents=agents, target0=PAPER_TARGET,
                     gains=PAPER_GAINS, potential=POTENTIAL,
                     controller_kind="label_fixed")


class TestWorldDerivative:
    def test_rigid_formation_is_steady(self):
        # repulsion-balanced regular polygon on the regulator manifold:
        # velocity errors stay at integration-noise level over one step
        scenario = paper_scenario(gains=C2_GAINS, n=4, t_end=1.0)
        agents = equilibrium_formation(4, C2_GAINS, POTENTIAL, PAPER_TARGET)
        y = np.concatenate([a.stacked() for a in agents] + [PAPER_TARGET.sigma()])

        deriv = world_derivative(agents, PAPER_TARGET, scenario)
        # velocity errors are exactly zero, so position rates match v_d
        for i in range(4):
            np.testing.assert_allclose(deriv[8 * i:8 * i + 2],
                                       [0.5, 0.5], atol=1e-10)

        def f(state):
            ags = [AgentState.from_stacked(state[8 * i:8 * i + 8]) for i in range(4)]
            tgt = TargetState(Vec2(state[-4], state[-3]), Vec2(state[-2], state[-1]),
                              PAPER_TARGET.s1)
            return world_derivative(ags, tgt, scenario)

        y1 = rk4_step(y, 0.01, f)
        vd1 = y1[-2:]
        for i in range(4):
            verr = np.hypot(y1[8 * i + 2] - vd1[0], y1[8 * i + 3] - vd1[1])
            assert verr < 1e-8

    def test_global_equilibrium_single_agent(self):
        target = TargetState(Vec2(0, 0), Vec2(0, 0), 0.0)
        scenario = Scenario(n=1, initial_agents=(AgentState.at_rest(Vec2(0, 0)),),
                            target0=target, gains=PAPER_GAINS, potential=POTENTIAL,
                            t_end=1.0)
        deriv = world_derivative([AgentState.at_rest(Vec2(0, 0))], target, scenario)
        assert np.abs(deriv).max() == 0.0

    def test_repulsion_cancels_in_total_acceleration(self):
        rng = np.random.default_rng(40)
        scenario = paper_scenario(n=4, t_end=1.0)
        big_k5 = Gains(PAPER_GAINS.k1, PAPER_GAINS.k2, PAPER_GAINS.k3,
                       PAPER_GAINS.k4, 500.0)
        scenario_big = paper_scenario(gains=big_k5, n=4, t_end=1.0)
        agents = []
        while len(agents) < 4:
            st = AgentState(Vec2(*rng.uniform(-8, 8, 2)), Vec2(*rng.normal(size=2)),
                            Vec2(*rng.normal(size=2)), Vec2(*rng.normal(size=2)))
            if all((st.x - a.x).norm() > 2.5 for a in agents):
                agents.append(st)
        d_small = world_derivative(agents, PAPER_TARGET, scenario)
        d_big = world_derivative(agents, PAPER_TARGET, scenario_big)
        acc_small = sum(d_small[8 * i + 2:8 * i + 4] for i in range(4))
        acc_big = sum(d_big[8 * i + 2:8 * i + 4] for i in range(4))
        np.testing.assert_allclose(acc_small, acc_big, atol=1e-10)


class TestRk4Step:
    def test_target_only_matches_closed_form(self):
        s1 = -0.1

        def f(y):
            return np.array([y[2], y[3], s1 * y[0], s1 * y[1]])

        y = np.array([2.0, 8.0, 0.5, 0.5])
        for _ in range(1000):
            y = rk4_step(y, 1e-3, f)
        x, v = target_state_at(Vec2(2, 8), Vec2(0.5, 0.5), s1, 1.0)
        np.testing.assert_allclose(y, [x.x, x.y, v.x, v.y], atol=1e-10)

    def test_fourth_order_convergence(self):
        s1 = -0.5

        def f(y):
            return np.array([y[2], y[3], s1 * y[0], s1 * y[1]])

        def err(dt):
            y = np.array([1.0, -1.0, 0.3, 0.7])
            for _ in range(round(2.0 / dt)):
                y = rk4_step(y, dt, f)
            x, v = target_state_at(Vec2(1, -1), Vec2(0.3, 0.7), s1, 2.0)
            return np.abs(y - [x.x, x.y, v.x, v.y]).max()

        ratio = err(0.02) / err(0.01)
        assert 8.0 < ratio < 32.0

    def test_zero_derivative_is_identity(self):
        y = np.array([1.0, 2.0, 3.0])
        y2 = rk4_step(y, 0.5, lambda s: np.zeros_like(s))
        assert np.array_equal(y, y2)


class TestRun:
    def test_determinism(self):
        a = run(paper_scenario(t_end=5.0))
        b = run(paper_scenario(t_end=5.0))
        assert a.times == b.times
        for sa, sb in zip(a.agents, b.agents):
            assert sa == sb
        assert a.hull_distance == b.hull_distance
        assert a.lyapunov_v1 == b.lyapunov_v1

    def test_label_symmetry_exact(self):
        rng = np.random.default_rng(41)
        base = paper_scenario(t_end=5.0)
        for _ in range(3):
            perm = list(rng.permutation(base.n))
            permuted = Scenario(
                n=base.n,
                initial_agents=tuple(base.initial_agents[p] for p in perm),
                target0=base.target0, gains=base.gains, potential=base.potential,
                dt=base.dt, t_end=base.t_end, log_stride=base.log_stride)
            log_a = run(base)
            log_b = run(permuted)
            for ta, tb in zip(log_a.agents, log_b.agents):
                for slot, p in enumerate(perm):
                    assert tb[slot] == ta[p]
            assert log_a.fencing_error == log_b.fencing_error
            assert log_a.hull_distance == log_b.hull_distance
            assert log_a.min_pairwise_distance == log_b.min_pairwise_distance
            assert log_a.lyapunov_v1 == log_b.lyapunov_v1

    def test_single_agent_tracks_target(self):
        scenario = paper_scenario(n=1, s1=0.0, t_end=100.0)
        log = run(scenario)
        final = log.agents[-1][0]
        err = (final.x - log.target[-1].x_d).norm()
        assert err < 1e-2
        assert log.hull_distance[-1] < 1e-2
        assert log.min_pairwise_distance[-1] == math.inf

    def test_warns_without_rigid_formation_condition(self):
        with pytest.warns(UserWarning, match="rigid-formation"):
            run(paper_scenario(t_end=0.5))

    def test_rejects_fencing_violating_gains(self):
        bad = Gains(1.0, 1.0, 5.0, 0.5, 1.0)
        with pytest.raises(ValidationError):
            run(paper_scenario(gains=bad, t_end=1.0))

    def test_collision_aborts_with_partial_log(self):
        # two agents, negligible repulsion: both dive for the target and meet
        weak = Gains(2.2, 6.0, 0.1, 3.0, 1e-8)
        agents = (AgentState.at_rest(Vec2(-8.0, 0.0)),
                  AgentState.at_rest(Vec2(8.0, 0.0)))
        target = TargetState(Vec2(0.0, 0.0), Vec2(0.0, 0.0), -0.1)
        scenario = Scenario(n=2, initial_agents=agents, target0=target,
                            gains=weak, potential=POTENTIAL, t_end=60.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(CollisionDetected) as exc_info:
                run(scenario)
        err = exc_info.value
        assert err.log is not None and len(err.log.times) > 0
        assert 0.0 < err.time <= 60.0

    def test_divergence_guard(self):
        # a stable loop stepped far beyond its RK4 stability limit blows up
        scenario = paper_scenario(gains=Gains(2.2, 33.0, 0.1, 3.0, 20.0),
                                  t_end=500.0)
        object.__setattr__(scenario, "dt", 1.0)
        with pytest.raises(Diverged):
            run(scenario)

    def test_dropout_removes_agent(self):
        scenario = paper_scenario(t_end=4.0, dropout=(2, 2.0), log_stride=10)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            log = run(scenario)
        for t, snap in zip(log.times, log.agents):
            if t <= 2.0:
                assert all(s is not None for s in snap)
            else:
                assert snap[2] is None
                assert sum(s is not None for s in snap) == 3

    def test_s1_zero_reduction_converges(self):
        scenario = paper_scenario(gains=C2_GAINS, n=3, s1=0.0, t_end=150.0, seed=2)
        log = run(scenario)
        assert log.fencing_error[-1].norm() < 1e-2
        verrs = [v for v in log.velocity_errors[-1] if v is not None]
        assert max(verrs) < 1e-2
        assert log.hull_distance[-1] == 0.0

    def test_lyapunov_logged_only_with_c2(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            log_paper = run(paper_scenario(t_end=1.0))
        assert all(v is None for v in log_paper.lyapunov_v1)
        log_c2 = run(paper_scenario(gains=C2_GAINS, t_end=1.0))
        assert all(v is not None for v in log_c2.lyapunov_v1)

    def test_lyapunov_nonincreasing_along_c2_run(self):
        log = run(paper_scenario(gains=C2_GAINS, t_end=40.0, log_stride=1))
        v1 = log.lyapunov_v1
        for a, b in zip(v1, v1[1:]):
            assert b <= a + 1e-6 * (1.0 + a)


class TestRotatingFormationCharacterization:
    """With the printed gains (rigid-formation equality violated, s1 < 0)
    the agents settle into a formation rotating at the target frequency:
    pairwise distances become constant while velocity errors lock near
    w * rho. This documents the observed closed-loop behavior that the
    rigid-formation condition exists to exclude.
    """

    def test_velocity_error_locks_at_rotation_speed(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            log = run(paper_scenario(t_end=200.0))
        verrs = [v for v in log.velocity_errors[-1] if v is not None]
        rho = np.mean([ (log.agents[-1][i].x - log.target[-1].x_d).norm()
                        for i in range(4)])
        w = math.sqrt(0.1)
        assert max(verrs) == pytest.approx(w * rho, rel=0.05)
        # while the fencing error itself has converged
        assert log.fencing_error[-1].norm() < 1e-6


class TestMetrics:
    def _make_log(self, times, ebar, hull, dmin, verr, scenario=None):
        scenario = scenario or paper_scenario(t_end=times[-1] or 1.0)
        n = scenario.n
        log = TrajectoryLog(scenario=scenario)
        for i, t in enumerate(times):
            log.times.append(t)
            log.agents.append([AgentState.at_rest(Vec2(30 * k + i * 0.001, 0))
                               for k in range(n)])
            log.target.append(PAPER_TARGET)
            log.fencing_error.append(Vec2(ebar[i], 0.0))
            log.hull_distance.append(hull[i])
            log.min_pairwise_distance.append(dmin[i])
            log.velocity_errors.append([verr[i]] * n)
            log.lyapunov_v1.append(None)
        return log

    def test_collided_log_reports_collision(self):
        times = [0.0, 0.1, 0.2]
        log = self._make_log(times, [1, 1, 1], [1, 1, 1], [5.0, 1.9, 5.0], [1, 1, 1])
        rep = metrics(log)
        assert rep.collision
        assert rep.min_distance_overall == 1.9

    def test_exact_tracking_gives_zero_convergence_time(self):
        times = [0.0, 0.1, 0.2]
        log = self._make_log(times, [0, 0, 0], [0, 0, 0], [5, 5, 5], [0, 0, 0])
        rep = metrics(log)
        assert rep.velocity_converged_at == 0.0
        assert rep.fencing_converged_at == 0.0
        assert rep.hull_contains_target_from == 0.0
        assert not rep.collision

    def test_convergence_requires_staying_below(self):
        times = [0.0, 1.0, 2.0, 3.0, 4.0]
        # dips below the threshold at t=1 but pops back above at t=2
        log = self._make_log(times, [1.0, 0.01, 1.0, 0.01, 0.01],
                             [1, 1, 1, 0, 0], [5] * 5, [0.2] * 5)
        rep = metrics(log, Thresholds(fencing=0.05, velocity=0.1))
        assert rep.fencing_converged_at == 3.0
        assert rep.velocity_converged_at is None
        assert rep.hull_contains_target_from == 3.0

    def test_peak_oscillation_ignores_initial_transient(self):
        scenario = paper_scenario(t_end=3.0)
        n = scenario.n
        log = TrajectoryLog(scenario=scenario)
        # pair distance swings by 10 before t=1, by 2 after
        for i, t in enumerate([0.0, 0.5, 1.5, 2.0, 3.0]):
            log.times.append(t)
            gap = {0.0: 30.0, 0.5: 40.0, 1.5: 31.0, 2.0: 33.0, 3.0: 32.0}[t]
            agents = [AgentState.at_rest(Vec2(0, 0)),
                      AgentState.at_rest(Vec2(gap, 0))]
            agents += [AgentState.at_rest(Vec2(100 + 30 * k, 100)) for k in range(n - 2)]
            log.agents.append(agents)
            log.target.append(PAPER_TARGET)
            log.fencing_error.append(Vec2(0, 0))
            log.hull_distance.append(0.0)
            log.min_pairwise_distance.append(gap)
            log.velocity_errors.append([0.0] * n)
            log.lyapunov_v1.append(None)
        rep = metrics(log)
        assert rep.peak_pairwise_oscillation == pytest.approx(2.0)

    def test_real_run_reaches_containment(self):
        log = run(paper_scenario(gains=C2_GAINS, t_end=120.0))
        rep = metrics(log)
        assert rep.hull_contains_target_from is not None
        assert not rep.collision
        assert rep.min_distance_overall > POTENTIAL.r


class TestRandomScenario:
    def test_spacing_margin(self):
        for seed in range(5):
            sc = random_scenario(seed=seed, n=6, gains=PAPER_GAINS,
                                 potential=POTENTIAL, target0=PAPER_TARGET)
            pos = [a.x for a in sc.initial_agents]
            for i in range(6):
                for k in range(i + 1, 6):
                    assert (pos[i] - pos[k]).norm() > 3 * POTENTIAL.r
            for a in sc.initial_agents:
                assert -20 <= a.x.x <= 20 and -20 <= a.x.y <= 20
                assert a.v == Vec2(0, 0) and a.eps == Vec2(0, 0)

    def test_deterministic_in_seed(self):
        a = random_scenario(seed=9, n=4, gains=PAPER_GAINS, potential=POTENTIAL,
                            target0=PAPER_TARGET)
        b = random_scenario(seed=9, n=4, gains=PAPER_GAINS, potential=POTENTIAL,
                            target0=PAPER_TARGET)
        assert a.initial_agents == b.initial_agents
