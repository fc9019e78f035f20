import json
import re

import numpy as np
import pytest

from adaptivediff.controller import *
from adaptivediff.denoiser import GmmDenoiser
from adaptivediff.latent import (LatentState, WindowUnderfilledError,
                                 path_to_string)
from adaptivediff.scheduler import (build_ddim_plan, build_euler_ve_plan,
                                    build_sde_euler_plan, draw_initial_latent)
from adaptivediff.utils import is_near as near


def scalar_state(values, consecutive_skips=0, stochastic=False,
                 noise_active=False):
    state = ControllerState(stochastic=stochastic, noise_active=noise_active)
    for v in values:
        state.window.push(np.array([float(v)]))
    state.consecutive_skips = consecutive_skips
    return state


def test_controller_config():
    cfg = ControllerConfig()
    assert(cfg.as_dict() == {'delta': 0.01, 'c_max': 4, 'warmup': 3,
                             'norm_kind': 'L2', 'sde_delta': 0.01})
    for kwargs in ({'delta': -0.1}, {'delta': float('nan')}, {'c_max': 0},
                   {'c_max': 2.5}, {'warmup': 2}, {'norm_kind': 'Linf'},
                   {'sde_delta': -1.0}):
        with pytest.raises(ValueError):
            ControllerConfig(**kwargs)


def test_should_evaluate():
    """Skip criterion on scalar latents.
    Test the worked examples, the c_max guard and the stationary rule.
    """
    cfg = ControllerConfig(delta=0.01, c_max=4)
    # Δx history (-1, -2, -4): |Δ³| = 1 >= 0.01*2
    assert(should_evaluate(scalar_state([0, -1, -3, -7]), cfg))
    # equal Δx = 2: |Δ³| = 0 < 0.02
    assert(not should_evaluate(scalar_state([0, 2, 4, 6]), cfg))
    assert(should_evaluate(scalar_state([0, 2, 4, 6], consecutive_skips=4),
                           cfg))
    assert(not should_evaluate(scalar_state([1, 1, 1, 1]), cfg))
    assert(should_evaluate(scalar_state([1, 1, 1, 1]),
                           ControllerConfig(delta=0.0)))
    with pytest.raises(WindowUnderfilledError):
        should_evaluate(scalar_state([0, 1, 2]), cfg)


def test_criterion_terms():
    d1, d3 = criterion_terms(scalar_state([0, -1, -3, -7]).window)
    assert(near(d1, 2.0) and near(d3, 1.0))


def test_sde_should_evaluate():
    """Conjunction of the latent and the injected-noise criteria.
    """
    cfg = ControllerConfig(delta=0.01, sde_delta=0.01)
    state = scalar_state([0, 2, 4, 6], stochastic=True, noise_active=True)
    # noise window not full yet
    assert(sde_should_evaluate(state, cfg))
    for n in (0.0, 1.0, -1.0, 5.0):
        state.noise_window.push(np.array([n]))
    assert(sde_should_evaluate(state, cfg))

    smooth = scalar_state([0, 2, 4, 6], stochastic=True, noise_active=True)
    for n in (0.0, 0.5, 1.0, 1.5):
        smooth.noise_window.push(np.array([n]))
    assert(not sde_should_evaluate(smooth, cfg))

    # the latent criterion alone decides when no noise is injected
    quiet = scalar_state([0, 2, 4, 6], stochastic=True, noise_active=False)
    assert(not sde_should_evaluate(quiet, cfg))
    evaluate = scalar_state([0, -1, -3, -7], stochastic=True,
                            noise_active=True)
    assert(sde_should_evaluate(evaluate, cfg))

    with pytest.raises(ValueError):
        sde_should_evaluate(scalar_state([0, 2, 4, 6]), cfg)


def test_run_baseline(denoiser, euler_plan):
    """Full-step runs.
    Test the evaluation count and determinism.
    """
    x_T = draw_initial_latent(euler_plan, 16, 0)
    traj, report = run_baseline(euler_plan, denoiser, x_T)
    assert(report.eval_count == 50 and report.speedup == 1.0)
    assert(denoiser.eval_counter == 50)
    assert(traj.T == 50 and traj.check())
    assert(traj.latents[-1].step_index == 0)
    again, _ = run_baseline(euler_plan, denoiser.fork(), x_T)
    for a, b in zip(traj.latents, again.latents):
        np.testing.assert_array_equal(a.values, b.values)

    with pytest.raises(ValueError):
        run_baseline(euler_plan, denoiser, LatentState(x_T.values, 49))


def test_run_baseline_non_finite(mixture):
    plan = build_euler_ve_plan(10)
    x_T = LatentState(np.full(16, 1.e308), 10)
    with pytest.raises(NonFiniteLatentError):
        run_baseline(plan, GmmDenoiser(mixture), x_T)


def test_ddim_affine_recursion(single_gaussian):
    """DDIM on one Gaussian is an affine recursion in the latent.
    Test the final latent against it to 1e-12.
    """
    plan = build_ddim_plan(50)
    mu = single_gaussian.means[0]
    x_T = draw_initial_latent(plan, 8, 4)
    traj, _ = run_baseline(plan, GmmDenoiser(single_gaussian), x_T)
    y = x_T.values.copy()
    for i in range(plan.T, 0, -1):
        a, b = plan.noise_level(i)
        v = a**2*0.25 + b**2
        y = plan.f[i-1]*y - plan.g[i-1]*b*(y - a*mu)/v
    np.testing.assert_allclose(traj.final.values, y, rtol=1.e-12,
                               atol=1.e-12)


@pytest.mark.parametrize('sampler', ['ddim', 'euler', 'sde', 'sde-quiet'])
def test_zero_delta_is_baseline(mixture, sampler):
    """delta = 0 never skips.
    Test bit-identical final latents against the baseline over 10 seeds.
    """
    builders = {'ddim': lambda: build_ddim_plan(50),
                'euler': lambda: build_euler_ve_plan(50),
                'sde': lambda: build_sde_euler_plan(50, churn=1.0),
                'sde-quiet': lambda: build_sde_euler_plan(50, churn=0.0)}
    plan = builders[sampler]()
    cfg = ControllerConfig(delta=0.0)
    for seed in range(10):
        x_T = draw_initial_latent(plan, 16, seed)
        base, _ = run_baseline(plan, GmmDenoiser(mixture), x_T, seed)
        traj, report = run_adaptive(plan, GmmDenoiser(mixture), x_T, cfg,
                                    seed, reference=base)
        assert(all(traj.evaluated) and report.eval_count == plan.T)
        np.testing.assert_array_equal(traj.final.values, base.final.values)
        assert(report.rms_err == 0.0 and report.psnr == 200.0)


def test_infinite_delta_pattern(denoiser):
    """delta = inf skips whenever the cap allows.
    """
    plan = build_euler_ve_plan(10)
    cfg = ControllerConfig(delta=np.inf, c_max=2)
    x_T = draw_initial_latent(plan, 16, 1)
    traj, report = run_adaptive(plan, denoiser, x_T, cfg, seed=1)
    assert(path_to_string(traj.evaluated) == 'EEESSESSES')
    assert(report.eval_count == 5 and near(report.speedup, 2.0))
    assert(report.skip_count == 5)
    assert(traj.check())


@pytest.mark.parametrize('c_max', [1, 2, 3, 5])
def test_skip_runs_bounded(mixture, c_max):
    """Skip runs never exceed c_max and warmup updates always evaluate.
    """
    plan = build_euler_ve_plan(30, 5.0, 0.05)
    cfg = ControllerConfig(delta=1.0, c_max=c_max, warmup=4)
    for seed in range(5):
        x_T = draw_initial_latent(plan, 16, seed)
        traj, report = run_adaptive(plan, GmmDenoiser(mixture), x_T, cfg,
                                    seed)
        path = path_to_string(traj.evaluated)
        assert(path.startswith('EEEE'))
        assert(max(len(run) for run in re.findall('S*', path)) <= c_max)
        assert(report.eval_count + report.skip_count == plan.T)
        assert(report.speedup == plan.T/report.eval_count)
        assert(traj.check())


def test_sde_noise_window(mixture):
    """Injected-noise window on a churned stochastic plan.
    Test the forced evaluation at the first criterion update and that white
    injected noise keeps every update evaluated at the default threshold.
    """
    plan = build_sde_euler_plan(10, 5.0, 0.05, churn=1.0)
    x_T = draw_initial_latent(plan, 16, 1)
    loose = ControllerConfig(delta=np.inf, c_max=2, sde_delta=1.e6)
    traj, report = run_adaptive(plan, GmmDenoiser(mixture), x_T, loose, 1)
    assert(path_to_string(traj.evaluated) == 'EEEESSESSE')
    assert(report.trace[0]['latent_decision'] is False)
    assert(report.trace[0]['noise_decision'] is None)
    assert(all(r['noise_decision'] is False for r in report.trace[1:]))

    cfg = ControllerConfig(delta=np.inf, c_max=4, sde_delta=0.01)
    for seed in range(5):
        x_T = draw_initial_latent(plan, 16, seed)
        traj, report = run_adaptive(plan, GmmDenoiser(mixture), x_T, cfg,
                                    seed)
        assert(all(traj.evaluated) and report.skip_count == 0)


def test_quiet_sde_matches_ode(mixture):
    """A stochastic plan that injects nothing follows the ODE decisions.
    """
    ode = build_euler_ve_plan(40, 5.0, 0.05)
    sde = build_sde_euler_plan(40, 5.0, 0.05, churn=0.0)
    cfg = ControllerConfig(delta=0.05, c_max=3)
    for seed in range(3):
        x_T = draw_initial_latent(ode, 16, seed)
        a, ra = run_adaptive(ode, GmmDenoiser(mixture), x_T, cfg, seed)
        b, rb = run_adaptive(sde, GmmDenoiser(mixture), x_T, cfg, seed)
        assert(a.evaluated == b.evaluated)
        np.testing.assert_array_equal(a.final.values, b.final.values)
        assert([r['decision'] for r in ra.trace] ==
               [r['decision'] for r in rb.trace])


def test_adaptive_report(denoiser, euler_plan):
    """Report fields and the decision trace of an adaptive run.
    """
    cfg = ControllerConfig(delta=0.5, c_max=4)
    x_T = draw_initial_latent(euler_plan, 16, 6)
    traj, report = run_adaptive(euler_plan, denoiser, x_T, cfg, seed=6)
    assert(denoiser.eval_counter == report.eval_count)
    assert(len(report.trace) == euler_plan.T - cfg.warmup)
    assert(report.trace[0]['position'] == cfg.warmup)
    positions = [r['position'] for r in report.trace]
    for r in report.trace:
        assert(traj.evaluated[r['position']] == r['decision'])
        assert(r['d2x_norm'] >= 0 and r['eps_diff'] >= 0)
        if not traj.evaluated[r['position'] - 1]:
            assert(r['eps_diff'] == 0.0)
    assert(positions == list(range(cfg.warmup, euler_plan.T)))
    record = json.loads(json.dumps(report.as_dict()))
    assert(record['skip_path'] == path_to_string(traj.evaluated))
    assert(record['eval_count'] == report.eval_count)
    assert(set(record) == {'seed', 'sampler', 'delta', 'c_max', 'eval_count',
                           'skip_path', 'speedup', 'l1_err', 'rms_err',
                           'psnr'})
