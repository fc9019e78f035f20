import os

import numpy as np
import pytest

from adaptivediff.controller import run_baseline
from adaptivediff.denoiser import GmmDenoiser, GmmModel, gmm_epsilon
from adaptivediff.latent import LatentState, latent_norm
from adaptivediff.scheduler import *
from adaptivediff.utils import is_near as near
from adaptivediff.utils import read_csv

from conftest import GOLDEN_DIR


def test_ddim_plan():
    """Build a DDIM plan.
    Test the subsampled schedule, the time grid and the coefficients.
    """
    T, train_steps = 50, 1000
    plan = build_ddim_plan(T)
    betas = np.linspace(1.e-4, 0.02, train_steps)
    alphas_cumprod = np.cumprod(1 - betas)

    assert(plan.T == T and plan.name == DDIM and not plan.stochastic)
    assert(plan.schedule.kind == VP)
    assert(plan.schedule.values[0] == 1.0)
    assert(near(plan.schedule.values[T], alphas_cumprod[-1]))
    assert(near(plan.schedule.values[1], alphas_cumprod[19]))
    assert(near(plan.t_grid[T], 1.0) and plan.t_grid[0] == 0.0)
    assert(np.all(np.diff(plan.schedule.values) < 0))
    for i in (1, 17, T):
        a_prev = plan.schedule.values[i-1]
        a_curr = plan.schedule.values[i]
        f = np.sqrt(a_prev/a_curr)
        assert(near(plan.f[i-1], f))
        assert(near(plan.g[i-1], f*np.sqrt(1-a_curr) - np.sqrt(1-a_prev)))
    assert(np.all(plan.sde_noise_scale == 0))


def test_ddim_plan_errors():
    with pytest.raises(ValueError):
        build_ddim_plan(2000)
    with pytest.raises(ValueError):
        build_ddim_plan(10, beta_start=0.02, beta_end=1.e-4)
    with pytest.raises(ValueError):
        build_ddim_plan(0)


def test_euler_ve_plan():
    """Build an Euler plan on the VE schedule.
    Test exact endpoints, the log-linear grid and f = 1.
    """
    T = 40
    plan = build_euler_ve_plan(T, 80.0, 0.002)
    sigmas = plan.schedule.values
    assert(sigmas[0] == 0.002 and sigmas[-1] == 80.0)
    ratios = sigmas[1:]/sigmas[:-1]
    assert(np.allclose(ratios, ratios[0], rtol=1.e-10))
    np.testing.assert_array_equal(plan.t_grid, sigmas)
    np.testing.assert_array_equal(plan.f, np.ones(T))
    np.testing.assert_allclose(plan.g, sigmas[1:] - sigmas[:-1])
    assert(np.all(plan.g > 0))
    with pytest.raises(ValueError):
        build_euler_ve_plan(10, 1.0, 2.0)


def test_sde_euler_plan():
    """Build the stochastic Euler plan.
    Test that f, g match the deterministic plan and the injected scale.
    """
    ode = build_euler_ve_plan(20)
    sde = build_sde_euler_plan(20, churn=0.5)
    np.testing.assert_array_equal(sde.f, ode.f)
    np.testing.assert_array_equal(sde.g, ode.g)
    np.testing.assert_allclose(sde.sde_noise_scale, 0.5*np.sqrt(ode.g))
    assert(sde.stochastic)

    quiet = build_plan(SDE_EULER, 20, churn=0.0)
    assert(quiet.stochastic and not np.any(quiet.sde_noise_scale))
    assert(build_plan(EULER_VE, 20, churn=3.0).name == EULER_VE)
    with pytest.raises(ValueError):
        build_sde_euler_plan(20, churn=-1.0)
    with pytest.raises(ValueError):
        build_plan('heun', 20)


def test_noise_level():
    """Noise levels of both parameterisations.
    """
    vp = build_ddim_plan(25)
    for i in range(vp.T+1):
        scale, sigma = vp.noise_level(i)
        assert(near(scale**2 + sigma**2, 1.0))
    assert(vp.noise_level(0) == (1.0, 0.0))
    ve = build_euler_ve_plan(25)
    assert(ve.noise_level(25) == (1.0, 80.0))
    with pytest.raises(IndexError):
        ve.noise_level(26)


def test_plan_validation():
    schedule = NoiseSchedule(VE, [1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
    with pytest.raises(AssertionError):
        SchedulerPlan([1.0], [1.0], schedule, EULER_VE)
    with pytest.raises(ValueError):
        SchedulerPlan([1.0, np.inf], [1.0, 2.0], schedule, EULER_VE)
    with pytest.raises(ValueError):
        NoiseSchedule(VE, [4.0, 2.0, 1.0], [4.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        NoiseSchedule(VP, [1.0, 0.5, 0.8], [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        NoiseSchedule('sub-VP', [1.0, 0.5], [0.0, 1.0])


def test_apply_update():
    """One sampler update.
    Test the update formula, injected noise and index checks.
    """
    plan = build_sde_euler_plan(10)
    x = LatentState([1.0, -2.0], 5)
    noise = np.array([0.5, 0.25])
    x_prev = apply_update(plan, 5, x, noise)
    assert(x_prev.step_index == 4)
    np.testing.assert_allclose(x_prev.values,
                               plan.f[4]*x.values - plan.g[4]*noise)
    injected = np.array([0.1, 0.2])
    x_inj = apply_update(plan, 5, x, noise, injected)
    np.testing.assert_allclose(x_inj.values, x_prev.values + injected)

    for i in (0, 11):
        with pytest.raises(IndexError):
            apply_update(plan, i, x, noise)
    with pytest.raises(ValueError):
        apply_update(plan, 5, x, np.zeros(3))
    with pytest.raises(ValueError):
        apply_update(plan, 5, x, noise, np.zeros(3))


def test_noise_stream():
    """Counter-based noise draws.
    Test that a draw depends only on (seed, step).
    """
    stream = NoiseStream(3)
    a = stream.draw(7, 5)
    stream.draw(2, 5)
    np.testing.assert_array_equal(NoiseStream(3).draw(7, 5), a)
    assert(not np.array_equal(NoiseStream(4).draw(7, 5), a))
    assert(not np.array_equal(stream.draw(8, 5), a))

    plan = build_sde_euler_plan(10, churn=2.0)
    np.testing.assert_allclose(stream.injected(plan, 4, 5),
                               plan.sde_noise_scale[3]*stream.draw(4, 5))
    assert(stream.injected(build_euler_ve_plan(10), 4, 5) is None)


def test_draw_initial_latent():
    ve = build_euler_ve_plan(10)
    vp = build_ddim_plan(10)
    x_ve = draw_initial_latent(ve, 16, 2, side=4)
    x_vp = draw_initial_latent(vp, 16, 2)
    assert(x_ve.step_index == 10 and x_ve.side == 4)
    np.testing.assert_allclose(x_ve.values, 80.0*x_vp.values)


def test_plan_csv_golden(tmp_path):
    """Dump a plan and compare with the golden file.
    """
    plan = build_euler_ve_plan(2, sigma_max=8.0, sigma_min=2.0)
    filename = str(tmp_path / 'plan.csv')
    write_plan_csv(plan, filename, tag='golden')
    written = read_csv(filename)
    golden = read_csv(os.path.join(GOLDEN_DIR, 'plan_euler_T2.csv'))
    assert(len(written) == len(golden) == 3)
    for row, ref in zip(written, golden):
        assert(row.keys() == ref.keys())
        for key in PLAN_HEADER:
            if ref[key] == '':
                assert(row[key] == '')
            else:
                assert(near(float(row[key]), float(ref[key])))

    loaded = read_plan_csv(os.path.join(GOLDEN_DIR, 'plan_euler_T2.csv'), VE,
                           EULER_VE)
    np.testing.assert_allclose(loaded.f, plan.f)
    np.testing.assert_allclose(loaded.g, plan.g)
    np.testing.assert_allclose(loaded.t_grid, plan.t_grid)


def ddim_variance_factors(plan, s):
    """Per-step variance factors of DDIM on a zero-mean Gaussian."""
    factors = np.empty(plan.T)
    for i in range(1, plan.T+1):
        a, b = plan.noise_level(i)
        c = plan.f[i-1] - plan.g[i-1]*b/(a**2*s**2 + b**2)
        factors[i-1] = c**2
    return factors


def test_ddim_variance_discrete():
    """Monte-Carlo variance of DDIM latents on a zero-mean Gaussian.
    Test agreement with the exact discrete variance recursion to 2%.
    """
    s, D = 0.5, 100000
    model = GmmModel([1.0], np.zeros((1, D)), [s])
    plan = build_ddim_plan(50)
    x_T = draw_initial_latent(plan, D, 0)
    traj, _ = run_baseline(plan, GmmDenoiser(model), x_T)
    factors = ddim_variance_factors(plan, s)
    variance = 1.0
    for j in range(1, plan.T+1):
        i = plan.T - j + 1
        variance *= factors[i-1]
        empirical = np.mean(traj.latents[j].values**2)
        assert(abs(empirical/variance - 1) < 0.02)


def test_ddim_variance_marginal():
    """DDIM with one sampling step per training step.
    Test that the latent variance follows the forward marginal
    alphabar*s^2 + 1 - alphabar to 2%.
    """
    s, D = 0.5, 10000
    model = GmmModel([1.0], np.zeros((1, D)), [s])
    plan = build_ddim_plan(1000)
    x = draw_initial_latent(plan, D, 1)
    # normalise by the drawn second moment
    m0 = np.mean(x.values**2)
    alphabar = plan.schedule.values
    marginal = alphabar*s**2 + 1 - alphabar
    for i in range(plan.T, 0, -1):
        x = apply_update(plan, i, x,
                         gmm_epsilon(model, x, plan.noise_level(i)))
        expected = m0*marginal[i-1]/marginal[plan.T]
        assert(abs(np.mean(x.values**2)/expected - 1) < 0.02)


def test_euler_first_order():
    """Euler on the VE flow of a zero-mean Gaussian.
    Test that doubling the steps halves the final error.
    """
    s, sigma_max, sigma_min = 0.5, 80.0, 0.002
    model = GmmModel([1.0], np.zeros((1, 4)), [s])
    errors = []
    for T in (50, 100):
        plan = build_euler_ve_plan(T, sigma_max, sigma_min)
        x_T = draw_initial_latent(plan, 4, 3)
        traj, _ = run_baseline(plan, GmmDenoiser(model), x_T)
        exact = x_T.values*np.sqrt((s**2 + sigma_min**2)/
                                   (s**2 + sigma_max**2))
        errors.append(latent_norm(traj.final.values - exact)/
                      latent_norm(exact))
    assert(1.7 <= errors[0]/errors[1] <= 2.3)


def test_identity_steps():
    """Degenerate steps with equal noise levels leave the latent alone.
    """
    f, g = ddim_coefficients(1.0, 1.0)
    assert(f == 1.0 and g == 0.0)
    f, g = euler_coefficients(2.0, 2.0)
    assert(f == 1.0 and g == 0.0)
    f, g = euler_coefficients(2.0, 1.0)
    assert(3.0*f - g*1.0 == 2.0)


def test_injected_variance():
    """Sample variance of the injected increments.
    Test agreement with sde_noise_scale**2 to 5% over 1e5 draws.
    """
    plan = build_sde_euler_plan(50, churn=1.0)
    stream = NoiseStream(8)
    for i in (1, 25, 50):
        increments = stream.injected(plan, i, 100000)
        variance = np.var(increments)
        assert(abs(variance/plan.sde_noise_scale[i-1]**2 - 1) < 0.05)
