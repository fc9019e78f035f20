import logging

import numpy as np
from scipy.special import logsumexp

from adaptivediff.latent import LatentState


logger = logging.getLogger(__name__)

# sup_t |t|*e^t/(1+e^t)^2, attained at t = 1.5434
_SUP_T_SIGMOID_SLOPE = 0.2240


class GmmModel(object):
    """
    Isotropic Gaussian mixture over the clean latent x_0,

        p(x_0) = sum_k w_k N(x_0; mu_k, s_k^2 I).

    Arguments
    ---------
    weights : array_like
        K positive weights summing to one
    means : array_like
        K x D component means
    scales : array_like
        K positive component standard deviations
    """

    def __init__(self, weights, means, scales):
        weights = np.array(weights, dtype=np.float64).ravel()
        means = np.array(means, dtype=np.float64)
        scales = np.array(scales, dtype=np.float64).ravel()
        if means.ndim == 1:
            means = means[None, :]
        K = weights.size
        assert means.shape[0] == K and scales.size == K,\
            'A mixture of {} components needs {} means and {} scales, {} and '\
            '{} were provided'.format(K, K, K, means.shape[0], scales.size)
        if np.any(weights <= 0):
            raise ValueError('Mixture weights must be positive')
        if abs(weights.sum() - 1) > 1.e-12:
            raise ValueError('Mixture weights sum to %r, not 1'
                             % weights.sum())
        if np.any(scales <= 0):
            raise ValueError('Mixture scales must be positive')
        if not np.all(np.isfinite(means)):
            raise ValueError('Mixture means must be finite')
        for a in (weights, means, scales):
            a.setflags(write=False)
        self.weights = weights
        self.means = means
        self.scales = scales


    @property
    def K(self):
        return self.weights.size


    @property
    def dim(self):
        return self.means.shape[1]


    @classmethod
    def from_seed(cls, components, dim, seed, spread=1.0,
                  scale_range=(0.2, 1.0), weights=None):
        """
        Draws means and scales once from a seeded generator.

        Arguments
        ---------
        components : int
            Number of components K
        dim : int
            Latent dimension D
        seed : int
            Generator seed
        spread : float
            Standard deviation of the component means
        scale_range : tuple
            Interval the component scales are drawn from
        weights : array_like
            Mixture weights, uniform if None

        Returns
        -------
        return : GmmModel
            Drawn mixture
        """
        rng = np.random.default_rng(seed)
        means = spread*rng.standard_normal((components, dim))
        scales = rng.uniform(scale_range[0], scale_range[1], components)
        if weights is None:
            weights = np.full(components, 1.0/components)
        return cls(weights, means, scales)


    def as_dict(self):
        return {'weights': self.weights.tolist(),
                'means': self.means.tolist(),
                'scales': self.scales.tolist()}


def _level(noise_level):
    scale, sigma = float(noise_level[0]), float(noise_level[1])
    if sigma < 0:
        raise ValueError('Noise level sigma must be nonnegative, got %s'
                         % sigma)
    return scale, sigma


def _component_terms(model, x, scale, sigma):
    variances = scale**2*model.scales**2 + sigma**2
    diffs = x[None, :] - scale*model.means
    log_probs = np.log(model.weights)\
        - 0.5*model.dim*np.log(2*np.pi*variances)\
        - 0.5*np.sum(diffs**2, axis=1)/variances
    return variances, diffs, log_probs


def gmm_log_density(model, x, noise_level):
    """
    Log density of the noised marginal
    p(x) = sum_k w_k N(x; scale*mu_k, (scale^2 s_k^2 + sigma^2) I).
    """
    scale, sigma = _level(noise_level)
    x = x.values if isinstance(x, LatentState) else np.asarray(x, float)
    _, _, log_probs = _component_terms(model, x, scale, sigma)
    return float(logsumexp(log_probs))


def gmm_epsilon(model, x, noise_level):
    """
    Optimal noise prediction eps*(x) = -sigma*grad log p(x) of the noised
    mixture, with responsibilities computed in log space.

    Arguments
    ---------
    model : GmmModel
        Clean-data mixture
    x : LatentState or array_like
        Noised latent
    noise_level : NoiseLevel
        (scale, sigma) of the marginal; (1, sigma) for VE schedules and
        (sqrt(alphabar), sqrt(1-alphabar)) for VP schedules

    Returns
    -------
    return : numpy.array
        Noise prediction of dimension D
    """
    scale, sigma = _level(noise_level)
    x = x.values if isinstance(x, LatentState) else np.asarray(x, float)
    if x.shape != (model.dim,):
        raise ValueError('Latent dimension %s does not match model dimension '
                         '%i' % (x.shape, model.dim))
    variances, diffs, log_probs = _component_terms(model, x, scale, sigma)
    resp = np.exp(log_probs - logsumexp(log_probs))
    return sigma*np.sum((resp/variances)[:, None]*diffs, axis=0)


def gmm_lipschitz_bound(model, noise_level):
    """
    Certified upper bound on the spatial Lipschitz constant of gmm_epsilon()
    at one noise level.

    The Jacobian is sigma*(sum_k r_k/v_k I - Cov_r(m)) with
    m_k = (x - scale*mu_k)/v_k, so its norm is at most
    sigma*max(max_k 1/v_k, lambda_max(Cov) - min_k 1/v_k), and lambda_max(Cov)
    is bounded by a sum of pairwise responsibility-variation terms.

    Arguments
    ---------
    model : GmmModel
        Clean-data mixture
    noise_level : NoiseLevel
        (scale, sigma) of the marginal

    Returns
    -------
    return : float
        Lipschitz bound, exactly sigma/(s^2 + sigma^2) for one VE component
    """
    scale, sigma = _level(noise_level)
    variances = scale**2*model.scales**2 + sigma**2
    precisions = 1/variances
    variation = 0.0
    for j in range(model.K):
        for k in range(j+1, model.K):
            variation += _responsibility_variation(model, j, k, scale,
                                                   variances)
    return float(sigma*max(precisions.max(), variation - precisions.min()))


def _responsibility_variation(model, j, k, scale, variances):
    """
    Upper bound on r_j*r_k*|m_j - m_k|^2 over all x.
    """
    # Order the pair so that component j is the narrower one.
    if variances[j] > variances[k]:
        j, k = k, j
    pj, pk = 1/variances[j], 1/variances[k]
    mu_j, mu_k = model.means[j], model.means[k]
    alpha = pj - pk
    if alpha <= 1.e-14*pj:
        return 0.25*(scale*pj*np.linalg.norm(mu_j - mu_k))**2
    # log(r_j/r_k) = C - alpha/2*|x - c0|^2 and |m_j - m_k| = alpha*|x - c0|
    c0 = scale*(pj*mu_j - pk*mu_k)/alpha
    C = np.log(model.weights[j]/model.weights[k])\
        - 0.5*model.dim*np.log(variances[j]/variances[k])\
        + 0.5*alpha*np.dot(c0, c0)\
        - 0.5*scale**2*(pj*np.dot(mu_j, mu_j) - pk*np.dot(mu_k, mu_k))
    return 2*alpha*(max(C, 0.0)/4 + _SUP_T_SIGMOID_SLOPE)


class Denoiser(object):
    """
    Handle on a noise prediction model that counts its evaluations. One
    handle belongs to one trajectory; use fork() for a paired run.
    """

    kind = None

    def __init__(self):
        self.eval_counter = 0


    def predict(self, plan, i, latent):
        """
        Evaluates the noise prediction eps(x_i, t_i) for step i.

        Arguments
        ---------
        plan : SchedulerPlan
            Plan providing the noise level of step i
        i : int
            Step index
        latent : LatentState
            Latent x_i

        Returns
        -------
        return : numpy.array
            Noise prediction
        """
        self.eval_counter += 1
        return self._evaluate(plan, i, latent)


    def _evaluate(self, plan, i, latent):
        raise NotImplementedError


    def fork(self):
        raise NotImplementedError


class GmmDenoiser(Denoiser):
    """
    Analytic noise prediction of a Gaussian mixture.

    Arguments
    ---------
    model : GmmModel
        Clean-data mixture
    """

    kind = 'analytic-gmm'

    def __init__(self, model):
        super().__init__()
        self.model = model


    def _evaluate(self, plan, i, latent):
        return gmm_epsilon(self.model, latent, plan.noise_level(i))


    def fork(self):
        return GmmDenoiser(self.model)


def replay_epsilon(recorded, i):
    """
    Returns the noise a recorded trajectory used for the update from step i,
    including cached reuse at skipped steps.

    Arguments
    ---------
    recorded : Trajectory
        Recorded trajectory
    i : int
        Step index

    Returns
    -------
    return : numpy.array
        Recorded noise, bit-exact
    """
    return np.array(recorded.noise_for_step(i), dtype=np.float64, copy=True)


class ReplayDenoiser(Denoiser):
    """
    Serves the noises of a recorded trajectory regardless of the queried
    latent.

    Arguments
    ---------
    recorded : Trajectory
        Trajectory to replay
    """

    kind = 'replay'

    def __init__(self, recorded):
        super().__init__()
        self.recorded = recorded


    def _evaluate(self, plan, i, latent):
        return replay_epsilon(self.recorded, i)


    def fork(self):
        return ReplayDenoiser(self.recorded)
