import json

import numpy as np


L1 = 'L1'
L2 = 'L2'
NORM_KINDS = (L1, L2)


class AdaptiveDiffusionError(Exception):
    """
    Base class for errors raised by adaptivediff.
    """


class NonFiniteLatentError(AdaptiveDiffusionError):
    """
    Raised when a latent update produces NaN or infinite entries.
    """

    def __init__(self, step_index, norm):
        self.step_index = step_index
        self.norm = norm
        super().__init__('Non-finite latent at step %i (norm %s)'
                         % (step_index, norm))


class WindowUnderfilledError(AdaptiveDiffusionError):
    """
    Raised when a third-order difference is requested before four latents
    have been observed.
    """


class SearchGuardError(AdaptiveDiffusionError):
    """
    Raised when an exhaustive path search would enumerate too many paths.
    """


class ProtocolError(AdaptiveDiffusionError):
    """
    Raised when inputs to the path statistics break the pairing protocol.
    """


class LatentState(object):
    """
    A latent vector x_i of the reverse process together with its step index.

    Arguments
    ---------
    values : array_like
        Flat real vector of dimension D
    step_index : int
        Step index i, counting down from T to 0
    side : int
        Optional side length for a square-grid interpretation of the latent
    """

    def __init__(self, values, step_index, side=None):
        values = np.array(values, dtype=np.float64).ravel()
        if values.size == 0:
            raise ValueError('Latent must have at least one entry')
        if side is not None and side*side != values.size:
            raise ValueError('Side length %i does not match dimension %i'
                             % (side, values.size))
        self.values = values
        self.values.setflags(write=False)
        self.step_index = int(step_index)
        self.side = side


    @property
    def dim(self):
        return self.values.size


    def is_finite(self):
        return bool(np.all(np.isfinite(self.values)))


    def as_grid(self):
        """
        Returns the latent reshaped to a (side, side) array.
        """
        if self.side is None:
            raise ValueError('Latent has no side length')
        return self.values.reshape(self.side, self.side)


    def __repr__(self):
        return 'LatentState(step_index=%i, dim=%i)' % (self.step_index,
                                                       self.dim)


def _values(v):
    if isinstance(v, LatentState):
        return v.values
    return np.asarray(v, dtype=np.float64)


def first_diff(a, b):
    """
    First difference of two latents, Δx_i = x_i - x_{i+1} when called with
    (x_i, x_{i+1}).

    Arguments
    ---------
    a : LatentState or array_like
        Minuend latent
    b : LatentState or array_like
        Subtrahend latent

    Returns
    -------
    return : numpy.array
        Elementwise difference a - b
    """
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError('Dimension mismatch: %s != %s'
                         % (va.shape, vb.shape))
    return va - vb


def latent_norm(v, kind=L2):
    """
    Dimension-normalised norm of a latent or latent difference.

    Arguments
    ---------
    v : array_like
        Vector to measure
    kind : string
        'L1' for the mean absolute value, 'L2' for the root-mean-square

    Returns
    -------
    return : float
        Nonnegative norm value
    """
    v = _values(v)
    if v.size == 0:
        raise ValueError('Cannot take the norm of an empty vector')
    if kind == L1:
        return float(np.mean(np.abs(v)))
    elif kind == L2:
        return float(np.sqrt(np.mean(v*v)))
    raise ValueError('Unknown norm kind %r, expected one of %s'
                     % (kind, NORM_KINDS))


class DiffWindow(object):
    """
    Sliding window over the last four latents x_{i+2}, x_{i+1}, x_i, x_{i-1}
    of a trajectory, holding exactly the history one third-order difference
    needs.
    """

    size = 4

    def __init__(self):
        self.latents = []


    def push(self, latent):
        """
        Appends the newest latent, dropping the oldest once the window is full.

        Arguments
        ---------
        latent : LatentState or array_like
            Newest latent x_{i-1}
        """
        values = _values(latent)
        if self.latents and values.shape != self.latents[-1].shape:
            raise ValueError('Dimension mismatch in window: %s != %s'
                             % (values.shape, self.latents[-1].shape))
        self.latents.append(values)
        if len(self.latents) > self.size:
            self.latents.pop(0)


    @property
    def full(self):
        return len(self.latents) == self.size


    def differences(self):
        """
        Returns the first differences (Δx_{i+1}, Δx_i, Δx_{i-1}).
        """
        if not self.full:
            raise WindowUnderfilledError(
                'Window holds %i of %i latents' % (len(self.latents),
                                                   self.size))
        x2, x1, x0, xm1 = self.latents
        return first_diff(x1, x2), first_diff(x0, x1), first_diff(xm1, x0)


    def middle_diff(self):
        """
        Returns Δx_i = x_i - x_{i+1}, the denominator of the skip criterion.
        """
        return self.differences()[1]


def second_diff(window):
    """
    Second-order latent difference Δ²x_{i-1} = Δx_{i-1} - Δx_i of a fully
    populated window.
    """
    _, d_mid, d_last = window.differences()
    return d_last - d_mid


def third_diff(window):
    """
    Third-order latent difference Δ³x_{i-1} = Δx_{i-1} - 2Δx_i + Δx_{i+1}.

    Arguments
    ---------
    window : DiffWindow
        Fully populated window

    Returns
    -------
    return : numpy.array
        Elementwise third-order difference
    """
    d_next, d_mid, d_last = window.differences()
    return d_last - 2*d_mid + d_next


class Trajectory(object):
    """
    Record of one reverse-diffusion run.

    latents[0] is x_T and latents[-1] is x_0. noises[j] is the noise
    prediction actually used by update j (from step T-j), and evaluated[j]
    tells whether it was freshly evaluated or reused from the cache.
    """

    def __init__(self, latents=None, noises=None, evaluated=None):
        self.latents = list(latents) if latents is not None else []
        self.noises = list(noises) if noises is not None else []
        self.evaluated = list(evaluated) if evaluated is not None else []


    @property
    def T(self):
        return len(self.noises)


    @property
    def final(self):
        return self.latents[-1]


    def skip_path(self):
        return list(self.evaluated)


    def check(self):
        """
        Verifies the length invariants and that every skipped step reused the
        most recently evaluated noise bit-exactly.
        """
        T = self.T
        assert len(self.latents) == T + 1,\
            'Trajectory with {} updates must hold {} latents, found {}'.format(
                T, T+1, len(self.latents))
        assert len(self.evaluated) == T,\
            'Trajectory with {} updates must hold {} flags, found {}'.format(
                T, T, len(self.evaluated))
        cached = None
        for j in range(T):
            if self.evaluated[j]:
                cached = self.noises[j]
            else:
                assert cached is not None,\
                    'Update {} reuses a noise before any evaluation'.format(j)
                assert np.array_equal(self.noises[j], cached),\
                    'Update {} does not reuse the cached noise'.format(j)
        return True


    def noise_for_step(self, i):
        """
        Returns the noise used by the update from step i.
        """
        j = self.T - i
        if j < 0 or j >= self.T:
            raise KeyError('Trajectory has no update from step %i' % i)
        return self.noises[j]


def write_trajectory(trajectory, filename):
    """
    Writes a trajectory as JSON lines, one record per step, followed by a
    record for x_0 with null noise.

    Arguments
    ---------
    trajectory : Trajectory
        Trajectory to store
    filename : string
        Output file name
    """
    with open(filename, 'w') as f:
        for j, latent in enumerate(trajectory.latents):
            if j < trajectory.T:
                noise = [float(v) for v in trajectory.noises[j]]
                evaluated = bool(trajectory.evaluated[j])
            else:
                noise, evaluated = None, None
            record = {'step_index': latent.step_index,
                      'latent': [float(v) for v in latent.values],
                      'noise': noise,
                      'evaluated': evaluated}
            f.write(json.dumps(record) + '\n')


def read_trajectory(filename):
    """
    Reads a trajectory written by write_trajectory().

    Arguments
    ---------
    filename : string
        JSON lines file

    Returns
    -------
    return : Trajectory
        Reconstructed trajectory
    """
    trajectory = Trajectory()
    with open(filename, 'r') as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            trajectory.latents.append(
                LatentState(record['latent'], record['step_index']))
            if record['noise'] is not None:
                trajectory.noises.append(np.array(record['noise'],
                                                  dtype=np.float64))
                trajectory.evaluated.append(bool(record['evaluated']))
    return trajectory


def path_to_string(path):
    """
    Encodes a skip path as a string of 'E' (evaluated) and 'S' (skipped).
    """
    return ''.join('E' if flag else 'S' for flag in path)


def path_from_string(s):
    """
    Decodes a skip path string produced by path_to_string().
    """
    s = s.strip()
    if set(s) - set('ES'):
        raise ValueError('Skip path may only contain E and S: %r' % s)
    return [c == 'E' for c in s]
