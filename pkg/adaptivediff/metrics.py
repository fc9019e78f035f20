import numpy as np

from adaptivediff.latent import L1, L2, LatentState, first_diff, latent_norm


PSNR_CAP = 200.0


def psnr(reference, candidate):
    """
    Peak signal-to-noise ratio 10*log10(R^2/MSE) of a candidate latent
    against a reference, with R the dynamic range of the reference.

    Arguments
    ---------
    reference : LatentState or array_like
        Reference latent
    candidate : LatentState or array_like
        Candidate latent

    Returns
    -------
    return : float
        PSNR in dB, capped at 200 dB for identical inputs
    """
    diff = first_diff(reference, candidate)
    if isinstance(reference, LatentState):
        ref = reference.values
    else:
        ref = np.asarray(reference, dtype=np.float64)
    R = float(np.max(ref) - np.min(ref))
    if R == 0:
        raise ValueError('Reference latent has zero dynamic range')
    mse = float(np.mean(diff*diff))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10*np.log10(R*R/mse))


def final_errors(reference, candidate):
    """
    Returns the L1 (mean absolute), rms and PSNR errors of a final latent.
    """
    diff = first_diff(candidate, reference)
    return {'l1_err': latent_norm(diff, L1),
            'rms_err': latent_norm(diff, L2),
            'psnr': psnr(reference, candidate)}
