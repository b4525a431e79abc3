"""Score functions of annealed posteriors for linear inverse problems.

All functions accept batches: the state may be (dim,) or (batch, dim), and
observation arguments broadcast along leading axes. A "score model" is any
callable ``(state, level) -> score`` with ``level`` indexing the annealing
ladder from 0; the classes at the bottom bind problem data into that shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_array, check_positive
from .model import Constellation, ForwardModel

__all__ = [
    "spectral_likelihood_score",
    "gmm_conditional_expectation",
    "tweedie_prior_score",
    "spectral_prior_score",
    "annealed_channel_likelihood_score",
    "gaussian_prior_score",
    "posterior_score",
    "QuadraticScore",
    "SpectralDetectionScore",
    "GaussianSpectralScore",
    "ChannelToyScore",
]

# entries of |sigma0^2 - sigma_l^2 s^2| below this relative threshold are
# treated as exact zeros by the pseudo-inverse
_PINV_REL = 1e-12


def spectral_likelihood_score(chi, eta, s, sigma0: float, sigma_l: float):
    """Annealed likelihood score in the SVD basis.

    For y = h x + z rotated by the SVD (eta = u.T y, chi = v.T x) the score
    of the level-l likelihood is, coordinate-wise over the singular values,

        s_j * (eta_j - s_j chi_j) / |sigma0^2 - sigma_l^2 s_j^2|

    with the pseudo-inverse convention that vanishing denominators drop the
    coordinate. Coordinates beyond the singular spectrum carry no likelihood
    information and get score 0.
    """
    chi = np.asarray(chi, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    s = check_array(s, "s", ndim=1)
    check_positive(sigma0, "sigma0", strict=False)
    check_positive(sigma_l, "sigma_l", strict=False)
    k = s.size
    if k > chi.shape[-1] or k > eta.shape[-1]:
        raise ValueError("more singular values than available coordinates")
    denom = np.abs(sigma0**2 - sigma_l**2 * s**2)
    thr = _PINV_REL * max(sigma0**2, 1e-30)
    keep = denom > thr
    inv = np.zeros(k)
    inv[keep] = 1.0 / denom[keep]
    out = np.zeros(chi.shape)
    out[..., :k] = s * inv * (eta[..., :k] - s * chi[..., :k])
    return out


def gmm_conditional_expectation(xtilde, sigma_l: float, constellation: Constellation):
    """Posterior mean E[x | xtilde] when x is uniform on the alphabet and
    xtilde = x + N(0, sigma_l^2), evaluated element-wise."""
    check_positive(sigma_l, "sigma_l")
    xtilde = np.asarray(xtilde, dtype=np.float64)
    pts = constellation.points
    logits = -((xtilde[..., None] - pts) ** 2) / (2.0 * sigma_l**2)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return w @ pts


def tweedie_prior_score(xtilde, sigma_l: float, constellation: Constellation):
    """Score of the smoothed alphabet prior: (E[x | xtilde] - xtilde) / sigma_l^2."""
    xtilde = np.asarray(xtilde, dtype=np.float64)
    return (gmm_conditional_expectation(xtilde, sigma_l, constellation)
            - xtilde) / sigma_l**2


def spectral_prior_score(chi, v, sigma_l: float, constellation: Constellation):
    """Smoothed-prior score rotated into the right singular basis.

    Evaluates the element-wise prior score at x = V chi and returns V^T g.
    """
    chi = np.asarray(chi, dtype=np.float64)
    v = check_array(v, "v", ndim=2)
    if v.shape[0] != v.shape[1] or v.shape[0] != chi.shape[-1]:
        raise ValueError("v must be square and match the state dimension")
    x = chi @ v.T
    g = tweedie_prior_score(x, sigma_l, constellation)
    return g @ v


def annealed_channel_likelihood_score(h_tilde, y, p, sigma0: float, gamma_l: float):
    """Likelihood score for estimating a channel matrix from pilots.

    The observation is Y = H P + Z with Z entries N(0, sigma0^2); the level-l
    score in the (flattened, row-major) entries of H is

        (Y - H P) P^T / (sigma0^2 + gamma_l^2).

    ``h_tilde`` may be (m, n), (m*n,), or a batch (batch, m*n).
    """
    y = check_array(y, "y", ndim=2)
    p = check_array(p, "p", ndim=2)
    check_positive(sigma0, "sigma0", strict=False)
    check_positive(gamma_l, "gamma_l", strict=False)
    m, n_p = y.shape
    n = p.shape[0]
    if p.shape[1] != n_p:
        raise ValueError("pilot matrix columns must match observation columns")
    denom = sigma0**2 + gamma_l**2
    if denom == 0.0:
        raise ValueError("sigma0 and gamma_l cannot both be zero")
    h_tilde = np.asarray(h_tilde, dtype=np.float64)
    flat_in = h_tilde.ndim == 1 or (h_tilde.ndim >= 2 and h_tilde.shape[-1] == m * n)
    if h_tilde.shape[-2:] == (m, n) and h_tilde.ndim == 2:
        flat_in = False
    hmat = h_tilde.reshape(h_tilde.shape[:-1] + (m, n)) if flat_in else h_tilde
    resid = y - hmat @ p
    grad = (resid @ p.T) / denom
    return grad.reshape(h_tilde.shape) if flat_in else grad


def gaussian_prior_score(x, mean, cov_diag):
    """Score of N(mean, diag(cov_diag)): -(x - mean) / cov_diag."""
    x = np.asarray(x, dtype=np.float64)
    cov_diag = np.asarray(cov_diag, dtype=np.float64)
    if np.any(cov_diag <= 0):
        raise ValueError("cov_diag must be strictly positive")
    return -(x - mean) / cov_diag


def posterior_score(likelihood, prior):
    """Sum of likelihood and prior scores with a shape consistency check."""
    likelihood = np.asarray(likelihood)
    prior = np.asarray(prior)
    if likelihood.shape != prior.shape:
        raise ValueError("likelihood and prior scores must share a shape")
    return likelihood + prior


@dataclass
class QuadraticScore:
    """Score of a Gaussian with diagonal precision: -lam * (x - center).

    Level-independent; handy for stationary-law checks where the invariant
    covariance is known exactly (lam^{-1} at unit temperature).
    """

    lam: np.ndarray
    center: float = 0.0

    def __post_init__(self):
        self.lam = check_array(np.atleast_1d(self.lam), "lam", ndim=1)
        if np.any(self.lam <= 0):
            raise ValueError("lam must be strictly positive")

    def __call__(self, x, level: int = 0):
        return -self.lam * (np.asarray(x) - self.center)


class SpectralDetectionScore:
    """Annealed posterior score for symbol detection, in the SVD basis.

    Binds a channel (via its SVD), alphabet and noise ladder; ``eta`` is one
    rotated observation (m,) or a batch (batch, m) aligned with the state.
    """

    def __init__(self, model: ForwardModel, constellation: Constellation,
                 sigmas, eta=None):
        self.s = model.s
        self.v = model.v
        self.sigma0 = model.sigma0
        self.constellation = constellation
        self.sigmas = np.asarray(sigmas, dtype=np.float64)
        self.eta = model.spectral_observation() if eta is None else np.asarray(eta)

    def __call__(self, chi, level: int):
        sig = self.sigmas[level]
        lik = spectral_likelihood_score(chi, self.eta, self.s, self.sigma0, sig)
        pri = spectral_prior_score(chi, self.v, sig, self.constellation)
        return posterior_score(lik, pri)


class GaussianSpectralScore:
    """Annealed posterior score with an isotropic Gaussian prior, SVD basis.

    The smoothed prior of N(mean, prior_var I) at level l is Gaussian with
    variance prior_var + sigma_l^2, rotated into the right singular basis.
    """

    def __init__(self, model: ForwardModel, prior_mean, prior_var: float, sigmas):
        self.s = model.s
        self.sigma0 = model.sigma0
        self.prior_var = check_positive(prior_var, "prior_var")
        self.sigmas = np.asarray(sigmas, dtype=np.float64)
        mean = np.broadcast_to(np.asarray(prior_mean, dtype=np.float64),
                               (model.n,))
        self.mean_spec = mean @ model.v
        self.eta = model.spectral_observation()

    def __call__(self, chi, level: int):
        sig = self.sigmas[level]
        lik = spectral_likelihood_score(chi, self.eta, self.s, self.sigma0, sig)
        pri = gaussian_prior_score(chi, self.mean_spec, self.prior_var + sig**2)
        return posterior_score(lik, pri)


class ChannelToyScore:
    """Annealed posterior score for pilot-based channel estimation.

    The state is the row-major flattening of the channel matrix; the prior is
    N(0, I) on the entries and the likelihood annealing weight is
    gamma_l = sigma_l.
    """

    def __init__(self, y, p, sigma0: float, sigmas):
        self.y = check_array(y, "y", ndim=2)
        self.p = check_array(p, "p", ndim=2)
        self.sigma0 = check_positive(sigma0, "sigma0", strict=False)
        self.sigmas = np.asarray(sigmas, dtype=np.float64)

    def __call__(self, h_flat, level: int):
        sig = self.sigmas[level]
        lik = annealed_channel_likelihood_score(h_flat, self.y, self.p,
                                                self.sigma0, sig)
        pri = gaussian_prior_score(h_flat, 0.0, 1.0 + sig**2)
        return posterior_score(lik, pri)
