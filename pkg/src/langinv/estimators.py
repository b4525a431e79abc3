"""Detector estimators with the scikit-learn fit/predict idiom.

``fit(h, sigma0)`` binds a real-valued channel matrix (caching whatever the
method reuses across observations: SVD, annealing schedule, nulling order or
candidate list) and ``predict(ys)`` maps observation rows to decided symbol
vectors. Hyper-parameters follow the scikit-learn convention: set in
``__init__`` verbatim, so ``get_params`` / ``set_params`` / ``clone`` work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_array, check_int, check_positive
from .detect import (
    ml_oracle_batch,
    mmse_detect_batch,
    project_constellation,
    vblast_detect_batch,
    _vblast_order,
)
from .exceptions import DivergenceError
from .model import ForwardModel, make_constellation
from .sampler import compile_scheme, run_batch, trajectory_rng
from .schedule import (
    DETECTION_DEFAULTS,
    DETECTION_PRESETS,
    DynamicsParams,
    build_schedule,
)
from .score import SpectralDetectionScore

__all__ = [
    "MMSEDetector",
    "VBLASTDetector",
    "MLOracleDetector",
    "LangevinDetector",
]

# cap on sampler rows (symbols x trajectories) evolved at once
_MAX_ROWS = 32768


class _ChannelDetector(BaseEstimator):
    """Shared fit plumbing: store the channel and noise level."""

    def fit(self, h, sigma0: float):
        h = check_array(h, "h", ndim=2)
        if h.shape[0] < h.shape[1]:
            raise ValueError("need at least as many observations as unknowns")
        check_positive(sigma0, "sigma0", strict=False)
        self.model_ = ForwardModel(h, np.zeros(h.shape[0]), float(sigma0))
        self._post_fit()
        return self

    def _post_fit(self):
        pass

    def _check_ys(self, ys) -> np.ndarray:
        check_is_fitted(self, "model_")
        ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
        if ys.shape[1] != self.model_.m:
            raise ValueError("observation length does not match the channel")
        return ys


class MMSEDetector(_ChannelDetector):
    """Linear MMSE equalizer with hard projection."""

    def __init__(self, constellation: str = "QAM16"):
        self.constellation = constellation

    def predict(self, ys) -> np.ndarray:
        ys = self._check_ys(ys)
        return mmse_detect_batch(self.model_.h, self.model_.sigma0, ys,
                                 make_constellation(self.constellation))


class VBLASTDetector(_ChannelDetector):
    """Zero-forcing successive interference cancellation with ordering."""

    def __init__(self, constellation: str = "QAM16"):
        self.constellation = constellation

    def _post_fit(self):
        # fail fast on rank-deficient channels; order is recomputed cheaply
        _vblast_order(self.model_.h)

    def predict(self, ys) -> np.ndarray:
        ys = self._check_ys(ys)
        return vblast_detect_batch(self.model_.h, ys,
                                   make_constellation(self.constellation))


class MLOracleDetector(_ChannelDetector):
    """Exhaustive maximum-likelihood search; exact but exponential."""

    def __init__(self, constellation: str = "QAM16", max_candidates: int = 10**6):
        self.constellation = constellation
        self.max_candidates = max_candidates

    def predict(self, ys) -> np.ndarray:
        ys = self._check_ys(ys)
        return ml_oracle_batch(self.model_.h, ys,
                               make_constellation(self.constellation),
                               self.max_candidates)


class LangevinDetector(_ChannelDetector):
    """Annealed Langevin posterior sampler as a symbol detector.

    Runs ``n_trajectories`` independent annealed chains per observation in
    the SVD basis, projects the final samples onto the alphabet and keeps the
    candidate with the smallest residual. ``order`` selects the dynamics
    (1 overdamped, 2 underdamped, 3 with a memory variable); unset
    hyper-parameters fall back to the preset for (order, n_levels), and
    unset scheme / mass_mode / lam / alpha to the per-order entries of
    :data:`langinv.schedule.DETECTION_DEFAULTS`.

    Predictions are deterministic functions of (seed, channel_index, the
    fitted channel, and the observations).
    """

    def __init__(self, order: int = 3, scheme: str | None = None,
                 n_levels: int = 5, sigma1: float | None = None,
                 sigma_last: float | None = None, eps0: float | None = None,
                 t_inner: int | None = None, tau: float | None = None,
                 gamma: float = 1.0, lam: float | None = None,
                 alpha: float | None = None, n_trajectories: int = 20,
                 mass_mode: str | None = None,
                 precond: str = "spectral", seed: int = 0,
                 channel_index: int = 0, constellation: str = "QAM16"):
        self.order = order
        self.scheme = scheme
        self.n_levels = n_levels
        self.sigma1 = sigma1
        self.sigma_last = sigma_last
        self.eps0 = eps0
        self.t_inner = t_inner
        self.tau = tau
        self.gamma = gamma
        self.lam = lam
        self.alpha = alpha
        self.n_trajectories = n_trajectories
        self.mass_mode = mass_mode
        self.precond = precond
        self.seed = seed
        self.channel_index = channel_index
        self.constellation = constellation

    def _resolved(self) -> dict:
        check_int(self.order, "order", minimum=1)
        preset = DETECTION_PRESETS.get((self.order, self.n_levels), {})
        out = {}
        for key in ("sigma1", "sigma_last", "eps0", "t_inner", "tau"):
            value = getattr(self, key)
            if value is None:
                if key not in preset:
                    raise ValueError(
                        f"{key} not set and no preset exists for "
                        f"order {self.order}, n_levels {self.n_levels}")
                value = preset[key]
            out[key] = value
        defaults = DETECTION_DEFAULTS.get(self.order, DETECTION_DEFAULTS[3])
        for key in ("scheme", "mass_mode", "lam", "alpha"):
            value = getattr(self, key)
            out[key] = defaults[key] if value is None else value
        return out

    def _post_fit(self):
        hp = self._resolved()
        self.schedule_ = build_schedule(
            dim=self.model_.n, n_levels=self.n_levels, sigma1=hp["sigma1"],
            sigma_last=hp["sigma_last"], eps0=hp["eps0"],
            t_inner=int(hp["t_inner"]), tau=hp["tau"], step_rule="detection",
            precond=self.precond, mass_mode=hp["mass_mode"], gamma=self.gamma,
            s=self.model_.s, sigma0=self.model_.sigma0,
        )
        self.scheme_ = compile_scheme(hp["scheme"], order=self.order)
        self.params_ = DynamicsParams(gamma=self.gamma, lam=hp["lam"],
                                      alpha=hp["alpha"])

    def predict(self, ys) -> np.ndarray:
        ys = self._check_ys(ys)
        n_obs = ys.shape[0]
        u = check_int(self.n_trajectories, "n_trajectories", minimum=1)
        const = make_constellation(self.constellation)
        fm = self.model_
        eta = fm.spectral_observation(ys)  # (n_obs, m)
        out = np.empty((n_obs, fm.n))
        per_chunk = max(_MAX_ROWS // u, 1)
        for a in range(0, n_obs, per_chunk):
            b = min(a + per_chunk, n_obs)
            out[a:b] = self._predict_chunk(ys[a:b], eta[a:b], np.arange(a, b),
                                           u, const)
        return out

    def _predict_chunk(self, ys, eta, obs_idx, u, const) -> np.ndarray:
        fm = self.model_
        rows = ys.shape[0]
        eta_rep = np.repeat(eta, u, axis=0)
        score = SpectralDetectionScore(fm, const, self.schedule_.sigmas,
                                       eta=eta_rep)
        gens = [trajectory_rng(self.seed, self.channel_index, int(i) * u + t)
                for i in obs_idx for t in range(u)]
        res = run_batch(self.schedule_, self.params_, self.scheme_, score, gens)
        x = res.x @ fm.v.T  # back from the SVD basis
        proj = project_constellation(x, const)
        resid = np.repeat(ys, u, axis=0) - proj @ fm.h.T
        cost = np.sum(resid**2, axis=1).reshape(rows, u)
        cost[res.diverged.reshape(rows, u)] = np.inf
        best = np.argmin(cost, axis=1)
        if np.any(~np.isfinite(cost[np.arange(rows), best])):
            bad = int(np.argmax(~np.isfinite(cost[np.arange(rows), best])))
            lvl = int(res.div_level[bad * u])
            it = int(res.div_iter[bad * u])
            raise DivergenceError(lvl, it, what="every trajectory")
        proj = proj.reshape(rows, u, -1)
        return proj[np.arange(rows), best]
