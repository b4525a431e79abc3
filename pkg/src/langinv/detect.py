"""Symbol detection: candidate selection and classical baselines.

All detectors work on the real-valued model; a "decision" is a vector of
per-real-dimension alphabet points. Batched variants accept observations as
rows and are what the experiment driver uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ._validation import check_array, check_int
from .model import Constellation, ForwardModel

__all__ = [
    "DetectionResult",
    "project_constellation",
    "select_candidate",
    "mmse_detect",
    "mmse_detect_batch",
    "vblast_detect",
    "vblast_detect_batch",
    "ml_oracle",
    "ml_oracle_batch",
    "enumerate_symbol_vectors",
    "symbol_error_rate",
]

# rows processed per residual block in batched exhaustive search
_ML_CHUNK = 2048


@dataclass(frozen=True)
class DetectionResult:
    """Decided symbol vector with its selection residual.

    residual is ||y - h xhat||_2; candidates_used counts the candidates that
    entered the final argmin.
    """

    xhat: np.ndarray
    residual: float
    candidates_used: int


def project_constellation(x, constellation: Constellation) -> np.ndarray:
    """Map each coordinate to the nearest alphabet point.

    Exact midpoints resolve toward the lower-indexed (more negative) point.
    """
    x = np.asarray(x, dtype=np.float64)
    pts = constellation.points
    idx = np.argmin(np.abs(x[..., None] - pts), axis=-1)
    return pts[idx]


def select_candidate(candidates, model: ForwardModel) -> DetectionResult:
    """Pick the candidate with the smallest observation residual.

    Ties resolve to the earliest candidate. Raises on an empty candidate set
    (every trajectory diverged upstream).
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if candidates.size == 0:
        raise ValueError("no candidates to select from")
    resid = np.linalg.norm(model.y - candidates @ model.h.T, axis=1)
    best = int(np.argmin(resid))
    return DetectionResult(xhat=candidates[best], residual=float(resid[best]),
                           candidates_used=candidates.shape[0])


def mmse_detect_batch(h, sigma0: float, ys, constellation: Constellation,
                      es: float | None = None) -> np.ndarray:
    """Linear MMSE equalizer followed by projection, observations as rows.

    ``es`` is the per-real-dimension symbol energy; by default half the
    complex symbol energy, which makes the regularizer sigma0^2 / es the
    textbook noise-to-signal ratio in the real model.
    """
    h = check_array(h, "h", ndim=2)
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if es is None:
        es = constellation.per_dim_energy()
    gram = h.T @ h + (sigma0**2 / es) * np.eye(h.shape[1])
    soft = np.linalg.solve(gram, h.T @ ys.T).T
    return project_constellation(soft, constellation)


def mmse_detect(model: ForwardModel, constellation: Constellation,
                es: float | None = None) -> DetectionResult:
    xhat = mmse_detect_batch(model.h, model.sigma0, model.y, constellation, es)[0]
    resid = float(np.linalg.norm(model.y - model.h @ xhat))
    return DetectionResult(xhat=xhat, residual=resid, candidates_used=1)


def _vblast_order(h: np.ndarray):
    """Detection order and nulling rows for zero-forcing V-BLAST.

    At each stage the stream with the smallest post-nulling noise gain (the
    smallest pseudo-inverse row norm) is detected first. Depends only on the
    channel, so the schedule can be reused across observations.
    """
    m, n = h.shape
    if m < n:
        raise ValueError("V-BLAST needs at least as many rows as streams")
    active = list(range(n))
    order, rows = [], []
    while active:
        sub = h[:, active]
        if np.linalg.matrix_rank(sub) < len(active):
            raise ValueError("channel is rank deficient")
        pinv = np.linalg.pinv(sub)
        gains = np.linalg.norm(pinv, axis=1)
        j = int(np.argmin(gains))
        order.append(active[j])
        rows.append(pinv[j])
        active.pop(j)
    return order, rows


def vblast_detect_batch(h, ys, constellation: Constellation) -> np.ndarray:
    """Ordered successive interference cancellation, observations as rows."""
    h = check_array(h, "h", ndim=2)
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    order, rows = _vblast_order(h)
    resid = ys.copy()
    out = np.empty((ys.shape[0], h.shape[1]))
    for stream, w in zip(order, rows):
        soft = resid @ w
        hard = project_constellation(soft, constellation)
        out[:, stream] = hard
        resid -= np.outer(hard, h[:, stream])
    return out


def vblast_detect(model: ForwardModel, constellation: Constellation) -> DetectionResult:
    xhat = vblast_detect_batch(model.h, model.y, constellation)[0]
    resid = float(np.linalg.norm(model.y - model.h @ xhat))
    return DetectionResult(xhat=xhat, residual=resid, candidates_used=1)


def enumerate_symbol_vectors(n_u: int, constellation: Constellation,
                             max_candidates: int = 10**6) -> np.ndarray:
    """All real-valued symbol vectors of n_u complex symbols, (count, 2 n_u).

    The complex alphabet is swept real-part-major per antenna, antennas
    nested left to right. Guarded by ``max_candidates``.
    """
    check_int(n_u, "n_u", minimum=1)
    pts = constellation.points
    k = pts.size**2
    count = k**n_u
    if count > max_candidates:
        raise ValueError(
            f"{count} candidates exceed the exhaustive-search cap {max_candidates}")
    alphabet = [(re, im) for re in pts for im in pts]
    out = np.empty((count, 2 * n_u))
    for i, combo in enumerate(product(alphabet, repeat=n_u)):
        out[i, :n_u] = [c[0] for c in combo]
        out[i, n_u:] = [c[1] for c in combo]
    return out


def ml_oracle_batch(h, ys, constellation: Constellation,
                    max_candidates: int = 10**6) -> np.ndarray:
    """Exact maximum-likelihood decisions by exhaustive search, rows in ys."""
    h = check_array(h, "h", ndim=2)
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    n_u = h.shape[1] // 2
    cand = enumerate_symbol_vectors(n_u, constellation, max_candidates)
    hc = cand @ h.T  # (count, m)
    sq = np.sum(hc**2, axis=1)
    out = np.empty((ys.shape[0], h.shape[1]))
    for a in range(0, ys.shape[0], _ML_CHUNK):
        block = ys[a:a + _ML_CHUNK]
        # ||y - Hc||^2 = ||y||^2 - 2 y.Hc + ||Hc||^2; the ||y||^2 term is
        # constant along the candidate axis and can be dropped
        scores = -2.0 * block @ hc.T + sq
        out[a:a + _ML_CHUNK] = cand[np.argmin(scores, axis=1)]
    return out


def ml_oracle(model: ForwardModel, constellation: Constellation,
              max_candidates: int = 10**6) -> DetectionResult:
    xhat = ml_oracle_batch(model.h, model.y, constellation, max_candidates)[0]
    resid = float(np.linalg.norm(model.y - model.h @ xhat))
    n_u = model.n // 2
    return DetectionResult(xhat=xhat, residual=resid,
                           candidates_used=constellation.n_points**(2 * n_u))


def symbol_error_rate(decisions, truth) -> float:
    """Fraction of complex symbols decided wrongly.

    Inputs are real-valued vectors (rows of them); the complex symbol j pairs
    coordinate j with coordinate j + n_u, and counts as an error if either
    half differs.
    """
    decisions = np.atleast_2d(np.asarray(decisions, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if decisions.shape != truth.shape:
        raise ValueError("decisions and truth must have matching shapes")
    n_u = decisions.shape[1] // 2
    wrong = (decisions[:, :n_u] != truth[:, :n_u]) \
        | (decisions[:, n_u:] != truth[:, n_u:])
    return float(np.mean(wrong))
