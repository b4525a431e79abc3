"""Observation model for linear inverse problems over finite alphabets.

Everything downstream of this module works in a real-valued representation:
a complex system ``ybar = Hbar @ xbar + zbar`` of size n_r x n_u is lifted to
a real system of size 2*n_r x 2*n_u with the usual block structure
``[[Re, -Im], [Im, Re]]`` and stacked real/imaginary vector parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_array, check_in, check_int, check_positive

__all__ = [
    "Constellation",
    "make_constellation",
    "ChannelSpec",
    "ForwardModel",
    "complex_to_real",
    "real_to_complex",
    "complex_to_real_vector",
    "real_to_complex_vector",
    "exponential_correlation",
    "psd_sqrt",
    "sample_channel",
    "sigma0_from_snr",
    "apply_forward",
    "save_channel_ensemble",
    "load_channel_ensemble",
]

# levels per real dimension for each supported square QAM alphabet
_LEVELS = {"QPSK": 2, "QAM16": 4, "QAM64": 8}


@dataclass(frozen=True)
class Constellation:
    """Per-real-dimension symbol alphabet of a square QAM constellation.

    ``points`` holds the sorted amplitude levels of one real dimension; the
    induced complex constellation is the Cartesian product of two copies and
    has average energy ``energy``.
    """

    name: str
    points: np.ndarray
    energy: float

    def __post_init__(self):
        pts = check_array(self.points, "points", ndim=1)
        if pts.size < 2 or np.any(np.diff(pts) <= 0):
            raise ValueError("points must be at least two strictly increasing levels")
        if not np.allclose(pts, -pts[::-1]):
            raise ValueError("points must be symmetric about zero")
        object.__setattr__(self, "points", pts)
        # complex energy = twice the per-dimension mean square
        if not np.isclose(2.0 * np.mean(pts**2), self.energy, rtol=1e-12):
            raise ValueError("energy inconsistent with points")

    @property
    def n_points(self) -> int:
        return self.points.size

    def per_dim_energy(self) -> float:
        """Average energy of one real dimension (half the complex energy)."""
        return float(np.mean(self.points**2))


def make_constellation(name: str) -> Constellation:
    """Build a unit-energy constellation by name (QPSK, QAM16 or QAM64)."""
    check_in(name, _LEVELS, "constellation name")
    m = _LEVELS[name]
    raw = np.arange(-(m - 1), m, 2, dtype=np.float64)  # odd levels -m+1 .. m-1
    scale = np.sqrt(2.0 * np.mean(raw**2))
    return Constellation(name=name, points=raw / scale, energy=1.0)


@dataclass(frozen=True)
class ChannelSpec:
    """Ensemble description for random channel matrices.

    ``rho`` is the exponential correlation coefficient used on both the
    receive and transmit sides; ``rho = 0`` recovers i.i.d. Rayleigh fading.
    """

    n_r: int
    n_u: int
    rho: float = 0.0

    def __post_init__(self):
        check_int(self.n_r, "n_r", minimum=1)
        check_int(self.n_u, "n_u", minimum=1)
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")


def complex_to_real_vector(xbar: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts: (n,) complex -> (2n,) real."""
    xbar = np.asarray(xbar, dtype=np.complex128)
    return np.concatenate([xbar.real, xbar.imag], axis=-1)


def real_to_complex_vector(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_real_vector` along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        raise ValueError("real vector length must be even")
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def complex_to_real(hbar: np.ndarray, ybar=None):
    """Lift a complex linear system to its real block representation.

    Parameters
    ----------
    hbar : complex array, shape (n_r, n_u)
    ybar : complex array, shape (n_r,), optional

    Returns
    -------
    h : real array, shape (2*n_r, 2*n_u)
    y : real array, shape (2*n_r,), only if ``ybar`` was given
    """
    hbar = np.asarray(hbar, dtype=np.complex128)
    if hbar.ndim != 2:
        raise ValueError("hbar must be a matrix")
    h = np.block([[hbar.real, -hbar.imag], [hbar.imag, hbar.real]])
    if ybar is None:
        return h
    ybar = np.asarray(ybar, dtype=np.complex128)
    if ybar.shape != (hbar.shape[0],):
        raise ValueError("ybar length must match the rows of hbar")
    return h, complex_to_real_vector(ybar)


def real_to_complex(h: np.ndarray, y=None):
    """Invert :func:`complex_to_real`; validates the block structure."""
    h = check_array(h, "h", ndim=2)
    m, n = h.shape
    if m % 2 or n % 2:
        raise ValueError("real block matrix must have even dimensions")
    m, n = m // 2, n // 2
    re, im = h[:m, :n], h[m:, :n]
    if not (np.array_equal(h[:m, n:], -im) and np.array_equal(h[m:, n:], re)):
        raise ValueError("matrix does not have the [[Re,-Im],[Im,Re]] structure")
    hbar = re + 1j * im
    if y is None:
        return hbar
    return hbar, real_to_complex_vector(np.asarray(y, dtype=np.float64))


def exponential_correlation(n: int, rho: float) -> np.ndarray:
    """Correlation matrix with entries rho**|i - j|."""
    check_int(n, "n", minimum=1)
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def psd_sqrt(a: np.ndarray, *, tol: float = 1e-12) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues within ``tol * max(eig)`` of zero are clamped to zero; more
    negative eigenvalues raise, since the input is then not PSD.
    """
    a = check_array(a, "a", ndim=2)
    if a.shape[0] != a.shape[1] or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("a must be symmetric")
    vals, vecs = np.linalg.eigh(a)
    floor = -tol * max(vals.max(), 1.0)
    if np.any(vals < floor):
        raise ValueError("matrix has negative eigenvalues beyond tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def sample_channel(spec: ChannelSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one complex channel matrix from the ensemble.

    Entries of the white core are CN(0, 1); with ``rho > 0`` the core is
    shaped on both sides by the square roots of exponential correlation
    matrices, which leaves every entry with unit second moment.
    """
    he = (rng.standard_normal((spec.n_r, spec.n_u))
          + 1j * rng.standard_normal((spec.n_r, spec.n_u))) / np.sqrt(2.0)
    if spec.rho == 0.0:
        return he
    sr = psd_sqrt(exponential_correlation(spec.n_r, spec.rho))
    su = psd_sqrt(exponential_correlation(spec.n_u, spec.rho))
    return sr @ he @ su


def sigma0_from_snr(snr: float, spec: ChannelSpec,
                    constellation: Constellation) -> float:
    """Noise standard deviation per real dimension for a target linear SNR.

    SNR is defined as E||Hbar xbar||^2 / E||zbar||^2 with the expectation
    taken jointly over channel, symbols and noise. With unit-variance channel
    entries the signal energy is n_r * n_u * energy, the noise energy is
    n_r * sigma0c^2, and the per-real-dimension std is sigma0c / sqrt(2).
    """
    check_positive(snr, "snr")
    sigma0c_sq = spec.n_u * constellation.energy / snr
    return float(np.sqrt(sigma0c_sq / 2.0))


@dataclass(frozen=True)
class ForwardModel:
    """Real-valued linear observation y = h @ x + z, z ~ N(0, sigma0^2 I).

    The SVD of ``h`` is computed once at construction and reused by anything
    that works in the spectral domain. ``u`` and ``v`` are full orthogonal
    bases; ``s`` holds min(m, n) singular values in descending order.
    """

    h: np.ndarray
    y: np.ndarray
    sigma0: float
    u: np.ndarray = field(repr=False, default=None)
    s: np.ndarray = field(repr=False, default=None)
    v: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        h = check_array(self.h, "h", ndim=2)
        y = check_array(self.y, "y", ndim=1, shape=(h.shape[0],))
        if not self.sigma0 >= 0:
            raise ValueError(f"sigma0 must be >= 0, got {self.sigma0}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "y", y)
        if self.u is None:
            u, s, vt = np.linalg.svd(h, full_matrices=True)
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "s", s)
            object.__setattr__(self, "v", vt.T)

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def n(self) -> int:
        return self.h.shape[1]

    def with_observation(self, y: np.ndarray) -> "ForwardModel":
        """Copy of the model with a new observation, sharing the cached SVD."""
        return ForwardModel(self.h, y, self.sigma0, u=self.u, s=self.s, v=self.v)

    def spectral_observation(self, y=None) -> np.ndarray:
        """Rotate an observation into the left singular basis: eta = u.T @ y."""
        y = self.y if y is None else np.asarray(y, dtype=np.float64)
        return y @ self.u  # supports batches of observations in rows


def apply_forward(model: ForwardModel, x: np.ndarray,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Evaluate y = h @ x (+ noise when ``rng`` is given)."""
    x = check_array(x, "x", shape=(model.n,) if np.ndim(x) == 1 else None)
    y = x @ model.h.T
    if rng is not None and model.sigma0 > 0:
        y = y + model.sigma0 * rng.standard_normal(y.shape)
    return y


def save_channel_ensemble(path, channels) -> None:
    """Write complex channel matrices as flat binary (float64, little endian).

    Layout: for each matrix, row-major entries with real and imaginary parts
    interleaved, i.e. re(h[0,0]), im(h[0,0]), re(h[0,1]), ... All matrices in
    one file must share a common shape, which the reader must supply.
    """
    channels = [np.asarray(h, dtype=np.complex128) for h in channels]
    if not channels:
        raise ValueError("channel ensemble is empty")
    shape = channels[0].shape
    if any(h.shape != shape for h in channels):
        raise ValueError("all channel matrices must share one shape")
    flat = np.empty((len(channels), shape[0] * shape[1] * 2), dtype="<f8")
    for i, h in enumerate(channels):
        inter = np.empty(h.size * 2)
        inter[0::2] = h.real.ravel()
        inter[1::2] = h.imag.ravel()
        flat[i] = inter
    flat.ravel().tofile(Path(path))


def load_channel_ensemble(path, n_r: int, n_u: int) -> list[np.ndarray]:
    """Read matrices written by :func:`save_channel_ensemble`."""
    raw = np.fromfile(Path(path), dtype="<f8")
    per = n_r * n_u * 2
    if raw.size == 0 or raw.size % per:
        raise ValueError("file size is not a multiple of one matrix record")
    out = []
    for rec in raw.reshape(-1, per):
        h = rec[0::2] + 1j * rec[1::2]
        out.append(h.reshape(n_r, n_u))
    return out
