"""Annealing schedules and dynamics parameters.

A schedule bundles, per noise level: the smoothing level sigma_l, the step
size, and diagonal pre-conditioner / mass matrices. Noise levels follow a
geometric ladder from ``sigma1`` down to ``sigma_last`` with a terminal 0
appended (the terminal entry is never run; it marks the annealing target).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_array, check_in, check_int, check_positive
from .exceptions import ConfigError, DegenerateNoiseError

__all__ = [
    "DynamicsParams",
    "AnnealSchedule",
    "geometric_sigmas",
    "detection_step_sizes",
    "estimation_step_sizes",
    "spectral_preconditioner",
    "mass_from_preconditioner",
    "build_schedule",
    "DETECTION_PRESETS",
    "DETECTION_DEFAULTS",
    "DEFAULT_SCHEMES",
]

# pre-conditioner floor, relative to sigma_l^2
_CLAMP = 1e-12


@dataclass(frozen=True)
class DynamicsParams:
    """Friction and coupling constants of the continuous dynamics.

    gamma: friction of the second-order (velocity) channel.
    lam:   conservative coupling between velocity and the auxiliary memory
           variable of the third-order dynamics.
    alpha: friction of the memory variable.
    """

    gamma: float = 1.0
    lam: float = 1.0
    alpha: float = 1.2

    def __post_init__(self):
        for name in ("gamma", "lam", "alpha"):
            check_positive(getattr(self, name), name)


@dataclass
class AnnealSchedule:
    """Per-level parameters of one annealed run.

    sigmas:   (L+1,) noise levels, strictly decreasing, final entry 0.
    epsilons: (L,) step sizes.
    precond:  (L, dim) diagonal pre-conditioner C_l.
    mass:     (L, dim) diagonal mass M_l.
    tau:      temperature of the target law  pi propto p(x)^(1/tau).
    t_inner:  iterations per level.
    """

    sigmas: np.ndarray
    epsilons: np.ndarray
    precond: np.ndarray
    mass: np.ndarray
    tau: float
    t_inner: int

    def __post_init__(self):
        self.sigmas = check_array(self.sigmas, "sigmas", ndim=1)
        L = self.sigmas.size - 1
        if L < 1:
            raise ConfigError("schedule needs at least one positive level")
        if self.sigmas[-1] != 0.0:
            raise ConfigError("final sigma must be exactly 0")
        lead = self.sigmas[:-1]
        if np.any(lead <= 0) or np.any(np.diff(lead) >= 0):
            raise ConfigError("sigmas must be strictly decreasing and positive")
        self.epsilons = check_array(self.epsilons, "epsilons", shape=(L,))
        if np.any(self.epsilons <= 0):
            raise ConfigError("step sizes must be positive")
        self.precond = np.atleast_2d(check_array(self.precond, "precond"))
        self.mass = np.atleast_2d(check_array(self.mass, "mass"))
        if self.precond.shape[0] != L or self.mass.shape != self.precond.shape:
            raise ConfigError("precond and mass must both have shape (L, dim)")
        if np.any(self.precond <= 0) or np.any(self.mass <= 0):
            raise ConfigError("precond and mass must be strictly positive")
        self.tau = check_positive(self.tau, "tau")
        self.t_inner = check_int(self.t_inner, "t_inner", minimum=1)

    @property
    def n_levels(self) -> int:
        return self.sigmas.size - 1

    @property
    def dim(self) -> int:
        return self.precond.shape[1]


def geometric_sigmas(sigma1: float, sigma_last: float, n_levels: int) -> np.ndarray:
    """Geometric ladder sigma1 -> sigma_last over ``n_levels`` entries, plus 0.

    With a single level only sigma1 is used.
    """
    check_positive(sigma1, "sigma1")
    check_positive(sigma_last, "sigma_last")
    check_int(n_levels, "n_levels", minimum=1)
    if sigma_last > sigma1:
        raise ConfigError("sigma_last must not exceed sigma1")
    if n_levels == 1:
        lead = np.array([sigma1])
    else:
        if sigma_last == sigma1:
            raise ConfigError("sigma_last must be < sigma1 when n_levels > 1")
        exponents = np.arange(n_levels) / (n_levels - 1)
        lead = sigma1 * (sigma_last / sigma1) ** exponents
    return np.append(lead, 0.0)


def detection_step_sizes(eps0: float, sigmas: np.ndarray) -> np.ndarray:
    """Constant step size eps0 / sigma_last^2 at every level."""
    check_positive(eps0, "eps0")
    sigmas = np.asarray(sigmas, dtype=np.float64)
    sigma_last = sigmas[-2] if sigmas[-1] == 0.0 else sigmas[-1]
    return np.full(_lead_count(sigmas), eps0 / sigma_last**2)


def estimation_step_sizes(eps0: float, sigmas: np.ndarray) -> np.ndarray:
    """Level-proportional step sizes eps0 * sigma_l^2 / sigma_last^2."""
    check_positive(eps0, "eps0")
    sigmas = np.asarray(sigmas, dtype=np.float64)
    lead = sigmas[: _lead_count(sigmas)]
    sigma_last = lead[-1]
    return eps0 * lead**2 / sigma_last**2


def _lead_count(sigmas: np.ndarray) -> int:
    return sigmas.size - 1 if sigmas[-1] == 0.0 else sigmas.size


def spectral_preconditioner(sigma_l: float, s: np.ndarray, sigma0: float,
                            dim: int) -> np.ndarray:
    """Diagonal pre-conditioner in the right singular basis.

    Coordinate j uses sigma_l^2 * (1 - sigma_l^2 s_j^2 / sigma0^2) while
    sigma_l * s_j <= sigma0, and sigma_l^2 - sigma0^2 / s_j^2 beyond that.
    Both branches vanish at the crossover, so the result is clamped from
    below at 1e-12 * sigma_l^2. Singular values are zero-padded to ``dim``.
    """
    check_positive(sigma_l, "sigma_l")
    check_positive(sigma0, "sigma0", strict=False)
    s = check_array(s, "s", ndim=1)
    if np.any(s < 0):
        raise ValueError("singular values must be nonnegative")
    if s.size > dim:
        raise ValueError("more singular values than coordinates")
    s_pad = np.zeros(dim)
    s_pad[: s.size] = s
    low = sigma_l * s_pad <= sigma0
    if sigma0 == 0.0 and np.any(low):
        raise DegenerateNoiseError(
            "sigma0 = 0 puts zero singular values on the vanishing branch"
        )
    c = np.empty(dim)
    if np.any(low):
        c[low] = sigma_l**2 * (1.0 - (sigma_l * s_pad[low]) ** 2 / sigma0**2)
    hi = ~low
    if np.any(hi):
        c[hi] = sigma_l**2 - (sigma0 / s_pad[hi]) ** 2
    return np.maximum(c, _CLAMP * sigma_l**2)


def mass_from_preconditioner(c: np.ndarray, gamma: float) -> np.ndarray:
    """Diagonal mass (gamma^2 / 4) * C^{-1}, critically damping each mode."""
    c = check_array(np.atleast_1d(c), "c")
    check_positive(gamma, "gamma")
    if np.any(c <= 0):
        raise ValueError("pre-conditioner entries must be positive")
    return (gamma**2 / 4.0) * (1.0 / c)


def build_schedule(
    *,
    dim: int,
    n_levels: int,
    sigma1: float,
    sigma_last: float,
    eps0: float,
    t_inner: int,
    tau: float,
    step_rule: str = "detection",
    precond: str = "spectral",
    mass_mode: str = "spectral",
    gamma: float = 1.0,
    s: np.ndarray | None = None,
    sigma0: float | None = None,
) -> AnnealSchedule:
    """Assemble an :class:`AnnealSchedule` from scalar configuration keys.

    ``precond`` is "spectral" (requires singular values ``s`` and ``sigma0``)
    or "identity". ``mass_mode`` is "spectral" for (gamma^2/4) C^{-1},
    "matched:<xi>" for xi * C_l (uniform per-mode phase advance across noise
    levels), or "scalar:<value>" for a constant diagonal.
    """
    check_int(dim, "dim", minimum=1)
    check_in(step_rule, ("detection", "estimation"), "step_rule")
    sigmas = geometric_sigmas(sigma1, sigma_last, n_levels)
    if step_rule == "detection":
        eps = detection_step_sizes(eps0, sigmas)
    else:
        eps = estimation_step_sizes(eps0, sigmas)

    if precond == "spectral":
        if s is None or sigma0 is None:
            raise ConfigError("spectral precond requires singular values and sigma0")
        c = np.stack([
            spectral_preconditioner(sig, s, sigma0, dim) for sig in sigmas[:-1]
        ])
    elif precond == "identity":
        c = np.ones((n_levels, dim))
    else:
        raise ConfigError(f"unknown precond mode {precond!r}")

    if mass_mode == "spectral":
        m = mass_from_preconditioner(c, gamma)
    elif mass_mode.startswith(("scalar:", "matched:")):
        kind, _, raw = mass_mode.partition(":")
        try:
            value = float(raw)
        except ValueError as exc:
            raise ConfigError(f"bad {kind} mass {mass_mode!r}") from exc
        if not value > 0:
            raise ConfigError(f"{kind} mass must be > 0, got {value}")
        m = value * c if kind == "matched" else np.full((n_levels, dim), value)
    else:
        raise ConfigError(f"unknown mass_mode {mass_mode!r}")

    return AnnealSchedule(sigmas=sigmas, epsilons=eps, precond=c, mass=m,
                          tau=tau, t_inner=t_inner)


# Detection hyper-parameters per (order, level count):
# sigma1, sigma_last, eps0, t_inner, tau.
DETECTION_PRESETS: dict[tuple[int, int], dict[str, float]] = {
    (1, 5): dict(sigma1=0.4, sigma_last=0.02, eps0=6e-4, t_inner=30, tau=0.01),
    (1, 10): dict(sigma1=1.0, sigma_last=0.01, eps0=3e-5, t_inner=70, tau=0.5),
    (1, 20): dict(sigma1=1.0, sigma_last=0.01, eps0=3e-5, t_inner=70, tau=0.5),
    (2, 5): dict(sigma1=0.4, sigma_last=0.02, eps0=6e-4, t_inner=30, tau=0.01),
    (2, 10): dict(sigma1=1.0, sigma_last=0.01, eps0=3e-5, t_inner=70, tau=0.5),
    (2, 20): dict(sigma1=1.0, sigma_last=0.01, eps0=3e-5, t_inner=70, tau=0.5),
    (3, 5): dict(sigma1=0.4, sigma_last=0.02, eps0=2.2e-4, t_inner=30, tau=0.023),
    (3, 10): dict(sigma1=1.0, sigma_last=0.01, eps0=5e-5, t_inner=70, tau=0.084),
    (3, 20): dict(sigma1=1.0, sigma_last=0.01, eps0=5e-5, t_inner=70, tau=0.084),
}

# default integrator per dynamics order
DEFAULT_SCHEMES = {1: "ULA", 2: "BAOAB", 3: "BCOABC"}

# integrator, mass and memory-friction defaults used by the symbol detector.
# The light matched masses keep every mode oscillating (and hopping between
# wells) down to the last levels; heavier choices freeze the stiff modes
# mid-ladder. lam/alpha = 3 flattens the effective friction lam^2 a/(a^2+w^2)
# across the mode frequencies w so stiff modes equilibrate too.
DETECTION_DEFAULTS = {
    1: dict(scheme="ULA", mass_mode="scalar:1.0", lam=1.0, alpha=1.2),
    2: dict(scheme="ABO", mass_mode="matched:0.4", lam=1.0, alpha=1.2),
    3: dict(scheme="BCOABC", mass_mode="matched:0.3", lam=3.0, alpha=3.0),
}
