"""Empirical checks of the samplers' stationary laws and noise relations.

Four families of checks live here: long-run moment comparison against the
known Gaussian invariant of a quadratic target, fluctuation relations of the
stochastic sub-steps, one-step agreement with the equivalent matrix-form SDE,
and a pilot-based channel-estimation toy whose posterior is available in
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import hadamard
from scipy.signal import lfilter
from scipy.stats import ttest_ind

from ._validation import check_array, check_int, check_positive
from .exceptions import ConfigError, DivergenceError
from .model import psd_sqrt
from .sampler import (
    SamplerState,
    SchemeSpec,
    compile_scheme,
    flow_A,
    flow_B,
    flow_C,
    flow_O_order2,
    flow_O_order3,
    run_batch,
    trajectory_rng,
)
from .schedule import AnnealSchedule, DynamicsParams, build_schedule
from .score import ChannelToyScore, QuadraticScore

__all__ = [
    "MomentReport",
    "StationaryReport",
    "InvarianceReport",
    "GenericForm",
    "SlopeReport",
    "FdtReport",
    "ToyReport",
    "sample_stationary",
    "precondition_invariance",
    "order2_generic_form",
    "order3_generic_form",
    "generic_form_step",
    "scheme_one_step",
    "mean_difference_slope",
    "fdt_check",
    "pilot_matrix",
    "gaussian_channel_toy",
    "instability_demo",
]

_SYM_TOL = 1e-10


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class MomentReport:
    """Empirical first and second moments against a known Gaussian target."""

    mean: np.ndarray
    covariance: np.ndarray
    n_samples: int
    max_rel_err_vs_target: float
    tolerance: float
    passed: bool

    def __post_init__(self):
        cov = check_array(self.covariance, "covariance", ndim=2)
        scale = max(1.0, float(np.abs(cov).max()))
        if np.abs(cov - cov.T).max() > _SYM_TOL * scale:
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -_SYM_TOL * scale:
            raise ValueError("covariance must be positive semi-definite")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")


@dataclass(frozen=True)
class StationaryReport:
    """Per-block moment reports from one long fixed-level run."""

    scheme: str
    x: MomentReport
    v: MomentReport | None
    z: MomentReport | None
    chain_moments: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        blocks = [self.x, self.v, self.z]
        return all(b.passed for b in blocks if b is not None)

    def rows(self, test: str) -> list[tuple]:
        out = []
        for name, rep in (("x", self.x), ("v", self.v), ("z", self.z)):
            if rep is None:
                continue
            out.append((test, f"{name}_cov_rel_err", rep.max_rel_err_vs_target,
                        0.0, rep.tolerance, rep.passed))
        return out


@dataclass(frozen=True)
class InvarianceReport:
    """Two-sample comparison of x second moments under different C."""

    p_values: np.ndarray
    significance: float
    passed: bool

    def rows(self, test: str) -> list[tuple]:
        thr = self.significance / self.p_values.size
        return [(test, "min_p_value", float(self.p_values.min()), thr,
                 self.significance, self.passed)]


@dataclass(frozen=True)
class SlopeReport:
    """Log-log decay of the one-step mean gap against the matrix form."""

    epsilons: np.ndarray
    mean_diffs: np.ndarray
    slope: float

    def rows(self, test: str) -> list[tuple]:
        return [(test, "mean_diff_slope", self.slope, 2.0, 0.1, self.slope >= 1.9)]


@dataclass(frozen=True)
class FdtReport:
    """Noise-variance and decay checks of the stochastic sub-step."""

    order: int
    var_rel_err: float
    var_tolerance: float
    corr_rel_errs: tuple
    corr_tolerance: float
    passed: bool

    def rows(self, test: str) -> list[tuple]:
        out = [(test, "noise_var_rel_err", self.var_rel_err, 0.0,
                self.var_tolerance, self.var_rel_err <= self.var_tolerance)]
        for i, err in enumerate(self.corr_rel_errs):
            out.append((test, f"autocorr_rel_err_{i}", err, 0.0,
                        self.corr_tolerance, err <= self.corr_tolerance))
        return out


@dataclass(frozen=True)
class ToyReport:
    """Channel-toy estimation quality next to its closed-form competitor."""

    nmse_db: float
    mmse_nmse_db: float
    n_instances: int
    sigma0: float


# ---------------------------------------------------------------------------
# stationary moments of a quadratic target

def _as_diag(value, dim: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), (dim,)).copy()
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite and strictly positive")
    return arr


def _fixed_level_schedule(dim, lam, c, m, tau, eps, t_inner) -> AnnealSchedule:
    # one level, sigma fixed; sigmas[0] only scales the initial position draw
    sigma_init = float(np.sqrt(tau / lam.min()))
    return AnnealSchedule(
        sigmas=np.array([sigma_init, 0.0]),
        epsilons=np.array([float(eps)]),
        precond=c[None, :].copy(),
        mass=m[None, :].copy(),
        tau=float(tau),
        t_inner=int(t_inner),
    )


class _MomentCollector:
    """Streaming sums of per-step states after a burn-in, batch-aware."""

    def __init__(self, burn_in: int, dim: int, n_chains: int, order: int,
                 per_chain: bool):
        self.burn_in = burn_in
        self.n_chains = n_chains
        self.count = 0
        self.s1 = {k: np.zeros(dim) for k in "xvz"[:order]}
        self.s2 = {k: np.zeros((dim, dim)) for k in "xvz"[:order]}
        self.chain_s2 = np.zeros((n_chains, dim, dim)) if per_chain else None

    def __call__(self, lvl, k, x, v, z):
        if k < self.burn_in:
            return
        self.count += 1
        for key, arr in (("x", x), ("v", v), ("z", z)):
            if key in self.s1 and arr is not None:
                self.s1[key] += arr.sum(axis=0)
                self.s2[key] += arr.T @ arr
        if self.chain_s2 is not None:
            self.chain_s2 += np.einsum("ni,nj->nij", x, x)

    def report(self, key: str, target: np.ndarray, tol: float) -> MomentReport:
        n = self.count * self.n_chains
        mean = self.s1[key] / n
        cov = self.s2[key] / n - np.outer(mean, mean)
        cov = 0.5 * (cov + cov.T)
        err = float(np.linalg.norm(cov - target) / np.linalg.norm(target))
        return MomentReport(mean=mean, covariance=cov, n_samples=n,
                            max_rel_err_vs_target=err, tolerance=tol,
                            passed=err <= tol)


def sample_stationary(scheme, lam, *, c=1.0, m=1.0, tau: float = 1.0,
                      eps: float = 0.01, n_steps: int = 1_000_000,
                      burn_in: int | None = None, n_chains: int = 64,
                      params: DynamicsParams | None = None, seed: int = 0,
                      tol: float = 0.05,
                      return_chain_moments: bool = False) -> StationaryReport:
    """Long fixed-level run against the Gaussian law of 0.5 x^T diag(lam) x.

    ``n_steps`` counts post-burn-in samples pooled over ``n_chains`` parallel
    chains; the first 20 percent of each chain is discarded unless ``burn_in``
    (per-chain steps) says otherwise. Targets are tau diag(1/lam) for x and
    tau diag(m) for v and z.
    """
    spec = scheme if isinstance(scheme, SchemeSpec) else compile_scheme(scheme)
    lam = check_array(np.atleast_1d(np.asarray(lam, dtype=np.float64)),
                      "lam", ndim=1)
    if np.any(lam <= 0):
        raise ValueError("lam must be strictly positive")
    dim = lam.shape[0]
    c = _as_diag(c, dim, "c")
    m = _as_diag(m, dim, "m")
    check_positive(tau, "tau")
    check_positive(eps, "eps")
    n_chains = check_int(n_chains, "n_chains", minimum=1)
    post = -(-check_int(n_steps, "n_steps", minimum=n_chains) // n_chains)
    burn = post // 4 if burn_in is None else check_int(burn_in, "burn_in",
                                                       minimum=0)
    schedule = _fixed_level_schedule(dim, lam, c, m, tau, eps, burn + post)
    collector = _MomentCollector(burn, dim, n_chains, spec.order,
                                 return_chain_moments)
    gens = [trajectory_rng(seed, 0, t) for t in range(n_chains)]
    res = run_batch(schedule, params or DynamicsParams(), spec,
                    QuadraticScore(lam), gens, collector=collector)
    if res.diverged.any():
        j = int(np.argmax(res.diverged))
        raise DivergenceError(int(res.div_level[j]), int(res.div_iter[j]))

    x_rep = collector.report("x", tau * np.diag(1.0 / lam), tol)
    v_rep = (collector.report("v", tau * np.diag(m), tol)
             if spec.order >= 2 else None)
    z_rep = (collector.report("z", tau * np.diag(m), tol)
             if spec.order >= 3 else None)
    chain_moments = None
    if return_chain_moments:
        chain_moments = collector.chain_s2 / collector.count
    return StationaryReport(scheme=spec.name, x=x_rep, v=v_rep, z=z_rep,
                            chain_moments=chain_moments)


def precondition_invariance(scheme, lam, c_a, c_b, *, m=1.0, tau: float = 1.0,
                            eps: float = 0.01, n_steps: int = 1_000_000,
                            n_chains: int = 64, seed: int = 0,
                            significance: float = 0.01) -> InvarianceReport:
    """Two-sample test that the x second moments ignore the choice of C.

    Each chain contributes one mean outer-product matrix; entries are compared
    across the two runs with Welch t-tests at a Bonferroni-corrected level.
    """
    reports = []
    for run_idx, c in enumerate((c_a, c_b)):
        reports.append(sample_stationary(
            scheme, lam, c=c, m=m, tau=tau, eps=eps, n_steps=n_steps,
            n_chains=n_chains, seed=seed + run_idx,
            return_chain_moments=True))
    a, b = (r.chain_moments for r in reports)
    dim = a.shape[1]
    iu = np.triu_indices(dim)
    stats = ttest_ind(a[:, iu[0], iu[1]], b[:, iu[0], iu[1]],
                      equal_var=False, axis=0)
    p_values = np.atleast_1d(stats.pvalue)
    passed = bool(p_values.min() >= significance / p_values.size)
    return InvarianceReport(p_values=p_values, significance=significance,
                            passed=passed)


# ---------------------------------------------------------------------------
# matrix-form dynamics

@dataclass(frozen=True)
class GenericForm:
    """Drift/diffusion matrix form dX = -(D + Q) grad H dt + sqrt(2 tau) D^{1/2} dW."""

    d_matrix: np.ndarray
    q_matrix: np.ndarray
    grad_h: Callable[[np.ndarray], np.ndarray]
    d_sqrt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = check_array(self.d_matrix, "d_matrix", ndim=2)
        q = check_array(self.q_matrix, "q_matrix", ndim=2)
        if d.shape != q.shape or d.shape[0] != d.shape[1]:
            raise ValueError("d_matrix and q_matrix must be square and match")
        scale = max(1.0, float(np.abs(d).max()))
        if np.abs(d - d.T).max() > 1e-12 * scale:
            raise ValueError("d_matrix must be symmetric")
        qscale = max(1.0, float(np.abs(q).max()))
        if np.abs(q + q.T).max() > 1e-12 * qscale:
            raise ValueError("q_matrix must be antisymmetric")
        object.__setattr__(self, "d_sqrt", psd_sqrt(d))


def order2_generic_form(grad_u, c, m, gamma: float, dim: int) -> GenericForm:
    """Matrix form of the velocity dynamics with diagonal C and M."""
    c = _as_diag(c, dim, "c")
    m = _as_diag(m, dim, "m")
    check_positive(gamma, "gamma")
    zero = np.zeros((dim, dim))
    d = np.block([[zero, zero], [zero, gamma * np.diag(m)]])
    q = np.block([[zero, -np.diag(c)], [np.diag(c), zero]])

    def grad_h(state):
        x, v = state[..., :dim], state[..., dim:]
        return np.concatenate([grad_u(x), v / m], axis=-1)

    return GenericForm(d_matrix=d, q_matrix=q, grad_h=grad_h)


def order3_generic_form(grad_u, c, m, lam: float, alpha: float,
                        dim: int) -> GenericForm:
    """Matrix form with the auxiliary memory channel appended."""
    c = _as_diag(c, dim, "c")
    m = _as_diag(m, dim, "m")
    check_positive(lam, "lam")
    check_positive(alpha, "alpha")
    zero = np.zeros((dim, dim))
    lam_m = lam * np.diag(m)
    d = np.block([[zero, zero, zero],
                  [zero, zero, zero],
                  [zero, zero, alpha * np.diag(m)]])
    q = np.block([[zero, -np.diag(c), zero],
                  [np.diag(c), zero, -lam_m],
                  [zero, lam_m, zero]])

    def grad_h(state):
        x = state[..., :dim]
        v = state[..., dim:2 * dim]
        z = state[..., 2 * dim:]
        return np.concatenate([grad_u(x), v / m, z / m], axis=-1)

    return GenericForm(d_matrix=d, q_matrix=q, grad_h=grad_h)


def generic_form_step(gform: GenericForm, state, dt: float, tau: float,
                      rng=None, *, noise=None):
    """Euler-Maruyama step X - (D + Q) grad H dt + sqrt(2 tau dt) D^{1/2} w."""
    state = np.asarray(state, dtype=np.float64)
    check_positive(dt, "dt")
    if noise is None:
        noise = rng.standard_normal(state.shape)
    drift = state - dt * gform.grad_h(state) @ (gform.d_matrix
                                                + gform.q_matrix).T
    return drift + np.sqrt(2.0 * tau * dt) * np.asarray(noise) @ gform.d_sqrt.T


def scheme_one_step(scheme, state: SamplerState, eps: float, score,
                    params: DynamicsParams, c, m, tau: float,
                    noises) -> SamplerState:
    """One composed step built from the sub-flows, with injected O noise."""
    spec = scheme if isinstance(scheme, SchemeSpec) else compile_scheme(scheme)
    noises = list(noises)
    for letter, frac in spec.steps:
        dt = frac * eps
        if letter == "A":
            state = flow_A(state, dt, c, m)
        elif letter == "B":
            state = flow_B(state, dt, c, score(state.x, 0))
        elif letter == "C":
            state = flow_C(state, dt, params.lam)
        elif letter == "O":
            w = noises.pop(0)
            if spec.order == 2:
                state = flow_O_order2(state, dt, params, tau, m, w)
            else:
                state = flow_O_order3(state, dt, params, tau, m, w)
        else:
            raise ValueError("the matrix-form comparison covers orders 2 and 3")
    return state


def mean_difference_slope(scheme, *, lam, c=1.0, m=1.0,
                          params: DynamicsParams | None = None,
                          tau: float = 1.0, x0=None, epsilons=None,
                          n_rep: int = 10_000, seed: int = 0) -> SlopeReport:
    """Slope of log one-step mean gap (composed vs matrix form) in log eps.

    Both paths start from the same point state and share the O-substep
    normals, so the gap estimate is dominated by the deterministic part.
    """
    spec = scheme if isinstance(scheme, SchemeSpec) else compile_scheme(scheme)
    params = params or DynamicsParams()
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    dim = lam.shape[0]
    c = _as_diag(c, dim, "c")
    m = _as_diag(m, dim, "m")
    score = QuadraticScore(lam)

    def grad_u(x):
        return -score(x)

    if spec.order == 2:
        gform = order2_generic_form(grad_u, c, m, params.gamma, dim)
    elif spec.order == 3:
        gform = order3_generic_form(grad_u, c, m, params.lam, params.alpha, dim)
    else:
        raise ValueError("the matrix-form comparison covers orders 2 and 3")

    x0 = np.full(dim, 1.5) if x0 is None else np.asarray(x0, dtype=np.float64)
    v0 = np.full(dim, -0.7)
    z0 = np.full(dim, 0.4)
    epsilons = (np.geomspace(1e-3, 1e-2, 6) if epsilons is None
                else np.asarray(epsilons, dtype=np.float64))
    rng = np.random.default_rng(seed)

    diffs = np.empty(epsilons.shape[0])
    for i, eps in enumerate(epsilons):
        w = rng.standard_normal((n_rep, dim))
        state = SamplerState(
            x=np.tile(x0, (n_rep, 1)),
            v=np.tile(v0, (n_rep, 1)),
            z=np.tile(z0, (n_rep, 1)) if spec.order >= 3 else None)
        out = scheme_one_step(spec, state, float(eps), score, params, c, m,
                              tau, [w])
        blocks = [out.x, out.v] + ([out.z] if spec.order >= 3 else [])
        composed = np.concatenate(blocks, axis=-1)

        flat0 = np.concatenate(
            [np.tile(x0, (n_rep, 1)), np.tile(v0, (n_rep, 1))]
            + ([np.tile(z0, (n_rep, 1))] if spec.order >= 3 else []), axis=-1)
        noise = np.zeros_like(flat0)
        noise[:, -dim:] = w  # diffusion acts on the last block only
        em = generic_form_step(gform, flat0, float(eps), tau, noise=noise)
        diffs[i] = np.linalg.norm((composed - em).mean(axis=0))

    slope = float(np.polyfit(np.log(epsilons), np.log(diffs), 1)[0])
    return SlopeReport(epsilons=epsilons, mean_diffs=diffs, slope=slope)


# ---------------------------------------------------------------------------
# fluctuation relations of the O-substep

def fdt_check(order: int, params: DynamicsParams | None = None, *,
              m=1.0, tau: float = 1.0, dt: float = 0.1, n: int = 100_000,
              lags=(1, 5, 10), n_chains: int = 200, seed: int = 0,
              tol_var: float = 0.03, tol_corr: float = 0.05) -> FdtReport:
    """Noise statistics of the exact O-substep against its target.

    Order 2 draws the one-step update noise ``n`` times and compares its
    variance with tau (1 - e^{-2 gamma dt}) m. Order 3 runs the memory
    recursion at v = 0, compares the stationary variance with tau m and the
    lag autocorrelation with e^{-alpha k dt}.
    """
    order = check_int(order, "order", minimum=2)
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    params = params or DynamicsParams()
    check_positive(dt, "dt")
    check_positive(tau, "tau", strict=False)
    n = check_int(n, "n", minimum=2)
    m_val = float(np.asarray(m, dtype=np.float64))
    rng = np.random.default_rng(seed)

    if order == 2:
        state = SamplerState(x=np.zeros(n), v=np.zeros(n))
        out = flow_O_order2(state, dt, params, tau, m_val,
                            rng.standard_normal(n))
        target = tau * (1.0 - np.exp(-2.0 * params.gamma * dt)) * m_val
        if target == 0.0:
            var_err = float(np.abs(out.v).max())
        else:
            var_err = abs(float(out.v.var()) - target) / target
        return FdtReport(order=2, var_rel_err=var_err, var_tolerance=tol_var,
                         corr_rel_errs=(), corr_tolerance=tol_corr,
                         passed=var_err <= tol_var)

    steps = -(-n // n_chains)
    th = np.exp(-params.alpha * dt)
    scale = np.sqrt(tau * (1.0 - th * th) * m_val)
    z0 = rng.standard_normal(n_chains) * np.sqrt(tau * m_val)
    if tau == 0.0:
        # noiseless recursion must decay exactly geometrically
        state = SamplerState(x=np.zeros(n_chains), v=np.zeros(n_chains),
                             z=np.ones(n_chains))
        out = flow_O_order3(state, dt, params, tau, m_val,
                            rng.standard_normal(n_chains))
        var_err = float(np.abs(out.z - th).max())
        return FdtReport(order=3, var_rel_err=var_err, var_tolerance=tol_var,
                         corr_rel_errs=(), corr_tolerance=tol_corr,
                         passed=var_err == 0.0)
    w = rng.standard_normal((n_chains, steps))
    z, _ = lfilter([scale], [1.0, -th], w, axis=1, zi=(th * z0)[:, None])
    # cross-check the recursion against the implemented flow on step one
    probe = flow_O_order3(SamplerState(x=z0, v=np.zeros(n_chains), z=z0),
                          dt, params, tau, m_val, w[:, 0])
    if not np.allclose(probe.z, z[:, 0], rtol=1e-12, atol=1e-12):
        raise AssertionError("O-substep flow disagrees with its recursion")

    target = tau * m_val
    var_err = abs(float(z.var()) - target) / target
    corr_errs = []
    var = float(z.var())
    for k in lags:
        rho = float(np.mean(z[:, :-k] * z[:, k:])) / var
        corr_errs.append(abs(rho - th**k) / th**k)
    passed = var_err <= tol_var and all(e <= tol_corr for e in corr_errs)
    return FdtReport(order=3, var_rel_err=var_err, var_tolerance=tol_var,
                     corr_rel_errs=tuple(corr_errs), corr_tolerance=tol_corr,
                     passed=passed)


# ---------------------------------------------------------------------------
# Gaussian channel-estimation toy

def pilot_matrix(n_u: int, n_p: int, rng, kind: str = "random") -> np.ndarray:
    """Pilot block with unit-energy columns; random signs or an orthogonal set."""
    n_u = check_int(n_u, "n_u", minimum=1)
    n_p = check_int(n_p, "n_p", minimum=1)
    if kind == "random":
        return rng.choice([-1.0, 1.0], size=(n_u, n_p)) / np.sqrt(n_u)
    if kind == "orthogonal":
        if n_p != n_u or (n_u & (n_u - 1)) != 0:
            raise ConfigError("orthogonal pilots need n_p == n_u, a power of two")
        return hadamard(n_u).astype(np.float64) / np.sqrt(n_u)
    raise ConfigError(f"unknown pilot kind {kind!r}")


def toy_schedule(*, dim: int, snr: float, n_levels: int = 58,
                 t_inner: int = 3, sigma1: float = 1.0,
                 sigma_last: float = 0.01, eps0: float = 3e-5,
                 tau: float = 0.05, step_rule: str = "estimation",
                 gamma: float = 1.0) -> AnnealSchedule:
    """Annealing ladder for the channel toy; identity C, unit scalar mass."""
    check_positive(snr, "snr")
    return build_schedule(dim=dim, n_levels=n_levels, sigma1=sigma1,
                          sigma_last=sigma_last, eps0=eps0, t_inner=t_inner,
                          tau=tau, step_rule=step_rule, precond="identity",
                          mass_mode="scalar:1.0", gamma=gamma)


def gaussian_channel_toy(n_r: int = 16, n_u: int = 20, alpha_p: float = 0.6,
                         snr: float = 10.0, *,
                         schedule: AnnealSchedule | None = None,
                         scheme="BAOAB", params: DynamicsParams | None = None,
                         pilots: str = "random", n_instances: int = 1,
                         n_trajectories: int = 1, seed: int = 0,
                         **schedule_kwargs) -> ToyReport:
    """Estimate N(0, 1) channel entries from pilot observations Y = H P + Z.

    Pools squared errors over ``n_instances`` independent problems and
    reports the annealed sampler's NMSE next to the closed-form posterior
    mean's NMSE on the same instances. ``snr`` is the linear per-entry
    signal-to-noise power ratio, so the noise scale is 1/sqrt(snr).
    """
    n_r = check_int(n_r, "n_r", minimum=1)
    n_u = check_int(n_u, "n_u", minimum=1)
    if not 0.0 < alpha_p <= 1.0:
        raise ConfigError("alpha_p must lie in (0, 1]")
    check_positive(snr, "snr")
    n_instances = check_int(n_instances, "n_instances", minimum=1)
    n_trajectories = check_int(n_trajectories, "n_trajectories", minimum=1)
    n_p = max(1, round(alpha_p * n_u))
    sigma0 = 1.0 / np.sqrt(snr)
    if schedule is None:
        schedule = toy_schedule(dim=n_r * n_u, snr=snr, **schedule_kwargs)
    elif schedule_kwargs:
        raise ConfigError("pass either a schedule or its keyword knobs")
    params = params or DynamicsParams(gamma=1.0, lam=1.0, alpha=2.0)

    err = mmse_err = norm = 0.0
    for inst in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence((seed, inst)))
        p = pilot_matrix(n_u, n_p, rng, kind=pilots)
        h = rng.standard_normal((n_r, n_u))
        y = h @ p + sigma0 * rng.standard_normal((n_r, n_p))

        score = ChannelToyScore(y, p, sigma0, schedule.sigmas)
        gens = [trajectory_rng(seed, inst, t) for t in range(n_trajectories)]
        res = run_batch(schedule, params, scheme, score, gens)
        if res.diverged.any():
            j = int(np.argmax(res.diverged))
            raise DivergenceError(int(res.div_level[j]), int(res.div_iter[j]))
        h_hat = res.x.mean(axis=0).reshape(n_r, n_u)

        gram = p @ p.T / sigma0**2 + np.eye(n_u)
        h_mmse = np.linalg.solve(gram, p @ y.T / sigma0**2).T

        err += float(np.sum((h_hat - h) ** 2))
        mmse_err += float(np.sum((h_mmse - h) ** 2))
        norm += float(np.sum(h**2))

    return ToyReport(nmse_db=10.0 * np.log10(err / norm),
                     mmse_nmse_db=10.0 * np.log10(mmse_err / norm),
                     n_instances=n_instances, sigma0=float(sigma0))


_DEMO_EDGE_FRACTION = 0.975  # step at 97.5% of the symmetric scheme's edge


def instability_demo(snr: float, scheme, *, n_side: int = 16,
                     n_instances: int = 4, seed: int = 0,
                     t_inner: int = 10) -> ToyReport:
    """Channel toy driven near the composed step's harmonic stability edge.

    Orthogonal pilots make every mode share one effective step h = eps
    sqrt(kappa); a constant step is pinned just under h = 2 at the final
    level, where the asymmetric first-order splitting inflates the sampled
    variance while the symmetric one reproduces it exactly.
    """
    check_positive(snr, "snr")
    sigma1, sigma_last, n_levels = 1.0, 0.01, 58
    sigma0_sq = 1.0 / snr
    kappa_last = (1.0 / (sigma0_sq + sigma_last**2)
                  + 1.0 / (1.0 + sigma_last**2))
    eps = 2.0 * _DEMO_EDGE_FRACTION / np.sqrt(kappa_last)
    schedule = toy_schedule(dim=n_side * n_side, snr=snr, n_levels=n_levels,
                            t_inner=t_inner, sigma1=sigma1,
                            sigma_last=sigma_last,
                            eps0=eps * sigma_last**2, tau=1.0,
                            step_rule="detection")
    return gaussian_channel_toy(
        n_r=n_side, n_u=n_side, alpha_p=1.0, snr=snr, schedule=schedule,
        scheme=scheme, params=DynamicsParams(gamma=0.15, lam=1.0, alpha=2.0),
        pilots="orthogonal", n_instances=n_instances, seed=seed)
