"""Splitting integrators for annealed Langevin dynamics.

Dynamics of order 1 (overdamped), 2 (underdamped) and 3 (one auxiliary
memory variable) share a target: the law proportional to p(x)^(1/tau),
extended over velocity v and memory z with independent N(0, tau * M)
marginals. One integrator step composes elementary sub-flows:

    A: drift of x by the velocity,        x += dt * C M^{-1} v
    B: kick of v by the score,            v += dt * C * score(x)
    C: kick of v by the memory variable,  v += dt * lam * z
    O: exact Ornstein-Uhlenbeck update of the dissipative channel
       (v for order 2, z for order 3, holding the other variables fixed)

A scheme is a string naming the sub-flows in application order; letters
appearing twice run with half steps. The overdamped special case "ULA" is a
single composite update of x alone.

Trajectories draw their noise from per-trajectory generators seeded by
(experiment seed, channel index, trajectory index), so results are
bit-identical no matter how trajectories are grouped into batches or
threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_int
from .exceptions import ConfigError, DivergenceError
from .schedule import AnnealSchedule, DynamicsParams

__all__ = [
    "SamplerState",
    "SchemeSpec",
    "compile_scheme",
    "SCHEMES",
    "flow_A",
    "flow_B",
    "flow_C",
    "flow_O_order2",
    "flow_O_order3",
    "overdamped_step",
    "trajectory_rng",
    "anneal_run",
    "ensemble_run",
    "run_batch",
    "BatchResult",
]


@dataclass
class SamplerState:
    """State of one (or a batch of) trajectories; arrays end in the dim axis."""

    x: np.ndarray
    v: np.ndarray | None = None
    z: np.ndarray | None = None
    level: int = 0
    iteration: int = 0


@dataclass(frozen=True)
class SchemeSpec:
    """Compiled splitting scheme: sub-flow letters with step fractions."""

    name: str
    order: int
    steps: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ConfigError(f"order must be 1, 2 or 3, got {self.order}")
        if not self.steps:
            raise ConfigError("scheme must contain at least one sub-flow")
        alphabet = {"U"} if self.order == 1 else {"A", "B", "O"} | (
            {"C"} if self.order == 3 else set())
        totals: dict[str, float] = {}
        for letter, frac in self.steps:
            if letter not in alphabet:
                raise ConfigError(
                    f"sub-flow {letter!r} not available at order {self.order}")
            if not 0.0 < frac <= 1.0:
                raise ConfigError(f"step fraction must be in (0, 1], got {frac}")
            totals[letter] = totals.get(letter, 0.0) + frac
        for letter, total in totals.items():
            if abs(total - 1.0) > 1e-12:
                raise ConfigError(
                    f"fractions of sub-flow {letter!r} sum to {total}, not 1")

    @property
    def n_noise(self) -> int:
        """Number of fresh Gaussian vectors one step consumes."""
        return sum(1 for letter, _ in self.steps if letter in ("O", "U"))


SCHEMES: dict[str, SchemeSpec] = {
    "ULA": SchemeSpec("ULA", 1, (("U", 1.0),)),
    "ABO": SchemeSpec("ABO", 2, (("A", 1.0), ("B", 1.0), ("O", 1.0))),
    "BAOAB": SchemeSpec("BAOAB", 2, (("B", 0.5), ("A", 0.5), ("O", 1.0),
                                     ("A", 0.5), ("B", 0.5))),
    "BCOABC": SchemeSpec("BCOABC", 3, (("B", 0.5), ("C", 0.5), ("A", 1.0),
                                       ("O", 1.0), ("B", 0.5), ("C", 0.5))),
    "BACOCAB": SchemeSpec("BACOCAB", 3, (("B", 0.5), ("A", 0.5), ("C", 0.5),
                                         ("O", 1.0), ("C", 0.5), ("A", 0.5),
                                         ("B", 0.5))),
}


def compile_scheme(name: str, order: int | None = None) -> SchemeSpec:
    """Look up a scheme by name, optionally checking the dynamics order."""
    try:
        spec = SCHEMES[name.upper()]
    except KeyError:
        raise ConfigError(
            f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}") from None
    if order is not None and order != spec.order:
        raise ConfigError(f"scheme {spec.name} is order {spec.order}, not {order}")
    return spec


# ---------------------------------------------------------------------------
# elementary sub-flows on SamplerState (reference implementations; the
# batched engine below inlines the same updates on raw arrays)

def flow_A(state: SamplerState, dt: float, c, m) -> SamplerState:
    """Position drift x += dt * C M^{-1} v."""
    if state.v is None:
        raise ValueError("flow A needs a velocity variable")
    return replace(state, x=state.x + dt * (c / m) * state.v)


def flow_B(state: SamplerState, dt: float, c, score_vec) -> SamplerState:
    """Velocity kick v += dt * C * score; rejects non-finite scores."""
    if state.v is None:
        raise ValueError("flow B needs a velocity variable")
    score_vec = np.asarray(score_vec)
    if not np.all(np.isfinite(score_vec)):
        raise DivergenceError(state.level + 1, state.iteration, what="score")
    return replace(state, v=state.v + dt * c * score_vec)


def flow_C(state: SamplerState, dt: float, lam: float) -> SamplerState:
    """Velocity kick by the memory variable v += dt * lam * z."""
    if state.v is None or state.z is None:
        raise ValueError("flow C needs velocity and memory variables")
    return replace(state, v=state.v + dt * lam * state.z)


def flow_O_order2(state: SamplerState, dt: float, params: DynamicsParams,
                  tau: float, m, w) -> SamplerState:
    """Exact OU update of v: decay exp(-gamma dt), invariant N(0, tau M)."""
    if state.v is None:
        raise ValueError("flow O needs a velocity variable")
    a = np.exp(-params.gamma * dt)
    scale = np.sqrt(tau * (1.0 - a * a) * np.asarray(m, dtype=np.float64))
    return replace(state, v=a * state.v + scale * np.asarray(w))


def flow_O_order3(state: SamplerState, dt: float, params: DynamicsParams,
                  tau: float, m, w) -> SamplerState:
    """Exact OU update of z holding v fixed.

    z relaxes toward -(lam/alpha) v with rate alpha and invariant spread
    tau * M about that point:
        z <- th z - (1 - th) (lam/alpha) v + sqrt(tau (1 - th^2)) M^{1/2} w,
    th = exp(-alpha dt).
    """
    if state.v is None or state.z is None:
        raise ValueError("flow O at order 3 needs velocity and memory")
    th = np.exp(-params.alpha * dt)
    drift = -(1.0 - th) * (params.lam / params.alpha) * state.v
    scale = np.sqrt(tau * (1.0 - th * th) * np.asarray(m, dtype=np.float64))
    return replace(state, z=th * state.z + drift + scale * np.asarray(w))


def overdamped_step(state: SamplerState, dt: float, c, tau: float,
                    score_vec, w) -> SamplerState:
    """One overdamped update x += (dt/2) C score + sqrt(tau dt) C^{1/2} w.

    The step size multiplies the drift by dt/2 with matching noise, the
    usual convention for annealed overdamped baselines; it equals the
    Euler scheme for dx = -C grad U dt + sqrt(2 tau C) dW run at dt/2.
    """
    score_vec = np.asarray(score_vec)
    if not np.all(np.isfinite(score_vec)):
        raise DivergenceError(state.level + 1, state.iteration, what="score")
    c = np.asarray(c, dtype=np.float64)
    x = state.x + 0.5 * dt * c * score_vec + np.sqrt(tau * dt * c) * np.asarray(w)
    return replace(state, x=x)


# ---------------------------------------------------------------------------
# seeding and noise

def trajectory_rng(seed: int, channel_index: int, traj_index: int) -> np.random.Generator:
    """Independent generator for one trajectory, stable across batchings."""
    seq = np.random.SeedSequence(
        (check_int(seed, "seed", minimum=0),
         check_int(channel_index, "channel_index", minimum=0),
         check_int(traj_index, "traj_index", minimum=0)))
    return np.random.default_rng(seq)


class _NoiseSource:
    """Draws from per-trajectory generators in a batching-independent order.

    Each generator is consumed in the fixed sequence: initial state draws,
    then one (t_inner, n_noise, dim) slab per level. Stacking the draws of
    several generators therefore reproduces exactly what each trajectory
    would have seen on its own.
    """

    def __init__(self, gens: list[np.random.Generator], dim: int):
        self.gens = gens
        self.dim = dim

    def state_draw(self) -> np.ndarray:
        out = np.empty((len(self.gens), self.dim))
        for i, g in enumerate(self.gens):
            out[i] = g.standard_normal(self.dim)
        return out

    def level_slab(self, t_inner: int, n_noise: int) -> np.ndarray:
        out = np.empty((len(self.gens), t_inner, n_noise, self.dim))
        for i, g in enumerate(self.gens):
            out[i] = g.standard_normal((t_inner, n_noise, self.dim))
        return out


@dataclass
class BatchResult:
    """Final states of a batch run plus divergence bookkeeping.

    ``div_level`` / ``div_iter`` are -1 for rows that stayed finite; diverged
    rows hold NaN in ``x``.
    """

    x: np.ndarray
    v: np.ndarray | None
    z: np.ndarray | None
    div_level: np.ndarray
    div_iter: np.ndarray

    @property
    def diverged(self) -> np.ndarray:
        return self.div_level >= 0


def _init_state(scheme: SchemeSpec, schedule: AnnealSchedule,
                noise: _NoiseSource, init: np.ndarray | None):
    """Initial draws: x from the widest smoothing level, v and z from their
    invariant marginals at the first level's mass."""
    n = len(noise.gens)
    d = noise.dim
    x = noise.state_draw() * schedule.sigmas[0]
    if init is not None:
        x = np.broadcast_to(np.asarray(init, dtype=np.float64), (n, d)).copy()
        # keep the generator sequence aligned whether or not init is given
    v = z = None
    if scheme.order >= 2:
        v = noise.state_draw() * np.sqrt(schedule.tau * schedule.mass[0])
    if scheme.order >= 3:
        z = noise.state_draw() * np.sqrt(schedule.tau * schedule.mass[0])
    return x, v, z


def _run_engine(scheme: SchemeSpec, schedule: AnnealSchedule,
                params: DynamicsParams, score, noise: _NoiseSource,
                init=None, max_total_iters=None, raise_on_divergence=False,
                collector=None) -> BatchResult:
    """Run all levels on a batch; the workhorse behind the public runners."""
    x, v, z = _init_state(scheme, schedule, noise, init)
    n_rows = x.shape[0]
    div_level = np.full(n_rows, -1, dtype=np.int64)
    div_iter = np.full(n_rows, -1, dtype=np.int64)
    tau = schedule.tau
    done = 0
    budget = np.inf if max_total_iters is None else int(max_total_iters)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for lvl in range(schedule.n_levels):
            if done >= budget:
                break
            eps = schedule.epsilons[lvl]
            c = schedule.precond[lvl]
            m = schedule.mass[lvl]
            c_over_m = c / m
            # constants of the stochastic sub-steps at this level's step size
            ou = []
            u_noise = []
            for letter, frac in scheme.steps:
                dt = frac * eps
                if letter == "O":
                    if scheme.order == 2:
                        a = np.exp(-params.gamma * dt)
                        ou.append((a, np.sqrt(tau * (1.0 - a * a) * m)))
                    else:
                        th = np.exp(-params.alpha * dt)
                        ou.append((th, np.sqrt(tau * (1.0 - th * th) * m)))
                elif letter == "U":
                    u_noise.append(np.sqrt(tau * dt * c))

            slab = noise.level_slab(schedule.t_inner, max(scheme.n_noise, 1))
            for k in range(schedule.t_inner):
                if done >= budget:
                    break
                i_noise = 0
                i_ou = 0
                i_u = 0
                for letter, frac in scheme.steps:
                    dt = frac * eps
                    if letter == "A":
                        x = x + dt * c_over_m * v
                    elif letter == "B":
                        v = v + dt * c * score(x, lvl)
                    elif letter == "C":
                        v = v + dt * params.lam * z
                    elif letter == "O":
                        decay, scale = ou[i_ou]
                        w = slab[:, k, i_noise]
                        if scheme.order == 2:
                            v = decay * v + scale * w
                        else:
                            z = (decay * z
                                 - (1.0 - decay) * (params.lam / params.alpha) * v
                                 + scale * w)
                        i_ou += 1
                        i_noise += 1
                    else:  # "U"
                        w = slab[:, k, i_noise]
                        x = x + 0.5 * dt * c * score(x, lvl) + u_noise[i_u] * w
                        i_u += 1
                        i_noise += 1
                done += 1

                ok = np.isfinite(x).all(axis=-1)
                if v is not None:
                    ok &= np.isfinite(v).all(axis=-1)
                if z is not None:
                    ok &= np.isfinite(z).all(axis=-1)
                if not ok.all():
                    fresh = ~ok & (div_level < 0)
                    if fresh.any():
                        if raise_on_divergence:
                            raise DivergenceError(lvl + 1, k)
                        div_level[fresh] = lvl + 1
                        div_iter[fresh] = k
                        x[fresh] = np.nan
                        if v is not None:
                            v[fresh] = np.nan
                        if z is not None:
                            z[fresh] = np.nan
                if collector is not None:
                    collector(lvl, k, x, v, z)
    return BatchResult(x=x, v=v, z=z, div_level=div_level, div_iter=div_iter)


def anneal_run(schedule: AnnealSchedule, params: DynamicsParams, scheme,
               score, rng: np.random.Generator, *, init=None,
               max_total_iters=None) -> np.ndarray:
    """One annealed trajectory; raises :class:`DivergenceError` on blow-up.

    Returns the final position (dim,).
    """
    spec = scheme if isinstance(scheme, SchemeSpec) else compile_scheme(scheme)
    noise = _NoiseSource([rng], schedule.dim)
    res = _run_engine(spec, schedule, params, score, noise, init=init,
                      max_total_iters=max_total_iters, raise_on_divergence=True)
    return res.x[0]


def run_batch(schedule: AnnealSchedule, params: DynamicsParams, scheme,
              score, gens: list[np.random.Generator], *, init=None,
              max_total_iters=None, collector=None) -> BatchResult:
    """Run one trajectory per generator as a single vectorized batch.

    Diverged rows are marked in the result and carried as NaN, never raised;
    rows evolve independently, so one blow-up cannot contaminate others.
    """
    spec = scheme if isinstance(scheme, SchemeSpec) else compile_scheme(scheme)
    noise = _NoiseSource(list(gens), schedule.dim)
    return _run_engine(spec, schedule, params, score, noise, init=init,
                       max_total_iters=max_total_iters, collector=collector)


def ensemble_run(schedule: AnnealSchedule, params: DynamicsParams, scheme,
                 score, n_trajectories: int, *, seed: int, channel_index: int = 0,
                 traj_offset: int = 0, n_jobs: int = 1, init=None,
                 max_total_iters=None, return_info: bool = False):
    """Independent annealed trajectories for one observation.

    Returns the final positions of the trajectories that stayed finite,
    shape (n_kept, dim); raises :class:`DivergenceError` only if every
    trajectory diverged. Thread count does not affect the values.
    """
    n_trajectories = check_int(n_trajectories, "n_trajectories", minimum=1)
    n_jobs = check_int(n_jobs, "n_jobs", minimum=1)
    gens = [trajectory_rng(seed, channel_index, traj_offset + t)
            for t in range(n_trajectories)]

    if n_jobs == 1 or n_trajectories == 1:
        results = [run_batch(schedule, params, scheme, score, gens, init=init,
                             max_total_iters=max_total_iters)]
    else:
        bounds = np.linspace(0, n_trajectories, min(n_jobs, n_trajectories) + 1,
                             dtype=int)
        chunks = [gens[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(
                lambda gs: run_batch(schedule, params, scheme, score, gs,
                                     init=init, max_total_iters=max_total_iters),
                chunks))

    x = np.concatenate([r.x for r in results], axis=0)
    div_level = np.concatenate([r.div_level for r in results])
    div_iter = np.concatenate([r.div_iter for r in results])
    alive = div_level < 0
    if not alive.any():
        raise DivergenceError(int(div_level[0]), int(div_iter[0]),
                              what="every trajectory")
    kept = x[alive]
    if return_info:
        info = BatchResult(x=x, v=None, z=None, div_level=div_level,
                           div_iter=div_iter)
        return kept, info
    return kept
