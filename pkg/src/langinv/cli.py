"""Config-driven experiment runner emitting machine-readable CSV.

Four tasks are exposed as subcommands: ``detect-sweep`` (symbol error rate
against SNR for the configured detectors), ``channel-toy`` (pilot-based
estimation next to its closed-form competitor), and ``stationary-test`` /
``fdt-test`` (the empirical sampler checks). A fifth subcommand, ``preset
--list``, prints the named detection hyper-parameter presets.

Settings come from a key = value config file in sections, overridden by a
named preset and then by command-line flags. Progress goes to standard
error; results only to the CSV, so the output stays machine-consumable.
Every task is deterministic for a fixed seed, independent of ``--threads``:
each work unit owns a seed-derived generator and results are reduced in
submission order. Wall times are the one exception; ``--no-timing`` zeroes
them when byte-stable output matters more than speed reporting.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .detect import symbol_error_rate
from .estimators import (
    LangevinDetector,
    MLOracleDetector,
    MMSEDetector,
    VBLASTDetector,
)
from .exceptions import ConfigError, DivergenceError
from .model import (
    ChannelSpec,
    complex_to_real,
    make_constellation,
    sample_channel,
    sigma0_from_snr,
)
from .sampler import compile_scheme
from .schedule import (
    DEFAULT_SCHEMES,
    DETECTION_DEFAULTS,
    DETECTION_PRESETS,
    DynamicsParams,
)
from .verify import fdt_check, gaussian_channel_toy, sample_stationary

__all__ = [
    "RESULT_COLUMNS",
    "VERIFY_COLUMNS",
    "ExperimentConfig",
    "ResultRow",
    "emit_csv",
    "main",
    "preset_names",
    "run_channel_toy",
    "run_detect_sweep",
    "run_fdt_test",
    "run_stationary_test",
    "run_table1_preset",
]

RESULT_COLUMNS = ("task", "snr_db", "method", "scheme", "L", "T", "U",
                  "n_symbols", "errors", "ser_or_nmse", "wall_ns_per_symbol",
                  "seed")
VERIFY_COLUMNS = ("test", "statistic", "value", "target", "tolerance",
                  "passed")

_TASKS = ("detect-sweep", "stationary-test", "channel-toy", "fdt-test")
_METHOD_ORDER = {"overdamped": 1, "underdamped": 2, "third": 3}
_CLASSICAL = ("mmse", "vblast", "ml-oracle")
_ORACLE_CAP = 10**6


# ---------------------------------------------------------------------------
# rows and CSV plumbing

@dataclass(frozen=True)
class ResultRow:
    """One benchmark measurement; column order matches RESULT_COLUMNS."""

    task: str
    snr_db: float
    method: str
    scheme: str
    L: int
    T: int
    U: int
    n_symbols: int
    errors: int
    ser_or_nmse: float
    wall_ns_per_symbol: int
    seed: int

    def __post_init__(self):
        if self.errors < 0 or self.errors > self.n_symbols:
            raise ValueError("errors must lie in [0, n_symbols]")
        if not np.isfinite(self.ser_or_nmse):
            raise ValueError("the reported metric must be finite")

    def astuple(self) -> tuple:
        return (self.task, self.snr_db, self.method, self.scheme, self.L,
                self.T, self.U, self.n_symbols, self.errors,
                self.ser_or_nmse, self.wall_ns_per_symbol, self.seed)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def emit_csv(rows, path, columns=RESULT_COLUMNS) -> None:
    """Write header plus rows, RFC-4180 quoting, 17-digit floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            data = row.astuple() if hasattr(row, "astuple") else tuple(row)
            if len(data) != len(columns):
                raise ValueError("row width does not match the header")
            writer.writerow([_fmt(v) for v in data])


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one task run needs; fields map 1:1 onto the config file."""

    task: str = "detect-sweep"
    # model
    n_r: int = 4
    n_u: int = 2
    rho: float = 0.0
    constellation: str = "QAM16"
    # sampler (None falls back to the detection preset for (order, L);
    # scheme/mass_mode/lam/alpha to the per-order detection defaults)
    order: int = 3
    scheme: str | None = None
    n_levels: int = 5
    sigma1: float | None = None
    sigma_last: float | None = None
    eps0: float | None = None
    t_inner: int | None = None
    tau: float | None = None
    gamma: float = 1.0
    lam: float | None = None
    alpha: float | None = None
    n_traj: int = 20
    mass_mode: str | None = None
    precond: str = "spectral"
    # sweep
    snr_db: tuple = (15.0,)
    n_channels: int = 2
    symbols_per_channel: int = 100  # observation vectors per channel
    methods: tuple = ("third", "mmse")
    # channel toy
    alpha_p: float = 0.6
    n_instances: int = 4
    # stationary test
    n_steps: int = 1_000_000
    schemes: tuple = ("BAOAB", "BACOCAB")
    # plumbing
    seed: int = 0
    out: str = "results.csv"
    threads: int = 1
    timing: str = "amortized"

    def langevin_order(self, method: str) -> int:
        return self.order if method == "langevin" else _METHOD_ORDER[method]

    def validate(self) -> "ExperimentConfig":
        if self.task not in _TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        _positive_int(self.n_r, "n_r")
        _positive_int(self.n_u, "n_u")
        try:
            ChannelSpec(self.n_r, self.n_u, self.rho)
            make_constellation(self.constellation)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.order not in (1, 2, 3):
            raise ConfigError(f"order must be 1, 2 or 3, got {self.order}")
        if not self.methods:
            raise ConfigError("methods must not be empty")
        sampler_methods = []
        for method in self.methods:
            if method in _CLASSICAL:
                continue
            if method not in _METHOD_ORDER and method != "langevin":
                raise ConfigError(f"unknown method {method!r}")
            sampler_methods.append(method)
        if self.scheme is not None:
            if len(sampler_methods) > 1:
                raise ConfigError(
                    "an explicit scheme needs a single sampler method")
            for method in sampler_methods:
                compile_scheme(self.scheme, order=self.langevin_order(method))
        if self.task == "detect-sweep":
            for method in sampler_methods:
                _resolve_sampler(self, self.langevin_order(method))
        if not self.snr_db:
            raise ConfigError("snr_db must not be empty")
        _positive_int(self.n_channels, "n_channels")
        if self.symbols_per_channel < 0:
            raise ConfigError("symbols_per_channel must be non-negative")
        _positive_int(self.n_traj, "U")
        if not 0.0 < self.alpha_p <= 1.0:
            raise ConfigError("alpha_p must lie in (0, 1]")
        _positive_int(self.n_instances, "n_instances")
        _positive_int(self.n_steps, "n_steps")
        if not self.schemes:
            raise ConfigError("schemes must not be empty")
        for name in self.schemes:
            compile_scheme(name)
        if self.timing not in ("amortized", "full", "off"):
            raise ConfigError(f"unknown timing mode {self.timing!r}")
        _positive_int(self.threads, "threads")
        return self


def _positive_int(value, name: str):
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def _resolve_sampler(config: ExperimentConfig, order: int) -> dict:
    """Explicit sampler knobs with preset fallback; error when neither."""
    preset = DETECTION_PRESETS.get((order, config.n_levels), {})
    out = {}
    for key in ("sigma1", "sigma_last", "eps0", "t_inner", "tau"):
        value = getattr(config, key)
        if value is None:
            if key not in preset:
                raise ConfigError(
                    f"{key} is not set and no preset covers order {order} "
                    f"with L = {config.n_levels}")
            value = preset[key]
        out[key] = value
    return out


# config file keys per section -> (attribute, parser)
def _float_list(raw: str) -> tuple:
    return tuple(float(part) for part in raw.split(","))


def _str_list(raw: str) -> tuple:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


_SECTIONS = {
    "model": {
        "n_r": ("n_r", int),
        "n_u": ("n_u", int),
        "rho": ("rho", float),
        "constellation": ("constellation", str),
    },
    "sampler": {
        "order": ("order", int),
        "scheme": ("scheme", str),
        "l": ("n_levels", int),
        "sigma1": ("sigma1", float),
        "sigmal": ("sigma_last", float),
        "eps0": ("eps0", float),
        "t": ("t_inner", int),
        "tau": ("tau", float),
        "gamma": ("gamma", float),
        "lambda": ("lam", float),
        "alpha": ("alpha", float),
        "u": ("n_traj", int),
        "mass_mode": ("mass_mode", str),
        "precond": ("precond", str),
    },
    "sweep": {
        "snr_db": ("snr_db", _float_list),
        "n_channels": ("n_channels", int),
        "symbols_per_channel": ("symbols_per_channel", int),
        "methods": ("methods", _str_list),
    },
    "toy": {
        "alpha_p": ("alpha_p", float),
        "n_instances": ("n_instances", int),
    },
    "stationary": {
        "n_steps": ("n_steps", int),
        "schemes": ("schemes", _str_list),
    },
    "output": {
        "path": ("out", str),
        "timing": ("timing", str),
        "seed": ("seed", int),
        "threads": ("threads", int),
    },
}


def load_config(path) -> dict:
    """Parse a key = value section file into ExperimentConfig updates."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    updates = {}
    for section in parser.sections():
        known = _SECTIONS.get(section)
        if known is None:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, parse = known[key]
            try:
                updates[attr] = parse(raw)
            except ValueError:
                raise ConfigError(
                    f"cannot parse {section}.{key} value {raw!r}") from None
    return updates


def preset_names() -> list[str]:
    return [f"{method}-L{levels}"
            for method in ("overdamped", "underdamped", "third")
            for levels in (5, 10, 20)]


def run_table1_preset(method: str, n_levels: int) -> ExperimentConfig:
    """Named detection presets: (sigma1, sigmaL, eps0, T, tau) per order/L."""
    if method not in _METHOD_ORDER:
        raise ConfigError(
            f"unknown preset method {method!r}; choose from "
            f"{sorted(_METHOD_ORDER)}")
    order = _METHOD_ORDER[method]
    preset = DETECTION_PRESETS.get((order, n_levels))
    if preset is None:
        raise ConfigError(f"no preset for {method} with L = {n_levels}")
    return ExperimentConfig(
        order=order, scheme=DETECTION_DEFAULTS[order]["scheme"],
        n_levels=n_levels,
        sigma1=preset["sigma1"], sigma_last=preset["sigma_last"],
        eps0=preset["eps0"], t_inner=int(preset["t_inner"]),
        tau=preset["tau"], methods=(method,))


def _parse_preset_name(name: str) -> tuple[str, int]:
    method, sep, levels = name.rpartition("-L")
    if not sep or not levels.isdigit():
        raise ConfigError(
            f"preset names look like third-L5, got {name!r}")
    return method, int(levels)


# ---------------------------------------------------------------------------
# task runners

def _map_units(fn, units, threads: int) -> list:
    if threads <= 1 or len(units) <= 1:
        return [fn(*unit) for unit in units]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda unit: fn(*unit), units))


def _make_detector(config: ExperimentConfig, method: str, channel_index: int):
    if method == "mmse":
        return MMSEDetector(constellation=config.constellation)
    if method == "vblast":
        return VBLASTDetector(constellation=config.constellation)
    if method == "ml-oracle":
        return MLOracleDetector(constellation=config.constellation,
                                max_candidates=_ORACLE_CAP)
    return LangevinDetector(
        order=config.langevin_order(method), scheme=config.scheme,
        n_levels=config.n_levels, sigma1=config.sigma1,
        sigma_last=config.sigma_last, eps0=config.eps0,
        t_inner=config.t_inner, tau=config.tau, gamma=config.gamma,
        lam=config.lam, alpha=config.alpha, n_trajectories=config.n_traj,
        mass_mode=config.mass_mode, precond=config.precond, seed=config.seed,
        channel_index=channel_index, constellation=config.constellation)


def _scheme_label(config: ExperimentConfig, method: str) -> str:
    if method in _CLASSICAL:
        return ""
    if config.scheme is not None:
        return compile_scheme(config.scheme).name
    return DETECTION_DEFAULTS[config.langevin_order(method)]["scheme"]


def _sampler_columns(config: ExperimentConfig, method: str) -> tuple:
    if method in _CLASSICAL:
        return "", 0, 0, 0
    hp = _resolve_sampler(config, config.langevin_order(method))
    return (_scheme_label(config, method), config.n_levels,
            int(hp["t_inner"]), config.n_traj)


def _sweep_unit(config: ExperimentConfig, spec: ChannelSpec, const,
                i_snr: int, ch: int) -> list[tuple]:
    rng = np.random.default_rng(np.random.SeedSequence(
        (config.seed, i_snr, ch)))
    h = complex_to_real(sample_channel(spec, rng))
    snr = 10.0 ** (config.snr_db[i_snr] / 10.0)
    sigma0 = sigma0_from_snr(snr, spec, const)
    x = rng.choice(const.points, size=(config.symbols_per_channel,
                                       2 * config.n_u))
    ys = x @ h.T + sigma0 * rng.standard_normal((x.shape[0], h.shape[0]))

    out = []
    for method in config.methods:
        det = _make_detector(config, method,
                             channel_index=i_snr * config.n_channels + ch)
        t0 = time.perf_counter_ns()
        det.fit(h, sigma0)
        fit_ns = time.perf_counter_ns() - t0
        t0 = time.perf_counter_ns()
        decided = det.predict(ys)
        predict_ns = time.perf_counter_ns() - t0
        n_sym = x.shape[0] * config.n_u
        errors = int(round(symbol_error_rate(decided, x) * n_sym))
        if config.timing == "off":
            ns = 0
        elif config.timing == "full":
            ns = fit_ns + predict_ns
        else:
            ns = predict_ns  # amortized: the per-channel setup is excluded
        out.append((errors, n_sym, ns))
    return out


def run_detect_sweep(config: ExperimentConfig) -> list[ResultRow]:
    """SER for every (snr, method) pair, channels pooled.

    Each (snr, channel) work unit derives its generator from (seed,
    snr_index, channel), so results do not depend on scheduling; symbol
    counts are complex symbols (observation vectors times users).
    """
    config.validate()
    spec = ChannelSpec(config.n_r, config.n_u, config.rho)
    const = make_constellation(config.constellation)
    if "ml-oracle" in config.methods:
        count = (const.points.size ** 2) ** config.n_u
        if count > _ORACLE_CAP:
            raise ConfigError(
                f"ml-oracle would enumerate {count} candidates; "
                f"the cap is {_ORACLE_CAP}")
    if config.symbols_per_channel == 0:
        return []
    units = [(config, spec, const, i, ch)
             for i in range(len(config.snr_db))
             for ch in range(config.n_channels)]
    per_unit = _map_units(_sweep_unit, units, config.threads)

    rows = []
    for i, snr_db in enumerate(config.snr_db):
        chunk = per_unit[i * config.n_channels:(i + 1) * config.n_channels]
        for j, method in enumerate(config.methods):
            errors = sum(c[j][0] for c in chunk)
            n_sym = sum(c[j][1] for c in chunk)
            total_ns = sum(c[j][2] for c in chunk)
            scheme, levels, t_inner, n_traj = _sampler_columns(config, method)
            rows.append(ResultRow(
                task=config.task, snr_db=snr_db, method=method, scheme=scheme,
                L=levels, T=t_inner, U=n_traj, n_symbols=n_sym, errors=errors,
                ser_or_nmse=errors / n_sym,
                wall_ns_per_symbol=total_ns // n_sym, seed=config.seed))
    return rows


_TOY_DEFAULTS = dict(t_inner=3, sigma1=1.0, sigma_last=0.01, eps0=3e-5,
                     tau=0.05)


def _toy_scheme(config: ExperimentConfig, method: str) -> str:
    if config.scheme is not None:
        return compile_scheme(config.scheme).name
    return DEFAULT_SCHEMES[config.langevin_order(method)]


def _toy_unit(config: ExperimentConfig, i_snr: int, method: str):
    scheme = _toy_scheme(config, method)
    kwargs = {key: default if getattr(config, key) is None
              else getattr(config, key)
              for key, default in _TOY_DEFAULTS.items()}
    t0 = time.perf_counter_ns()
    report = gaussian_channel_toy(
        n_r=config.n_r, n_u=config.n_u, alpha_p=config.alpha_p,
        snr=10.0 ** (config.snr_db[i_snr] / 10.0), scheme=scheme,
        params=DynamicsParams(
            gamma=config.gamma,
            lam=1.0 if config.lam is None else config.lam,
            alpha=1.2 if config.alpha is None else config.alpha),
        n_instances=config.n_instances, n_trajectories=config.n_traj,
        seed=config.seed, n_levels=config.n_levels, gamma=config.gamma,
        **kwargs)
    elapsed = time.perf_counter_ns() - t0
    return report, int(kwargs["t_inner"]), elapsed


def run_channel_toy(config: ExperimentConfig) -> list[ResultRow]:
    """Pilot-based estimation NMSE per SNR, one row per sampler method,
    plus the closed-form posterior mean on the same instances."""
    config.validate()
    methods = [m for m in config.methods if m not in _CLASSICAL]
    if not methods:
        raise ConfigError("channel-toy needs at least one sampler method")
    units = [(config, i, method)
             for i in range(len(config.snr_db)) for method in methods]
    per_unit = _map_units(_toy_unit, units, config.threads)

    entries = config.n_instances * config.n_r * config.n_u
    rows = []
    for i, snr_db in enumerate(config.snr_db):
        chunk = per_unit[i * len(methods):(i + 1) * len(methods)]
        rows.append(ResultRow(
            task=config.task, snr_db=snr_db, method="mmse", scheme="",
            L=0, T=0, U=0, n_symbols=entries, errors=0,
            ser_or_nmse=chunk[0][0].mmse_nmse_db, wall_ns_per_symbol=0,
            seed=config.seed))
        for method, (report, t_inner, elapsed) in zip(methods, chunk):
            ns = 0 if config.timing == "off" else elapsed // entries
            rows.append(ResultRow(
                task=config.task, snr_db=snr_db, method=method,
                scheme=_toy_scheme(config, method), L=config.n_levels,
                T=t_inner, U=config.n_traj, n_symbols=entries, errors=0,
                ser_or_nmse=report.nmse_db, wall_ns_per_symbol=ns,
                seed=config.seed))
    return rows


# the canonical two-mode quadratic target of the stationary check
_STATIONARY_LAM = (1.0, 4.0)
_STATIONARY_C = (2.0, 0.5)


def _stationary_unit(config: ExperimentConfig, scheme: str) -> list[tuple]:
    report = sample_stationary(
        scheme, np.asarray(_STATIONARY_LAM), c=_STATIONARY_C, tau=1.0,
        eps=0.01, n_steps=config.n_steps, seed=config.seed)
    return report.rows(f"stationary_{scheme}")


def run_stationary_test(config: ExperimentConfig) -> list[tuple]:
    """Long-run moments of each configured scheme on a fixed quadratic."""
    config.validate()
    units = [(config, scheme) for scheme in config.schemes]
    nested = _map_units(_stationary_unit, units, config.threads)
    return [row for rows in nested for row in rows]


def _fdt_unit(config: ExperimentConfig, order: int) -> list[tuple]:
    params = DynamicsParams(
        gamma=config.gamma,
        lam=1.0 if config.lam is None else config.lam,
        alpha=1.2 if config.alpha is None else config.alpha)
    return fdt_check(order, params, seed=config.seed).rows(f"fdt_order{order}")


def run_fdt_test(config: ExperimentConfig) -> list[tuple]:
    """Noise-variance and decay relations of both stochastic sub-steps."""
    config.validate()
    units = [(config, order) for order in (2, 3)]
    nested = _map_units(_fdt_unit, units, config.threads)
    return [row for rows in nested for row in rows]


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langinv",
        description="Annealed Langevin detection and verification runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _TASKS:
        task = sub.add_parser(name)
        task.add_argument("--config", help="key = value section file")
        task.add_argument("--preset",
                          help="named detection preset, e.g. third-L5")
        task.add_argument("--seed", type=int)
        task.add_argument("--out", help="CSV output path")
        task.add_argument("--threads", type=int)
        task.add_argument("--no-timing", action="store_true",
                          help="report zero wall times (byte-stable output)")
    preset = sub.add_parser("preset")
    preset.add_argument("--list", action="store_true")
    return parser


def _assemble_config(args) -> ExperimentConfig:
    config = ExperimentConfig(task=args.command)
    if args.config:
        config = replace(config, **load_config(args.config))
    if args.preset:
        named = run_table1_preset(*_parse_preset_name(args.preset))
        config = replace(
            config, order=named.order, scheme=named.scheme,
            n_levels=named.n_levels, sigma1=named.sigma1,
            sigma_last=named.sigma_last, eps0=named.eps0,
            t_inner=named.t_inner, tau=named.tau, methods=named.methods)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.no_timing:
        overrides["timing"] = "off"
    if overrides:
        config = replace(config, **overrides)
    return config.validate()


_RUNNERS = {
    "detect-sweep": (run_detect_sweep, RESULT_COLUMNS),
    "channel-toy": (run_channel_toy, RESULT_COLUMNS),
    "stationary-test": (run_stationary_test, VERIFY_COLUMNS),
    "fdt-test": (run_fdt_test, VERIFY_COLUMNS),
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    if args.command == "preset":
        if not args.list:
            print("usage: langinv preset --list", file=sys.stderr)
            return 2
        for name in preset_names():
            method, levels = _parse_preset_name(name)
            hp = DETECTION_PRESETS[(_METHOD_ORDER[method], levels)]
            print(f"{name}: sigma1={hp['sigma1']:g} sigmaL={hp['sigma_last']:g} "
                  f"eps0={hp['eps0']:g} T={int(hp['t_inner'])} "
                  f"tau={hp['tau']:g}")
        return 0

    try:
        config = _assemble_config(args)
        runner, columns = _RUNNERS[config.task]
        rows = runner(config)
        emit_csv(rows, config.out, columns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    print(f"{config.task}: wrote {len(rows)} rows to {config.out}",
          file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
