"""Command-line front end: ``chaosrates {simulate,curve,validate,price,calibrate}``.

Exit codes: 0 success (all verdicts pass), 1 a validation verdict failed,
2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import platform
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .chaos import ChaosSpec, spec_from_dict, validate_spec
from .errors import ChaosRatesError, ConfigError
from .instruments import CashflowSpec, price_single_cashflow
from .kernel import kernel_arrays
from .paths import TimeGrid, make_grid, sample_paths, zero_path
from .stats import RunningStats
from .term_structure import (
    calibrate_first_chaos,
    forward_rate_columns,
    initial_curve,
    initial_forward,
    read_curve_csv,
)
from .validation import run_battery

log = logging.getLogger("chaosrates")

FLOAT_FMT = "%.12g"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
COMMANDS = ("simulate", "curve", "validate", "price", "calibrate")

_SECTIONS = {"spec", "grid", "mc", "output", "maturities", "option", "cashflows",
             "curve_file", "validation", "simulate"}
_GRID_KEYS = {"t_max", "n_steps", "tail_factor"}
_MC_KEYS = {"n_paths", "seed", "antithetic", "batch_size"}
_OPTION_KEYS = {"t", "T", "K"}
_CASHFLOW_KEYS = {"pay_time", "amount"}
_VALIDATION_KEYS = {"times", "check_times", "integrability_t"}
_SIMULATE_KEYS = {"write_paths"}

# which sections each command needs
_REQUIRED = {
    "simulate": ("spec", "grid", "mc"),
    "curve": ("spec", "maturities"),
    "validate": ("spec", "grid", "mc"),
    "price": ("spec", "grid", "mc"),
    "calibrate": ("curve_file",),
}


@dataclass
class RunConfig:
    command: str
    raw: dict
    base_dir: Path
    spec: ChaosSpec | None = None
    grid: TimeGrid | None = None
    n_paths: int = 0
    seed: int = 0
    antithetic: bool = False
    batch_size: int | None = None
    output: Path | None = None
    maturities: list = field(default_factory=list)
    option: dict | None = None
    cashflows: list = field(default_factory=list)
    curve_file: Path | None = None
    validation: dict = field(default_factory=dict)
    write_paths: int | None = None

    def ensemble(self):
        kw = {"batch_size": self.batch_size} if self.batch_size else {}
        return sample_paths(self.grid, self.n_paths, self.seed, self.antithetic, **kw)


def _block(raw, name, keys, required=()):
    block = raw.get(name)
    if not isinstance(block, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    extra = set(block) - keys
    if extra:
        raise ConfigError(f"unknown keys in '{name}': {sorted(extra)}")
    for k in required:
        if k not in block:
            raise ConfigError(f"section '{name}' is missing key '{k}'")
    return block


def _number_list(value, name):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"'{name}' must be a non-empty list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must contain only numbers") from None


def load_config(path, command: str, out: str | None = None) -> RunConfig:
    """Parse and check a YAML config for ``command``; raises :class:`ConfigError`."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    extra = set(raw) - _SECTIONS
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    for name in _REQUIRED[command]:
        if name not in raw:
            raise ConfigError(f"missing required key '{name}' for {command}")

    cfg = RunConfig(command, raw, path.parent)
    try:
        if "spec" in raw:
            cfg.spec = spec_from_dict(raw["spec"])
        if "grid" in raw:
            g = _block(raw, "grid", _GRID_KEYS, ("t_max", "n_steps"))
            cfg.grid = make_grid(float(g["t_max"]), g["n_steps"], float(g.get("tail_factor", 1.0)))
        if cfg.spec is not None:
            validate_spec(cfg.spec)
        if "mc" in raw:
            mc = _block(raw, "mc", _MC_KEYS, ("n_paths", "seed"))
            cfg.n_paths, cfg.seed = mc["n_paths"], mc["seed"]
            cfg.antithetic = bool(mc.get("antithetic", False))
            cfg.batch_size = mc.get("batch_size")
            cfg.ensemble()  # checks n_paths, seed and antithetic parity
        if "maturities" in raw:
            mats = _number_list(raw["maturities"], "maturities")
            if any(m < 0 for m in mats) or any(b <= a for a, b in zip(mats, mats[1:])):
                raise ConfigError("maturities must be non-negative and strictly increasing")
            if cfg.spec is not None and not cfg.spec.closed_form:
                if cfg.grid is None:
                    raise ConfigError("custom family needs a 'grid' section for its curve")
                for m in mats:
                    cfg.grid.index(m)
            cfg.maturities = mats
        if "option" in raw:
            o = _block(raw, "option", _OPTION_KEYS, ("t", "T", "K"))
            cfg.option = {k: float(o[k]) for k in ("t", "T", "K")}
            CashflowSpec.bond_call(cfg.spec, **cfg.option)
            if cfg.grid is not None:
                cfg.grid.index(cfg.option["t"])
        if "cashflows" in raw:
            if not isinstance(raw["cashflows"], list):
                raise ConfigError("'cashflows' must be a list")
            for i, cf in enumerate(raw["cashflows"]):
                if not isinstance(cf, dict):
                    raise ConfigError(f"cashflow {i} must be a mapping")
                extra = set(cf) - _CASHFLOW_KEYS
                if extra or "pay_time" not in cf:
                    raise ConfigError(f"cashflow {i} needs pay_time (and optional amount) only")
                c = CashflowSpec.constant(float(cf["pay_time"]), float(cf.get("amount", 1.0)))
                if cfg.grid is not None:
                    cfg.grid.index(c.pay_time)
                cfg.cashflows.append(c)
        if command == "price" and cfg.option is None and not cfg.cashflows:
            raise ConfigError("price needs an 'option' or 'cashflows' section")
        if "curve_file" in raw:
            cf = Path(raw["curve_file"])
            cfg.curve_file = cf if cf.is_absolute() else cfg.base_dir / cf
            if not cfg.curve_file.is_file():
                raise ConfigError(f"curve file {cfg.curve_file} does not exist")
        if "validation" in raw:
            v = _block(raw, "validation", _VALIDATION_KEYS)
            cfg.validation = {k: (_number_list(val, k) if isinstance(val, list) else float(val))
                              for k, val in v.items()}
        if "simulate" in raw:
            s = _block(raw, "simulate", _SIMULATE_KEYS)
            wp = s.get("write_paths")
            if wp is not None and (int(wp) != wp or wp < 0):
                raise ConfigError("simulate.write_paths must be a non-negative integer")
            cfg.write_paths = None if wp is None else int(wp)
    except ConfigError:
        raise
    except (ChaosRatesError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    target = out or raw.get("output") or "."
    target = Path(target)
    cfg.output = target if target.is_absolute() or out else cfg.base_dir / target
    return cfg


# -- output helpers ----------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _plain(obj):
    """Convert numpy scalars/arrays so the object can be dumped as YAML."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_manifest(cfg: RunConfig, files, status: str, threads: int) -> Path:
    manifest = {
        "command": cfg.command,
        "status": status,
        "engine_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "threads": threads,
        "float_format": FLOAT_FMT,
        "config": cfg.raw,
        "files": sorted(Path(f).name for f in files),
    }
    path = cfg.output / "manifest.yaml"
    path.write_text(yaml.safe_dump(_plain(manifest), sort_keys=True))
    return path


# -- commands ----------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, threads: int = 1):
    ens = cfg.ensemble()
    grid = cfg.grid
    n_write = ens.n_paths if cfg.write_paths is None else min(cfg.write_paths, ens.n_paths)

    def job(batch):
        return kernel_arrays(cfg.spec, batch), batch.indices

    pi_stats, rho_stats = RunningStats(), RunningStats()
    path_csv = cfg.output / "kernel_paths.csv"
    with path_csv.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "sigma_sq", "pi", "short_rate", "bank", "rho"])
        for kp, idx in ens.map_batches(job, threads=threads):
            pi_stats.update(kp.pi)
            rho_stats.update(kp.rho)
            for row, pid in enumerate(idx):
                if pid >= n_write:
                    break
                for j, t in enumerate(kp.times):
                    w.writerow([int(pid)] + [_fmt(v) for v in (
                        t, kp.sigma_sq[row, j], kp.pi[row, j], kp.short_rate[row, j],
                        kp.bank[row, j], kp.rho[row, j])])
    rows = zip(grid.times, pi_stats.mean, pi_stats.std_error, rho_stats.mean, rho_stats.std_error)
    summary = _write_csv(cfg.output / "summary.csv",
                         ["t", "mean_pi", "se_pi", "mean_rho", "se_rho"], rows)
    return [path_csv, summary], EXIT_OK


def cmd_curve(cfg: RunConfig, threads: int = 1):
    spec = cfg.spec
    curve = initial_curve(spec, cfg.maturities, grid=cfg.grid,
                          seed=cfg.seed if cfg.raw.get("mc") else 0)
    mats = curve.maturities
    if spec.closed_form:
        fwd = initial_forward(spec, mats)
    else:
        base = zero_path(cfg.grid).as_batch()
        kp = kernel_arrays(spec, base, n_cols=1)
        fwd = [float(kp.short_rate[0, 0]) if T == 0 else
               float(forward_rate_columns(spec, base, 0, T)[0]) for T in mats]
    path = _write_csv(cfg.output / "curve.csv", ["maturity", "discount", "forward"],
                      zip(mats, curve.discounts, fwd))
    return [path], EXIT_OK


def cmd_validate(cfg: RunConfig, threads: int = 1):
    v = cfg.validation
    kwargs = {}
    if "times" in v:
        kwargs["times"] = v["times"]
    if "check_times" in v:
        kwargs["check_times"] = v["check_times"]
    if "integrability_t" in v:
        kwargs["integrability_t"] = v["integrability_t"]
    report = run_battery(cfg.spec, cfg.ensemble(), threads=threads, **kwargs)
    path = cfg.output / "validation.csv"
    report.write_csv(path, FLOAT_FMT)
    print(report.table())
    return [path], EXIT_OK if report.passed else EXIT_FAIL


def cmd_price(cfg: RunConfig, threads: int = 1):
    ens = cfg.ensemble()
    items = list(cfg.cashflows)
    if cfg.option is not None:
        o = cfg.option
        items.append(CashflowSpec.bond_call(cfg.spec, o["t"], o["T"], o["K"]))
    rows = []
    for cf in items:
        est = price_single_cashflow(cfg.spec, ens, 0.0, cf, threads=threads)
        rows.append([cf.name, float(est.value), float(est.std_error), est.n_paths])
    path = _write_csv(cfg.output / "prices.csv", ["instrument", "value", "std_error", "n_paths"], rows)
    return [path], EXIT_OK


def cmd_calibrate(cfg: RunConfig, threads: int = 1):
    try:
        curve = read_curve_csv(cfg.curve_file)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            spec = calibrate_first_chaos(curve)
        for w in caught:
            log.warning("%s", w.message)
    except ChaosRatesError as exc:
        raise ConfigError(f"{cfg.curve_file}: {exc}") from None
    repriced = initial_curve(spec, curve.maturities).discounts
    spec_path = cfg.output / "calibrated_spec.yaml"
    spec_path.write_text(yaml.safe_dump({"spec": _plain(spec.to_dict())}, sort_keys=False))
    rows = zip(curve.maturities, curve.discounts, repriced, np.abs(repriced - curve.discounts))
    rt = _write_csv(cfg.output / "roundtrip.csv", ["maturity", "input", "repriced", "abs_error"], rows)
    return [spec_path, rt], EXIT_OK


_DISPATCH = {"simulate": cmd_simulate, "curve": cmd_curve, "validate": cmd_validate,
             "price": cmd_price, "calibrate": cmd_calibrate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaosrates", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_DISPATCH[name].__name__.replace("cmd_", ""))
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for path batches")
        sp.add_argument("--out", help="output directory (overrides the config's 'output')")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        log.error("config error: --threads must be >= 1")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.command, args.out)
        cfg.output.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("config error: cannot create output directory: %s", exc)
        return EXIT_CONFIG
    try:
        files, code = _DISPATCH[args.command](cfg, args.threads)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        _write_manifest(cfg, [], "config_error", args.threads)
        return EXIT_CONFIG
    except (ChaosRatesError, FloatingPointError, OverflowError) as exc:
        log.error("runtime error: %s: %s", type(exc).__name__, exc)
        _write_manifest(cfg, [], "runtime_error", args.threads)
        return EXIT_RUNTIME
    status = "pass" if code == EXIT_OK else "fail"
    _write_manifest(cfg, files, status, args.threads)
    for f in files:
        log.info("wrote %s", f)
    return code


if __name__ == "__main__":
    sys.exit(main())
