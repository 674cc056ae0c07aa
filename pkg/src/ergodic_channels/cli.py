"""Experiment runner.

Usage::

    python -m ergodic_channels run CONFIG.toml [--out DIR] [--seed N] [--threads N]

Exit status: 0 success, 2 config error, 3 assumption failure, 4 convergence
failure. See the README for the config grammar.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .cpmaps import (
    CPMap,
    amplitude_damping,
    depolarizing_map,
    identity_map,
    load_kraus,
    random_channel,
    unitary_map,
)
from .ergodic import GOLDEN, ErgodicDriver, keyed_rng, validate_assumptions
from .matcore import MAX_DIM
from .mps import (
    MAX_SUPPORT,
    BoundaryError,
    LocalObservable,
    MpsChain,
    brute_force_expectation,
    correlation,
    finite_expectation,
    gauge_fix,
    load_observable,
    thermo_expectation,
)
from .pmetric import DegenerateMapError
from .process import (
    AssumptionWarning,
    ConvergenceError,
    Side,
    SpectralGapError,
    convergence_table,
    kappa_estimate,
    limit_sequence,
    rank_one_table,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_CONVERGENCE = 4

EXPERIMENTS = ("CONVERGENCE", "KAPPA", "RANK_ONE", "MPS_EXPECT", "CORRELATION", "ASSUMPTIONS")

DEFAULT_TOLERANCES = {"limit_tol": 1e-12, "max_depth": 4096, "imag_tol": 1e-10}

PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


class ConfigError(ValueError):
    pass


def _get(table: dict, key: str, where: str, kind=None, default=...):
    if key not in table:
        if default is ...:
            raise ConfigError(f"field '{where}{key}': missing")
        return default
    val = table[key]
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind in (int, float):
        raise ConfigError(f"field '{where}{key}': expected {getattr(kind, '__name__', kind)}, got {val!r}")
    return val


# -- driver construction -------------------------------------------------------


def _base_map(spec, D: int, seed: int, base_dir: Path) -> CPMap:
    where = "driver.base"
    if not isinstance(spec, str):
        raise ConfigError(f"field '{where}': expected a string")
    name, _, arg = spec.partition(":")
    if name == "depolarizing":
        return depolarizing_map(D)
    if name == "identity":
        return identity_map(D)
    if name == "unitary":
        G = keyed_rng(seed, 5).standard_normal((D, D)) + 1j * keyed_rng(seed, 6).standard_normal((D, D))
        Q, R = np.linalg.qr(G)
        return unitary_map(Q * (np.diag(R) / np.abs(np.diag(R))))
    if name == "amplitude_damping":
        if D != 2:
            raise ConfigError(f"field '{where}': amplitude_damping needs D = 2")
        try:
            return amplitude_damping(float(arg or 0.5))
        except ValueError as exc:
            raise ConfigError(f"field '{where}': {exc}") from exc
    if name == "random_channel":
        d = int(arg) if arg else D * D
        return random_channel(D, d, keyed_rng(seed, 7))
    path = Path(spec)
    if not path.is_absolute():
        path = base_dir / path
    if path.suffix == ".json":
        try:
            phi = load_kraus(path)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"field '{where}': cannot load Kraus file {path}: {exc}") from exc
        if phi.dim != D:
            raise ConfigError(f"field '{where}': Kraus file has D = {phi.dim}, config says {D}")
        return phi
    raise ConfigError(f"field '{where}': unknown base map {spec!r}")


def build_driver(cfg: dict, base_dir: Path) -> ErgodicDriver:
    drv = cfg.get("driver")
    if not isinstance(drv, dict):
        raise ConfigError("table [driver] missing")
    w = "driver."
    kind = _get(drv, "kind", w, str).upper()
    D = _get(drv, "D", w, int)
    seed = _get(drv, "seed", w, int, 0)
    if not 1 <= D <= MAX_DIM:
        raise ConfigError(f"field 'driver.D': must be in [1, {MAX_DIM}], got {D}")
    tp = _get(drv, "trace_preserving", w, bool, True)
    if kind in ("IID", "ROTATION"):
        d = _get(drv, "d", w, int)
        if not 1 <= d <= D * D:
            raise ConfigError(f"field 'driver.d': must be in [1, D^2 = {D * D}], got {d}")
        if kind == "IID":
            return ErgodicDriver.iid(D, d, seed, trace_preserving=tp)
        alpha = float(_get(drv, "alpha", w, (int, float), GOLDEN))
        modes = _get(drv, "n_modes", w, int, 2)
        return ErgodicDriver.rotation(D, d, seed, alpha=alpha, n_modes=modes, trace_preserving=tp)
    if kind in ("FIXED", "FIXED_PLUS_NOISE"):
        base = _base_map(_get(drv, "base", w, str), D, seed, base_dir)
        if base.rank > D * D:
            raise ConfigError(f"field 'driver.base': Kraus rank {base.rank} exceeds D^2")
        if kind == "FIXED":
            return ErgodicDriver.fixed(base)
        eps = float(_get(drv, "eps", w, (int, float)))
        window = _get(drv, "ma_window", w, int, 1)
        if window < 1:
            raise ConfigError("field 'driver.ma_window': must be >= 1")
        return ErgodicDriver.fixed_plus_noise(base, eps, seed, ma_window=window)
    if kind == "MARKOV":
        table = _get(drv, "table", w, list)
        maps = [_base_map(s, D, seed + j, base_dir) for j, s in enumerate(table)]
        try:
            return ErgodicDriver.markov(maps, _get(drv, "transition", w, list), seed)
        except ValueError as exc:
            raise ConfigError(f"field 'driver.transition': {exc}") from exc
    raise ConfigError(f"field 'driver.kind': unknown kind {kind!r}")


def _observable(spec, where: str, d: int, base_dir: Path, site: int | None = None) -> LocalObservable:
    """An observable from a JSON path, a Pauli name (with ``site``), or an inline table."""
    try:
        if isinstance(spec, str) and spec.upper() in PAULI:
            if d != 2:
                raise ConfigError(f"field '{where}': Pauli observables need d = 2")
            return LocalObservable((site or 0, site or 0), PAULI[spec.upper()])
        if isinstance(spec, str):
            path = Path(spec) if Path(spec).is_absolute() else base_dir / spec
            O = load_observable(path)
        elif isinstance(spec, dict):
            O = LocalObservable.from_json(spec)
        else:
            raise ConfigError(f"field '{where}': expected a path, Pauli name or table")
        if O.phys_dim() != d:
            raise ConfigError(f"field '{where}': observable has d = {O.phys_dim()}, driver has d = {d}")
        return O
    except ConfigError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"field '{where}': {exc}") from exc


# -- experiments ----------------------------------------------------------------


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _int_list(params: dict, key: str, default) -> list[int]:
    val = params.get(key, default)
    if isinstance(val, dict):
        val = list(range(int(val["start"]), int(val["stop"]) + 1))
    if not isinstance(val, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in val):
        raise ConfigError(f"field 'params.{key}': expected a list of integers")
    return val


def run_convergence(driver, params, tol, threads):
    Ns = _int_list(params, "N", list(range(1, 17)))
    if any(N < 1 for N in Ns):
        raise ConfigError("field 'params.N': window lengths must be >= 1")
    reference = params.get("reference", "limit")
    if reference not in ("limit", "proxy"):
        raise ConfigError("field 'params.reference': expected 'limit' or 'proxy'")
    factor = int(params.get("proxy_factor", 2)) if reference == "proxy" else None
    Z = limit_sequence(driver, Side.RIGHT, tol=tol["limit_tol"], max_depth=tol["max_depth"])
    if factor is None:
        Z.z(0)
    rows = _pmap(lambda N: convergence_table(driver, [N], reference=Z, proxy_factor=factor)[0], Ns, threads)
    return {"convergence.csv": (("N", "d_RN_Z0"), rows)}, {}


def run_kappa(driver, params, tol, threads):
    N_max = int(params.get("N_max", 10))
    n_windows = int(params.get("n_windows", 16))
    if N_max < 2:
        raise ConfigError("field 'params.N_max': must be >= 2")
    res = kappa_estimate(driver, N_max, n_windows, n_pairs=int(params.get("n_pairs", 64)))
    rows = [(N, mean, per) for N, mean, per, _ in res.table]
    summary = {"kappa_hat": res.kappa_hat, "nonincreasing": res.nonincreasing, "excluded": res.excluded}
    return {"kappa.csv": (("N", "ln_c_N", "ln_c_N_over_N"), rows)}, summary


def run_rank_one(driver, params, tol, threads):
    m = int(params.get("m", 0))
    gaps = _int_list(params, "gaps", list(range(0, 15)))
    Z = limit_sequence(driver, Side.RIGHT, tol=tol["limit_tol"], max_depth=tol["max_depth"])
    Zp = limit_sequence(driver, Side.LEFT, tol=tol["limit_tol"], max_depth=tol["max_depth"])
    # warm the caches in a fixed order before fanning out
    for g in gaps:
        Z.z(m + g)
    Zp.z(m)
    rows = _pmap(lambda g: rank_one_table(driver, m, [g], Z, Zp)[0], gaps, threads)
    return {"rank_one.csv": (("n_minus_m", "rank_one_error", "split_bound", "hs_bound"), rows)}, {}


def run_mps_expect(driver, params, tol, threads, base_dir):
    d = driver.kraus_rank
    O = _observable(params.get("observable", "Z"), "params.observable", d, base_dir)
    sizes = _int_list(params, "N", list(range(2, 8)))
    m, n = O.support
    Z = limit_sequence(driver, Side.RIGHT, tol=tol["limit_tol"], max_depth=tol["max_depth"])
    Zp = limit_sequence(driver, Side.LEFT, tol=tol["limit_tol"], max_depth=tol["max_depth"])
    gauge = gauge_fix(driver, Zp, m, n, Z)
    W = thermo_expectation(gauge, O, tol["imag_tol"])

    def row(N):
        chain = MpsChain.from_driver(driver, m - N, n + N)
        fin = finite_expectation(chain, O, tol["imag_tol"])
        sites = chain.n_sites
        brute = brute_force_expectation(chain, O) if sites * np.log2(d) <= 18 else ""
        return (N, sites, fin, brute, W, abs(fin - W))

    rows = _pmap(row, sizes, threads)
    header = ("N", "sites", "finite_expectation", "brute_force", "thermo_expectation", "abs_gap")
    return {"mps_expect.csv": (header, rows)}, {"W": W}


def run_correlation(driver, params, tol, threads, base_dir):
    d = driver.kraus_rank
    seps = _int_list(params, "separations", list(range(1, 13)))
    if any(s < 1 for s in seps):
        raise ConfigError("field 'params.separations': separations must be >= 1")
    O1 = _observable(params.get("O1", "Z"), "params.O1", d, base_dir, site=0)
    O2 = _observable(params.get("O2", "Z"), "params.O2", d, base_dir, site=0)
    n1 = O1.support[1]
    hi = n1 + max(seps) + O2.length
    Z = limit_sequence(driver, Side.RIGHT, tol=tol["limit_tol"], max_depth=tol["max_depth"])
    Zp = limit_sequence(driver, Side.LEFT, tol=tol["limit_tol"], max_depth=tol["max_depth"])
    gauge = gauge_fix(driver, Zp, O1.support[0], hi, Z)

    def row(s):
        O2s = O2.shifted(n1 + s - O2.support[0])
        return (s, *correlation(gauge, O1, O2s, tol["imag_tol"]))

    rows = _pmap(row, seps, threads)
    return {"correlation.csv": (("separation", "W12", "W1", "W2", "connected"), rows)}, {}


def run_assumptions(driver, params, tol, threads):
    horizon = int(params.get("horizon", 8))
    if horizon < 1:
        raise ConfigError("field 'params.horizon': must be >= 1")
    rep = validate_assumptions(driver, horizon, starts=range(int(params.get("n_starts", 16))))
    rows = [(N0, f) for N0, f in sorted(rep.strict_fraction.items())]
    summary = rep.as_dict()
    return {"assumptions.csv": (("N0", "strict_fraction"), rows)}, summary


# -- output -------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue().encode()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def load_config(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg


def validate_config(cfg: dict) -> tuple[str, dict, dict, dict]:
    exp = cfg.get("experiment")
    if not isinstance(exp, str) or exp.upper() not in EXPERIMENTS:
        raise ConfigError(f"field 'experiment': expected one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("field 'params': expected a table")
    boundary = str(cfg.get("mps", {}).get("boundary", "PERIODIC")).upper()
    if boundary != "PERIODIC":
        raise ConfigError("field 'mps.boundary': only periodic boundary conditions are supported")
    tol_over = cfg.get("tolerances", {})
    if not isinstance(tol_over, dict):
        raise ConfigError("field 'tolerances': expected a table")
    unknown = set(tol_over) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"field 'tolerances.{sorted(unknown)[0]}': unknown tolerance")
    tol = dict(DEFAULT_TOLERANCES, **tol_over)
    for key in ("O1", "O2", "observable"):
        spec = params.get(key)
        if isinstance(spec, dict) and "support" in spec:
            m, n = spec["support"]
            if n - m + 1 > MAX_SUPPORT:
                raise ConfigError(f"field 'params.{key}.support': length exceeds {MAX_SUPPORT}")
    return exp.upper(), params, tol, tol_over


def run(config_path, out: str | None = None, seed: int | None = None, threads: int = 1) -> int:
    config_path = Path(config_path)
    base_dir = config_path.parent
    try:
        cfg = load_config(config_path)
        overrides = {}
        if seed is not None:
            cfg.setdefault("driver", {})
            if isinstance(cfg["driver"], dict):
                cfg["driver"]["seed"] = seed
            overrides["seed"] = seed
        exp, params, tol, tol_over = validate_config(cfg)
        if tol_over:
            overrides["tolerances"] = tol_over
        out_dir = Path(out) if out else Path(cfg.get("output", {}).get("dir", "out"))
        driver = build_driver(cfg, base_dir)
        runners = {
            "CONVERGENCE": lambda: run_convergence(driver, params, tol, threads),
            "KAPPA": lambda: run_kappa(driver, params, tol, threads),
            "RANK_ONE": lambda: run_rank_one(driver, params, tol, threads),
            "MPS_EXPECT": lambda: run_mps_expect(driver, params, tol, threads, base_dir),
            "CORRELATION": lambda: run_correlation(driver, params, tol, threads, base_dir),
            "ASSUMPTIONS": lambda: run_assumptions(driver, params, tol, threads),
        }
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AssumptionWarning)
            tables, summary = runners[exp]()
        notes = sorted({str(w.message) for w in caught if issubclass(w.category, AssumptionWarning)})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BoundaryError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (SpectralGapError, DegenerateMapError) as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION

    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, (header, rows) in sorted(tables.items()):
        data = _csv_bytes(header, rows)
        (out_dir / name).write_bytes(data)
        files[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "version": __version__,
        "experiment": exp,
        "config": _jsonable(cfg),
        "driver": _jsonable(driver.describe()),
        "tolerances": _jsonable(tol),
        "overrides": _jsonable(overrides),
        "summary": _jsonable(summary),
        "warnings": notes,
        "files": files,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if exp == "ASSUMPTIONS":
        failed = [n for n in summary.get("notes", []) if "assumption" in n]
        if failed:
            for n in failed:
                print(f"assumption failure: {n}", file=sys.stderr)
            return EXIT_ASSUMPTION
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ergodic-channels", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment from a TOML config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, default=None, help="override driver.seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.config, out=args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
