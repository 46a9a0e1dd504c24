"""Command-line entry point: simulate, transform, expand and verify.

Options come from flags, then from an optional ``--config`` file of
``key=value`` lines, then from built-in defaults.  Every run writes
``manifest.txt`` into its output directory with the resolved options, so
``--config <out>/manifest.txt`` replays the run.

Exit codes: 0 success, 1 verification failure, 2 usage, config or schema
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from . import kernels as kn
from . import laguerre as lg
from . import transforms as tr
from .errors import SchemaError, TruncationWarning, VoltbridgeError
from .simulate import (PathEnsemble, cumulative_paths, read_paths_csv, sample_increments, synthesize_cholesky,
                       synthesize_from_kernel, write_paths_csv)
from .suites import SUITES, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

SHARED = {"seed": 0, "grid": 256, "horizon": 1.0, "paths": 1000, "out": "voltbridge_out", "threads": 1,
          "process": "bm", "hurst": 0.5, "kernel_csv": None}
DEFAULTS = {
    "simulate": {**SHARED, "method": "kernel"},
    "transform": {**SHARED, "input": None, "op": "t1", "mode": "pathwise", "check_roundtrip": False},
    "expand": {**SHARED, "input": None, "t_split": 1.0, "t_max": 64.0, "n_plus": 3, "n_minus": 3,
               "n_inner": 1536, "n_outer": None, "depth": 24, "mode": "analytic", "t_eval": None},
    "verify": {"suite": "all", "out": "voltbridge_out", "threads": 1},
}
TYPES = {"seed": int, "grid": int, "horizon": float, "paths": int, "threads": int, "hurst": float,
         "t_split": float, "t_max": float, "n_plus": int, "n_minus": int, "n_inner": int, "n_outer": int,
         "depth": int, "t_eval": float}
PROCESSES = ("bm", "fbm", "custom")
OPS = ("t1", "t2", "b1", "b2", "anticipative", "reverse", "prediction")
TRANSFORM_MODES = ("pathwise", "operator", "consistent")
RECON_LEVELS = (0, 2, 4, 8, 16)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# option handling
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config(path) -> dict[str, str]:
    """key=value lines; '#' starts a comment; keys may use '-' or '_'."""
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(command: str, flags: dict[str, Any], config: dict[str, str]) -> dict[str, Any]:
    """Merge flags over config over defaults and coerce types."""
    defaults = DEFAULTS[command]
    resolved: dict[str, Any] = {}
    for key, default in defaults.items():
        if flags.get(key) is not None:
            value = flags[key]
        elif key in config:
            value = config[key]
            if value in ("", "None"):
                value = None
        else:
            value = default
        if value is not None:
            try:
                if key in TYPES:
                    value = TYPES[key](value)
                elif key == "check_roundtrip":
                    value = value if isinstance(value, bool) else _parse_bool(value)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {value!r}") from None
        resolved[key] = value
    unknown = set(config) - set(defaults) - {"command", "version"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if config.get("command", command) != command:
        raise ConfigError(f"config was written by '{config['command']}', not '{command}'")
    _validate(command, resolved)
    return resolved


def _validate(command: str, o: dict[str, Any]) -> None:
    if o.get("threads", 1) < 1:
        raise ConfigError("--threads must be at least 1")
    if command == "verify":
        if o["suite"] not in (*SUITES, "all"):
            raise ConfigError(f"unknown suite {o['suite']!r}; choose from {', '.join((*SUITES, 'all'))}")
        return
    if o["process"] not in PROCESSES:
        raise ConfigError(f"unknown process {o['process']!r}")
    if o["process"] == "custom" and not o["kernel_csv"]:
        raise ConfigError("--process custom needs --kernel-csv")
    if not 0 <= o["seed"] < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    if o["paths"] < 0 or o["grid"] < 1 or not o["horizon"] > 0:
        raise ConfigError("--paths must be >= 0, --grid >= 1 and --horizon > 0")
    if command == "simulate" and o["method"] not in ("kernel", "cholesky"):
        raise ConfigError(f"unknown method {o['method']!r}")
    if command == "transform":
        if o["op"] not in OPS:
            raise ConfigError(f"unknown op {o['op']!r}")
        if o["mode"] not in TRANSFORM_MODES:
            raise ConfigError(f"unknown mode {o['mode']!r}")
        if o["input"] is None:
            raise ConfigError("transform needs --input")
    if command == "expand":
        if o["mode"] not in lg.MODES:
            raise ConfigError(f"unknown mode {o['mode']!r}")
        if o["process"] != "bm":
            raise ConfigError("expand works on Brownian martingale input (--process bm)")
        if not 0 < o["t_split"] < o["t_max"]:
            raise ConfigError("need 0 < --t-split < --t-max")


def write_manifest(out: Path, command: str, options: dict[str, Any]) -> None:
    lines = [f"command={command}", f"version={__version__}"]
    for key in sorted(options):
        value = options[key]
        lines.append(f"{key}={'' if value is None else (repr(value) if isinstance(value, float) else value)}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# process setup
# ---------------------------------------------------------------------------

def _kernel(o: dict[str, Any], grid: kn.TimeGrid) -> kn.DiscreteKernel:
    if o["process"] == "bm":
        return kn.fbm_discrete_kernel(0.5, grid)
    if o["process"] == "fbm":
        return kn.fbm_discrete_kernel(o["hurst"], grid)
    return kn.read_kernel_csv(o["kernel_csv"], grid)


def _node_covariance(o: dict[str, Any], grid: kn.TimeGrid, dk: Optional[kn.DiscreteKernel]) -> np.ndarray:
    if o["process"] == "bm":
        return np.minimum.outer(grid.nodes, grid.nodes)
    if o["process"] == "fbm":
        return kn.fbm_covariance_matrix(o["hurst"], grid.nodes)
    return kn.covariance_from_kernel(dk)


def _process_name(o: dict[str, Any]) -> str:
    return {"bm": "bm", "fbm": f"fbm({o['hurst']})", "custom": "custom"}[o["process"]]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(o: dict[str, Any], out: Path) -> int:
    grid = kn.make_grid(o["horizon"], o["grid"])
    name = _process_name(o)
    if o["method"] == "kernel":
        dk = _kernel(o, grid)
        ens = synthesize_from_kernel(dk, sample_increments(grid, o["paths"], o["seed"], o["threads"]),
                                     o["seed"], name)
    else:
        dk = _kernel(o, grid) if o["process"] == "custom" else None
        cov = _node_covariance(o, grid, dk)[1:, 1:]
        ens = synthesize_cholesky(cov, o["paths"], o["seed"], grid, name, o["threads"])
    write_paths_csv(out / "paths.csv", ens)
    return EXIT_OK


def cmd_transform(o: dict[str, Any], out: Path) -> int:
    fallback = kn.make_grid(o["horizon"], o["grid"])
    ens = read_paths_csv(o["input"], _process_name(o), empty_grid=fallback)
    grid = ens.grid
    dk = _kernel(o, grid)
    qv = kn.quadratic_variation(dk)
    op_name = o["op"]
    method = "pathwise" if o["mode"] == "pathwise" else "operator"
    mode = "consistent" if o["mode"] == "consistent" else "analytic"
    kind = op_name.upper() if op_name[0] in "tb" else op_name
    if o["process"] == "bm":
        if kind in ("T1", "T2"):
            res = tr.transform_T_martingale(ens, qv, int(kind[1]), method, mode)
        elif kind in ("B1", "B2"):
            res = tr.bridge_B_martingale(ens, qv, int(kind[1]), method, mode)
        elif kind == "anticipative":
            res = tr.anticipative_bridge(ens, qv.cumulative, qv.total)
        elif kind == "reverse":
            res = tr.time_reverse(ens)
        else:
            res = ens
    else:
        pk = kn.prediction_kernel(dk)
        cov = _node_covariance(o, grid, dk)
        res = tr.transform_volterra(ens, pk, qv, kind, method, mode, cov=cov)
    write_paths_csv(out / "paths.csv", res)
    if o["check_roundtrip"]:
        i = int(kind[1]) if kind[0] in "TB" else 1
        residuals = []
        if ens.n_paths:
            pk = None if o["process"] == "bm" else kn.prediction_kernel(dk)
            residuals = tr.roundtrip_residuals(ens, qv, i, (mode,), pk=pk)
        tr.write_residuals_csv(out / "residuals.csv", residuals)
        for r in residuals:
            print(f"{r.identity} [{r.mode}]: {r.max_residual:.3e}")
    return EXIT_OK


def cmd_expand(o: dict[str, Any], out: Path) -> int:
    T, T_max = o["t_split"], o["t_max"]
    n_outer = o["n_outer"]
    if n_outer is None:
        n_outer = max(1, int(round(o["n_inner"] / o["depth"] * math.log2(T_max / T))))
        o["n_outer"] = n_outer
    two_sided = lg.make_two_sided_grid(T, T_max, o["n_inner"], n_outer, depth=o["depth"])
    if o["input"] is not None:
        ens = read_paths_csv(o["input"], "bm", empty_grid=two_sided)
    else:
        dW = sample_increments(two_sided, o["paths"], o["seed"], o["threads"])
        ens = PathEnsemble(two_sided, "bm", cumulative_paths(dW), o["seed"])
        write_paths_csv(out / "paths.csv", ens)
    grid = ens.grid
    if not np.any(np.isclose(grid.nodes, T, rtol=0, atol=1e-12 * T_max)):
        raise SchemaError(f"split time {T} is not a node of the input grid")
    iT = int(np.argmin(np.abs(grid.nodes - T)))
    qv = kn.brownian_qv(grid)
    ratio = lg.truncation_ratio(qv, iT)
    if ratio > lg.ERROR_RATIO:
        print(f"error: <M>_T/<M>_Tmax = {ratio:.3g} exceeds {lg.ERROR_RATIO}", file=sys.stderr)
        return EXIT_NUMERIC
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        co = lg.epsilon_coefficients(ens, qv, iT, o["n_plus"], o["n_minus"], o["mode"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    lg.write_coefficients_csv(out / "coefficients.csv", co)

    t_eval = o["t_eval"] if o["t_eval"] is not None else 0.5 * T
    it = int(np.argmin(np.abs(grid.nodes - t_eval)))
    it = min(max(it, 1), iT)
    with open(out / "reconstruction.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "N", "mse", "parseval_tail"])
        Mt = ens.paths[:, it]
        for N in RECON_LEVELS:
            if N > o["n_plus"]:
                break
            approx = lg.reconstruct_value(co, it, N)
            mse = float(np.mean((Mt - approx) ** 2)) if co.n_paths else 0.0
            w.writerow([repr(float(grid.nodes[it])), N, repr(mse),
                        repr(lg.parseval_target(qv, iT, it, N))])

    fe = lg.expand_functional((np.arange(grid.n) < iT).astype(float), co, rule="cell")
    with open(out / "parseval.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "value", "target"])
        w.writerow(["sum_c2_indicator_past", repr(float(np.sum(fe.c ** 2))), repr(co.CT)])
        w.writerow(["truncation_ratio", repr(co.truncation_ratio), ""])
        for n in sorted(co.tail_mass, reverse=True):
            w.writerow([f"tail_mass_{n}", repr(co.tail_mass[n]), ""])
    return EXIT_OK


def cmd_verify(o: dict[str, Any], out: Path) -> int:
    rep = run_suite(o["suite"], o["threads"])
    rep.write_csv(out / "report.csv")
    for e in rep.failures:
        print(f"FAIL {e.label}: estimate={e.estimate:.6g} target={e.target:.6g} se={e.se:.3g}")
    print(f"{o['suite']}: {len(rep.entries) - len(rep.failures)}/{len(rep.entries)} checks passed")
    return EXIT_OK if rep.all_passed else EXIT_VERIFY


COMMANDS = {"simulate": cmd_simulate, "transform": cmd_transform, "expand": cmd_expand, "verify": cmd_verify}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file merged under the flags")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int, help="number of grid cells")
    p.add_argument("--horizon", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--process", choices=PROCESSES)
    p.add_argument("--hurst", type=float)
    p.add_argument("--kernel-csv", dest="kernel_csv", help="kernel matrix CSV (i,j,value) for --process custom")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voltbridge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"voltbridge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a path ensemble")
    _add_shared(p)
    p.add_argument("--method", choices=("kernel", "cholesky"))

    p = sub.add_parser("transform", help="apply a transform or bridge to a path CSV")
    _add_shared(p)
    p.add_argument("--input")
    p.add_argument("--op", choices=OPS)
    p.add_argument("--mode", choices=TRANSFORM_MODES)
    p.add_argument("--check-roundtrip", dest="check_roundtrip", action="store_const", const=True)

    p = sub.add_parser("expand", help="two-sided Laguerre coefficients of a Brownian martingale")
    _add_shared(p)
    p.add_argument("--input", help="path CSV on [0, T_max]; simulated when absent")
    p.add_argument("--t-split", dest="t_split", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--n-plus", dest="n_plus", type=int)
    p.add_argument("--n-minus", dest="n_minus", type=int)
    p.add_argument("--n-inner", dest="n_inner", type=int)
    p.add_argument("--n-outer", dest="n_outer", type=int)
    p.add_argument("--depth", type=int, help="geometric inner grid reaches T*2^-depth")
    p.add_argument("--t-eval", dest="t_eval", type=float, help="reconstruction time (default T/2)")
    p.add_argument("--mode", choices=lg.MODES)

    p = sub.add_parser("verify", help="run a named verification suite")
    p.add_argument("--suite")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--config")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        config = read_config(args.config) if args.config else {}
        options = resolve(args.command, flags, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(options["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        code = COMMANDS[args.command](options, out)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VoltbridgeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_manifest(out, args.command, options)
    return code


if __name__ == "__main__":
    sys.exit(main())
