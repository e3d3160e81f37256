"""Command-line front end.

Four subcommands: `density` and `table` rerun the simulation studies,
`moments` calibrates the moment estimators, and `spikes` estimates the spike
count of a user-supplied data matrix. Experiment subcommands write delimited
output (plus a rendered PNG unless suppressed) into an output directory;
`spikes` prints a JSON report to standard output.

Exit codes: 0 success, 1 numerical failure, 2 flag/config errors, 3 data
format errors. Options may come from a config file (flat key=value lines or
a JSON object); explicit flags win, and unknown config keys are rejected by
name. All numbers are serialized with their shortest round-trip decimal
representation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .harness import (
    ACCURACY_CELLS,
    ACCURACY_SPIKES,
    SETTINGS,
    ExperimentSpec,
    run_accuracy,
    run_density,
    run_moments,
)
from .inference import CI_METHODS, estimate_spike_count
from .linalg import EigenConvergenceError, SingularMatrixError
from .model import DISTRIBUTION_TAGS, FullHaar, Identity

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_FLAGS = 2
EXIT_DATA = 3

SCHEMA_VERSION = 1

METHOD_ALIASES = {"jbe": "JB_E", "yje": "YJ_E", "jb": "JB_Gauss", "yj": "YJ_Gauss"}

# Tables 2-4 fix the entry law; table 5 (general rotation) takes --dist.
TABLE_DISTS = {2: "std_ga12", 3: "uniform_sqrt3", 4: "gaussian"}

_ALLOWED_KEYS = {
    "density": {"setting", "dist", "n", "p", "reps", "seed", "out", "workers", "no_figures", "schema_version"},
    "table": {"table", "rows", "dist", "reps", "seed", "out", "workers", "no_figures", "m", "schema_version"},
    "moments": {"dist", "n", "p", "reps", "seed", "out", "workers", "no_figures", "schema_version"},
    "spikes": {"data", "method", "r0", "level", "seed", "m", "schema_version"},
}


class FlagError(Exception):
    """Bad flag or config input; maps to exit code 2."""


class DataFormatError(Exception):
    """Malformed input data; maps to exit code 3."""


def fmt(value) -> str:
    """Shortest round-trip serialization (booleans as 0/1)."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _coerce_int(value) -> int:
    if isinstance(value, bool):
        raise FlagError(f"expected an integer, got {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise FlagError(f"expected an integer, got {value!r}") from None


def _coerce_float(value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise FlagError(f"expected a number, got {value!r}") from None


def _coerce_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise FlagError(f"expected a boolean, got {value!r}")


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Merged flag/config values for one subcommand invocation."""

    command: str
    values: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def merge(cls, command: str, args: argparse.Namespace, config: dict) -> "RunConfig":
        allowed = _ALLOWED_KEYS[command]
        for key in config:
            if key not in allowed:
                raise FlagError(f"unknown config key {key!r} for command {command!r}")
        values = {}
        for key in allowed:
            flag_value = getattr(args, key, None)
            values[key] = flag_value if flag_value is not None else config.get(key)
        version = values.pop("schema_version", None)
        version = SCHEMA_VERSION if version is None else _coerce_int(version)
        if version != SCHEMA_VERSION:
            raise FlagError(f"unsupported schema_version {version}; this build writes {SCHEMA_VERSION}")
        return cls(command=command, values=values, schema_version=version)

    def get(self, key, default=None, required: bool = False, coerce: Callable | None = None):
        value = self.values.get(key)
        if value is None:
            value = default
        if value is None:
            if required:
                raise FlagError(f"missing required option --{key.replace('_', '-')}")
            return None
        return coerce(value) if coerce else value


def load_config(path: str) -> dict:
    """Flat key=value text, or a JSON object if the file starts with '{'."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FlagError(f"config file not found: {path}") from None
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FlagError(f"config is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise FlagError("JSON config must be an object")
        return {str(k).replace("-", "_"): v for k, v in obj.items()}
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FlagError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def load_data_csv(path: str) -> np.ndarray:
    """Headerless CSV of reals, rows as observations; row numbers are 1-based."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataFormatError(f"data file not found: {path}") from None
    rows: list[list[float]] = []
    width: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DataFormatError(
                f"row {lineno}: expected {width} fields, found {len(fields)}"
            )
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise DataFormatError(f"row {lineno}: non-numeric field") from None
    if not rows:
        raise DataFormatError(f"data file is empty: {path}")
    return np.asarray(rows, dtype=np.float64)


def parse_rows(text: str) -> list[tuple[int, int]]:
    """Cell selector: 'all' or a list of '(p,n)' pairs."""
    if text.strip().lower() == "all":
        return list(ACCURACY_CELLS)
    import re

    pairs = re.findall(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)", text)
    if not pairs:
        raise FlagError(f"could not parse any (p,n) cell from {text!r}")
    return [(int(p), int(n)) for p, n in pairs]


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(str(cfg.get("out", default=".")))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dist_arg(cfg: RunConfig, required: bool = True) -> str | None:
    dist = cfg.get("dist", required=required)
    if dist is not None and dist not in DISTRIBUTION_TAGS:
        raise FlagError(f"unknown distribution {dist!r}; choose from {', '.join(DISTRIBUTION_TAGS)}")
    return dist


def _build_spec(**kwargs) -> ExperimentSpec:
    # Construction errors come from user-supplied values, so they are flag
    # errors rather than numerical ones.
    try:
        return ExperimentSpec(**kwargs)
    except ValueError as exc:
        raise FlagError(str(exc)) from None


def cmd_density(cfg: RunConfig) -> int:
    setting = cfg.get("setting", required=True, coerce=_coerce_int)
    if setting not in SETTINGS:
        raise FlagError(f"setting must be 1..9, got {setting}")
    dist = _dist_arg(cfg)
    spec = _build_spec(
        kind="Density",
        dist=dist,
        n=cfg.get("n", default=200, coerce=_coerce_int),
        p=cfg.get("p", default=20, coerce=_coerce_int),
        reps=cfg.get("reps", default=10_000, coerce=_coerce_int),
        seed=cfg.get("seed", default=0, coerce=_coerce_int),
        setting=setting,
    )
    workers = cfg.get("workers", coerce=_coerce_int)
    result = run_density(spec, workers=workers)
    out = _out_dir(cfg)

    sample_rows = (
        (rep, k, result.samples[rep, k], bool(result.supercritical[rep, k]))
        for rep in range(spec.reps)
        for k in range(spec.r)
    )
    write_csv(out / "samples.csv", ["rep", "k", "r_stat", "supercritical"], sample_rows)
    write_csv(
        out / "curves.csv",
        ["x", "gaussian_pdf", "edgeworth_pdf"],
        zip(result.curve_x, result.curve_gauss, result.curve_edgeworth),
    )
    summary = {
        "ks_gauss": result.ks_gauss,
        "ks_edgeworth": result.ks_edgeworth,
        "excluded": result.excluded,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if not cfg.get("no_figures", default=False, coerce=_coerce_bool):
        from .figures import render_density

        render_density(result, out / "density.png")
    print(
        f"density setting {setting} ({dist}): ks_gauss={fmt(result.ks_gauss)} "
        f"ks_edgeworth={fmt(result.ks_edgeworth)} excluded={result.excluded} -> {out}"
    )
    return EXIT_OK


def cmd_table(cfg: RunConfig) -> int:
    table = cfg.get("table", required=True, coerce=_coerce_int)
    if table not in (2, 3, 4, 5):
        raise FlagError(f"table must be one of 2, 3, 4, 5, got {table}")
    if table in TABLE_DISTS:
        if cfg.get("dist") is not None:
            raise FlagError(f"table {table} fixes the distribution; drop --dist")
        dist = TABLE_DISTS[table]
        rotation = Identity()
    else:
        dist = _dist_arg(cfg)
        rotation = FullHaar()
    cells = parse_rows(str(cfg.get("rows", default="all")))
    reps = cfg.get("reps", default=1000, coerce=_coerce_int)
    seed = cfg.get("seed", default=0, coerce=_coerce_int)
    m = cfg.get("m", default=1000, coerce=_coerce_int)
    workers = cfg.get("workers", coerce=_coerce_int)
    out = _out_dir(cfg)

    results = []
    for p, n in cells:
        spec = _build_spec(
            kind="Accuracy",
            dist=dist,
            n=n,
            p=p,
            reps=reps,
            seed=seed,
            spikes=ACCURACY_SPIKES,
            rotation=rotation,
            bootstrap_m=m,
        )
        results.append(run_accuracy(spec, workers=workers))

    rows = [
        (res.spec.p, res.spec.n, method, res.percents[method], res.reps, res.seed)
        for res in results
        for method in res.spec.methods
    ]
    write_csv(out / "accuracy.csv", ["p", "n", "method", "percent", "reps", "seed"], rows)
    if not cfg.get("no_figures", default=False, coerce=_coerce_bool):
        from .figures import render_accuracy

        render_accuracy(results, out / "accuracy.png")
    print(f"table {table} ({dist}): {len(cells)} cells x {len(CI_METHODS)} methods -> {out}")
    return EXIT_OK


def cmd_moments(cfg: RunConfig) -> int:
    dist = _dist_arg(cfg)
    spec = _build_spec(
        kind="Moments",
        dist=dist,
        n=cfg.get("n", default=500, coerce=_coerce_int),
        p=cfg.get("p", default=50, coerce=_coerce_int),
        reps=cfg.get("reps", default=200, coerce=_coerce_int),
        seed=cfg.get("seed", default=0, coerce=_coerce_int),
    )
    workers = cfg.get("workers", coerce=_coerce_int)
    result = run_moments(spec, workers=workers)
    out = _out_dir(cfg)
    rows = [
        (name, result.means[name], result.ses[name], result.truths[name])
        for name in ("beta_z", "gamma_sq", "delta")
    ]
    write_csv(out / "moments.csv", ["estimator", "mean", "se", "truth"], rows)
    if not cfg.get("no_figures", default=False, coerce=_coerce_bool):
        from .figures import render_moments

        render_moments(result, out / "moments.png")
    print(f"moments ({dist}, n={spec.n}, p={spec.p}, reps={spec.reps}) -> {out}")
    return EXIT_OK


def cmd_spikes(cfg: RunConfig) -> int:
    data_path = cfg.get("data", required=True)
    alias = str(cfg.get("method", required=True)).lower()
    if alias not in METHOD_ALIASES:
        raise FlagError(f"method must be one of {', '.join(METHOD_ALIASES)}, got {alias!r}")
    method = METHOD_ALIASES[alias]
    r0 = cfg.get("r0", default=5, coerce=_coerce_int)
    level = cfg.get("level", default=0.90, coerce=_coerce_float)
    seed = cfg.get("seed", default=0, coerce=_coerce_int)
    m = cfg.get("m", default=1000, coerce=_coerce_int)

    X = load_data_csv(str(data_path))
    rng = np.random.default_rng(seed)
    est = estimate_spike_count(X, method, r0=r0, level=level, rng=rng, m=m)

    report = {
        "r_hat": est.r_hat,
        "intervals": [
            {"lo": ci.lo, "hi": ci.hi, "level": ci.level, "method": ci.method, "target": ci.target}
            for ci in est.intervals
        ],
        "plugin_spikes": list(est.plugin_spikes),
        "moment_estimates": None
        if est.moments is None
        else {
            "beta_z_hat": est.moments.beta_z_hat,
            "gamma_sq_hat": est.moments.gamma_sq_hat,
            "delta_hat": est.moments.delta_hat,
            "regime": est.moments.regime,
        },
    }
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikedge",
        description="Corrected inference for spiked eigenvalues of sample covariance matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    density = sub.add_parser("density", help="sample the eigenvalue statistic against both approximations")
    density.add_argument("--setting", type=int, help="spike/rotation configuration 1..9")
    density.add_argument("--dist", help="entry distribution tag")
    density.add_argument("--n", type=int, help="sample size (default 200)")
    density.add_argument("--p", type=int, help="dimension of S (default 20)")
    density.add_argument("--reps", type=int, help="Monte Carlo replicates (default 10000)")
    density.add_argument("--seed", type=int, help="master seed (default 0)")
    density.add_argument("--out", help="output directory (default .)")

    table = sub.add_parser("table", help="spike-count accuracy over (p,n) cells")
    table.add_argument("--table", type=int, help="2 gamma/diag, 3 uniform/diag, 4 gaussian/diag, 5 general")
    table.add_argument("--rows", help="'all' or e.g. \"(10,100);(20,200)\"")
    table.add_argument("--dist", help="entry distribution tag (table 5 only)")
    table.add_argument("--reps", type=int, help="replicates per cell (default 1000)")
    table.add_argument("--seed", type=int, help="master seed (default 0)")
    table.add_argument("--m", type=int, help="bootstrap sample size (default 1000)")
    table.add_argument("--out", help="output directory (default .)")

    moments = sub.add_parser("moments", help="calibrate the moment estimators on noise data")
    moments.add_argument("--dist", help="entry distribution tag")
    moments.add_argument("--n", type=int, help="sample size (default 500)")
    moments.add_argument("--p", type=int, help="dimension (default 50)")
    moments.add_argument("--reps", type=int, help="replicates (default 200)")
    moments.add_argument("--seed", type=int, help="master seed (default 0)")
    moments.add_argument("--out", help="output directory (default .)")

    spikes = sub.add_parser("spikes", help="estimate the spike count of a data matrix")
    spikes.add_argument("--data", help="headerless CSV, rows as observations")
    spikes.add_argument("--method", help="jbe | yje | jb | yj")
    spikes.add_argument("--r0", type=int, help="candidates to scan (default 5)")
    spikes.add_argument("--level", type=float, help="interval level (default 0.90)")
    spikes.add_argument("--seed", type=int, help="bootstrap seed (default 0)")
    spikes.add_argument("--m", type=int, help="bootstrap sample size (default 1000)")

    for cmd in (density, table, moments):
        cmd.add_argument("--workers", type=int, help="worker processes (default $EDGEWORTH_WORKERS or CPU count)")
        cmd.add_argument(
            "--no-figures",
            dest="no_figures",
            action="store_const",
            const=True,
            help="skip PNG rendering",
        )
    for cmd in (density, table, moments, spikes):
        cmd.add_argument("--config", help="key=value or JSON config file; flags override")

    return parser


_COMMANDS = {
    "density": cmd_density,
    "table": cmd_table,
    "moments": cmd_moments,
    "spikes": cmd_spikes,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_FLAGS
    try:
        config = load_config(args.config) if getattr(args, "config", None) else {}
        cfg = RunConfig.merge(args.command, args, config)
        return _COMMANDS[args.command](cfg)
    except FlagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularMatrixError, EigenConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
