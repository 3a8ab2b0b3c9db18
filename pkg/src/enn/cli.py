"""Command-line experiment harness.

Usage::

    enn toy|sanity|train|fixture-check --config PATH [--out DIR]
        [--seed-data N] [--seed-ensemble N] [--seed-perturb N] [--threads N]

The config is an INI file (see ``CONFIG_GRAMMAR`` and the README). Every
key has a default; the fully resolved config, including all three seeds,
is written to ``<out>/resolved_config.ini`` before any computation starts.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import logging
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import worked_example
from .data import (
    REFERENCE_ARCHITECTURE,
    ColumnMismatch,
    ParseError,
    SplitSpec,
    gen_ideal_dataset,
    gen_toy_cubic,
    load_csv,
    loss_mae,
    split,
    standardize,
)
from .enrml import (
    LambdaController,
    MaxIterations,
    NoiseModel,
    PriorModel,
    RepeatedRejection,
    StoppingRule,
    lambda_init,
    mismatch_stats,
    train,
)
from .ensemble import sample_prior_ensemble
from .io import write_csv
from .network import NetworkArchitecture, forward_ensemble
from .numerics import NegativeVariance, RngStream
from .uq import WeightTrace, predict_band, weight_trace_step

__all__ = ["ConfigError", "RunConfig", "RunReport", "load_config", "run", "main", "EXIT_CODES"]

logger = logging.getLogger(__name__)

EXIT_CODES = {"ok": 0, "config": 2, "data": 3, "numerical": 4, "fixture": 5, "io": 6}

KINDS = {"toy": "toy", "sanity": "sanity", "train": "train_csv", "fixture-check": "fixture_check"}

# Defaults shared by every experiment kind, then per-kind overrides.
_COMMON = {
    "experiment": {"kind": "", "output_dir": "enn_out"},
    "seeds": {"data": "0", "ensemble": "1", "perturbation": "2"},
    "network": {"hidden_layers": "5", "hidden_activation": "tanh", "output_activation": "linear"},
    "enrml": {
        "n_ensemble": "100",
        "obs_std": "0.002",
        "prior_mean": "0.0",
        "prior_std": "1.0",
        "gamma": "10.0",
        "lambda_floor": "0.005",
        "lambda_init": "auto",
        "perturbation": "per_iteration",
        "max_iterations": "500",
        "window": "5",
        "rel_tol": "1e-4",
        "max_rejections": "8",
        "max_accepted": "none",
        "anomaly_threshold": "2000",
        "strict": "false",
    },
}
_PER_KIND = {
    "toy": {
        "network": {"hidden_layers": "100", "hidden_activation": "relu"},
        "enrml": {"obs_std": "3.0", "max_iterations": "200"},
        "toy": {
            "n": "20",
            "x_low": "-4.0",
            "x_high": "4.0",
            "noise_var": "9.0",
            "grid_low": "-6.0",
            "grid_high": "6.0",
            "grid_points": "241",
            "k_sigma": "3.0",
        },
    },
    "sanity": {
        "network": {
            "hidden_layers": ",".join(str(w) for w in REFERENCE_ARCHITECTURE.layer_widths[:-1]),
        },
        "sanity": {"n_train": "70", "n_test": "30", "input_std": "10.0"},
    },
    "train_csv": {
        "data": {
            "path": "",
            "input_cols": "0",
            "target_cols": "1",
            "header": "false",
            "delimiter": ",",
            "standardize": "false",
            "train_count": "all",
            "test_count": "0",
            "k_sigma": "3.0",
        },
    },
    "fixture_check": {},
}

CONFIG_GRAMMAR = """\
INI syntax: [section] headers, one `key = value` per line, `#` or `;` comments.
Sections: experiment, seeds, network, enrml, and one of toy / sanity / data.
Lists are comma-separated. `none` / `auto` select the documented fallback.
"""


class ConfigError(ValueError):
    """Invalid config; the message names the file and line."""


class _OutputError(OSError):
    pass


def _defaults(kind: str) -> dict[str, dict[str, str]]:
    out = {sec: dict(vals) for sec, vals in _COMMON.items()}
    for sec, vals in _PER_KIND[kind].items():
        out.setdefault(sec, {}).update(vals)
    out["experiment"]["kind"] = kind
    return out


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Map ``(section, key)`` (and ``(section, None)``) to 1-based line numbers."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        if m := _SECTION_RE.match(line):
            section = m.group(1).strip()
            index[(section, None)] = n
        elif section is not None and (m := _KEY_RE.match(line)):
            index[(section, m.group(1).strip().lower())] = n
    return index


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration (every key materialized)."""

    kind: str
    values: dict
    source: str
    lines: dict

    def where(self, section: str, key: str | None = None) -> str:
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"{self.source}:{line}" if line else f"{self.source} [{section}]"

    def raw(self, section: str, key: str) -> str:
        return self.values[section][key]

    def _convert(self, section: str, key: str, fn, what: str):
        text = self.raw(section, key)
        try:
            return fn(text)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.where(section, key)}: {section}.{key} = {text!r} is not {what}") from None

    def get_int(self, section: str, key: str, minimum: int | None = None, optional: str | None = None):
        if optional is not None and self.raw(section, key).strip().lower() == optional:
            return None
        v = self._convert(section, key, int, "an integer")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{self.where(section, key)}: {section}.{key} must be >= {minimum}, got {v}")
        return v

    def get_float(self, section: str, key: str, positive: bool = False, optional: str | None = None):
        if optional is not None and self.raw(section, key).strip().lower() == optional:
            return None
        v = self._convert(section, key, float, "a number")
        if not np.isfinite(v) or (positive and v <= 0):
            cond = "a finite number > 0" if positive else "a finite number"
            raise ConfigError(f"{self.where(section, key)}: {section}.{key} must be {cond}, got {v}")
        return v

    def get_bool(self, section: str, key: str) -> bool:
        text = self.raw(section, key).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.where(section, key)}: {section}.{key} = {text!r} is not a boolean")

    def get_choice(self, section: str, key: str, choices) -> str:
        text = self.raw(section, key).strip()
        if text not in choices:
            raise ConfigError(
                f"{self.where(section, key)}: {section}.{key} = {text!r}; expected one of {sorted(choices)}"
            )
        return text

    def get_list(self, section: str, key: str) -> list[str]:
        return [t.strip() for t in self.raw(section, key).split(",") if t.strip()]

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict(self.values)
        buf = io.StringIO()
        parser.write(buf)
        return f"# resolved config for `enn` ({self.kind}); source: {self.source}\n" + buf.getvalue()


def load_config(path, kind: str, overrides: dict[tuple[str, str], str] | None = None) -> RunConfig:
    """Parse ``path`` over the defaults of ``kind``.

    Unknown sections or keys are rejected with their line number so that
    typos cannot silently fall back to defaults.
    """
    if kind not in _PER_KIND:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: key outside any [section]: {exc.line.strip()!r}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}:{lineno}: cannot parse line {line.strip()!r}") from None

    lines = _line_index(text)
    values = _defaults(kind)
    for section in parser.sections():
        if section not in values:
            raise ConfigError(
                f"{path}:{lines.get((section, None), '?')}: unknown section [{section}] for {kind}; "
                f"expected {sorted(values)}"
            )
        for key, val in parser.items(section, raw=True):
            if key not in values[section]:
                raise ConfigError(
                    f"{path}:{lines.get((section, key), '?')}: unknown key {key!r} in [{section}]"
                )
            values[section][key] = val.strip()
    for (section, key), val in (overrides or {}).items():
        values[section][key] = str(val)
        lines[(section, key)] = None
    declared = values["experiment"]["kind"]
    if declared != kind:
        raise ConfigError(
            f"{path}:{lines.get(('experiment', 'kind'), '?')}: config declares kind {declared!r} "
            f"but the {kind!r} command was run"
        )
    return RunConfig(kind, values, str(path), lines)


# -- config -> objects ---------------------------------------------------------


def _architecture(cfg: RunConfig, input_dim: int, output_dim: int) -> NetworkArchitecture:
    try:
        hidden = tuple(int(w) for w in cfg.get_list("network", "hidden_layers"))
    except ValueError:
        raise ConfigError(
            f"{cfg.where('network', 'hidden_layers')}: hidden_layers must be comma-separated integers"
        ) from None
    acts = ("relu", "tanh", "sigmoid", "linear")
    try:
        return NetworkArchitecture(
            input_dim,
            hidden + (output_dim,),
            cfg.get_choice("network", "hidden_activation", acts),
            cfg.get_choice("network", "output_activation", acts),
        )
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('network')}: {exc}") from None


def _stopping(cfg: RunConfig) -> StoppingRule:
    return StoppingRule(
        max_iterations=cfg.get_int("enrml", "max_iterations", 0),
        window=cfg.get_int("enrml", "window", 1),
        rel_tol=cfg.get_float("enrml", "rel_tol"),
        max_rejections=cfg.get_int("enrml", "max_rejections", 1),
        max_accepted=cfg.get_int("enrml", "max_accepted", 1, optional="none"),
        strict=cfg.get_bool("enrml", "strict"),
    )


def _controller(cfg: RunConfig) -> tuple[float | None, float, float]:
    gamma = cfg.get_float("enrml", "gamma", positive=True)
    if gamma <= 1:
        raise ConfigError(f"{cfg.where('enrml', 'gamma')}: gamma must be > 1")
    floor = cfg.get_float("enrml", "lambda_floor", positive=True)
    return cfg.get_float("enrml", "lambda_init", positive=True, optional="auto"), gamma, floor


def _prior_ensemble(cfg: RunConfig, arch: NetworkArchitecture):
    prior = PriorModel.standard(
        arch.n_weights, cfg.get_float("enrml", "prior_mean"), cfg.get_float("enrml", "prior_std", positive=True)
    )
    ens = sample_prior_ensemble(
        RngStream(cfg.get_int("seeds", "ensemble", 0)),
        arch.n_weights,
        cfg.get_int("enrml", "n_ensemble", 2),
        prior.mean,
        np.sqrt(prior.cov_diag),
    )
    return prior, ens


def _run_training(arch, train_ds, cfg, test_ds=None):
    """Train with the configured hyperparameters; returns (ensemble, state, trace)."""
    prior, initial = _prior_ensemble(cfg, arch)
    noise = NoiseModel.uniform(cfg.get_float("enrml", "obs_std", positive=True), train_ds.targets.size)
    lam0, gamma, floor = _controller(cfg)
    if lam0 is None:
        preds = forward_ensemble(arch, initial.current, train_ds.inputs)
        lam0 = lambda_init(mismatch_stats(preds, train_ds.targets.reshape(-1), noise)[0], noise.cov_diag.size, floor)
    trace = [weight_trace_step(WeightTrace(), initial)]

    def on_record(rec, ens):
        if rec.iteration > 0 and rec.accepted:
            trace[0] = weight_trace_step(trace[0], ens)

    ens, state = train(
        arch,
        train_ds,
        noise,
        prior=prior,
        n_ensemble=initial.realization_count,
        perturb_rng=RngStream(cfg.get_int("seeds", "perturbation", 0)),
        stopping=_stopping(cfg),
        test_dataset=test_ds,
        initial=initial,
        controller=LambdaController(lam0, gamma, floor),
        perturbation=cfg.get_choice("enrml", "perturbation", ("per_iteration", "fixed")),
        anomaly_threshold=cfg.get_int("enrml", "anomaly_threshold", 0),
        callback=on_record,
    )
    return ens, state, trace[0]


def _history_rows(state):
    return [
        [r.iteration, r.train_loss, r.test_loss, r.lam, r.accepted, r.sd_mean, r.sd_std]
        for r in state.loss_history
    ]


_HISTORY_HEADER = ["iteration", "train_loss", "test_loss", "lambda", "accepted", "sd_mean", "sd_std"]


@dataclass
class RunReport:
    kind: str
    out_dir: Path
    summary: dict
    files: list[Path]
    wall_clock_s: float = 0.0
    exit_code: int = 0

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "exit_code": self.exit_code,
            "wall_clock_s": self.wall_clock_s,
            **self.summary,
            "manifest": sorted(p.name for p in self.files),
        }


def _training_summary(state, arch, n_d) -> dict:
    last = state.loss_history[-1] if state.loss_history else None
    return {
        "n_weights": arch.n_weights,
        "architecture": {
            "input_dim": arch.input_dim,
            "layer_widths": list(arch.layer_widths),
            "hidden_activation": arch.hidden_activation,
            "output_activation": arch.output_activation,
        },
        "n_observations": n_d,
        "iterations": state.iteration,
        "accepted": state.n_accepted,
        "rejected": state.n_rejected,
        "stop_reason": state.stop_reason,
        "forward_calls": state.forward_calls,
        "final_lambda": state.lam,
        "final_train_mae": None if last is None else last.train_loss,
        "final_test_mae": None if last is None or np.isnan(last.test_loss) else last.test_loss,
    }


# -- commands ------------------------------------------------------------------


def cmd_toy(cfg: RunConfig, out: Path) -> RunReport:
    n = cfg.get_int("toy", "n", 0)
    x_low, x_high = cfg.get_float("toy", "x_low"), cfg.get_float("toy", "x_high")
    if not x_low < x_high:
        raise ConfigError(f"{cfg.where('toy', 'x_high')}: need x_low < x_high")
    g_low, g_high = cfg.get_float("toy", "grid_low"), cfg.get_float("toy", "grid_high")
    if not g_low < g_high:
        raise ConfigError(f"{cfg.where('toy', 'grid_high')}: need grid_low < grid_high")
    n_grid = cfg.get_int("toy", "grid_points", 2)
    k_sigma = cfg.get_float("toy", "k_sigma", positive=True)
    noise_var = cfg.get_float("toy", "noise_var")
    if noise_var < 0:
        raise ConfigError(f"{cfg.where('toy', 'noise_var')}: noise_var must be >= 0")
    arch = _architecture(cfg, 1, 1)
    files = []
    if n == 0:
        _, ens = _prior_ensemble(cfg, arch)
        files.append(write_csv(out / "training_points.csv", ["x", "y"], []))
        files.append(write_csv(out / "loss_history.csv", _HISTORY_HEADER, []))
        summary = {"n_weights": arch.n_weights, "n_observations": 0, "iterations": 0, "stop_reason": "prior_only"}
    else:
        data = gen_toy_cubic(RngStream(cfg.get_int("seeds", "data", 0)), n, x_low, x_high, noise_var)
        ens, state, trace = _run_training(arch, data, cfg)
        files.append(write_csv(out / "training_points.csv", ["x", "y"], np.hstack([data.inputs, data.targets]).tolist()))
        files.append(write_csv(out / "loss_history.csv", _HISTORY_HEADER, _history_rows(state)))
        files.append(trace.to_csv(out / "weight_trace.csv"))
        summary = _training_summary(state, arch, data.targets.size)
    grid = np.linspace(g_low, g_high, n_grid)
    band = predict_band(arch, ens, grid, k_sigma)
    files.append(band.to_csv(out / "band.csv"))
    inside = (grid >= x_low) & (grid <= x_high)
    w = band.width[:, 0]
    summary["band_mean_width_inside"] = float(w[inside].mean()) if inside.any() else None
    summary["band_mean_width_outside"] = float(w[~inside].mean()) if (~inside).any() else None
    return RunReport("toy", out, summary, files)


def _scatter(path: Path, observed, band) -> Path:
    obs = np.asarray(observed).reshape(-1)
    rows = np.column_stack([obs, band.mean.reshape(-1), band.std.reshape(-1)])
    return write_csv(path, ["observed", "estimated", "std"], rows.tolist())


def cmd_sanity(cfg: RunConfig, out: Path) -> RunReport:
    n_train = cfg.get_int("sanity", "n_train", 1)
    n_test = cfg.get_int("sanity", "n_test", 1)
    input_std = cfg.get_float("sanity", "input_std", positive=True)
    arch = _architecture(cfg, REFERENCE_ARCHITECTURE.input_dim, REFERENCE_ARCHITECTURE.output_dim)
    truth_arch = REFERENCE_ARCHITECTURE
    train_ds, test_ds, _ = gen_ideal_dataset(
        RngStream(cfg.get_int("seeds", "data", 0)), truth_arch, n_train, n_test, input_std
    )
    ens, state, trace = _run_training(arch, train_ds, cfg, test_ds)
    files = [
        write_csv(out / "loss_history.csv", _HISTORY_HEADER, _history_rows(state)),
        trace.to_csv(out / "weight_trace.csv"),
        _scatter(out / "scatter.csv", test_ds.targets, predict_band(arch, ens, test_ds.inputs)),
    ]
    return RunReport("sanity", out, _training_summary(state, arch, train_ds.targets.size), files)


def _columns(cfg: RunConfig, key: str) -> list:
    cols = cfg.get_list("data", key)
    if not cols:
        raise ConfigError(f"{cfg.where('data', key)}: {key} must list at least one column")
    return [int(c) if c.lstrip("-").isdigit() else c for c in cols]


_NAMED_DELIMITERS = {"whitespace": None, "": None, "comma": ",", "semicolon": ";", "tab": "\t"}


def cmd_train_csv(cfg: RunConfig, out: Path) -> RunReport:
    path = cfg.raw("data", "path")
    if not path:
        raise ConfigError(f"{cfg.where('data', 'path')}: data.path is required for train")
    if not Path(path).is_absolute():
        path = str(Path(cfg.source).parent / path)
    delim = cfg.raw("data", "delimiter")
    delimiter = _NAMED_DELIMITERS.get(delim.lower(), delim)
    if delimiter is not None and len(delimiter) != 1:
        raise ConfigError(f"{cfg.where('data', 'delimiter')}: delimiter must be one character or a name in {sorted(_NAMED_DELIMITERS)}")
    ds = load_csv(path, _columns(cfg, "input_cols"), _columns(cfg, "target_cols"), cfg.get_bool("data", "header"), delimiter)
    train_count = cfg.get_int("data", "train_count", 1, optional="all")
    test_count = cfg.get_int("data", "test_count", 0)
    if train_count is None:
        train_count = len(ds) - test_count
    if train_count + test_count > len(ds) or train_count < 1:
        raise ConfigError(
            f"{cfg.where('data', 'train_count')}: train_count + test_count = {train_count + test_count} "
            f"exceeds the {len(ds)} rows of {path}"
        )
    train_raw, test_raw = split(ds, SplitSpec(train_count, test_count, cfg.get_int("seeds", "data", 0)))
    scaler = None
    train_ds, test_ds = train_raw, test_raw
    if cfg.get_bool("data", "standardize"):
        train_ds = standardize(train_raw)
        scaler = train_ds.standardization
        test_ds = standardize(test_raw, scaler) if len(test_raw) else test_raw
    arch = _architecture(cfg, ds.input_dim, ds.output_dim)
    ens, state, trace = _run_training(arch, train_ds, cfg, test_ds if len(test_ds) else None)
    k_sigma = cfg.get_float("data", "k_sigma", positive=True)
    summary = _training_summary(state, arch, train_ds.targets.size)
    summary["standardization"] = scaler.to_dict() if scaler else None
    train_band = predict_band(arch, ens, train_raw.inputs, k_sigma, scaler)
    summary["final_train_mae_original_units"] = loss_mae(train_band.mean, train_raw.targets)
    files = [
        write_csv(out / "loss_history.csv", _HISTORY_HEADER, _history_rows(state)),
        trace.to_csv(out / "weight_trace.csv"),
    ]
    if len(test_raw):
        band = predict_band(arch, ens, test_raw.inputs, k_sigma, scaler)
        summary["final_test_mae_original_units"] = loss_mae(band.mean, test_raw.targets)
        files.append(band.to_csv(out / "band.csv"))
        files.append(_scatter(out / "scatter.csv", test_raw.targets, band))
    return RunReport("train_csv", out, summary, files)


class FixtureMismatch(RuntimeError):
    pass


def cmd_fixture_check(cfg: RunConfig, out: Path) -> RunReport:
    report = worked_example.replay()
    rows = [[c.name, c.deviation, c.tolerance, "rel" if c.relative else "abs", c.passed] for c in report.checks]
    files = [write_csv(out / "fixture_report.csv", ["artifact", "deviation", "tolerance", "kind", "passed"], rows)]
    act, layout, err = report.layout[0]
    summary = {
        "layout": {"activation": act, "layer_order": layout[0], "within_layer": layout[1], "max_abs_error": err},
        "decisions": report.decisions,
        "max_deviation": {c.name: c.deviation for c in report.checks},
        "failed": [c.name for c in report.checks if not c.passed],
    }
    result = RunReport("fixture_check", out, summary, files)
    if not report.passed:
        result.exit_code = EXIT_CODES["fixture"]
    return result


COMMANDS = {"toy": cmd_toy, "sanity": cmd_sanity, "train_csv": cmd_train_csv, "fixture_check": cmd_fixture_check}


def run(cfg: RunConfig, out: Path) -> RunReport:
    """Write the resolved config, run the experiment, write ``report.json``."""
    try:
        out.mkdir(parents=True, exist_ok=True)
        resolved = out / "resolved_config.ini"
        resolved.write_text(cfg.to_ini(), encoding="utf-8")
    except OSError as exc:
        raise _OutputError(f"cannot write to output directory {out}: {exc}") from exc
    t0 = time.perf_counter()
    report = COMMANDS[cfg.kind](cfg, out)
    report.wall_clock_s = time.perf_counter() - t0
    report.files.insert(0, resolved)
    report_path = out / "report.json"
    report.files.append(report_path)
    report_path.write_text(json.dumps(report.to_json(), indent=2, default=float) + "\n", encoding="utf-8")
    return report


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="enn", description="Ensemble neural networks trained by EnRML.")
    p.add_argument("command", choices=list(KINDS))
    p.add_argument("--config", required=True, help="INI config file")
    p.add_argument("--out", help="output directory (overrides [experiment] output_dir)")
    p.add_argument("--seed-data", type=int)
    p.add_argument("--seed-ensemble", type=int)
    p.add_argument("--seed-perturb", type=int)
    p.add_argument("--threads", type=int, help="cap BLAS/OpenMP worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {}
    for key, val in (("data", args.seed_data), ("ensemble", args.seed_ensemble), ("perturbation", args.seed_perturb)):
        if val is not None:
            overrides[("seeds", key)] = val
    try:
        cfg = load_config(args.config, KINDS[args.command], overrides)
        if args.out:
            cfg.values["experiment"]["output_dir"] = args.out
        out = Path(cfg.raw("experiment", "output_dir"))
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                report = run(cfg, out)
        else:
            report = run(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except (ParseError, ColumnMismatch, FileNotFoundError) as exc:
        if isinstance(exc, worked_example.FixtureMissing):
            print(f"fixture error: {exc}", file=sys.stderr)
            return EXIT_CODES["fixture"]
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_CODES["data"]
    except worked_example.LayoutUnresolved as exc:
        print(f"fixture error: {exc}", file=sys.stderr)
        return EXIT_CODES["fixture"]
    except _OutputError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    except (np.linalg.LinAlgError, MaxIterations, RepeatedRejection, NegativeVariance, FloatingPointError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES["numerical"]
    summary = {k: report.summary.get(k) for k in ("n_weights", "iterations", "stop_reason", "final_train_mae", "final_test_mae")}
    print(json.dumps({"kind": report.kind, "out": str(report.out_dir), **{k: v for k, v in summary.items() if v is not None}}))
    if report.exit_code:
        print("fixture mismatch: " + ", ".join(report.summary.get("failed", [])), file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
