"""Config-driven command line chaining the full pipeline.

A TOML experiment file describes the input (builtin model or external CSV),
an optional delay embedding, an optional piecewise-VAR fit, the vector
computation window, and the diagnostics to aggregate.  Each subcommand runs
the shortest prefix of the pipeline it needs and writes the documented CSV
and JSON artifacts into the output directory, plus a `manifest.json` naming
every written file with its content hash, the master seed and any warnings.

Exit status: 0 on success (including partial grid-cell failures, which are
recorded as warnings), 2 on configuration problems, 3 on numerical failure,
with a JSON error report on stderr naming the stage that failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import (
    MetricSpec,
    alignment_series,
    delta_state_means,
    flow_alignment,
    gridsearch,
    near_neutral_index,
    surrogate_flow_alignment,
    total_variation,
    wing_labels,
)
from .clv import ClvParams, ClvSeries, clv_series
from .cocycle import CocycleSource, analytic_cocycle, var_cocycle
from .dynsys import (
    OdeModel,
    TimeSeries,
    make_model,
    model_defaults,
    read_series_csv,
    simulate,
    write_series_csv,
)
from .embedding import EmbeddingSpec, delay_embed
from .errors import ConfigError, NumericalError
from .fembv import FittedModel, fit_fembv, lcurve_select_p, reconstruct

SCHEMA_VERSION = 1

LOG = logging.getLogger("clvlab")

COMMANDS = ("simulate", "embed", "fit", "lcurve", "clv", "angles", "gridsearch", "run")


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass(frozen=True)
class InputSpec:
    kind: str
    model: str | None = None
    params: dict = field(default_factory=dict)
    dt: float = 0.01
    steps: int = 0
    discard: int = 0
    initial: tuple | None = None
    path: str | None = None
    column: int | None = None


@dataclass(frozen=True)
class FembvSpec:
    clusters: int
    order: int
    persistence: float | None
    p_grid: tuple | None
    restarts: int = 10
    seed: int = 0
    max_iter: int = 100


@dataclass(frozen=True)
class ClvSpec:
    past: int
    future: int | None
    correction: int
    t_start: int
    t_stop: int
    t_step: int = 1

    @property
    def params(self) -> ClvParams:
        return ClvParams(self.past, self.future, self.correction)

    @property
    def t_range(self) -> np.ndarray:
        return np.arange(self.t_start, self.t_stop, self.t_step)


@dataclass(frozen=True)
class DiagnosticsSpec:
    pair: tuple = (1, 2)
    state: str = "none"
    states: tuple = (0, 1)
    delta: bool = False
    tv: bool = False
    flow: str = "none"
    exclusion: int = 10
    vector: str = "auto"


@dataclass(frozen=True)
class GridSpec:
    past_values: tuple
    correction_values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    input: InputSpec
    embedding: EmbeddingSpec | None
    fembv: FembvSpec | None
    clv: ClvSpec | None
    diagnostics: DiagnosticsSpec | None
    grid: GridSpec | None
    output_dir: str


def _check_keys(table: dict, name: str, allowed: set) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys: {sorted(unknown)}")


def _get(table: dict, name: str, key: str, types, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"[{name}] is missing required key '{key}'")
        return default
    val = table[key]
    if isinstance(val, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"[{name}] key '{key}' has the wrong type")
    if not isinstance(val, types):
        raise ConfigError(f"[{name}] key '{key}' has the wrong type")
    return val


def _int(table, name, key, default=None, required=False, low=None):
    val = _get(table, name, key, int, default, required)
    if val is not None and low is not None and val < low:
        raise ConfigError(f"[{name}] key '{key}' must be >= {low}")
    return val


def _num(table, name, key, default=None, required=False, positive=False):
    val = _get(table, name, key, (int, float), default, required)
    if val is not None:
        val = float(val)
        if positive and val <= 0:
            raise ConfigError(f"[{name}] key '{key}' must be > 0")
    return val


def _int_list(table, name, key, required=False, low=0):
    val = _get(table, name, key, list, required=required)
    if val is None:
        return None
    if not val or not all(isinstance(v, int) and v >= low for v in val):
        raise ConfigError(
            f"[{name}] key '{key}' must be a non-empty list of integers >= {low}"
        )
    return tuple(val)


def _parse_input(table: dict) -> InputSpec:
    kind = _get(table, "input", "kind", str, required=True)
    if kind == "builtin":
        _check_keys(table, "input", {"kind", "model", "params", "dt", "steps", "discard", "initial"})
        model = _get(table, "input", "model", str, required=True)
        try:
            defaults = model_defaults(model)
            probe = make_model(model)
        except KeyError:
            raise ConfigError(f"[input] unknown builtin model '{model}'") from None
        params = _get(table, "input", "params", dict, default={})
        bad = set(params) - set(probe.params)
        if bad:
            raise ConfigError(f"[input.params] unknown parameters for {model}: {sorted(bad)}")
        for k, v in params.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"[input.params] '{k}' must be a number")
        dt = _num(table, "input", "dt", default=defaults["dt"], positive=True)
        steps = _int(table, "input", "steps", default=defaults["steps"], low=2)
        discard = _int(table, "input", "discard", default=defaults["discard"], low=0)
        initial = _get(table, "input", "initial", list)
        if initial is not None:
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in initial):
                raise ConfigError("[input] 'initial' must be a list of numbers")
            initial = tuple(float(v) for v in initial)
        else:
            initial = tuple(defaults["x0"])
        return InputSpec(
            "builtin",
            model=model,
            params={k: float(v) for k, v in params.items()},
            dt=dt,
            steps=steps,
            discard=discard,
            initial=initial,
        )
    if kind == "csv":
        _check_keys(table, "input", {"kind", "path", "dt", "column"})
        path = _get(table, "input", "path", str, required=True)
        dt = _num(table, "input", "dt", positive=True)
        column = _int(table, "input", "column", low=1)
        return InputSpec("csv", path=path, dt=dt if dt is not None else 1.0, column=column)
    raise ConfigError(f"[input] kind must be 'builtin' or 'csv', got '{kind}'")


def _parse_embedding(table: dict) -> EmbeddingSpec:
    _check_keys(table, "embedding", {"delay", "dim"})
    try:
        return EmbeddingSpec(
            _int(table, "embedding", "delay", required=True),
            _int(table, "embedding", "dim", default=3),
        )
    except ValueError as exc:
        raise ConfigError(f"[embedding] {exc}") from None


def _parse_fembv(table: dict) -> FembvSpec:
    _check_keys(
        table, "fembv",
        {"clusters", "order", "persistence", "p_grid", "restarts", "seed", "max_iter"},
    )
    persistence = _num(table, "fembv", "persistence", positive=True)
    p_grid = _get(table, "fembv", "p_grid", list)
    if (persistence is None) == (p_grid is None):
        raise ConfigError("[fembv] needs exactly one of 'persistence' or 'p_grid'")
    if p_grid is not None:
        if len(p_grid) < 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in p_grid
        ):
            raise ConfigError("[fembv] 'p_grid' must list at least 4 positive numbers")
        p_grid = tuple(float(v) for v in p_grid)
    return FembvSpec(
        clusters=_int(table, "fembv", "clusters", required=True, low=1),
        order=_int(table, "fembv", "order", required=True, low=1),
        persistence=persistence,
        p_grid=p_grid,
        restarts=_int(table, "fembv", "restarts", default=10, low=1),
        seed=_int(table, "fembv", "seed", default=0, low=0),
        max_iter=_int(table, "fembv", "max_iter", default=100, low=1),
    )


def _parse_clv(table: dict) -> ClvSpec:
    _check_keys(table, "clv", {"past", "future", "correction", "t_start", "t_stop", "t_step"})
    spec = ClvSpec(
        past=_int(table, "clv", "past", required=True, low=1),
        future=_int(table, "clv", "future", low=1),
        correction=_int(table, "clv", "correction", default=0, low=0),
        t_start=_int(table, "clv", "t_start", required=True, low=0),
        t_stop=_int(table, "clv", "t_stop", required=True, low=0),
        t_step=_int(table, "clv", "t_step", default=1, low=1),
    )
    if spec.t_stop <= spec.t_start:
        raise ConfigError("[clv] empty time range: t_stop must exceed t_start")
    return spec


def _parse_diagnostics(table: dict) -> DiagnosticsSpec:
    _check_keys(
        table, "diagnostics",
        {"pair", "state", "states", "delta", "tv", "flow", "exclusion", "vector"},
    )
    pair = _int_list(table, "diagnostics", "pair", low=1) or (1, 2)
    if len(pair) != 2:
        raise ConfigError("[diagnostics] 'pair' must have exactly 2 entries")
    states = _int_list(table, "diagnostics", "states", low=0) or (0, 1)
    if len(states) != 2:
        raise ConfigError("[diagnostics] 'states' must have exactly 2 entries")
    state = _get(table, "diagnostics", "state", str, default="none")
    if state not in ("none", "fit", "wing"):
        raise ConfigError("[diagnostics] 'state' must be one of: none, fit, wing")
    flow = _get(table, "diagnostics", "flow", str, default="none")
    if flow not in ("none", "analytic", "surrogate"):
        raise ConfigError("[diagnostics] 'flow' must be one of: none, analytic, surrogate")
    vector = _get(table, "diagnostics", "vector", str, default="auto")
    if vector not in ("auto", "second", "min_abs"):
        raise ConfigError("[diagnostics] 'vector' must be one of: auto, second, min_abs")
    return DiagnosticsSpec(
        pair=pair,
        state=state,
        states=states,
        delta=_get(table, "diagnostics", "delta", bool, default=False),
        tv=_get(table, "diagnostics", "tv", bool, default=False),
        flow=flow,
        exclusion=_int(table, "diagnostics", "exclusion", default=10, low=0),
        vector=vector,
    )


def _parse_grid(table: dict) -> GridSpec:
    _check_keys(table, "gridsearch", {"past", "correction"})
    return GridSpec(
        past_values=_int_list(table, "gridsearch", "past", required=True, low=1),
        correction_values=_int_list(table, "gridsearch", "correction", required=True, low=0),
    )


def build_config(raw: dict) -> ExperimentConfig:
    """Validate the parsed TOML document and assemble a typed configuration."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    _check_keys(
        raw, "config",
        {"schema", "input", "embedding", "fembv", "clv", "diagnostics", "gridsearch", "output"},
    )
    schema = raw.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"config must declare schema = {SCHEMA_VERSION}")
    if "input" not in raw:
        raise ConfigError("config needs an [input] table")
    cfg = ExperimentConfig(
        input=_parse_input(raw["input"]),
        embedding=_parse_embedding(raw["embedding"]) if "embedding" in raw else None,
        fembv=_parse_fembv(raw["fembv"]) if "fembv" in raw else None,
        clv=_parse_clv(raw["clv"]) if "clv" in raw else None,
        diagnostics=_parse_diagnostics(raw["diagnostics"]) if "diagnostics" in raw else None,
        grid=_parse_grid(raw["gridsearch"]) if "gridsearch" in raw else None,
        output_dir=_get(raw.get("output", {}), "output", "dir", str, default="out"),
    )
    if "output" in raw:
        _check_keys(raw["output"], "output", {"dir"})

    # cross-table coherence, checked before any computation
    if cfg.embedding is not None and cfg.fembv is None:
        raise ConfigError("[embedding] requires a [fembv] table: an embedded series has no analytic tangents")
    if cfg.clv is not None and cfg.fembv is None and cfg.input.kind != "builtin":
        raise ConfigError("vectors on external data need a [fembv] table to supply tangents")
    d = cfg.diagnostics
    if d is not None:
        if cfg.clv is None:
            raise ConfigError("[diagnostics] requires a [clv] table")
        if d.delta and d.state == "none":
            raise ConfigError("[diagnostics] delta needs state labels; set state = 'fit' or 'wing'")
        if d.state == "fit" and cfg.fembv is None:
            raise ConfigError("[diagnostics] state = 'fit' requires a [fembv] table")
        if d.flow == "analytic" and (cfg.fembv is not None or cfg.input.kind != "builtin"):
            raise ConfigError("[diagnostics] flow = 'analytic' needs a builtin model without [fembv]")
        if d.flow == "surrogate" and cfg.fembv is None:
            raise ConfigError("[diagnostics] flow = 'surrogate' requires a [fembv] table")
    if cfg.grid is not None and cfg.clv is None:
        raise ConfigError("[gridsearch] requires a [clv] table for the time range")
    return cfg


def load_config(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path} is not valid TOML: {exc}") from None


def resolve_config(arg: str) -> Path:
    """Accept a filesystem path or the name of a bundled recipe."""
    p = Path(arg)
    if p.is_file():
        return p
    name = arg if arg.endswith(".toml") else arg + ".toml"
    bundled = resources.files("clvlab") / "recipes" / name
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config not found: {arg}")


def bundled_recipes() -> list[str]:
    folder = resources.files("clvlab") / "recipes"
    return sorted(p.name for p in folder.iterdir() if p.name.endswith(".toml"))


# ---------------------------------------------------------------------------
# Pipeline execution


class Pipeline:
    """Runs configured stages in order and records artifacts for the manifest."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path, seed: int | None,
                 threads: int, dump_vectors: bool):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.dump_vectors = dump_vectors
        self.seed = seed if seed is not None else (cfg.fembv.seed if cfg.fembv else 0)
        self.stage = "config"
        self.files: list[Path] = []
        self.warnings: list[str] = []
        self.ode_model: OdeModel | None = None
        self.trajectory: TimeSeries | None = None
        self.working: TimeSeries | None = None
        self.fitted: FittedModel | None = None
        self.source: CocycleSource | None = None
        self.clvs: ClvSeries | None = None

    def _register(self, path: Path) -> None:
        self.files.append(path)

    def _begin(self, stage: str) -> None:
        self.stage = stage
        LOG.info("stage %s", stage)

    # -- stages ------------------------------------------------------------

    def run_input(self) -> None:
        self._begin("input")
        spec = self.cfg.input
        if spec.kind == "builtin":
            self.ode_model = make_model(spec.model, **spec.params)
            self.trajectory = simulate(
                self.ode_model, spec.initial, spec.dt, spec.steps, discard=spec.discard
            )
            series = self.trajectory
        else:
            try:
                series = read_series_csv(spec.path, dt=spec.dt)
            except OSError as exc:
                raise ConfigError(f"cannot read input CSV: {exc}") from None
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if spec.column is not None:
                if spec.column > series.dim:
                    raise ConfigError(
                        f"[input] column {spec.column} exceeds the {series.dim} observables"
                    )
                series = series.column(spec.column - 1)
        self.working = series
        path = self.out / "series.csv"
        write_series_csv(series, path)
        self._register(path)

    def run_embed(self) -> None:
        if self.cfg.embedding is None:
            return
        self._begin("embed")
        if self.working.dim != 1:
            raise ConfigError(
                f"[embedding] needs a scalar series, input has {self.working.dim} observables"
            )
        self.working = delay_embed(self.working, self.cfg.embedding)
        path = self.out / "embedded.csv"
        write_series_csv(self.working, path)
        self._register(path)

    def run_lcurve(self) -> float:
        self._begin("lcurve")
        f = self.cfg.fembv
        result = lcurve_select_p(
            self.working, f.clusters, f.order, f.p_grid,
            restarts=f.restarts, seed=self.seed,
        )
        self.warnings.extend(f"lcurve: {w}" for w in result.warnings)
        path = self.out / "lcurve.csv"
        with open(path, "w", newline="") as fh:
            fh.write("persistence,loss\n")
            for p, loss in zip(result.persistences, result.losses):
                fh.write(f"{p:.17g},{loss:.17g}\n")
        self._register(path)
        jpath = self.out / "lcurve.json"
        _write_json(jpath, {
            "p_star": result.p_star,
            "no_knee": result.no_knee,
            "warnings": result.warnings,
        })
        self._register(jpath)
        return result.p_star

    def run_fit(self, persistence: float | None = None) -> None:
        if self.cfg.fembv is None:
            return
        self._begin("fit")
        f = self.cfg.fembv
        p = persistence if persistence is not None else f.persistence
        self.fitted = fit_fembv(
            self.working, f.clusters, f.order, p,
            restarts=f.restarts, seed=self.seed, max_iter=f.max_iter,
        )
        path = self.out / "model.json"
        self.fitted.save_json(path)
        self._register(path)

        labels = self.fitted.affiliation.hard_labels
        times = self.working.times
        lpath = self.out / "labels.csv"
        with open(lpath, "w", newline="") as fh:
            fh.write("t,label\n")
            for k in range(len(labels)):
                fh.write(f"{times[k]:.17g},{labels[k]:d}\n")
        self._register(lpath)

        tpath = self.out / "loss.csv"
        with open(tpath, "w", newline="") as fh:
            fh.write("iteration,loss\n")
            for i, loss in enumerate(self.fitted.loss_trace):
                fh.write(f"{i:d},{loss:.17g}\n")
        self._register(tpath)

        rpath = self.out / "reconstruction.csv"
        write_series_csv(reconstruct(self.working, self.fitted), rpath)
        self._register(rpath)

    def build_source(self) -> None:
        self._begin("cocycle")
        if self.fitted is not None:
            self.source = var_cocycle(self.fitted, self.working)
        else:
            self.source = analytic_cocycle(self.ode_model, self.trajectory)

    def run_clv(self) -> None:
        self._begin("clv")
        spec = self.cfg.clv
        try:
            self.clvs = clv_series(self.source, spec.t_range, spec.params)
        except IndexError as exc:
            raise ConfigError(f"[clv] window out of range: {exc}") from None
        n_failed = len(self.clvs.errors)
        if n_failed:
            t_first = min(self.clvs.errors)
            self.warnings.append(
                f"clv: {n_failed} of {len(self.clvs.results)} points failed; "
                f"first at t={t_first}: {self.clvs.errors[t_first]}"
            )
        path = self.out / "clv.csv"
        self.clvs.write_csv(path)
        self._register(path)
        if self.dump_vectors:
            vpath = self.out / "vectors.json"
            self.clvs.save_vectors_json(vpath)
            self._register(vpath)

    def _state_labels(self, ts: np.ndarray) -> np.ndarray | None:
        d = self.cfg.diagnostics
        if d is None or d.state == "none":
            return None
        if d.state == "fit":
            return self.fitted.affiliation.hard_labels[ts]
        return wing_labels(self.working.values[ts])

    def _flow_vector_index(self) -> int | None:
        d = self.cfg.diagnostics
        if d.vector == "auto":
            return None
        for r in self.clvs.results:
            if r is not None:
                return near_neutral_index(r.ftle, mode=d.vector)
        return None

    def run_diagnostics(self) -> None:
        self._begin("diagnostics")
        d = self.cfg.diagnostics
        state = self._state_labels(self.clvs.indices)
        series = alignment_series(self.clvs, d.pair[0], d.pair[1], state=state)

        flow = None
        if d.flow == "analytic":
            flow = flow_alignment(
                self.trajectory, self.ode_model, self.clvs, j=self._flow_vector_index()
            )
        elif d.flow == "surrogate":
            flow = surrogate_flow_alignment(
                self.working, self.fitted.order, self.clvs, j=self._flow_vector_index()
            )
        if flow is not None:
            series = series.with_flow(flow)

        metrics: dict = {
            "pair": list(d.pair),
            "states": list(d.states),
            "n_points": len(series),
            "n_valid": int(np.count_nonzero(series.valid_mask)),
            "coverage": series.coverage,
            "delta": None,
            "tv": None,
            "flow_mean": None,
            "flow_surrogate": d.flow == "surrogate" if flow is not None else None,
            "seed": self.seed,
        }
        if d.delta:
            metrics["delta"] = delta_state_means(
                series, d.states[0], d.states[1], exclusion_window=d.exclusion
            )
        if d.tv:
            metrics["tv"] = total_variation(series)
        if flow is not None:
            good = np.isfinite(flow.theta)
            if good.any():
                metrics["flow_mean"] = float(np.mean(flow.theta[good]))
            else:
                self.warnings.append("diagnostics: no valid flow-alignment points")

        path = self.out / "angles.csv"
        series.write_csv(path)
        self._register(path)
        jpath = self.out / "metrics.json"
        _write_json(jpath, metrics)
        self._register(jpath)

    def run_gridsearch(self) -> None:
        self._begin("gridsearch")
        g = self.cfg.grid
        d = self.cfg.diagnostics or DiagnosticsSpec()
        ts = self.cfg.clv.t_range
        spec = MetricSpec(
            pair=d.pair,
            state=self._state_labels(ts),
            state_a=d.states[0],
            state_b=d.states[1],
            compute_delta=d.state != "none",
            compute_tv=True,
            exclusion_window=d.exclusion,
        )
        report = gridsearch(
            self.source, ts, list(g.past_values), list(g.correction_values),
            spec, threads=self.threads,
        )
        for (N, n), msg in sorted(report.messages.items()):
            self.warnings.append(f"grid cell (N={N}, n={n}) failed: {msg}")
        for path in report.write(self.out, spec):
            self._register(path)

    # -- assembly ----------------------------------------------------------

    def write_manifest(self, command: str) -> Path:
        entries = []
        for path in sorted(self.files, key=lambda p: p.name):
            data = path.read_bytes()
            entries.append({
                "name": path.name,
                "sha256": hashlib.sha256(data).hexdigest(),
                "bytes": len(data),
            })
        path = self.out / "manifest.json"
        _write_json(path, {
            "schema": SCHEMA_VERSION,
            "command": command,
            "seed": self.seed,
            "threads": self.threads,
            "warnings": self.warnings,
            "files": entries,
        })
        return path


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def execute(pipe: Pipeline, command: str) -> Pipeline:
    """Run `command` over the configured pipeline prefix, writing artifacts."""
    cfg = pipe.cfg
    if command == "simulate":
        _require(cfg.input.kind == "builtin", "simulate needs a builtin [input] model")
    if command == "embed":
        _require(cfg.embedding is not None, "embed needs an [embedding] table")
    if command in ("fit", "lcurve"):
        _require(cfg.fembv is not None, f"{command} needs a [fembv] table")
    if command == "lcurve":
        _require(cfg.fembv.p_grid is not None, "lcurve needs [fembv] p_grid")
    if command in ("clv", "angles", "gridsearch"):
        _require(cfg.clv is not None, f"{command} needs a [clv] table")
    if command == "angles":
        _require(cfg.diagnostics is not None, "angles needs a [diagnostics] table")
    if command == "gridsearch":
        _require(cfg.grid is not None, "gridsearch needs a [gridsearch] table")

    pipe.run_input()
    if command == "simulate":
        return pipe
    pipe.run_embed()
    if command == "embed":
        return pipe

    if cfg.fembv is not None:
        if cfg.fembv.p_grid is not None:
            p_star = pipe.run_lcurve()
            if command == "lcurve":
                return pipe
            pipe.run_fit(p_star)
        else:
            pipe.run_fit()
    if command in ("fit", "lcurve"):
        return pipe

    if cfg.clv is None:
        return pipe
    pipe.build_source()
    if command == "gridsearch":
        pipe.run_gridsearch()
        return pipe
    pipe.run_clv()
    if command == "clv":
        return pipe
    if cfg.diagnostics is not None:
        pipe.run_diagnostics()
    if command == "run" and cfg.grid is not None:
        pipe.run_gridsearch()
    return pipe


# ---------------------------------------------------------------------------
# Entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clvlab",
        description="Metastable-transition diagnostics from time series: "
                    "piecewise-VAR fitting and covariant-vector alignment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate a builtin model and write series.csv",
        "embed": "delay-embed a scalar series and write embedded.csv",
        "fit": "fit the piecewise-VAR model (model.json, labels.csv, loss.csv)",
        "lcurve": "scan the persistence grid and write lcurve.csv",
        "clv": "compute covariant vectors over the configured window (clv.csv)",
        "angles": "alignment diagnostics and metrics (angles.csv, metrics.json)",
        "gridsearch": "window grid search (delta.csv, tv.csv, failures.csv)",
        "run": "run every configured stage",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True,
                       help="TOML experiment file, or the name of a bundled recipe")
        p.add_argument("--output", help="output directory (overrides [output] dir)")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        p.add_argument("--seed", type=int, help="master RNG seed (overrides [fembv] seed)")
        p.add_argument("--dump-vectors", action="store_true",
                       help="also write the full vector field as vectors.json")
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("CLVLAB_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _error_report(stage: str, exc: Exception) -> str:
    return json.dumps({
        "error": type(exc).__name__,
        "stage": stage,
        "message": str(exc),
    }, sort_keys=True)


def main(argv=None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)
    if args.threads < 1:
        print(_error_report("config", ConfigError("--threads must be >= 1")), file=sys.stderr)
        return 2
    stage = "config"
    pipe = None
    try:
        cfg = build_config(load_config(resolve_config(args.config)))
        out_dir = Path(args.output) if args.output else Path(cfg.output_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from None
        pipe = Pipeline(cfg, out_dir, args.seed, args.threads, args.dump_vectors)
        execute(pipe, args.command)
        manifest = pipe.write_manifest(args.command)
        LOG.info("wrote %s (%d artifacts)", manifest, len(pipe.files))
        for w in pipe.warnings:
            LOG.warning("%s", w)
        return 0
    except ConfigError as exc:
        print(_error_report("config", exc), file=sys.stderr)
        return 2
    except NumericalError as exc:
        failed = pipe.stage if pipe is not None else stage
        print(_error_report(failed, exc), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
