"""Configuration-driven batch front end.

One experiment = one JSON config file; flags only pick the config path,
thread count, output directory and verbosity, so every run is
reviewable from the file alone. All randomness flows from the config's
master seed through the package's named substreams; reports never carry
timestamps, so rerunning a config produces byte-identical output.

Report schema (version "walkforge-report/1"): a single JSON object with
  schema, kind, config_hash, seed, schedule, k_provenance, results,
  files (optional, paths of side outputs relative to the report).
Non-finite floats are serialized as null.

CSV export schema (version 1): long-format rows
  experiment, parameter, value, ci_lo, ci_hi
with experiment = "<kind>:<config_hash>" and parameter the dotted path
of the numeric leaf inside results. Leaves named X with a sibling X_ci
holding a two-element interval get their ci columns filled.

Exit codes: 0 success, 2 config or schema validation failure, 3 runtime
failure (solver breakdown, infeasible calibration, a check exceeding
its threshold, unwritable output).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from walkforge.decomposition import (compute_stopping_times,
                                     covariance_decay_experiment,
                                     excursion_increments,
                                     law_equality_experiment,
                                     smallness_experiment, split_and_clock,
                                     validate_decomposition)
from walkforge.environment import (CalibrationMissingError, Environment,
                                   enumerate_fundamental, sample_offsets,
                                   zero_offsets)
from walkforge.network import (calibrate_K, commute_identity_check,
                               effective_resistance, export_finite_network,
                               harmonic_extension, harnack_ratio,
                               network_to_csv, random_connected_network)
from walkforge.schedule import (ParameterSchedule, ScheduleStructureError,
                                default_desk_schedule, roomy_desk_schedule,
                                schedule_hash, validate)
from walkforge.stats import fclt_report, heat_kernel_check
from walkforge.walk import (batch_simulate, ensemble_to_npz, path_to_csv,
                            sample_positions)

REPORT_SCHEMA = "walkforge-report/1"
CSV_COLUMNS = ("experiment", "parameter", "value", "ci_lo", "ci_hi")

KINDS = ("validate-schedule", "build-env", "calibrate", "simulate",
         "decompose", "law-equality", "smallness", "covariance-decay",
         "resistance", "commute-check", "harnack", "heat-kernel", "fclt")


class ConfigError(ValueError):
    """Config, schedule, or report-schema problem; exit code 2."""


class CheckError(RuntimeError):
    """An experiment ran but failed its own check; exit code 3."""


# ---------------------------------------------------------------------------
# config handling

@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    schedule: ParameterSchedule
    offsets_spec: object  # "sample" | "zero" | explicit list
    params: dict
    out: str
    config_hash: str


def _config_hash(raw: dict) -> str:
    # the output directory does not influence any result, so two
    # configs differing only there hash alike
    body = {k: v for k, v in raw.items() if k != "out"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_schedule(spec) -> ParameterSchedule:
    """Inline schedule dict, or a generator form
    {"generator": "default-desk"|"roomy-desk", "levels": N, ...}."""
    if not isinstance(spec, dict):
        raise ConfigError("schedule must be a JSON object")
    if "generator" in spec:
        known = {"generator", "levels", "b1", "K"}
        stray = set(spec) - known
        if stray:
            raise ConfigError(f"unknown schedule keys {sorted(stray)}")
        levels = spec.get("levels", 1)
        gen = spec["generator"]
        if gen == "default-desk":
            sch = default_desk_schedule(levels)
        elif gen == "roomy-desk":
            sch = roomy_desk_schedule(levels, b1=spec.get("b1", 2))
        else:
            raise ConfigError(f"unknown schedule generator {gen!r}")
        for lvl, k in enumerate(spec.get("K") or [], start=1):
            if k is not None:
                sch = sch.with_K(lvl, float(k))
        return sch
    try:
        return ParameterSchedule.from_dict(spec)
    except (ScheduleStructureError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad inline schedule: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {"kind", "seed", "schedule", "offsets", "params", "out"}
    stray = set(raw) - known
    if stray:
        raise ConfigError(f"unknown config keys {sorted(stray)}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r};"
                          f" expected one of {', '.join(KINDS)}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if "schedule" not in raw:
        raise ConfigError("config needs a schedule")
    schedule = resolve_schedule(raw["schedule"])
    offsets_spec = raw.get("offsets", "sample")
    if not (offsets_spec in ("sample", "zero")
            or isinstance(offsets_spec, list)):
        raise ConfigError('offsets must be "sample", "zero", or a list')
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be a JSON object")
    return ExperimentConfig(kind=kind, seed=seed, schedule=schedule,
                            offsets_spec=offsets_spec, params=params,
                            out=raw.get("out", "."),
                            config_hash=_config_hash(raw))


def build_environment(cfg: ExperimentConfig) -> Environment:
    report = validate(cfg.schedule)
    if not report.ok:
        raise ConfigError(f"schedule fails validation:\n{report}")
    if cfg.offsets_spec == "sample":
        offsets = sample_offsets(cfg.schedule, cfg.seed)
    elif cfg.offsets_spec == "zero":
        offsets = zero_offsets(cfg.schedule)
    else:
        offsets = tuple((int(x), int(y)) for x, y in cfg.offsets_spec)
    try:
        return Environment(cfg.schedule, offsets)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _params(cfg: ExperimentConfig, **spec):
    """Pull kind parameters with defaults; reject unknown keys.

    spec values are (default,) for optional or REQUIRED for mandatory.
    """
    stray = set(cfg.params) - set(spec)
    if stray:
        raise ConfigError(f"unknown {cfg.kind} parameters {sorted(stray)}")
    out = {}
    for name, default in spec.items():
        if default is REQUIRED:
            if name not in cfg.params:
                raise ConfigError(f"{cfg.kind} needs parameter {name!r}")
            out[name] = cfg.params[name]
        else:
            out[name] = cfg.params.get(name, default)
    return out


REQUIRED = object()


def _clean(obj):
    """JSON-safe copy: numpy scalars unboxed, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


# ---------------------------------------------------------------------------
# experiment runners; each returns (results, files) where files maps
# label -> filename written inside the output directory

def _run_validate_schedule(cfg, env_unused, threads, out_dir, say):
    _params(cfg)
    report = validate(cfg.schedule)
    return {"ok": report.ok, "mode": report.mode,
            "violations": [list(v) for v in report.violations],
            "flags": [list(f) for f in report.flags]}, {}


def _run_build_env(cfg, env, threads, out_dir, say):
    _params(cfg)
    sch = cfg.schedule
    per_level = [{"level": n, "a": sch.a_at(n), "b": sch.b_at(n),
                  "beta": sch.beta_at(n), "eta": sch.eta_at(n),
                  "K": sch.K_at(n)} for n in range(1, sch.levels + 1)]
    results = {"levels": sch.levels, "offsets": list(env.offsets),
               "per_level": per_level}
    if sch.a_at(1) <= 1024 and sch.K_at(1) is not None:
        paint = enumerate_fundamental(env, 1)
        eta = sch.eta_at(1)
        K = sch.K_at(1)
        results["level1_census"] = {
            "edges": len(paint),
            "gate_edges": sum(1 for v in paint.values() if v == eta),
            "bar_edges": sum(1 for v in paint.values() if v == K)}
    return results, {}


def _run_calibrate(cfg, env, threads, out_dir, say):
    p = _params(cfg, levels=None, tolerance=1e-6, K_max=1e12)
    sch = cfg.schedule
    levels = p["levels"] or list(range(1, sch.levels + 1))
    runs = []
    for n in sorted(levels):
        say(f"calibrating level {n}")
        env_n = Environment(sch, env.offsets)
        res = calibrate_K(env_n, int(n), float(p["tolerance"]),
                          K_max=float(p["K_max"]))
        runs.append(res)
        if not res.feasible:
            _write_json(out_dir, f"calibration-{cfg.config_hash}.json",
                        {"runs": [r.to_dict() for r in runs]})
            raise CheckError(f"calibration infeasible at level {n};"
                             f" residual curve in the report")
        sch = sch.with_K(int(n), res.K)
    schedule_file = f"schedule-{cfg.config_hash}.json"
    _write_json(out_dir, schedule_file, {
        "schedule": sch.to_dict(),
        "schedule_hash": schedule_hash(sch),
        "calibration": [{"level": r.level, "K": r.K,
                         "tolerance": r.tolerance,
                         "bracket": list(r.bracket),
                         "relative_residual": r.relative_residual,
                         "solver": r.solver,
                         "solver_hash": _solver_hash(r.solver)}
                        for r in runs]})
    results = {"K": list(sch.K), "schedule_hash": schedule_hash(sch),
               "runs": [r.to_dict() for r in runs]}
    return results, {"schedule": schedule_file}


def _solver_hash(desc: str) -> str:
    return hashlib.sha256(desc.encode()).hexdigest()[:12]


def _run_simulate(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, horizon=REQUIRED, start=(0, 0),
                count=1, times=None)
    n, horizon = int(p["level"]), float(p["horizon"])
    start = tuple(int(c) for c in p["start"])
    count = int(p["count"])
    files = {}
    if count == 1:
        path = batch_simulate(env, n, start, horizon, 1,
                              master_seed=cfg.seed)[0]
        name = f"path-{cfg.config_hash}.csv"
        path_to_csv(path, os.path.join(out_dir, name))
        files["path"] = name
        fx, fy = (path.positions[-1] if len(path) else start)
        results = {"events": len(path), "final": [int(fx), int(fy)],
                   "horizon": horizon, "truncated": path.truncated}
    elif p["times"] is not None:
        times = [float(t) for t in p["times"]]
        vals = sample_positions(env, n, start, times, count,
                                master_seed=cfg.seed, threads=threads)
        name = f"positions-{cfg.config_hash}.npz"
        np.savez_compressed(os.path.join(out_dir, name),
                            times=np.array(times), positions=vals)
        files["positions"] = name
        centered = vals - np.asarray(start)
        results = {"count": count, "times": times,
                   "mean": centered.mean(axis=0).tolist(),
                   "variance": centered.var(axis=0, ddof=1).tolist()}
    else:
        paths = batch_simulate(env, n, start, horizon, count,
                               master_seed=cfg.seed, threads=threads)
        name = f"paths-{cfg.config_hash}.npz"
        ensemble_to_npz(paths, os.path.join(out_dir, name))
        files["paths"] = name
        lens = [len(q) for q in paths]
        results = {"count": count, "horizon": horizon,
                   "events_mean": float(np.mean(lens)),
                   "events_total": int(np.sum(lens))}
    return results, files


def _run_decompose(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, horizon=REQUIRED, start=(0, 0))
    n, horizon = int(p["level"]), float(p["horizon"])
    start = tuple(int(c) for c in p["start"])
    path = batch_simulate(env, n, start, horizon, 1,
                          master_seed=cfg.seed)[0]
    dec = compute_stopping_times(path, env, n)
    validate_decomposition(dec, env)
    split = split_and_clock(path, dec)
    inc = excursion_increments(path, dec)
    c1, c2 = dec.clock_pair(horizon)
    results = {
        "events": len(path),
        "transits": len(dec.departures),
        "stretches": len(dec.splice_starts),
        "pending_transit": dec.pending_transit,
        "pending_splice": dec.pending_splice,
        "clock_inside": float(c1),
        "clock_outside": float(c2),
        "clock_sum_error": float(abs((c1 + c2) - horizon)),
        "component_events": [len(split.first), len(split.second)],
        "gap_moves": inc.moves.tolist(),
        "gap_peaks": inc.peaks.tolist(),
        "dropped": int(inc.dropped),
    }
    return results, {}


def _run_law_equality(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, samples=REQUIRED, horizon=REQUIRED,
                times=(15.0, 40.0), start=(0, 0))
    results = law_equality_experiment(
        env, int(p["level"]), int(p["samples"]), float(p["horizon"]),
        cfg.seed, times=tuple(float(t) for t in p["times"]),
        start=tuple(int(c) for c in p["start"]), threads=threads)
    return results, {}


def _run_smallness(cfg, env_unused, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, u=REQUIRED, samples=REQUIRED,
                deltas=None, resample_offsets=True)
    deltas = None if p["deltas"] is None else [float(d) for d in p["deltas"]]
    results = smallness_experiment(
        cfg.schedule, int(p["level"]), float(p["u"]), int(p["samples"]),
        cfg.seed, deltas=deltas, threads=threads,
        resample_offsets=bool(p["resample_offsets"]))
    return results, {}


def _run_covariance_decay(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, samples=REQUIRED, horizon=REQUIRED,
                maxlag=8, start=(0, 0))
    results = covariance_decay_experiment(
        env, int(p["level"]), int(p["samples"]), float(p["horizon"]),
        cfg.seed, maxlag=int(p["maxlag"]),
        start=tuple(int(c) for c in p["start"]), threads=threads)
    return results, {}


def _window_arg(raw) -> tuple:
    try:
        (x0, y0), (x1, y1) = raw
        return ((int(x0), int(y0)), (int(x1), int(y1)))
    except (TypeError, ValueError) as exc:
        raise ConfigError("window must be [[x0, y0], [x1, y1]]") from exc


def _side_blocks(net, window, axis):
    (x0, y0), (x1, y1) = window
    lo, hi = (x0, x1) if axis == 0 else (y0, y1)
    pick = (lambda v, c: v[axis] == c)
    A = [v for v in net.vertices if pick(v, lo)]
    B = [v for v in net.vertices if pick(v, hi)]
    return A, B


def _run_resistance(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, window=REQUIRED, axis=0,
                export_csv=False)
    window = _window_arg(p["window"])
    axis = int(p["axis"])
    if axis not in (0, 1):
        raise ConfigError("axis must be 0 or 1")
    net = export_finite_network(env, int(p["level"]), window)
    A, B = _side_blocks(net, ((min(window[0][0], window[1][0]),
                               min(window[0][1], window[1][1])),
                              (max(window[0][0], window[1][0]),
                               max(window[0][1], window[1][1]))), axis)
    r, _ = effective_resistance(net, A, B)
    files = {}
    if p["export_csv"]:
        name = f"network-{cfg.config_hash}.csv"
        network_to_csv(net, os.path.join(out_dir, name))
        files["network"] = name
    results = {"resistance": r, "axis": axis,
               "window": [list(c) for c in window],
               "vertices": net.vertex_count, "edges": net.edge_count}
    return results, files


def _run_commute_check(cfg, env_unused, threads, out_dir, say):
    p = _params(cfg, count=100, max_vertices=50, threshold=1e-9)
    count, cap = int(p["count"]), int(p["max_vertices"])
    threshold = float(p["threshold"])
    residuals = []
    for i in range(count):
        net = random_connected_network(cfg.seed + i, max_vertices=cap)
        residuals.append(commute_identity_check(
            net, [0], [net.vertex_count - 1]))
    results = {"count": count, "threshold": threshold,
               "max_residual": float(max(residuals)),
               "mean_residual": float(np.mean(residuals)),
               "residuals": [float(r) for r in residuals]}
    if results["max_residual"] > threshold:
        _write_json(out_dir, f"commute-check-{cfg.config_hash}.json",
                    results)
        raise CheckError(f"commute residual {results['max_residual']:.3e}"
                         f" exceeds {threshold:g}")
    return results, {}


def _run_harnack(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, window=REQUIRED, region="inner-third")
    window = _window_arg(p["window"])
    net = export_finite_network(env, int(p["level"]), window)
    (x0, y0), (x1, y1) = window
    boundary = {**{v: 0.0 for v in net.vertices if v[0] == x0},
                **{v: 1.0 for v in net.vertices if v[0] == x1}}
    h = harmonic_extension(net, boundary)
    if p["region"] == "inner-third":
        dx, dy = x1 - x0, y1 - y0
        region = [(x, y)
                  for x in range(x0 + dx // 3, x1 - dx // 3 + 1)
                  for y in range(y0 + dy // 3, y1 - dy // 3 + 1)]
    else:
        region = [tuple(int(c) for c in v) for v in p["region"]]
    # the left face sits at potential 0, so shift region values off zero
    vals = {v: h[v] for v in region}
    if min(vals.values()) <= 0:
        raise CheckError("harmonic extension is not positive on the"
                         " region; shrink the region away from the"
                         " zero-potential face")
    ratio = harnack_ratio(net, h, region)
    results = {"ratio": ratio, "region_size": len(region),
               "window": [list(c) for c in window]}
    return results, {}


def _run_heat_kernel(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, a=REQUIRED, times=REQUIRED,
                pairs=REQUIRED, samples=REQUIRED, smoothing=None)
    pairs = [((float(x1), float(y1)), (float(x2), float(y2)))
             for (x1, y1), (x2, y2) in p["pairs"]]
    report = heat_kernel_check(
        env, int(p["level"]), int(p["a"]),
        [float(t) for t in p["times"]], pairs, int(p["samples"]),
        cfg.seed, smoothing=p["smoothing"], threads=threads,
        schedule_id=schedule_hash(cfg.schedule))
    return report.to_dict(), {}


def _run_fclt(cfg, env, threads, out_dir, say):
    p = _params(cfg, level=REQUIRED, times=REQUIRED, samples=REQUIRED,
                start=(0, 0), diffusivity=None, cell=1.0)
    times = [float(t) for t in p["times"]]
    start = tuple(int(c) for c in p["start"])
    vals = sample_positions(env, int(p["level"]), start, times,
                            int(p["samples"]), master_seed=cfg.seed,
                            threads=threads)
    centered = (vals - np.asarray(start)).astype(np.float64)
    diff = p["diffusivity"]
    report = fclt_report(centered, times,
                         diffusivity=None if diff is None else float(diff),
                         cell=float(p["cell"]), seed=cfg.seed,
                         schedule_id=schedule_hash(cfg.schedule))
    return report.to_dict(), {}


_RUNNERS = {
    "validate-schedule": _run_validate_schedule,
    "build-env": _run_build_env,
    "calibrate": _run_calibrate,
    "simulate": _run_simulate,
    "decompose": _run_decompose,
    "law-equality": _run_law_equality,
    "smallness": _run_smallness,
    "covariance-decay": _run_covariance_decay,
    "resistance": _run_resistance,
    "commute-check": _run_commute_check,
    "harnack": _run_harnack,
    "heat-kernel": _run_heat_kernel,
    "fclt": _run_fclt,
}

# kinds that run without a constructed environment
_NO_ENV = {"validate-schedule", "smallness", "commute-check"}


def _write_json(out_dir, name, payload) -> None:
    blob = json.dumps(_clean(payload), indent=2, sort_keys=True,
                      allow_nan=False)
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(blob + "\n")


def _k_provenance(cfg: ExperimentConfig, results: dict) -> list:
    if cfg.kind == "calibrate":
        return [{"level": r["level"], "K": r["K"], "source": "calibrated",
                 "tolerance": r["tolerance"], "bracket": r["bracket"],
                 "solver_hash": _solver_hash(r["solver"])}
                for r in results["runs"]]
    return [{"level": n, "K": cfg.schedule.K_at(n), "source": "config"}
            for n in range(1, cfg.schedule.levels + 1)]


def run_experiment(cfg: ExperimentConfig, threads=None, out_dir=None,
                   verbose: bool = False) -> str:
    """Execute one config; returns the report path. Raises ConfigError
    (exit 2) or CheckError/other (exit 3)."""
    out_dir = out_dir or cfg.out
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, f".write-probe-{cfg.config_hash}")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {out_dir!r} is not writable:"
                          f" {exc}") from exc

    def say(msg):
        if verbose:
            print(f"[{cfg.kind}] {msg}", file=sys.stderr)

    env = None
    if cfg.kind not in _NO_ENV:
        env = build_environment(cfg)

    say(f"running with seed {cfg.seed}")
    try:
        results, files = _RUNNERS[cfg.kind](cfg, env, threads, out_dir, say)
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError,
            CalibrationMissingError) as exc:
        # experiment modules reject bad parameters with these; surface
        # them as config problems rather than runtime failures
        raise ConfigError(str(exc)) from exc

    report = {
        "schema": REPORT_SCHEMA,
        "kind": cfg.kind,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "schedule": cfg.schedule.to_dict(),
        "schedule_hash": schedule_hash(cfg.schedule),
        "k_provenance": _k_provenance(cfg, results),
        "results": results,
    }
    if files:
        report["files"] = files
    name = f"{cfg.kind}-{cfg.config_hash}.json"
    _write_json(out_dir, name, report)
    say(f"report written to {name}")
    return os.path.join(out_dir, name)


# ---------------------------------------------------------------------------
# tidy CSV export

def _ci_for(parent: dict, key: str):
    """Sibling interval for a numeric leaf. Conventions in the report
    dicts: "mean"/"mean_ci", "clock_probability"/"clock_ci" (shared
    prefix before the last underscore), and "value"/"ci"."""
    names = [f"{key}_ci"]
    if "_" in key:
        names.append(key.rsplit("_", 1)[0] + "_ci")
    if key == "value":
        names.append("ci")
    for name in names:
        pair = parent.get(name)
        if (isinstance(pair, (list, tuple)) and len(pair) == 2
                and all(isinstance(c, (int, float))
                        and not isinstance(c, bool) for c in pair)):
            return float(pair[0]), float(pair[1])
    return None, None


def _flatten(prefix: str, obj, rows: list, parent: dict | None = None,
             key: str | None = None) -> None:
    if isinstance(obj, dict):
        for k in sorted(obj):
            if k == "ci" or k.endswith("_ci"):
                continue  # attached to its partner leaf
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], rows,
                     parent=obj, key=k)
    elif isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool)
               for v in obj) and obj:
            for i, v in enumerate(obj):
                rows.append((f"{prefix}.{i}", float(v), None, None))
        else:
            for i, v in enumerate(obj):
                _flatten(f"{prefix}.{i}", v, rows)
    elif isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return
    elif isinstance(obj, (int, float)):
        lo, hi = (None, None) if parent is None or key is None \
            else _ci_for(parent, key)
        rows.append((prefix, float(obj), lo, hi))


def export_reports(report_paths, csv_path, dedup: bool = False) -> int:
    """Merge report JSONs into one long-format CSV; returns row count."""
    rows = []
    for path in report_paths:
        try:
            with open(path) as fh:
                rep = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"report {path} is not valid JSON:"
                              f" {exc}") from exc
        if rep.get("schema") != REPORT_SCHEMA:
            raise ConfigError(f"report {path} has schema"
                              f" {rep.get('schema')!r}, expected"
                              f" {REPORT_SCHEMA!r}")
        experiment = f"{rep['kind']}:{rep['config_hash']}"
        flat = []
        _flatten("", rep.get("results", {}), flat)
        rows.extend((experiment,) + r for r in flat)
    if dedup:
        seen = set()
        unique = []
        for row in rows:
            if row[:2] not in seen:
                seen.add(row[:2])
                unique.append(row)
        rows = unique
    with open(csv_path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_COLUMNS)
        for experiment, parameter, value, lo, hi in rows:
            out.writerow([experiment, parameter, repr(value),
                          "" if lo is None else repr(lo),
                          "" if hi is None else repr(hi)])
    return len(rows)


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="walkforge",
        description="Config-driven experiments on hierarchical"
                    " conductance environments.")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute one experiment config")
    runp.add_argument("config", help="path to the JSON config")
    runp.add_argument("--threads", type=int, default=None,
                      help="worker threads (default: WALKFORGE_THREADS"
                           " or available parallelism)")
    runp.add_argument("--out", default=None,
                      help="output directory (default: config's 'out')")
    runp.add_argument("--verbose", action="store_true")

    exp = sub.add_parser("export", help="merge reports into a tidy CSV")
    exp.add_argument("reports", nargs="+", help="report JSON files")
    exp.add_argument("--csv", required=True, help="output CSV path")
    exp.add_argument("--dedup", action="store_true",
                     help="drop repeated (experiment, parameter) rows")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            threads = args.threads
            if threads is None:
                env_threads = os.environ.get("WALKFORGE_THREADS")
                threads = int(env_threads) if env_threads else None
            path = run_experiment(load_config(args.config),
                                  threads=threads, out_dir=args.out,
                                  verbose=args.verbose)
            print(path)
        else:
            count = export_reports(args.reports, args.csv,
                                   dedup=args.dedup)
            print(f"{args.csv}: {count} rows")
    except (ConfigError, CalibrationMissingError) as exc:
        print(f"walkforge: config error: {exc}", file=sys.stderr)
        return 2
    except CheckError as exc:
        print(f"walkforge: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failures map to 3, not a traceback
        print(f"walkforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
