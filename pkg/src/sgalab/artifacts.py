"""On-disk artifacts: canonical JSON, trace files, and run reloading.

Every writer here is deterministic: keys are sorted and floats are printed
with 17 significant digits, so re-running a command with the same
configuration reproduces each artifact byte for byte.  The only exceptions
are the explicit wall-clock fields: ``wall_time`` inside a run manifest and
the separate ``timings.json``.  The compare command relies on the embedded
configuration hash to check that a prediction file and a set of traces came
from the same configuration.

Layout of an output directory::

    manifest.json        command-level manifest (config echo, hashes)
    predictions.json     large-sample predictions for the configured run
    trace_000.csv        thinned trajectory of replicate 0
    manifest_000.json    per-replicate manifest (window averages, hashes)
    acf_000.csv          per-coordinate autocorrelations of replicate 0
    comparison.json      simulation-versus-prediction report
    timings.json         wall-clock timings (excluded from reproducibility)
"""

from __future__ import annotations

import json
import os

import numpy as np

from .engine import RunRecord
from .errors import ArtifactMismatchError, DataError

FLOAT_FMT = "%.17g"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        if np.isnan(obj):
            return "nan"
        return "inf" if obj > 0 else "-inf"
    return obj


def write_json(path: str, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise ArtifactMismatchError(f"missing artifact: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def trace_path(out_dir: str, index: int) -> str:
    return os.path.join(out_dir, f"trace_{index:03d}.csv")


def run_manifest_path(out_dir: str, index: int) -> str:
    return os.path.join(out_dir, f"manifest_{index:03d}.json")


def acf_path(out_dir: str, index: int) -> str:
    return os.path.join(out_dir, f"acf_{index:03d}.csv")


def _trace_header(dim: int, state_dim: int) -> str:
    names = [f"theta_{j}" for j in range(1, dim + 1)]
    names += [f"mom_{j}" for j in range(1, state_dim - dim + 1)]
    return ",".join(["step", "epoch"] + names)


def save_run(out_dir: str, index: int, record: RunRecord, config_hash: str) -> None:
    """Persist one replicate as a trace CSV plus a manifest JSON.

    The manifest's ``wall_time`` entry is the one field allowed to differ
    between byte-identical re-runs.
    """
    steps = record.step_numbers()
    steps_per_epoch = record.n / max(int(record.manifest["batch_size"]), 1)
    header = _trace_header(record.dim, record.state_dim)
    with open(trace_path(out_dir, index), "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for k in range(record.states.shape[0]):
            row = ",".join(FLOAT_FMT % v for v in record.states[k])
            epoch = FLOAT_FMT % (steps[k] / steps_per_epoch)
            fh.write(f"{steps[k]},{epoch},{row}\n")
    payload = {
        "run": record.manifest,
        "config_hash": config_hash,
        "avg_state": None if record.avg_state is None else record.avg_state,
        "second_moment": None if record.second_moment is None else record.second_moment,
        "final_state": record.final_state,
        "diverged": record.diverged_at is not None,
        "wall_time": record.wall_time,
    }
    write_json(run_manifest_path(out_dir, index), payload)


def load_run(out_dir: str, index: int) -> tuple[RunRecord, str]:
    """Rebuild a RunRecord from its trace and manifest files."""
    payload = read_json(run_manifest_path(out_dir, index))
    run = payload["run"]
    state_dim = int(run["state_dim"])
    path = trace_path(out_dir, index)
    if not os.path.exists(path):
        raise ArtifactMismatchError(f"missing artifact: {path}")
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: cannot parse trace: {exc}") from None
    if table.size == 0:
        states = np.empty((0, state_dim))
    else:
        if table.shape[1] != state_dim + 2:
            raise DataError(
                f"{path}: expected {state_dim + 2} columns, found {table.shape[1]}"
            )
        states = np.ascontiguousarray(table[:, 2:])
    theta_hat = run.get("theta_hat")
    record = RunRecord(
        manifest=run,
        states=states,
        thin=int(run["thin"]),
        init_state=np.asarray(run["init_state"], float),
        final_state=np.asarray(payload["final_state"], float),
        avg_state=(
            None if payload.get("avg_state") is None
            else np.asarray(payload["avg_state"], float)
        ),
        second_moment=(
            None if payload.get("second_moment") is None
            else np.asarray(payload["second_moment"], float)
        ),
        avg_window=tuple(run["avg_window"]),
        theta_hat=None if theta_hat is None else np.asarray(theta_hat, float),
        local_exponent=float(run["local_exponent"]),
        n=int(run["n"]),
        dim=int(run["dim"]),
        n_steps=int(run["n_steps"]),
        wall_time=float(payload.get("wall_time", 0.0)),
        diverged_at=run.get("diverged_at"),
    )
    return record, payload["config_hash"]


def list_runs(out_dir: str) -> list[int]:
    """Replicate indices present in a directory, sorted ascending."""
    out = []
    for name in os.listdir(out_dir):
        if name.startswith("trace_") and name.endswith(".csv"):
            core = name[len("trace_"):-len(".csv")]
            if core.isdigit():
                out.append(int(core))
    return sorted(out)


def save_acf(out_dir: str, index: int, rhos: np.ndarray) -> None:
    """Write per-coordinate autocorrelations; rows are lags."""
    n_lags, dim = rhos.shape
    header = ",".join(["lag"] + [f"coord_{j}" for j in range(dim)])
    with open(acf_path(out_dir, index), "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for lag in range(n_lags):
            row = ",".join(FLOAT_FMT % v for v in rhos[lag])
            fh.write(f"{lag},{row}\n")
