"""CSV/JSON writers for grids, scenario tables, timelines and truth data.

Floats are written with ``repr`` (shortest string that round-trips).
Every file starts with ``#`` metadata lines naming the tool version,
the config hash and the master seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from akf import __version__

MACHINE_STATES = ("delta", "dw", "eq_p", "ed_p")
MACHINE_INPUTS = ("Tm", "Efd", "id", "iq")
MACHINE_MEAS = ("e_r", "e_i")
LINEAR_STATES = ("pos", "vel")


def state_names(model: str) -> tuple[str, ...]:
    return LINEAR_STATES if model == "linear" else MACHINE_STATES


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def metadata(command: str, config: dict, master_seed: int | None) -> dict:
    return {
        "tool": "akf",
        "version": __version__,
        "command": command,
        "config_hash": config_hash(config),
        "master_seed": master_seed,
    }


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def csv_text(meta: dict, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a file written by :func:`csv_text` into (metadata, header, rows)."""
    meta: dict = {}
    lines = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].rstrip("\n").partition("=")
                meta[k] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


class StagedOutput:
    """Collects files in a temporary directory and moves them into place on success.

    Used as a context manager; if the block raises, nothing reaches ``out_dir``.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self._tmp: Path | None = None
        self._files: list[str] = []

    def __enter__(self) -> "StagedOutput":
        parent = self.out_dir.parent if not self.out_dir.exists() else self.out_dir
        parent.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(tempfile.mkdtemp(prefix=".akf-stage-", dir=parent))
        return self

    def write_text(self, rel: str, text: str) -> None:
        path = self._tmp / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self._files.append(rel)

    def write_json(self, rel: str, obj) -> None:
        self.write_text(rel, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.out_dir.mkdir(parents=True, exist_ok=True)
                for rel in self._files:
                    dest = self.out_dir / rel
                    dest.parent.mkdir(parents=True, exist_ok=True)
                    os.replace(self._tmp / rel, dest)
        finally:
            shutil.rmtree(self._tmp, ignore_errors=True)
        return False

    @property
    def files(self) -> list[str]:
        return list(self._files)


# --------------------------------------------------------------------------
# Table builders
# --------------------------------------------------------------------------

GRID_HEADER = ("filter", "r_scale", "q_scale", "state", "mean_mse", "stderr_mse", "divergences",
               "psd_violations", "n_seeds")


def grid_rows(grid, names: Sequence[str]):
    mean, se = grid.mean, grid.stderr
    for i, rs in enumerate(grid.r_scales):
        for j, qs in enumerate(grid.q_scales):
            for s, name in enumerate(names):
                yield (grid.filter, rs, qs, name, mean[i, j, s], se[i, j, s], grid.divergences[i, j],
                       grid.psd_violations[i, j], len(grid.seeds))


def grid_json(grid) -> dict:
    return {
        "filter": grid.filter,
        "q_scales": list(grid.q_scales),
        "r_scales": list(grid.r_scales),
        "position_mean_mse": grid.mean[..., 0],
        "position_stderr_mse": grid.stderr[..., 0],
        "divergences": grid.divergences,
        "psd_violations": grid.psd_violations,
        "innovation_r_nonpsd": grid.innovation_r_nonpsd,
        "n_seeds": len(grid.seeds),
    }


SCENARIO_HEADER = ("scenario", "filter", "state", "mean_mse", "stderr_mse", "divergences",
                   "psd_violations", "n_seeds")


def scenario_rows(report):
    for o in report.outcomes:
        names = state_names(o.config.model)
        for f, summ in o.filters.items():
            for s, name in enumerate(names):
                yield (o.config.name, f, name, summ.mean[s], summ.stderr[s], summ.divergences,
                       summ.psd_violations, len(summ.runs))


def scenario_json(report) -> dict:
    out = {}
    for o in report.outcomes:
        out[o.config.name] = {
            "Q0": o.Q0,
            "R0": o.R0,
            "filters": {
                f: {
                    "mean_mse": dict(zip(state_names(o.config.model), s.mean.tolist())),
                    "stderr_mse": dict(zip(state_names(o.config.model), s.stderr.tolist())),
                    "divergences": s.divergences,
                    "psd_violations": s.psd_violations,
                    "n_seeds": len(s.runs),
                }
                for f, s in o.filters.items()
            },
        }
    return out


def timeline_rows(outcome, index: int):
    """Rows ``step, t, truth..., <filter>...`` for the ``index``-th seed of a scenario."""
    cfg = outcome.config
    dt = cfg.linear.dt if cfg.model == "linear" else cfg.machine.dt
    names = state_names(cfg.model)
    filters = list(outcome.filters)
    runs = [outcome.filters[f].runs[index] for f in filters]
    header = ["step", "t"] + [f"truth_{n}" for n in names] + [f"{f}_{n}" for f in filters for n in names]
    truth = runs[0].truth
    rows = []
    for k in range(truth.shape[0]):
        row = [k + 1, (k + 1) * dt, *truth[k]]
        for r in runs:
            row.extend(r.estimates[k])
        rows.append(row)
    return header, rows


def envelope_rows(outcome, percentiles=(5.0, 50.0, 95.0)):
    names = state_names(outcome.config.model)
    header = ["step", "filter", "state"] + [f"err_p{p:g}" for p in percentiles]
    rows = []
    for f, summ in outcome.filters.items():
        env = summ.envelope(percentiles)
        for k in range(env.shape[1]):
            for s, name in enumerate(names):
                rows.append([k + 1, f, name, *env[:, k, s]])
    return header, rows


def linear_truth_rows(truth, dt: float):
    header = ["step", "t", "pos", "vel", "z"]
    rows = [[0, 0.0, *truth.states[0], ""]]
    for k in range(truth.measurements.shape[0]):
        rows.append([k + 1, (k + 1) * dt, *truth.states[k + 1], truth.measurements[k, 0]])
    return header, rows


def machine_truth_rows(truth):
    header = (["step", "t"] + list(MACHINE_STATES) + [f"{n}_true" for n in MACHINE_INPUTS]
              + [f"{n}_meas" for n in MACHINE_INPUTS] + [f"{n}_true" for n in MACHINE_MEAS]
              + [f"{n}_meas" for n in MACHINE_MEAS])
    rows = []
    for k in range(truth.t.size):
        rows.append([k, truth.t[k], *truth.states[k], *truth.inputs_true[k], *truth.inputs[k],
                     *truth.measurements_true[k], *truth.measurements[k]])
    return header, rows
