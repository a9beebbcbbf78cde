"""CSV / JSON artifacts for runs, sweeps and landscapes.

All CSV files are comma separated with a header row and reals written with
17 significant digits, so a float64 survives a write/read round trip exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .model import NetworkConfig, load_checkpoint, save_checkpoint
from .problems import HeatProblem, KovasznayProblem, Problem
from .training import RunResult, TrainingConfig, TrajectoryRecord


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# problems

def problem_to_dict(problem: Problem) -> dict:
    d = {k: v for k, v in asdict(problem).items()}
    d["problem"] = problem.name
    if isinstance(problem, KovasznayProblem):
        d.pop("C")  # derived from the test points at sampling time
    return d


def problem_from_dict(d: dict) -> Problem:
    d = dict(d)
    kind = d.pop("problem")
    if kind == "heat":
        return HeatProblem(**d)
    if kind == "kovasznay":
        return KovasznayProblem(**d)
    raise ValueError(f"unknown problem {kind!r}")


# ---------------------------------------------------------------------------
# trajectories and runs

def error_names(problem: Problem) -> list[str]:
    return ["eps_u"] if isinstance(problem, HeatProblem) else ["eps_u", "eps_v", "eps_p"]


def write_trajectory(path: str | Path, trajectory: Sequence[TrajectoryRecord], errors: Sequence[str]) -> Path:
    header = ["epoch", "L_u", "L_F", "L_total", *errors, "weight_in_force"]
    rows = ([r.epoch, r.L_u, r.L_F, r.L_total, *(r.errors[e] for e in errors), r.weight]
            for r in trajectory)
    return write_csv(path, header, rows)


def read_trajectory(path: str | Path) -> list[TrajectoryRecord]:
    header, rows = read_csv(path)
    errs = header[4:-1]
    out = []
    for row in rows:
        vals = [float(v) for v in row]
        out.append(TrajectoryRecord(
            int(vals[0]), vals[1], vals[2], vals[3],
            {e: v for e, v in zip(errs, vals[4:-1])}, vals[-1]))
    return out


def run_summary(result: RunResult) -> dict:
    final = result.final if result.trajectory else None
    return {
        "problem": problem_to_dict(result.problem),
        "network": result.network_config.to_dict(),
        "training": result.training_config.to_dict(),
        "seed": result.training_config.seed,
        "final_epoch": final.epoch if final else None,
        "final_L_u": final.L_u if final else None,
        "final_L_F": final.L_F if final else None,
        "final_L_total": final.L_total if final else None,
        **({k: v for k, v in final.errors.items()} if final else {}),
        "weight_in_force": final.weight if final else None,
        "diverged": result.diverged,
        "message": result.message,
        "wall_time": result.wall_time,
    }


def save_run(result: RunResult, directory: str | Path) -> list[Path]:
    """Write ``trajectory.csv``, ``checkpoint.bin`` and ``summary.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = [write_trajectory(d / "trajectory.csv", result.trajectory, error_names(result.problem))]
    save_checkpoint(result.params, d / "checkpoint.bin")
    files.append(d / "checkpoint.bin")
    files.append(write_json(d / "summary.json", run_summary(result)))
    return files


def load_run(directory: str | Path) -> RunResult:
    d = Path(directory)
    summary = json.loads((d / "summary.json").read_text())
    net_cfg = NetworkConfig(**summary["network"])
    return RunResult(
        problem=problem_from_dict(summary["problem"]),
        network_config=net_cfg,
        training_config=TrainingConfig(**summary["training"]),
        params=load_checkpoint(d / "checkpoint.bin", net_cfg),
        trajectory=read_trajectory(d / "trajectory.csv"),
        diverged=summary["diverged"],
        message=summary["message"],
        wall_time=summary["wall_time"],
    )
