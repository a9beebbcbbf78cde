"""``pareto-pinn`` command line: train, sweep, landscape and verify."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

from . import plotting
from .analysis import (DEFAULT_ALPHAS, RunSpec, SweepResult, execute_runs, pareto_filter, run_landscape,
                       sweep_alpha, tradeoff_rank_stat)
from .export import error_names, fmt, load_run, save_run, write_csv, write_json
from .model import NetworkConfig, load_checkpoint
from .problems import HeatProblem, KovasznayProblem, Problem
from .training import RunResult, TrainingConfig, network_config_for

log = logging.getLogger("pareto_pinn")

DESK_EPOCHS = 20_000
SCALES = (0.2, 1.0, 5.0)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# experiment configuration

@dataclass(frozen=True)
class ExperimentConfig:
    """One training run or one alpha sweep.

    JSON form::

        {"name": "heat-M1", "problem": "heat", "M": 1.0, "kappa": 1.0,
         "network": {...}, "training": {...}, "alphas": null, "outputs": "out"}

    Kovasznay configs carry ``nu`` instead of ``kappa``.  ``alphas`` turns
    the experiment into a sweep.
    """

    name: str
    problem: str
    M: float
    coefficient: float
    network: NetworkConfig
    training: TrainingConfig
    alphas: tuple[float, ...] | None = None
    outputs: str = "."

    def __post_init__(self):
        if self.problem not in ("heat", "kovasznay"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if not self.name or "/" in self.name:
            raise ConfigError(f"invalid experiment name {self.name!r}")
        try:
            prob = self.make_problem()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if (self.network.input_dim, self.network.output_dim) != (prob.input_dim, prob.output_dim):
            raise ConfigError(f"{self.problem} needs a {prob.input_dim}->{prob.output_dim} network")
        if self.alphas is not None:
            if len(self.alphas) == 0:
                raise ConfigError("alpha list is empty")
            bad = [a for a in self.alphas if not 0.0 < a < 1.0]
            if bad:
                raise ConfigError(f"alphas outside (0, 1): {bad}")

    @property
    def coefficient_name(self) -> str:
        return "kappa" if self.problem == "heat" else "nu"

    @property
    def is_sweep(self) -> bool:
        return self.alphas is not None

    def make_problem(self) -> Problem:
        if self.problem == "heat":
            return HeatProblem(M=self.M, kappa=self.coefficient)
        return KovasznayProblem(M=self.M, nu=self.coefficient)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "problem": self.problem,
            "M": self.M,
            self.coefficient_name: self.coefficient,
            "network": self.network.to_dict(),
            "training": self.training.to_dict(),
            "alphas": list(self.alphas) if self.alphas is not None else None,
            "outputs": self.outputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            problem = d.pop("problem")
            coef_name = "kappa" if problem == "heat" else "nu"
            coefficient = float(d.pop(coef_name))
            M = float(d.pop("M"))
        except KeyError as exc:
            raise ConfigError(f"missing field {exc}") from exc
        dims = (2, 1) if problem == "heat" else (2, 3)
        net = {"input_dim": dims[0], "output_dim": dims[1], **d.pop("network", {})}
        training = d.pop("training", {})
        alphas = d.pop("alphas", None)
        name = d.pop("name", f"{problem}-M{M:g}")
        outputs = d.pop("outputs", ".")
        if d:
            raise ConfigError(f"unknown fields {sorted(d)}")
        _check_keys(net, NetworkConfig, "network")
        _check_keys(training, TrainingConfig, "training")
        try:
            return cls(name, problem, M, coefficient, NetworkConfig(**net), TrainingConfig(**training),
                       tuple(float(a) for a in alphas) if alphas is not None else None, outputs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _check_keys(d: dict, cls, label: str):
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {label} fields {sorted(unknown)}")


def _experiment(problem, M, coef, alpha=0.5, alphas=None, epochs=100_000, adaptive_weighting=False,
                adaptive_activation=False, label=None) -> ExperimentConfig:
    dims = (2, 1) if problem == "heat" else (2, 3)
    coef_name = "kappa" if problem == "heat" else "nu"
    name = label or f"{problem}-M{M:g}-{coef_name}{coef:g}"
    return ExperimentConfig(
        name, problem, M, coef, NetworkConfig(*dims, adaptive_activation=adaptive_activation),
        TrainingConfig(alpha=alpha, epochs=epochs, adaptive_weighting=adaptive_weighting,
                       adaptive_activation=adaptive_activation),
        tuple(alphas) if alphas is not None else None)


def preset(name: str, desk: bool = False) -> list[ExperimentConfig]:
    """Experiment grids behind each figure-style preset."""
    epochs = DESK_EPOCHS if desk else 100_000
    nu = 1.0 / 40.0
    grids = {
        "fig4": [_experiment("heat", M, 1.0, epochs=epochs) for M in SCALES],
        "fig5": [_experiment("heat", M, 1.0, alphas=DEFAULT_ALPHAS, epochs=epochs) for M in SCALES],
        "fig6": [_experiment("heat", M, 0.04, epochs=epochs) for M in SCALES],
        "fig7": [_experiment("heat", M, 0.04, alphas=DEFAULT_ALPHAS, epochs=epochs) for M in SCALES],
        "fig8": [_experiment("kovasznay", M, nu, epochs=epochs) for M in SCALES],
        "fig9": [_experiment("kovasznay", M, nu, alphas=DEFAULT_ALPHAS, epochs=epochs) for M in SCALES],
        "fig10": [e for M in SCALES for e in (
            _experiment("heat", M, 1.0, epochs=epochs, label=f"heat-M{M:g}-kappa1-base"),
            _experiment("heat", M, 1.0, epochs=epochs, adaptive_activation=True,
                        label=f"heat-M{M:g}-kappa1-af"),
            _experiment("heat", M, 1.0, epochs=epochs, adaptive_weighting=True,
                        label=f"heat-M{M:g}-kappa1-lw"),
        )],
    }
    if name not in grids:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(grids)}")
    return grids[name]


PRESET_NAMES = ("fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10")


def load_config(path: str | Path) -> list[ExperimentConfig]:
    """A JSON object (one experiment) or a list of them."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    items = data if isinstance(data, list) else [data]
    if not items or not all(isinstance(x, dict) for x in items):
        raise ConfigError(f"{path}: expected an object or a non-empty list of objects")
    return [ExperimentConfig.from_dict(x) for x in items]


def parse_alphas(text: str) -> tuple[float, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"invalid alpha list {text!r}") from exc


def apply_overrides(configs: Sequence[ExperimentConfig], args) -> list[ExperimentConfig]:
    out = []
    for cfg in configs:
        training = cfg.training
        if getattr(args, "desk", False) and args.epochs is None:
            training = replace(training, epochs=DESK_EPOCHS)
        if args.epochs is not None:
            training = replace(training, epochs=args.epochs)
        if args.seed is not None:
            training = replace(training, seed=args.seed)
        alphas = cfg.alphas
        if getattr(args, "alphas", None) is not None:
            alphas = parse_alphas(args.alphas)
        outputs = args.out if args.out is not None else cfg.outputs
        try:
            out.append(replace(cfg, training=training, alphas=alphas, outputs=outputs))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return out


# ---------------------------------------------------------------------------
# output helpers

def prepare_dir(path: Path) -> Path:
    """Create ``path`` and prove it is writable before any compute starts."""
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
    return path


def write_manifest(root: Path, files: Sequence[Path]) -> Path:
    rel = sorted({str(Path(f).resolve().relative_to(root.resolve())) for f in files})
    return write_json(root / "manifest.json", {"files": rel})


def _spec(cfg: ExperimentConfig, alpha: float | None = None) -> RunSpec:
    training = cfg.training if alpha is None else replace(cfg.training, alpha=alpha)
    return RunSpec(cfg.make_problem(), cfg.network, training)


def _run_artifacts(result: RunResult, directory: Path, figures: bool = True) -> list[Path]:
    files = save_run(result, directory)
    if figures and result.params is not None and result.trajectory:
        files.append(plotting.plot_fields(directory / "fields.svg", result.problem, result.params,
                                          result.final.errors))
    return files


def _root(configs: Sequence[ExperimentConfig], args) -> Path:
    base = args.out or os.environ.get("PARETO_PINN_OUT") or configs[0].outputs
    return Path(base) / args.preset if args.preset else Path(base)


def _resolve_configs(args) -> list[ExperimentConfig]:
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    configs = load_config(args.config) if args.config else preset(args.preset, args.desk)
    return apply_overrides(configs, args)


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    configs = _resolve_configs(args)
    sweeps = [c.name for c in configs if c.is_sweep]
    if sweeps:
        raise ConfigError(f"{', '.join(sweeps)} define alpha sweeps; use the sweep subcommand")
    root = prepare_dir(_root(configs, args))
    dirs = [prepare_dir(root / c.name) for c in configs]
    results = execute_runs([_spec(c) for c in configs], jobs=args.jobs)
    files, diverged = [], False
    for cfg, d, result in zip(configs, dirs, results):
        files += _run_artifacts(result, d)
        files.append(write_json(d / "config.json", cfg.to_dict()))
        diverged |= result.diverged
        _report(cfg.name, result)
    write_manifest(root, files)
    return 1 if diverged else 0


def _report(name: str, result: RunResult):
    if not result.trajectory:
        print(f"{name}: failed ({result.message})")
        return
    f = result.final
    errs = " ".join(f"{k}={v:.3e}" for k, v in f.errors.items())
    state = "DIVERGED " + result.message if result.diverged else "ok"
    print(f"{name}: epoch {f.epoch} L_u={f.L_u:.3e} L_F={f.L_F:.3e} {errs} [{state}]")


def write_sweep(sweep: SweepResult, directory: Path) -> list[Path]:
    errs = error_names(sweep.problem)
    header = ["alpha", "final_L_u", "final_L_F", *errs, "seed", "diverged"]
    rows = [[e.alpha, e.L_u, e.L_F, *(e.errors.get(k, float("nan")) for k in errs), e.seed, int(e.diverged)]
            for e in sweep.entries]
    files = [write_csv(directory / "sweep.csv", header, rows)]
    usable = sweep.usable()
    front = pareto_filter([(e.L_u, e.L_F) for e in usable])
    front_rows = [[e.alpha, e.L_u, e.L_F] for e in usable if (e.L_u, e.L_F) in set(front)]
    files.append(write_csv(directory / "front.csv", ["alpha", "final_L_u", "final_L_F"], front_rows))
    for e in sweep.entries:
        sub = directory / f"alpha_{e.alpha!r}"
        if e.run.params is not None:
            files += save_run(e.run, sub)
    files.append(plotting.plot_pareto(directory / "pareto.svg", sweep.entries, front))
    error_key = "eps_p" if isinstance(sweep.problem, KovasznayProblem) else "eps_u"
    files.append(plotting.plot_errors(directory / "errors.svg", sweep.entries, error_key))
    stats = {"rho_alpha_L_F": None, "rho_alpha_L_u": None}
    if len(usable) >= 3:
        rho_f, rho_u = tradeoff_rank_stat(sweep)
        stats = {"rho_alpha_L_F": rho_f, "rho_alpha_L_u": rho_u}
    files.append(write_json(directory / "sweep.json", {
        "alphas": [e.alpha for e in sweep.entries],
        "diverged": [e.alpha for e in sweep.entries if e.diverged],
        **stats,
    }))
    return files


def cmd_sweep(args) -> int:
    configs = _resolve_configs(args)
    configs = [c if c.is_sweep else replace(c, alphas=DEFAULT_ALPHAS) for c in configs]
    root = prepare_dir(_root(configs, args))
    dirs = [prepare_dir(root / c.name) for c in configs]
    files, diverged = [], False
    for cfg, d in zip(configs, dirs):
        sweep = sweep_alpha(cfg.make_problem(), cfg.alphas, cfg.training, cfg.network, jobs=args.jobs)
        files += write_sweep(sweep, d)
        files.append(write_json(d / "config.json", cfg.to_dict()))
        for e in sweep.entries:
            _report(f"{cfg.name} alpha={e.alpha:g}", e.run)
        diverged |= any(e.diverged for e in sweep.entries)
    write_manifest(root, files)
    return 1 if diverged else 0


def write_landscape(sl, directory: Path, checkpoint: str) -> list[Path]:
    files = []
    for key, grid in (("L_u", sl.L_u), ("L_F", sl.L_F), ("total", sl.total)):
        rows = [[a, b, grid[i, j], int(sl.flagged[i, j])]
                for i, a in enumerate(sl.coords) for j, b in enumerate(sl.coords)]
        files.append(write_csv(directory / f"landscape_{key}.csv", ["a", "b", key, "flagged"], rows))
        files.append(plotting.plot_landscape(directory / f"landscape_{key}.svg", sl.coords, grid, key))
    c = sl.center_index
    files.append(write_json(directory / "landscape.json", {
        "seed": sl.seed, "half_range": sl.half_range, "resolution": sl.resolution, "alpha": sl.alpha,
        "center_checkpoint": checkpoint,
        "center_L_u": sl.L_u[c, c], "center_L_F": sl.L_F[c, c], "center_total": sl.total[c, c],
        "flagged_cells": int(sl.flagged.sum()),
    }))
    return files


def cmd_landscape(args) -> int:
    ckpt = Path(args.checkpoint)
    run_dir = ckpt.parent if ckpt.is_file() else ckpt
    ckpt = ckpt if ckpt.is_file() else ckpt / "checkpoint.bin"
    if args.resolution < 1 or args.resolution % 2 == 0:
        raise ConfigError("--resolution must be a positive odd number")
    if args.config:
        (cfg,) = apply_overrides(load_config(args.config)[:1], args)
        problem, net_cfg, training = cfg.make_problem(), cfg.network, cfg.training
    elif (run_dir / "summary.json").exists():
        run = load_run(run_dir)
        problem, net_cfg, training = run.problem, run.network_config, run.training_config
    else:
        raise ConfigError(f"no summary.json next to {ckpt}; pass --config")
    try:
        params = load_checkpoint(ckpt, network_config_for(problem, net_cfg, training))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot use checkpoint {ckpt}: {exc}") from exc
    out = prepare_dir(Path(args.out or os.environ.get("PARETO_PINN_OUT") or run_dir / "landscape"))
    run = RunResult(problem, params.config, training, params, [])
    sl = run_landscape(run, seed=args.seed or 0, half_range=args.range, resolution=args.resolution)
    files = write_landscape(sl, out, str(ckpt))
    write_manifest(out, files)
    c = sl.center_index
    print(f"landscape center L_u={sl.L_u[c, c]:.6e} L_F={sl.L_F[c, c]:.6e}; {int(sl.flagged.sum())} flagged cells")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks
    return 0 if run_checks() else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pareto-pinn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep=False):
        p.add_argument("--config", help="experiment JSON (object or list)")
        p.add_argument("--preset", choices=PRESET_NAMES, help="built-in experiment grid")
        p.add_argument("--desk", action="store_true", help=f"reduced budget ({DESK_EPOCHS} epochs)")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--out", help="output root (default $PARETO_PINN_OUT or the config's outputs)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel runs")
        p.add_argument("--alphas", help="comma-separated loss weights" if sweep else argparse.SUPPRESS)

    p = sub.add_parser("train", help="train single runs")
    common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("sweep", help="alpha sweeps with Pareto fronts")
    common(p, sweep=True)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("landscape", help="loss landscape around a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint file or run directory")
    p.add_argument("--config", help="experiment JSON, if the checkpoint has no summary.json")
    p.add_argument("--seed", type=int, help="direction seed")
    p.add_argument("--epochs", type=int, help=argparse.SUPPRESS)
    p.add_argument("--range", type=float, default=1.0, help="half range of the slice")
    p.add_argument("--resolution", type=int, default=51)
    p.add_argument("--out")
    p.set_defaults(func=cmd_landscape, alphas=None)
    p = sub.add_parser("verify", help="run built-in oracle checks")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"pareto-pinn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
