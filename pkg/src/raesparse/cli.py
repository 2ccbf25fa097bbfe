"""Command-line entry point: sweeps, single runs, verification, inspection.

Configuration files are YAML whose keys mirror :class:`SweepSpec`::

    models: [cae, mdae]
    activations: [relu]
    sigma2_grid: [0, 0.01, 0.09, 0.25, 0.49, 1.0]
    constraint: unit
    output_dir: runs/relu
    workers: 1
    train: {epochs: 15, batch_size: 50, learning_rate: 0.003, momentum: 0.9,
            hidden_units: 256, seed: 0, dae_samples: 1}
    data: {dataset: mnist, path: train-images-idx3-ubyte.gz, limit: 10000,
           std_floor: 0.1}

Relative data paths are resolved against ``$RAESPARSE_DATA`` when it is set.
``--set section.key=value`` overrides any entry.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .activations import Activation
from .data import (
    Dataset, load_cifar10_patches, load_csv, load_mnist_idx, standardize,
    synth_whitened_gaussian)
from .numerics import ConstraintKind, make_rng
from .optimizer import TrainConfig, TrainHistory, train
from .regularizers import C2Function, Objective, ObjectiveSpec

log = logging.getLogger("raesparse")

DATA_ENV = "RAESPARSE_DATA"
FULL_SIGMA2_GRID = [0.0, 0.001, 0.01, 0.04, 0.09, 0.16, 0.25, 0.36, 0.49, 0.64, 0.81, 1.0]
DESK_SIGMA2_GRID = [0.0, 0.01, 0.09, 0.25, 0.49, 1.0]
TABLE_HEADER = ["model", "activation", "sigma2", "constraint", "act_fraction",
                "dead_fraction", "recon_loss", "seed"]


@dataclass
class DataSpec:
    dataset: str = "mnist"
    path: str | list[str] | None = None
    limit: int | None = 10_000
    std_floor: float | None = None
    standardize: str = "sample"
    patch: int = 8
    num: int = 50_000
    n: int = 20
    seed: int = 0

    def resolve(self, p: str) -> str:
        root = os.environ.get(DATA_ENV)
        if root and not os.path.isabs(p):
            return os.path.join(root, p)
        return p

    def load(self) -> Dataset:
        kind = self.dataset.lower()
        if kind == "mnist":
            data = load_mnist_idx(self.resolve(self.path or "train-images-idx3-ubyte"),
                                  limit=self.limit)
            floor = 0.1 if self.std_floor is None else self.std_floor
        elif kind in ("cifar10", "cifar"):
            paths = self.path if isinstance(self.path, list) else [self.path]
            data = load_cifar10_patches([self.resolve(p) for p in paths], self.patch,
                                        self.num, make_rng(self.seed))
            floor = 0.0 if self.std_floor is None else self.std_floor
        elif kind == "synthetic":
            return synth_whitened_gaussian(self.n, self.limit or 10_000, make_rng(self.seed))
        elif kind == "csv":
            data = load_csv(self.resolve(self.path))
            if self.limit:
                data = data.head(self.limit)
            floor = 0.0 if self.std_floor is None else self.std_floor
        else:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.standardize == "none":
            return data
        return standardize(data, floor, self.standardize)


@dataclass
class SweepSpec:
    models: list[str] = field(default_factory=lambda: ["cae"])
    activations: list[str] = field(default_factory=lambda: ["relu"])
    sigma2_grid: list[float] = field(default_factory=lambda: list(DESK_SIGMA2_GRID))
    constraint: str = "unit"
    train: dict = field(default_factory=dict)
    data: DataSpec = field(default_factory=DataSpec)
    output_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if not self.models or not self.activations or not self.sigma2_grid:
            raise ValueError("models, activations and sigma2_grid must be non-empty")
        if any(s < 0 for s in self.sigma2_grid):
            raise ValueError("sigma2_grid values must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        data = DataSpec(**(d.pop("data", None) or {}))
        grid = d.pop("sigma2_grid", None)
        if grid == "full":
            grid = FULL_SIGMA2_GRID
        spec = cls(data=data, **d)
        if grid is not None:
            spec.sigma2_grid = [float(s) for s in grid]
        return spec

    def cell_config(self, model: str, activation: str, sigma2: float) -> TrainConfig:
        t = dict(self.train)
        obj = ObjectiveSpec(
            kind=Objective.parse(model), coeff=float(sigma2),
            dae_samples=int(t.pop("dae_samples", 1)),
            sae_rho=float(t.pop("sae_rho", 0.0)),
            c1_q=int(t.pop("c1_q", 2)), c1_p=int(t.pop("c1_p", 2)),
            c2_f=C2Function(t.pop("c2_f", "identity")))
        return TrainConfig(
            epochs=int(t.pop("epochs", 15)), batch_size=int(t.pop("batch_size", 50)),
            learning_rate=float(t.pop("learning_rate", 0.003)),
            momentum=float(t.pop("momentum", 0.9)),
            constraint=ConstraintKind.parse(self.constraint), objective=obj,
            activation=Activation.parse(activation),
            hidden_units=int(t.pop("hidden_units", 256)), seed=int(t.pop("seed", 0)),
            delta_min=t.pop("delta_min", None))


@dataclass
class SweepRow:
    model: str
    activation: str
    sigma2: float
    constraint: str
    act_fraction: float
    dead_fraction: float
    recon_loss: float
    seed: int
    epochs: int = 0
    wall_time: float = 0.0
    status: str = "ok"


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_table(result: SweepResult, path) -> None:
    """Write the sweep table as UTF-8 CSV with shortest round-trip floats."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TABLE_HEADER)
            for row in result.rows:
                w.writerow([_fmt(getattr(row, k)) for k in TABLE_HEADER])
    except OSError as exc:
        raise OSError(f"cannot write table {path}: {exc}") from exc


def read_table(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        for rec in csv.DictReader(f):
            for k in ("sigma2", "act_fraction", "dead_fraction", "recon_loss"):
                rec[k] = float(rec[k])
            rec["seed"] = int(rec["seed"])
            out.append(rec)
    return out


def cell_name(model: str, activation: str, sigma2: float, constraint: str) -> str:
    return f"{model}_{activation}_s2={sigma2!r}_{constraint.replace(':', '')}"


def run_cell(spec: SweepSpec, data: Dataset, model: str, activation: str,
             sigma2: float, hist_dir: str | None) -> SweepRow:
    config = spec.cell_config(model, activation, sigma2)
    t0 = time.perf_counter()
    try:
        history = train(config, data)
    except Exception as exc:  # a failed cell must not abort the sweep
        log.warning("cell %s/%s/%r failed: %s", model, activation, sigma2, exc)
        return SweepRow(model, activation, float(sigma2), spec.constraint, math.nan,
                        math.nan, math.nan, config.seed, config.epochs,
                        time.perf_counter() - t0, f"failed: {exc}")
    last = history.records[-1] if history.records else history.initial_record
    if hist_dir is not None:
        history.save(os.path.join(
            hist_dir, cell_name(model, activation, sigma2, spec.constraint) + ".json"))
    return SweepRow(model, activation, float(sigma2), spec.constraint,
                    last.avg_activation_fraction, last.dead_unit_fraction,
                    last.recon_loss, config.seed, config.epochs,
                    time.perf_counter() - t0)


def run_sweep(spec: SweepSpec, data: Dataset | None = None,
              write: bool = True) -> SweepResult:
    """Train one model per (model, activation, sigma2) cell.

    Every cell starts from the same seed so cells are paired. Cells share
    nothing, so ``spec.workers > 1`` runs them on a thread pool without
    changing any result.
    """
    if data is None:
        data = spec.data.load()
    hist_dir = None
    if write:
        hist_dir = os.path.join(spec.output_dir, "histories")
        os.makedirs(hist_dir, exist_ok=True)
    cells = [(m, a, s) for m in spec.models for a in spec.activations
             for s in spec.sigma2_grid]
    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(lambda c: run_cell(spec, data, *c, hist_dir), cells))
    else:
        rows = []
        for c in cells:
            rows.append(run_cell(spec, data, *c, hist_dir))
            log.info("%s %s sigma2=%g act=%.4f dead=%.4f (%.1fs)", *c,
                     rows[-1].act_fraction, rows[-1].dead_fraction, rows[-1].wall_time)
    result = SweepResult(rows)
    if write:
        emit_table(result, os.path.join(spec.output_dir, "results.csv"))
    return result


def run_verification_suite(scale: str = "quick", seed: int = 0):
    """Run every oracle and certificate; failures come back as report rows."""
    from . import suite
    return suite.run(scale, seed)


# -- argument handling ---------------------------------------------------------

def _parse_value(text: str):
    return yaml.safe_load(text)


def load_config(path: str, overrides: list[str]) -> dict:
    with open(path) as f:
        cfg = yaml.safe_load(f) or {}
    for item in overrides or []:
        key, _, value = item.partition("=")
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = _parse_value(value)
    return cfg


def _apply_common(cfg: dict, args) -> dict:
    if getattr(args, "output_dir", None):
        cfg["output_dir"] = args.output_dir
    if getattr(args, "seed", None) is not None:
        cfg.setdefault("train", {})["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg.setdefault("train", {})["epochs"] = args.epochs
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    if getattr(args, "data_path", None):
        cfg.setdefault("data", {})["path"] = args.data_path
    return cfg


def cmd_sweep(args) -> int:
    spec = SweepSpec.from_dict(_apply_common(load_config(args.config, args.set), args))
    result = run_sweep(spec)
    failed = [r for r in result.rows if r.status != "ok"]
    print(f"{len(result.rows)} cells, {len(failed)} failed; table at "
          f"{os.path.join(spec.output_dir, 'results.csv')}")
    return 1 if failed else 0


def cmd_train(args) -> int:
    spec = SweepSpec.from_dict(_apply_common(load_config(args.config, args.set), args))
    config = spec.cell_config(spec.models[0], spec.activations[0], spec.sigma2_grid[0])
    history = train(config, spec.data.load())
    os.makedirs(spec.output_dir, exist_ok=True)
    out = os.path.join(spec.output_dir, "history.json")
    history.save(out)
    last = history.records[-1] if history.records else history.initial_record
    print(f"act_fraction={last.avg_activation_fraction!r} "
          f"dead_fraction={last.dead_unit_fraction!r} recon_loss={last.recon_loss!r}")
    print(f"history written to {out}")
    return 0


def cmd_verify(args) -> int:
    reports = run_verification_suite(args.scale, args.seed)
    out = open(args.output, "w") if args.output else None
    try:
        for rep in reports:
            line = rep.to_json()
            print(line)
            if out:
                out.write(line + "\n")
    finally:
        if out:
            out.close()
    failed = [r for r in reports if r.status == "fail"]
    print(f"# {len(reports)} checks, {len(failed)} failed", file=sys.stderr)
    return 1 if failed else 0


def cmd_inspect(args) -> int:
    history = TrainHistory.load(args.history)
    c = history.config
    print(f"objective={c.objective.kind.value} coeff={c.objective.coeff!r} "
          f"activation={c.activation.value} constraint={c.constraint} "
          f"m={c.hidden_units} epochs={c.epochs} seed={c.seed}")
    print("epoch  recon_loss  act_fraction  dead_fraction  mean_a")
    recs = ([history.initial_record] if history.initial_record else []) + history.records
    for r in recs:
        print(f"{r.epoch:5d}  {r.recon_loss:10.4f}  {r.avg_activation_fraction:12.4f}  "
              f"{r.dead_unit_fraction:13.4f}  {r.mean_pre_activation:8.4f}")
    norms = np.linalg.norm(history.params.W, axis=1)
    print(f"row norms: min={norms.min():.6f} max={norms.max():.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raesparse",
                                description="Sparsity experiments for regularized auto-encoders")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("sweep", cmd_sweep, "train every grid cell"),
                               ("train", cmd_train, "train the first grid cell")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. train.epochs=5")
        sp.add_argument("--output-dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--data-path")
        if name == "sweep":
            sp.add_argument("--workers", type=int)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("verify", help="run the oracle and certificate suite")
    sp.add_argument("--scale", choices=["quick", "full"], default="quick")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", help="also write JSON lines here")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("inspect", help="summarize a saved history")
    sp.add_argument("history")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
