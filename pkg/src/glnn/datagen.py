"""Trajectory datasets: sampling, ground-truth integration, splitting and CSV I/O.

A dataset file is a CSV whose first line points at a JSON metadata sidecar::

    # glnn-dataset meta=train.csv.meta.json
    t,q1,qdot1,q1_next,qdot1_next,qddot1
    0.0,0.2,-0.5,...
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from glnn.errors import ConfigError, DatasetFormatError, DivergenceError
from glnn.integrate import rollout
from glnn.oracles import get_system, params_to_dict

log = logging.getLogger(__name__)

GENERATOR_VERSION = "glnn-datagen/1"
FILE_TAG = "# glnn-dataset meta="
H_TOLERANCE = 1e-9


@dataclass
class TrajectoryDataset:
    system: str
    params: dict
    h: float
    t: np.ndarray  # (P,) time of the left state within its trajectory
    x: np.ndarray  # (P, 2N)
    x_next: np.ndarray  # (P, 2N)
    qddot: np.ndarray  # (P, N)
    seed: int
    n_traj: int
    n_steps: int
    substeps: int
    init_range: tuple[float, float] = (-1.0, 1.0)
    generator_version: str = GENERATOR_VERSION

    @property
    def n_dof(self) -> int:
        return self.qddot.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    def system_params(self):
        return get_system(self.system).make_params(self.params)

    def trajectories(self) -> np.ndarray:
        """States of shape ``(n_traj, n_steps + 1, 2N)``."""
        x = self.x.reshape(self.n_traj, self.n_steps, -1)
        last = self.x_next.reshape(self.n_traj, self.n_steps, -1)[:, -1:]
        return np.concatenate([x, last], axis=1)

    def metadata(self) -> dict:
        return {
            "format": "glnn-dataset",
            "generator_version": self.generator_version,
            "integrator": "rk4",
            "system": self.system,
            "params": self.params,
            "h": self.h,
            "seed": self.seed,
            "n_traj": self.n_traj,
            "n_steps": self.n_steps,
            "substeps": self.substeps,
            "init_range": list(self.init_range),
            "columns": column_names(self.n_dof),
        }


@dataclass
class SplitDataset:
    train: np.ndarray
    test: np.ndarray
    seed: int
    warning: str | None = field(default=None)


def generate(
    system: str,
    params=None,
    n_traj: int = 40,
    n_steps: int = 200,
    h: float = 0.05,
    init_range=(-1.0, 1.0),
    seed: int = 0,
    substeps: int = 10,
) -> TrajectoryDataset:
    """Sample uniform initial states and record consecutive-state pairs.

    Trajectory ``i`` draws its initial state from its own stream seeded by
    ``(seed, i)``, so trajectories do not depend on one another.
    """
    sysdef = get_system(system)
    if params is None or isinstance(params, dict):
        params = sysdef.make_params(params)
    lo, hi = (float(v) for v in init_range)
    if not lo < hi:
        raise ConfigError(f"init_range must satisfy min < max, got {init_range}")
    if n_traj < 1 or n_steps < 1 or substeps < 1:
        raise ConfigError("n_traj, n_steps and substeps must be positive")
    if not h > 0:
        raise ConfigError("h must be positive")

    dim = 2 * sysdef.n_dof
    x0 = np.stack([np.random.default_rng([seed, i]).uniform(lo, hi, dim) for i in range(n_traj)])
    try:
        roll = rollout(sysdef.field(params), x0, h, n_steps, substeps)
    except DivergenceError as exc:
        raise DivergenceError(
            f"ground truth diverged in trajectory {exc.trajectory} at step {exc.step}",
            step=exc.step,
            trajectory=exc.trajectory,
        ) from exc

    states = np.swapaxes(roll.states, 0, 1)  # (n_traj, n_steps + 1, dim)
    x = states[:, :-1].reshape(-1, dim)
    x_next = states[:, 1:].reshape(-1, dim)
    qddot = sysdef.deriv(x, params)[:, sysdef.n_dof :]
    t = np.tile(roll.times[:-1], n_traj)
    return TrajectoryDataset(
        system=system,
        params=params_to_dict(params),
        h=float(h),
        t=t,
        x=x,
        x_next=x_next,
        qddot=np.ascontiguousarray(qddot),
        seed=int(seed),
        n_traj=int(n_traj),
        n_steps=int(n_steps),
        substeps=int(substeps),
        init_range=(lo, hi),
    )


def energy_increase(ds: TrajectoryDataset) -> float:
    """Largest step-to-step energy increase over all trajectories (<= 0 when monotone)."""
    sysdef = get_system(ds.system)
    energy = sysdef.energy(ds.trajectories(), ds.system_params())
    return float(np.max(np.diff(energy, axis=1)))


def split(ds_or_size, ratio: float = 0.5, seed: int = 0) -> SplitDataset:
    """Seeded shuffle, then the first ``round(ratio * n)`` indices train."""
    n = ds_or_size if isinstance(ds_or_size, (int, np.integer)) else len(ds_or_size)
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"split ratio must be in (0, 1], got {ratio}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(ratio * n + 0.5))
    train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    warning = None
    if test.size == 0:
        warning = "empty test set"
        log.warning("split ratio %s leaves the test set empty", ratio)
    return SplitDataset(train, test, int(seed), warning)


# -- file format -------------------------------------------------------------


def column_names(n_dof: int) -> list[str]:
    idx = range(1, n_dof + 1)
    return (
        ["t"]
        + [f"q{i}" for i in idx]
        + [f"qdot{i}" for i in idx]
        + [f"q{i}_next" for i in idx]
        + [f"qdot{i}_next" for i in idx]
        + [f"qddot{i}" for i in idx]
    )


def meta_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def dataset_save(ds: TrajectoryDataset, path) -> None:
    path = Path(path)
    meta_path = meta_path_for(path)
    meta_path.write_text(json.dumps(ds.metadata(), indent=2) + "\n")
    table = np.column_stack([ds.t, ds.x, ds.x_next, ds.qddot])
    lines = [FILE_TAG + meta_path.name, ",".join(column_names(ds.n_dof))]
    # repr of a Python float round-trips exactly
    lines.extend(",".join(map(repr, row)) for row in table.tolist())
    path.write_text("\n".join(lines) + "\n")


_META_KEYS = ("system", "params", "h", "seed", "n_traj", "n_steps", "substeps", "init_range")


def dataset_load(path) -> TrajectoryDataset:
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(FILE_TAG):
        raise DatasetFormatError("missing dataset header", line=1)
    meta_path = path.parent / lines[0][len(FILE_TAG) :].strip()
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"metadata {meta_path.name} is not valid JSON: {exc}") from exc
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise DatasetFormatError(f"metadata missing keys {missing}")
    n_dof = get_system(meta["system"]).n_dof
    columns = column_names(n_dof)
    if meta.get("columns", columns) != columns:
        raise DatasetFormatError("metadata columns do not match the system")
    if len(lines) < 2 or lines[1].split(",") != columns:
        raise DatasetFormatError(f"expected column header {','.join(columns)}", line=2)

    rows = []
    for lineno, text in enumerate(lines[2:], start=3):
        if not text.strip():
            continue
        cells = text.split(",")
        if len(cells) != len(columns):
            raise DatasetFormatError(f"expected {len(columns)} columns, found {len(cells)}", line=lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise DatasetFormatError(str(exc), line=lineno) from exc
    table = np.asarray(rows, dtype=np.float64).reshape(-1, len(columns))

    n_traj, n_steps, h = int(meta["n_traj"]), int(meta["n_steps"]), float(meta["h"])
    if table.shape[0] != n_traj * n_steps:
        raise DatasetFormatError(
            f"metadata promises {n_traj * n_steps} rows, file has {table.shape[0]}"
        )
    if not np.all(np.isfinite(table)):
        bad = int(np.argwhere(~np.isfinite(table).all(axis=1))[0, 0])
        raise DatasetFormatError("non-finite value", line=bad + 3)
    times = table[:, 0].reshape(n_traj, n_steps)
    if n_steps > 1 and np.any(np.abs(np.diff(times, axis=1) - h) > H_TOLERANCE * max(1.0, h)):
        raise DatasetFormatError(f"time column is inconsistent with h = {h}")

    dim = 2 * n_dof
    return TrajectoryDataset(
        system=meta["system"],
        params=meta["params"],
        h=h,
        t=table[:, 0].copy(),
        x=table[:, 1 : 1 + dim].copy(),
        x_next=table[:, 1 + dim : 1 + 2 * dim].copy(),
        qddot=table[:, 1 + 2 * dim :].copy(),
        seed=int(meta["seed"]),
        n_traj=n_traj,
        n_steps=n_steps,
        substeps=int(meta["substeps"]),
        init_range=tuple(float(v) for v in meta["init_range"]),
        generator_version=meta.get("generator_version", GENERATOR_VERSION),
    )
