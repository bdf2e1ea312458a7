"""The 2D benchmark dataset: a cosine-warped permutation of a skewed box.

Target points y have y1 ~ Unif[-1,1] and y2 ~ Unif[-1,1] + 0.5*y1; source
points are x = t*cos(A y) + A y (cos elementwise), where A is a non-identity
permutation and the warp amplitude t is drawn once per dataset from
Unif[0.3, 0.5] (or per sample, for sensitivity runs).  The y -> x direction
is the inverse of the map being learned, and since t < 1 it is injective,
so every generated pair is a valid aligned example.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .objective import AnchorSet

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])

T_MODES = ("per-dataset", "per-sample")


@dataclass
class SynthConfig:
    num_train: int = 27000
    num_test: int = 3000
    seed: int = 0
    permutation: np.ndarray = field(default_factory=lambda: SWAP.copy())
    t_mode: str = "per-dataset"
    t_range: tuple[float, float] = (0.3, 0.5)

    def __post_init__(self):
        self.permutation = np.asarray(self.permutation, dtype=np.float64)
        a = self.permutation
        if a.shape != (2, 2) or not _is_permutation(a) or np.array_equal(a, np.eye(2)):
            raise ValueError("permutation must be a non-identity 2x2 permutation matrix")
        if self.num_train < 1 or self.num_test < 1:
            raise ValueError("sample counts must be positive")
        if self.t_mode not in T_MODES:
            raise ValueError(f"t_mode must be one of {T_MODES}")


def _is_permutation(a: np.ndarray) -> bool:
    return (np.isin(a, (0.0, 1.0)).all()
            and (a.sum(axis=0) == 1).all() and (a.sum(axis=1) == 1).all())


def warp(y: np.ndarray, t, permutation: np.ndarray = SWAP) -> np.ndarray:
    """The y -> x direction: t*cos(A y) + A y, rows are samples.

    ``t`` is a scalar or an (N,) array (per-sample mode).
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    ay = y @ np.asarray(permutation, dtype=np.float64).T
    t_col = np.asarray(t, dtype=np.float64).reshape(-1, 1) if np.ndim(t) else t
    return t_col * np.cos(ay) + ay


@dataclass
class PairedDataset:
    """Aligned (x_i, y_i) rows; alignment is for evaluation and anchors only."""
    x: np.ndarray                 # (N, 2)
    y: np.ndarray                 # (N, 2)
    t: float | np.ndarray         # scalar, or (N,) in per-sample mode
    permutation: np.ndarray
    t_mode: str = "per-dataset"
    seed: int | None = None

    def __len__(self) -> int:
        return self.x.shape[0]

    def pair_residual(self) -> float:
        """Max |x - (t*cos(Ay) + Ay)| over the dataset; 0 up to float noise."""
        return float(np.abs(self.x - warp(self.y, self.t, self.permutation)).max())


def _make_split(n: int, t, cfg: SynthConfig, rng: np.random.Generator) -> PairedDataset:
    y1 = rng.uniform(-1.0, 1.0, size=n)
    y2 = rng.uniform(-1.0, 1.0, size=n) + 0.5 * y1
    y = np.column_stack([y1, y2])
    if cfg.t_mode == "per-sample":
        t = rng.uniform(cfg.t_range[0], cfg.t_range[1], size=n)
    x = warp(y, t, cfg.permutation)
    return PairedDataset(x=x, y=y, t=t, permutation=cfg.permutation.copy(),
                         t_mode=cfg.t_mode, seed=cfg.seed)


def generate(config: SynthConfig) -> tuple[PairedDataset, PairedDataset]:
    """(train, test) splits; deterministic given config.seed.

    Draw order: the shared warp amplitude t (per-dataset mode), then the
    train split, then the test split.  In per-sample mode each split draws
    its own t values after its y values.
    """
    rng = np.random.default_rng(config.seed)
    t = None
    if config.t_mode == "per-dataset":
        t = float(rng.uniform(config.t_range[0], config.t_range[1]))
    train = _make_split(config.num_train, t, config, rng)
    test = _make_split(config.num_test, t, config, rng)
    return train, test


def select_anchors(train: PairedDataset, count: int, seed: int) -> AnchorSet:
    """Uniform aligned pairs without replacement; deterministic given seed."""
    n = len(train)
    if count > n:
        raise ValueError(f"requested {count} anchors from {n} pairs")
    if count < 0:
        raise ValueError("anchor count must be >= 0")
    idx = np.random.default_rng(seed).permutation(n)[:count]
    return AnchorSet(x=train.x[idx].T, y=train.y[idx].T)


def shuffle_unpaired(dataset: PairedDataset, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Independently permuted x and y streams, so alignment is never observed."""
    rng = np.random.default_rng(seed)
    return (dataset.x[rng.permutation(len(dataset))],
            dataset.y[rng.permutation(len(dataset))])


# ---------------------------------------------------------------------------
# file I/O: CSV rows of aligned pairs plus a key=value metadata sidecar
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(v, ".17g")


def save_dataset(dataset: PairedDataset, directory, prefix: str) -> list[str]:
    """Write {prefix}.csv and {prefix}.meta into directory; returns filenames.

    Per-dataset mode stores t in the sidecar and the CSV has columns
    x1,x2,y1,y2; per-sample mode appends a t column instead.
    """
    os.makedirs(directory, exist_ok=True)
    per_sample = dataset.t_mode == "per-sample"
    csv_name, meta_name = f"{prefix}.csv", f"{prefix}.meta"
    header = "x1,x2,y1,y2,t" if per_sample else "x1,x2,y1,y2"
    lines = [header]
    t_arr = np.asarray(dataset.t).reshape(-1) if per_sample else None
    for i in range(len(dataset)):
        row = [_fmt(dataset.x[i, 0]), _fmt(dataset.x[i, 1]),
               _fmt(dataset.y[i, 0]), _fmt(dataset.y[i, 1])]
        if per_sample:
            row.append(_fmt(t_arr[i]))
        lines.append(",".join(row))
    with open(os.path.join(directory, csv_name), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    a = dataset.permutation
    meta = [
        "[dataset]",
        f"seed = {dataset.seed}",
        f"t_mode = {dataset.t_mode}",
        f"t = {'per-sample' if per_sample else _fmt(dataset.t)}",
        "permutation = " + ";".join(",".join(_fmt(v) for v in row) for row in a),
        f"num_samples = {len(dataset)}",
    ]
    with open(os.path.join(directory, meta_name), "w", encoding="ascii") as fh:
        fh.write("\n".join(meta) + "\n")
    return [csv_name, meta_name]


def load_dataset(directory, prefix: str) -> PairedDataset:
    meta_path = os.path.join(directory, f"{prefix}.meta")
    fields = {}
    with open(meta_path, "r", encoding="ascii") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("["):
                continue
            key, _, val = ln.partition(" = ")
            fields[key] = val
    t_mode = fields["t_mode"]
    perm = np.array([[float(v) for v in row.split(",")]
                     for row in fields["permutation"].split(";")])
    with open(os.path.join(directory, f"{prefix}.csv"), "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    x, y = data[:, 0:2], data[:, 2:4]
    if t_mode == "per-sample":
        t = data[:, 4]
    else:
        t = float(fields["t"])
    seed = None if fields["seed"] == "None" else int(fields["seed"])
    return PairedDataset(x=x, y=y, t=t, permutation=perm, t_mode=t_mode, seed=seed)
