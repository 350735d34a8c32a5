"""Pairwise training data: generation, trajectory pairing, batching and CSV files."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BoxDomain, DataPair, DimensionError, Rng, Trajectory, sample_uniform_box
from .systems import DEFAULT_MAX_STEP, SystemDef, default_substeps, flow_oracle, get_system

FORMAT_TAG = "flowmap-dataset v1"


class DatasetFormatError(ValueError):
    """Malformed dataset file; the message names the offending line and column."""


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")


@dataclass
class GenConfig:
    system: str | SystemDef
    J: int
    Ix: BoxDomain | None = None
    Ialpha: BoxDomain | None = None
    Idelta: BoxDomain = field(default_factory=lambda: BoxDomain([0.0], [0.1]))
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    max_step: float = DEFAULT_MAX_STEP

    def __post_init__(self):
        sys = get_system(self.system)
        self.Ix = self.Ix or sys.default_Ix
        self.Ialpha = self.Ialpha or sys.default_Ialpha
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.Idelta.dim != 1 or self.Idelta.lo[0] < 0:
            raise ValueError("Idelta must be a 1-d interval inside [0, inf)")
        if self.Ix.dim != sys.d or self.Ialpha.dim != sys.l:
            raise DimensionError(f"dimension mismatch: domains do not fit system {sys.id}")


@dataclass
class Dataset:
    """``J`` observation pairs stored column-wise.

    ``x_in``/``x_out`` are ``(J, d)``, ``alpha`` is ``(J, l)``, ``delta`` is ``(J,)``.
    """

    x_in: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    x_out: np.ndarray
    delta_range: BoxDomain | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x_in = np.atleast_2d(np.asarray(self.x_in, dtype=np.float64))
        self.x_out = np.atleast_2d(np.asarray(self.x_out, dtype=np.float64))
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=np.float64))
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=np.float64))
        J = self.delta.shape[0]
        if not (self.x_in.shape[0] == self.x_out.shape[0] == self.alpha.shape[0] == J):
            raise DimensionError("dataset columns disagree on the number of pairs")
        if self.x_in.shape != self.x_out.shape:
            raise DimensionError("dimension mismatch: x_in and x_out differ in d")
        if self.delta_range is None and J:
            self.delta_range = BoxDomain([self.delta.min()], [self.delta.max()])

    @property
    def J(self) -> int:
        return int(self.delta.shape[0])

    @property
    def d(self) -> int:
        return int(self.x_in.shape[1])

    @property
    def l(self) -> int:
        return int(self.alpha.shape[1])

    def __len__(self):
        return self.J

    def inputs(self) -> np.ndarray:
        """Network input rows ``[x_in, alpha, delta]``."""
        return np.hstack([self.x_in, self.alpha, self.delta[:, None]])

    def pair(self, j: int) -> DataPair:
        return DataPair(self.x_in[j], self.alpha[j], self.delta[j], self.x_out[j])

    @property
    def pairs(self) -> list[DataPair]:
        return [self.pair(j) for j in range(self.J)]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x_in[idx], self.alpha[idx], self.delta[idx], self.x_out[idx],
                       self.delta_range, dict(self.meta))

    @classmethod
    def from_pairs(cls, pairs: Sequence[DataPair], meta: dict | None = None) -> "Dataset":
        if not pairs:
            raise ValueError("empty dataset")
        return cls(
            np.array([p.x_in for p in pairs]),
            np.array([p.alpha for p in pairs]),
            np.array([p.delta for p in pairs]),
            np.array([p.x_out for p in pairs]),
            meta=dict(meta or {}),
        )

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], meta: dict | None = None) -> "Dataset":
        pairs = [p for tr in trajs for p in pairs_from_trajectory(tr)]
        return cls.from_pairs(pairs, meta)


def generate_pairs(cfg: GenConfig) -> Dataset:
    """Sample ``(delta, x0, alpha)`` uniformly and pair ``x0`` with its image under the flow.

    Independent Gaussian noise of std ``cfg.noise.sigma`` is added to both
    observed states.
    """
    sys = get_system(cfg.system)
    rng = Rng(cfg.seed).substream("data")
    delta = sample_uniform_box(cfg.Idelta, rng.substream("delta"), cfg.J)[:, 0]
    x0 = sample_uniform_box(cfg.Ix, rng.substream("state"), cfg.J)
    alpha = sample_uniform_box(cfg.Ialpha, rng.substream("param"), cfg.J)
    x1 = flow_oracle(sys, x0, alpha, delta, default_substeps(delta, cfg.max_step))
    sigma = cfg.noise.sigma
    if sigma > 0:
        noise = Rng(cfg.seed).substream("noise")
        x_in = x0 + noise.normal(0.0, sigma, x0.shape)
        x_out = x1 + noise.normal(0.0, sigma, x1.shape)
    else:
        x_in, x_out = x0, x1
    meta = {"system": sys.id, "seed": int(cfg.seed), "sigma": float(sigma)}
    return Dataset(x_in, alpha, delta, x_out, cfg.Idelta, meta)


def pairs_from_trajectory(traj: Trajectory) -> list[DataPair]:
    """Adjacent-instant pairs of one trajectory; only time differences are kept."""
    dt = np.diff(traj.times)
    return [
        DataPair(traj.states[k], traj.alpha, dt[k], traj.states[k + 1])
        for k in range(len(traj) - 1)
    ]


def minibatches(ds: Dataset | int, batch_size: int, rng: Rng) -> list[np.ndarray]:
    """Shuffle ``0..J-1`` and cut it into batches; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    J = ds if isinstance(ds, int) else ds.J
    perm = rng.permutation(J)
    return [perm[i : i + batch_size] for i in range(0, J, batch_size)]


def sizing_rule(n_params: int, factor: int = 20) -> int:
    """Number of training pairs: ``factor`` times the trainable parameter count."""
    return factor * int(n_params)


def _header(ds: Dataset) -> list[str]:
    cols = ["delta"]
    cols += [f"x_in_{i + 1}" for i in range(ds.d)]
    cols += [f"alpha_{i + 1}" for i in range(ds.l)]
    cols += [f"x_out_{i + 1}" for i in range(ds.d)]
    return cols


def write_dataset(ds: Dataset, path: str | os.PathLike) -> None:
    """Write ``ds`` as CSV with a ``#`` metadata preamble and 17-digit floats."""
    meta = ds.meta
    lo, hi = (ds.delta_range.lo[0], ds.delta_range.hi[0]) if ds.delta_range else (0.0, 0.0)
    buf = io.StringIO()
    buf.write(f"# {FORMAT_TAG}\n")
    buf.write(f"# d={ds.d}\n# l={ds.l}\n")
    buf.write(f"# system={meta.get('system', '')}\n")
    buf.write(f"# seed={meta.get('seed', '')}\n")
    buf.write(f"# sigma={float(meta.get('sigma', 0.0)):.17g}\n")
    buf.write(f"# delta_range={lo:.17g},{hi:.17g}\n")
    buf.write(",".join(_header(ds)) + "\n")
    table = np.hstack([ds.delta[:, None], ds.x_in, ds.alpha, ds.x_out])
    np.savetxt(buf, table, fmt="%.17g", delimiter=",")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def read_dataset(path: str | os.PathLike) -> Dataset:
    """Parse a file written by :func:`write_dataset`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta: dict = {}
    lineno = 0
    header = None
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        if line.strip():
            header = line
            break
    if header is None:
        raise DatasetFormatError(f"line {lineno + 1}, column 1: missing header row")
    try:
        d, l = int(meta["d"]), int(meta["l"])
    except (KeyError, ValueError):
        raise DatasetFormatError("line 1, column 1: metadata must declare integer d and l") from None
    cols = [c.strip() for c in header.split(",")]
    expected = ["delta"] + [f"x_in_{i + 1}" for i in range(d)] + [f"alpha_{i + 1}" for i in range(l)] + [f"x_out_{i + 1}" for i in range(d)]
    if cols != expected:
        raise DatasetFormatError(
            f"line {lineno}, column 1: dimension mismatch: header has {len(cols)} columns "
            f"{cols}, metadata d={d}, l={l} implies {expected}"
        )
    width = len(expected)
    rows = []
    for k, line in enumerate(lines[lineno:], start=lineno + 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != width:
            raise DatasetFormatError(f"line {k}, column {min(len(fields), width) + 1}: expected {width} fields, found {len(fields)}")
        row = []
        col = 1
        for f in fields:
            try:
                row.append(float(f))
            except ValueError:
                raise DatasetFormatError(f"line {k}, column {col}: cannot parse {f!r} as a number") from None
            col += len(f) + 1
        rows.append(row)
    if not rows:
        raise DatasetFormatError(f"line {lineno + 1}, column 1: empty dataset")
    table = np.array(rows)
    out_meta = {
        "system": meta.get("system", ""),
        "seed": int(meta["seed"]) if meta.get("seed", "").lstrip("-").isdigit() else meta.get("seed", ""),
        "sigma": float(meta.get("sigma", 0.0)),
    }
    drange = None
    if "delta_range" in meta:
        lo, hi = (float(v) for v in meta["delta_range"].split(","))
        drange = BoxDomain([lo], [hi])
    return Dataset(
        table[:, 1 : 1 + d],
        table[:, 1 + d : 1 + d + l],
        table[:, 0],
        table[:, 1 + d + l :],
        drange,
        out_meta,
    )
