"""Point-cloud container, delimited-text I/O, synthetic manifolds and the
expression-matrix preprocessing ladder (HVG selection, CPM, log1p)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class MatrixFormatError(ValueError):
    """Raised when a delimited text matrix cannot be parsed."""


@dataclass
class PointCloud:
    """An N x m matrix of finite reals with unique row and column labels."""

    points: np.ndarray
    column_names: list[str] = field(default=None)
    row_ids: list[str] = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a non-empty 2D matrix, got shape {pts.shape}")
        bad = np.argwhere(~np.isfinite(pts))
        if len(bad):
            r, c = bad[0]
            raise ValueError(f"non-finite value {pts[r, c]!r} at row {r}, column {c}")
        self.points = pts
        n, m = pts.shape
        if self.column_names is None:
            self.column_names = [f"x{j}" for j in range(m)]
        if self.row_ids is None:
            self.row_ids = [str(i) for i in range(n)]
        self.column_names = [str(c) for c in self.column_names]
        self.row_ids = [str(r) for r in self.row_ids]
        if len(self.column_names) != m:
            raise ValueError(f"{len(self.column_names)} column names for {m} columns")
        if len(self.row_ids) != n:
            raise ValueError(f"{len(self.row_ids)} row ids for {n} rows")
        if len(set(self.column_names)) != m:
            raise ValueError("column names must be unique")
        if len(set(self.row_ids)) != n:
            raise ValueError("row ids must be unique")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def subset_columns(self, idx) -> "PointCloud":
        idx = np.asarray(idx, dtype=int)
        return PointCloud(self.points[:, idx], [self.column_names[j] for j in idx], list(self.row_ids))

    def with_points(self, points) -> "PointCloud":
        """Same labels, new values (shape must match)."""
        return PointCloud(points, list(self.column_names), list(self.row_ids))


def as_array(data) -> np.ndarray:
    """Accept a PointCloud or anything array-like; return a float 2D array."""
    if isinstance(data, PointCloud):
        return data.points
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


# ---------------------------------------------------------------------------
# delimited text I/O


def _sniff_delimiter(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    if ";" in line:
        return ";"
    return ","


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_matrix(path, delimiter: str | None = None) -> PointCloud:
    """Read a comma- or tab-separated numeric matrix.

    The first row is taken as a header when any of its cells is non-numeric.
    Errors name the offending (1-based) file line and column.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MatrixFormatError(f"{path}: empty file")
    delim = delimiter or _sniff_delimiter(lines[0])
    rows = list(csv.reader(lines, delimiter=delim))

    header = None
    first = [c.strip() for c in rows[0]]
    if not all(_is_number(c) for c in first):
        header = first
        rows = rows[1:]
        line_offset = 2
    else:
        line_offset = 1
    if not rows:
        raise MatrixFormatError(f"{path}: no data rows")

    width = len(header) if header is not None else len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise MatrixFormatError(
                f"{path}: line {i + line_offset} has {len(row)} columns, expected {width}"
            )
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise MatrixFormatError(
                    f"{path}: cannot parse {cell!r} at line {i + line_offset}, column {j + 1}"
                ) from None
            if not np.isfinite(v):
                raise MatrixFormatError(
                    f"{path}: non-finite value {cell!r} at line {i + line_offset}, column {j + 1}"
                )
            values[i, j] = v
    return PointCloud(values, header)


def save_matrix(pc: PointCloud, path, delimiter: str = ",", extra_columns: dict | None = None):
    """Write a header row plus one line per point. Floats use repr, which
    round-trips exactly through load_matrix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra_columns = extra_columns or {}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(list(pc.column_names) + list(extra_columns))
        extras = [list(v) for v in extra_columns.values()]
        for i, row in enumerate(pc.points):
            w.writerow([repr(float(v)) for v in row] + [col[i] for col in extras])


# ---------------------------------------------------------------------------
# generators


def s_curve_point(t, height):
    """Map latent (t, height) onto the S-curve in R^3."""
    t = np.asarray(t, dtype=float)
    height = np.asarray(height, dtype=float)
    return np.stack([np.sin(t), height, np.sign(t) * (np.cos(t) - 1.0)], axis=-1)


def gen_s_curve(n_points: int, seed: int = 0) -> tuple[PointCloud, PointCloud]:
    """Sample the S-curve; returns (3D cloud, 2D latent (t, height)).

    t ~ U[-3pi/2, 3pi/2], height ~ U[0, 2]. Row i of the latent generates row i
    of the cloud.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(-1.5 * np.pi, 1.5 * np.pi, n_points)
    height = rng.uniform(0.0, 2.0, n_points)
    cloud = PointCloud(s_curve_point(t, height), ["x", "y", "z"])
    latent = PointCloud(np.column_stack([t, height]), ["t", "height"])
    return cloud, latent


def swiss_roll_point(t, height):
    t = np.asarray(t, dtype=float)
    height = np.asarray(height, dtype=float)
    return np.stack([t * np.cos(t), height, t * np.sin(t)], axis=-1)


def gen_swiss_roll(n_points: int, seed: int = 0, return_latent: bool = False):
    """Swiss roll with t ~ U[1.5pi, 4.5pi] and height ~ U[0, 21]."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, n_points)
    height = rng.uniform(0.0, 21.0, n_points)
    cloud = PointCloud(swiss_roll_point(t, height), ["x", "y", "z"])
    if return_latent:
        return cloud, PointCloud(np.column_stack([t, height]), ["t", "height"])
    return cloud


def _unit_sphere(rng: np.random.Generator, n_points: int, dim: int) -> np.ndarray:
    """n_points uniform on the unit sphere in R^dim (normalized Gaussians)."""
    x = rng.standard_normal((n_points, dim))
    norms = np.linalg.norm(x, axis=1)
    while np.any(norms == 0.0):
        zero = norms == 0.0
        x[zero] = rng.standard_normal((int(zero.sum()), dim))
        norms = np.linalg.norm(x, axis=1)
    return x / norms[:, None]


def sample_hypersphere(intrinsic_dim: int, ambient_dim: int | None = None,
                       n_points: int = 5000, seed: int = 0) -> PointCloud:
    """Uniform sample of S^d (living in R^{d+1}), zero-padded to ambient_dim."""
    if intrinsic_dim < 0:
        raise ValueError("intrinsic_dim must be >= 0")
    if ambient_dim is None:
        ambient_dim = intrinsic_dim + 1
    if ambient_dim < intrinsic_dim + 1:
        raise ValueError(f"ambient_dim {ambient_dim} < intrinsic_dim + 1 = {intrinsic_dim + 1}")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    pts = np.zeros((n_points, ambient_dim))
    pts[:, : intrinsic_dim + 1] = _unit_sphere(rng, n_points, intrinsic_dim + 1)
    return PointCloud(pts)


def gen_sphere_circle_union(n_sphere: int = 1000, n_circle: int = 1000, offset: float = 5.0,
                            seed: int = 0) -> tuple[PointCloud, np.ndarray]:
    """Unit 2-sphere at the origin plus a unit circle in the z=0 plane centred
    at (offset, 0, 0). Returns the cloud and a label array (0 sphere, 1 circle)."""
    if offset <= 2:
        raise ValueError("offset must exceed 2 so the sphere and circle are disjoint")
    rng = np.random.default_rng(seed)
    sphere = _unit_sphere(rng, n_sphere, 3)
    theta = rng.uniform(0.0, 2 * np.pi, n_circle)
    circle = np.column_stack([offset + np.cos(theta), np.sin(theta), np.zeros(n_circle)])
    labels = np.repeat([0, 1], [n_sphere, n_circle])
    row_ids = [f"sphere{i}" for i in range(n_sphere)] + [f"circle{i}" for i in range(n_circle)]
    return PointCloud(np.vstack([sphere, circle]), ["x", "y", "z"], row_ids), labels


def gen_plane_union(dims: Sequence[int] = (3, 7), n_per_patch: int = 1000, ambient_dim: int = 20,
                    separation: float = 100.0, seed: int = 0) -> tuple[PointCloud, np.ndarray]:
    """Disjoint flat patches of different dimension in one ambient space.

    Patch j is a uniform cube [0, 1]^dims[j] placed in a random orthonormal
    frame and translated by j * separation along the first axis.
    """
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for j, d in enumerate(dims):
        if d > ambient_dim:
            raise ValueError(f"patch dimension {d} exceeds ambient dimension {ambient_dim}")
        frame, _ = np.linalg.qr(rng.standard_normal((ambient_dim, d)))
        coords = rng.uniform(0.0, 1.0, (n_per_patch, d))
        pts = coords @ frame.T
        pts[:, 0] += j * separation
        blocks.append(pts)
        labels.append(np.full(n_per_patch, j))
    return PointCloud(np.vstack(blocks)), np.concatenate(labels)


# ---------------------------------------------------------------------------
# expression-matrix preprocessing


def select_hvg(pc: PointCloud, n_genes: int) -> PointCloud:
    """Keep the n_genes columns with the largest variance (ties -> lower
    column index), preserving the original column order."""
    m = pc.dim
    if not 1 <= n_genes <= m:
        raise ValueError(f"n_genes must be in [1, {m}], got {n_genes}")
    var = pc.points.var(axis=0)
    # stable sort on -var keeps lower index first among equal variances
    order = np.argsort(-var, kind="stable")[:n_genes]
    return pc.subset_columns(np.sort(order))


def cpm_normalize(pc: PointCloud) -> PointCloud:
    """Scale each row to sum to one million."""
    x = pc.points
    if np.any(x < 0):
        r, c = np.argwhere(x < 0)[0]
        raise ValueError(f"negative count at row {pc.row_ids[r]!r}, column {pc.column_names[c]!r}")
    sums = x.sum(axis=1)
    zero = np.flatnonzero(sums <= 0)
    if len(zero):
        raise ValueError(f"row {pc.row_ids[zero[0]]!r} sums to zero; cannot CPM-normalize")
    return pc.with_points(x / sums[:, None] * 1e6)


def log_transform(pc: PointCloud) -> PointCloud:
    """Entry-wise natural log(1 + x)."""
    x = pc.points
    if np.any(x < 0):
        r, c = np.argwhere(x < 0)[0]
        raise ValueError(f"negative entry at row {pc.row_ids[r]!r}, column {pc.column_names[c]!r}")
    return pc.with_points(np.log1p(x))


def parse_preprocess(spec: str) -> list[tuple[str, int | None]]:
    """Parse a stage list like ``"hvg:2000,cpm,log"``."""
    stages = []
    for raw in spec.split(","):
        raw = raw.strip()
        if not raw:
            continue
        name, _, arg = raw.partition(":")
        name = name.lower()
        if name == "hvg":
            if not arg:
                raise ValueError("hvg stage needs a gene count, e.g. hvg:2000")
            stages.append(("hvg", int(arg)))
        elif name in ("cpm", "log"):
            if arg:
                raise ValueError(f"stage {name!r} takes no argument")
            stages.append((name, None))
        else:
            raise ValueError(f"unknown preprocessing stage {name!r}")
    return stages


def preprocess(pc: PointCloud, stages) -> PointCloud:
    """Apply stages in the given order."""
    if isinstance(stages, str):
        stages = parse_preprocess(stages)
    for name, arg in stages:
        if name == "hvg":
            pc = select_hvg(pc, min(arg, pc.dim))
        elif name == "cpm":
            pc = cpm_normalize(pc)
        elif name == "log":
            pc = log_transform(pc)
    return pc
