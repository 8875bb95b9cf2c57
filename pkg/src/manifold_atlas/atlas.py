"""Learned inverse charts and the assembled atlas.

Each chart pairs a PCA projection (ambient -> local coordinates) with a fully
connected tanh network trained to map the local coordinates back onto the
ambient points. All layers but the last apply tanh; the output layer is affine
so standardized targets outside [-1, 1] stay reachable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import ClusterCover, assign_new_point
from .dataset import PointCloud, as_array
from .distortion import DEFAULT_H, ajd
from .embedding import PcaChart, fit_pca, project, reconstruct
from .neighbors import knn

FORMAT_NAME = "manifold-atlas"
FORMAT_VERSION = 1

DEFAULT_HIDDEN_LAYERS = 10
DEFAULT_EPOCHS = 10_000
DEFAULT_BATCH = 32
DEFAULT_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    pass


def default_hidden_width(m: int) -> int:
    return max(64, 2 * m)


# ---------------------------------------------------------------------------
# network


@dataclass
class MlpInverse:
    """tanh MLP from n local coordinates to m ambient coordinates.

    Inputs and outputs pass through per-feature standardization fitted on the
    training data; ``weights[l]`` has shape (fan_in, fan_out).
    """

    weights: list
    biases: list
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    initial_loss: float = float("nan")
    final_loss: float = float("nan")

    def __post_init__(self):
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"layer shapes do not chain: {a.shape} -> {b.shape}")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError(f"bias shape {b.shape} does not match weight {w.shape}")

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_kinds(self) -> list[str]:
        """Activation applied after each affine layer."""
        return ["tanh"] * (len(self.weights) - 1) + ["identity"]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def standardize_input(self, y):
        return (np.asarray(y, dtype=float) - self.in_mean) / self.in_scale

    def standardize_output(self, x):
        return (np.asarray(x, dtype=float) - self.out_mean) / self.out_scale

    def forward_standardized(self, u):
        """Network output in standardized target units."""
        return _forward(self.weights, self.biases, np.asarray(u, dtype=self.dtype))[-1]

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        u = self.standardize_input(np.atleast_2d(y))
        out = self.forward_standardized(u).astype(float) * self.out_scale + self.out_mean
        return out[0] if single else out

    def jacobian(self, y) -> np.ndarray:
        """d output / d input at one point, in original units; shape (m, n)."""
        u = self.standardize_input(np.atleast_2d(y))
        ws = [w.astype(float) for w in self.weights]
        bs = [b.astype(float) for b in self.biases]
        acts = _forward(ws, bs, u)
        jac = np.diag(1.0 / self.in_scale)  # d u / d y
        for layer, w in enumerate(ws):
            jac = w.T @ jac
            if layer < len(ws) - 1:
                jac = (1.0 - acts[layer + 1][0] ** 2)[:, None] * jac
        return self.out_scale[:, None] * jac

    def loss_and_gradients(self, u, target):
        """MSE in standardized units and its gradients w.r.t. every weight and bias."""
        u = np.asarray(u, dtype=self.dtype)
        target = np.asarray(target, dtype=self.dtype)
        acts = _forward(self.weights, self.biases, u)
        err = acts[-1] - target
        loss = float(np.mean(err * err))
        gw = [np.empty_like(w) for w in self.weights]
        gb = [np.empty_like(b) for b in self.biases]
        _backward(self.weights, acts, 2.0 * err / err.size, gw, gb)
        return loss, gw, gb

    def mse(self, y, x) -> float:
        """Mean squared error of predictions for inputs y against targets x, in
        standardized target units."""
        pred = self.forward_standardized(self.standardize_input(y)).astype(float)
        return float(np.mean((pred - self.standardize_output(x)) ** 2))


def _forward(weights, biases, u):
    acts = [u]
    last = len(weights) - 1
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w
        z += b
        acts.append(np.tanh(z, out=z) if layer < last else z)
    return acts


def _backward(weights, acts, delta, gw, gb):
    """Fill gw/gb in place given d loss / d output ``delta``."""
    for layer in range(len(weights) - 1, -1, -1):
        np.matmul(acts[layer].T, delta, out=gw[layer])
        np.sum(delta, axis=0, out=gb[layer])
        if layer:
            a = acts[layer]
            delta = delta @ weights[layer].T
            delta *= 1.0 - a * a


def init_mlp(n: int, m: int, hidden_layers: int = DEFAULT_HIDDEN_LAYERS, hidden_width: int | None = None,
             seed=0, dtype=np.float32) -> MlpInverse:
    """Gaussian weights scaled by 1/sqrt(fan_in), zero biases, identity standardization."""
    if n < 1 or m < 1 or hidden_layers < 0:
        raise ValueError("dimensions must be >= 1 and hidden_layers >= 0")
    width = default_hidden_width(m) if hidden_width is None else hidden_width
    if width < 1:
        raise ValueError("hidden_width must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [n] + [width] * hidden_layers + [m]
    weights = [(rng.standard_normal((a, b)) / np.sqrt(a)).astype(dtype) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b, dtype=dtype) for b in dims[1:]]
    return MlpInverse(weights, biases, np.zeros(n), np.ones(n), np.zeros(m), np.ones(m))


def _scale(a: np.ndarray):
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


class _FlatParams:
    """Weights and biases as views into one contiguous buffer so the Adam
    update is a handful of vector operations."""

    def __init__(self, net: MlpInverse):
        shapes = []
        for w, b in zip(net.weights, net.biases):
            shapes += [w.shape, b.shape]
        sizes = [int(np.prod(s)) for s in shapes]
        self.flat = np.empty(sum(sizes), dtype=net.dtype)
        self.grad = np.zeros_like(self.flat)
        views, gviews, off = [], [], 0
        for shape, size in zip(shapes, sizes):
            views.append(self.flat[off:off + size].reshape(shape))
            gviews.append(self.grad[off:off + size].reshape(shape))
            off += size
        self.weights, self.biases = views[0::2], views[1::2]
        self.gw, self.gb = gviews[0::2], gviews[1::2]
        for dst, src in zip(views, [p for pair in zip(net.weights, net.biases) for p in pair]):
            dst[...] = src


def train_inverse(chart: PcaChart, points, epochs: int = DEFAULT_EPOCHS, batch_size: int = DEFAULT_BATCH,
                  learning_rate: float = DEFAULT_LR, seed=0, hidden_layers: int = DEFAULT_HIDDEN_LAYERS,
                  hidden_width: int | None = None, dtype=np.float32, net: MlpInverse | None = None,
                  embedded=None) -> MlpInverse:
    """Fit a network mapping chart coordinates back onto ``points`` by
    mini-batch Adam on the mean squared error.

    Inputs are the chart projections of ``points`` unless ``embedded`` is
    given. Both sides are standardized per feature first. The returned network
    carries its per-epoch loss history.
    """
    x = as_array(points)
    y = project(chart, x) if embedded is None else np.asarray(embedded, dtype=float)
    if y.shape[0] != x.shape[0]:
        raise ValueError("inputs and targets have different row counts")
    if epochs < 0 or batch_size < 1 or learning_rate <= 0:
        raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")
    rng = np.random.default_rng(seed)
    if net is None:
        net = init_mlp(y.shape[1], x.shape[1], hidden_layers, hidden_width,
                       seed=rng.integers(2**63), dtype=dtype)
    net.in_mean, net.in_scale = _scale(y)
    net.out_mean, net.out_scale = _scale(x)
    u = net.standardize_input(y).astype(net.dtype)
    t = net.standardize_output(x).astype(net.dtype)

    params = _FlatParams(net)
    ws, bs, gw, gb = params.weights, params.biases, params.gw, params.gb
    flat, grad = params.flat, params.grad
    m1 = np.zeros_like(flat)
    m2 = np.zeros_like(flat)
    tmp = np.empty_like(flat)
    initial = float(np.mean((_forward(ws, bs, u)[-1] - t) ** 2))

    n = len(u)
    history = np.empty(epochs)
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            acts = _forward(ws, bs, u[idx])
            err = acts[-1] - t[idx]
            total += float(np.dot(err.ravel(), err.ravel()))
            err *= 2.0 / err.size
            _backward(ws, acts, err, gw, gb)

            step += 1
            m1 *= ADAM_BETA1
            m1 += (1.0 - ADAM_BETA1) * grad
            np.multiply(grad, grad, out=tmp)
            m2 *= ADAM_BETA2
            tmp *= 1.0 - ADAM_BETA2
            m2 += tmp
            # bias-corrected step: lr * m1_hat / (sqrt(m2_hat) + eps)
            np.sqrt(m2, out=tmp)
            tmp *= 1.0 / np.sqrt(1.0 - ADAM_BETA2 ** step)
            tmp += ADAM_EPS
            np.divide(m1, tmp, out=tmp)
            tmp *= learning_rate / (1.0 - ADAM_BETA1 ** step)
            flat -= tmp
        history[epoch] = total / (n * x.shape[1])
        if not np.isfinite(history[epoch]):
            raise TrainingDivergedError(
                f"chart {chart.cluster_id}: loss became {history[epoch]} at epoch {epoch + 1}"
            )

    net.weights = [w.copy() for w in ws]
    net.biases = [b.copy() for b in bs]
    net.loss_history = history
    net.initial_loss = initial
    net.final_loss = net.mse(y, x)
    return net


def kfold_indices(n: int, folds: int, seed=0) -> list[np.ndarray]:
    """Shuffled partition of range(n) into ``folds`` near-equal parts."""
    if not 2 <= folds <= n:
        raise ValueError(f"need 2 <= folds <= {n}, got {folds}")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(order, folds)]


def cross_validate(chart: PcaChart, points, folds: int = 10, seed=0, **train_kwargs) -> list[float]:
    """k-fold held-out MSE (standardized units) of the inverse network."""
    x = as_array(points)
    if len(x) < folds:
        raise ValueError(f"cluster has {len(x)} points, fewer than {folds} folds")
    y = project(chart, x)
    rng = np.random.default_rng(seed)
    parts = kfold_indices(len(x), folds, seed=rng.integers(2**63))
    scores = []
    for held in parts:
        train = np.setdiff1d(np.arange(len(x)), held)
        net = train_inverse(chart, x[train], embedded=y[train], seed=rng.integers(2**63), **train_kwargs)
        scores.append(net.mse(y[held], x[held]))
    return scores


# ---------------------------------------------------------------------------
# atlas


@dataclass
class AtlasChart:
    chart: PcaChart
    inverse: MlpInverse
    members: np.ndarray   # indices of the expanded cluster in the training cloud
    embedded: np.ndarray  # chart coordinates of those members
    raw_size: int         # points k-means assigned to this cluster


@dataclass
class Atlas:
    charts: list
    cover: ClusterCover
    metadata: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.charts)

    @property
    def n(self) -> int:
        return self.charts[0].chart.n

    @property
    def m(self) -> int:
        return self.charts[0].chart.m

    def embed(self, x) -> tuple[int, np.ndarray]:
        """Assign a new ambient point to its nearest centroid and project it."""
        c = assign_new_point(self.cover, x)
        return c, project(self.charts[c].chart, x)


def build_atlas(data, cover: ClusterCover, n: int, seed=0, **train_kwargs) -> Atlas:
    """Fit a PCA chart of dimension n and an inverse network for every expanded cluster."""
    x = as_array(data)
    rng = np.random.default_rng(seed)
    charts = []
    raw = cover.raw_sizes()
    for c, mem in enumerate(cover.expanded_members):
        chart = fit_pca(x[mem], n, cluster_id=c)
        y = project(chart, x[mem])
        net = train_inverse(chart, x[mem], embedded=y, seed=rng.integers(2**63), **train_kwargs)
        charts.append(AtlasChart(chart, net, np.asarray(mem), y, int(raw[c])))
    meta = {
        "epochs": train_kwargs.get("epochs", DEFAULT_EPOCHS),
        "final_loss": [ch.inverse.final_loss for ch in charts],
    }
    return Atlas(charts, cover, meta)


def map_inverse(atlas: Atlas, cluster_id: int, y) -> np.ndarray:
    """Ambient image of chart coordinates y under cluster_id's inverse network."""
    if not 0 <= cluster_id < atlas.k:
        raise KeyError(f"no chart for cluster {cluster_id}")
    return atlas.charts[cluster_id].inverse(y)


def chart_fidelity(atlas_chart: AtlasChart, points, h: int = DEFAULT_H) -> dict:
    """AJD of the network and of the linear PCA inverse against the cluster's
    original points, plus the network's MSE."""
    x = as_array(points)[atlas_chart.members]
    y = atlas_chart.embedded
    net_out = atlas_chart.inverse(y)
    lin_out = reconstruct(atlas_chart.chart, y)
    h = min(h, len(x) - 1)
    return {
        "ajd_network": ajd(x, net_out, h).ajd,
        "ajd_linear": ajd(x, lin_out, h).ajd,
        "ajd_embedding": ajd(x, y, h).ajd,
        "mse": atlas_chart.inverse.mse(y, x),
    }


# ---------------------------------------------------------------------------
# generative sampling


def uniform_ball(n: int, count: int, rng) -> np.ndarray:
    """``count`` points uniform in the unit n-ball."""
    rng = np.random.default_rng(rng)
    direction = rng.standard_normal((count, n))
    norms = np.linalg.norm(direction, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        direction[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(direction, axis=1)
    radius = rng.uniform(0.0, 1.0, count) ** (1.0 / n)
    return direction / norms[:, None] * radius[:, None]


def ball_radii(embedded, r_rank: int) -> np.ndarray:
    """Distance from each embedded point to its r_rank-th nearest neighbour
    (0 for r_rank = 0)."""
    e = as_array(embedded)
    if not 0 <= r_rank <= len(e) - 1:
        raise ValueError(f"r_rank must be in [0, {len(e) - 1}], got {r_rank}")
    if r_rank == 0:
        return np.zeros(len(e))
    return knn(e, r_rank).distances[:, -1]


def sample_ball(embedded, r_rank: int, seed=None, size: int | None = None, radii=None):
    """Pick training points at random and draw uniformly from the ball around
    each whose radius is its r_rank-th nearest-neighbour distance.

    Returns one n-vector, or a (size, n) array when ``size`` is given.
    """
    e = as_array(embedded)
    rng = np.random.default_rng(seed)
    r = ball_radii(e, r_rank) if radii is None else radii
    count = 1 if size is None else size
    centers = rng.integers(len(e), size=count)
    out = e[centers] + uniform_ball(e.shape[1], count, rng) * r[centers, None]
    return out[0] if size is None else out


def generate(atlas: Atlas, n_samples=None, r_rank: int = 1, seed=0) -> tuple[PointCloud, np.ndarray]:
    """Sample every chart's embedding and push the samples through its inverse.

    ``n_samples`` defaults to each cluster's k-means size, so the output
    matches the training cloud in size. Returns the cloud and the source
    cluster of every row.
    """
    rng = np.random.default_rng(seed)
    if n_samples is None:
        counts = [ch.raw_size for ch in atlas.charts]
    elif np.isscalar(n_samples):
        counts = [int(n_samples)] * atlas.k
    else:
        counts = [int(c) for c in n_samples]
    blocks, labels = [], []
    for c, (ch, count) in enumerate(zip(atlas.charts, counts)):
        if count <= 0:
            continue
        y = sample_ball(ch.embedded, r_rank, seed=rng, size=count)
        blocks.append(ch.inverse(y))
        labels.append(np.full(count, c))
    if not blocks:
        raise ValueError("nothing to generate")
    names = atlas.metadata.get("column_names") or [f"x{j}" for j in range(atlas.m)]
    return PointCloud(np.vstack(blocks), names), np.concatenate(labels)


# ---------------------------------------------------------------------------
# serialization


def save_atlas(atlas: Atlas, path) -> Path:
    """Write an uncompressed .npz holding every array plus a JSON header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cov = atlas.cover
    arrays = {
        "cover/assignment": cov.assignment,
        "cover/centroids": cov.centroids,
        "cover/transition_points": cov.transition_points,
        "cover/wcss_history": np.asarray(cov.wcss_history, dtype=float),
    }
    charts_meta = []
    for c, ch in enumerate(atlas.charts):
        p = f"chart{c}/"
        arrays[p + "members"] = cov.expanded_members[c]
        arrays[p + "mean"] = ch.chart.mean
        arrays[p + "basis"] = ch.chart.basis
        arrays[p + "singular_values"] = ch.chart.singular_values
        arrays[p + "embedded"] = ch.embedded
        net = ch.inverse
        for name in ("in_mean", "in_scale", "out_mean", "out_scale", "loss_history"):
            arrays[p + name] = getattr(net, name)
        for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{p}W{layer}"] = w
            arrays[f"{p}b{layer}"] = b
        charts_meta.append({
            "cluster_id": ch.chart.cluster_id,
            "n_layers": len(net.weights),
            "raw_size": ch.raw_size,
            "initial_loss": net.initial_loss,
            "final_loss": net.final_loss,
            "layer_dims": [net.n_in] + [w.shape[1] for w in net.weights],
        })
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "k": atlas.k,
        "n": atlas.n,
        "m": atlas.m,
        "l": cov.l,
        "charts": charts_meta,
        "metadata": atlas.metadata,
    }
    arrays["header"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_atlas(path) -> Atlas:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"atlas file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise ValueError(f"{path}: not a readable atlas file ({exc})") from exc
    if "header" not in data:
        raise ValueError(f"{path}: missing atlas header")
    header = json.loads(data["header"].tobytes().decode())
    if header.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: unexpected format {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported atlas version {header.get('version')}")
    try:
        members = [data[f"chart{c}/members"] for c in range(header["k"])]
        cover = ClusterCover(
            k=header["k"],
            assignment=data["cover/assignment"],
            centroids=data["cover/centroids"],
            expanded_members=members,
            transition_points=data["cover/transition_points"],
            l=header["l"],
            wcss_history=tuple(data["cover/wcss_history"].tolist()),
        )
        charts = []
        for c, meta in enumerate(header["charts"]):
            p = f"chart{c}/"
            chart = PcaChart(meta["cluster_id"], data[p + "mean"], data[p + "basis"], data[p + "singular_values"])
            net = MlpInverse(
                [data[f"{p}W{i}"] for i in range(meta["n_layers"])],
                [data[f"{p}b{i}"] for i in range(meta["n_layers"])],
                data[p + "in_mean"], data[p + "in_scale"], data[p + "out_mean"], data[p + "out_scale"],
                loss_history=data[p + "loss_history"],
                initial_loss=meta["initial_loss"],
                final_loss=meta["final_loss"],
            )
            charts.append(AtlasChart(chart, net, members[c], data[p + "embedded"], meta["raw_size"]))
    except KeyError as exc:
        raise ValueError(f"{path}: atlas file is missing array {exc}") from exc
    return Atlas(charts, cover, header.get("metadata", {}))
