"""Data ingestion and synthesis.

Turns raw inputs into multilayer graphs: feature-column grouping with
per-group kernels and box scaling, image-to-feature conversion, stochastic
block model generation, label sampling, and the CSV / PNG formats used by
the command line front end.
"""

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import fastsum
from .allencahn import LabelData
from .errors import ConfigError, FormatError, NumericalError
from .graphs import DenseWeights, KernelWeights, Layer, MultilayerGraph, build_layer
from .kernels import KernelSpec

log = logging.getLogger(__name__)

SCALING_MODES = ("fastsum-box", "unit-box", "none")


# ---------------------------------------------------------------------------
# feature grouping


@dataclass(frozen=True)
class GroupSpec:
    """One graph layer: a column subset, a kernel, and a scaling mode.

    The meaning of kernel.sigma depends on the mode. With "fastsum-box" and
    "none" it is in the original units of the selected columns; with
    "unit-box" it refers to coordinates centered and isotropically scaled to
    [-1, 1] (so published bandwidths quoted for that convention apply
    verbatim).

    `per_component` restricts the kernel to same-component node pairs (used
    for the spatial layer of concatenated images, whose similarity graph
    must stay block diagonal).
    """

    columns: tuple
    kernel: KernelSpec
    mode: str = "fastsum-box"
    per_component: bool = False

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        if len(self.columns) == 0:
            raise ConfigError("feature group must select at least one column")
        if len(set(self.columns)) != len(self.columns):
            raise ConfigError(f"duplicate column in group {self.columns}")
        if self.mode not in SCALING_MODES:
            raise ConfigError(f"unknown scaling mode {self.mode!r}, expected one of {SCALING_MODES}")
        if self.mode == "fastsum-box" and len(self.columns) > 3:
            raise ConfigError(
                f"group of width {len(self.columns)} cannot use mode 'fastsum-box' (limit 3); "
                "use 'unit-box' or 'none'"
            )


@dataclass(frozen=True)
class GroupingSpec:
    groups: tuple

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise ConfigError("grouping needs at least one group")
        seen = set()
        for g in self.groups:
            overlap = seen.intersection(g.columns)
            if overlap:
                raise ConfigError(f"column(s) {sorted(overlap)} appear in more than one group")
            seen.update(g.columns)

    @property
    def used_columns(self):
        return sorted(c for g in self.groups for c in g.columns)


@dataclass(frozen=True)
class ScalingInfo:
    """Affine map applied to a column group: x_box = (x - midpoints) / factor.

    `factor` converts original units to box units, so a bandwidth given in
    original units becomes sigma / factor after scaling.
    """

    midpoints: np.ndarray
    factor: float
    mode: str


def scale_for_fastsum(X, eps_b=fastsum.DEFAULT_EPS_B):
    """Center columns at their midpoints and scale isotropically into the
    fastsum box [-(1/4 - eps_b/2), 1/4 - eps_b/2]^d.

    One common factor per group keeps relative distances (and therefore the
    kernel matrix, once sigma is divided by the same factor) unchanged. A
    constant column maps to zero; an all-constant group uses factor 1.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigError("expected a 2-d feature block")
    if not np.all(np.isfinite(X)):
        raise FormatError("non-finite feature values")
    s = fastsum.box_halfwidth(eps_b)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = float(np.max(hi - lo)) / 2.0
    if half == 0.0:
        return np.zeros_like(X), ScalingInfo(midpoints=mid, factor=1.0, mode="fastsum-box")
    # clip absorbs the one-ulp overshoot of (x - mid) / half at the extremes;
    # the final product with a dyadic s then cannot leave the box
    unit = np.clip((X - mid) / half, -1.0, 1.0)
    return unit * s, ScalingInfo(midpoints=mid, factor=half / s, mode="fastsum-box")


def _scaled_group(Xg, g, eps_b):
    """Box coordinates and box-unit kernel for one scaled group."""
    Xb, info = scale_for_fastsum(Xg, eps_b)
    if g.mode == "fastsum-box":
        sigma_box = g.kernel.sigma / info.factor
    else:  # unit-box: user sigma refers to [-1,1] coordinates, box = that * s
        sigma_box = g.kernel.sigma * fastsum.box_halfwidth(eps_b)
    return Xb, KernelSpec(family=g.kernel.family, sigma=sigma_box), info


def feature_group(X, spec, components=None, fastsum_params=None):
    """Build one graph layer per column group.

    Groups in "fastsum-box" or "unit-box" mode get box-scaled coordinates;
    a fast summation plan is attached when the group has at most 3 columns
    (wider scaled groups and mode "none" evaluate the kernel directly).
    Columns not claimed by any group are dropped with a log message.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigError("feature matrix must be 2-d")
    n, d = X.shape
    for g in spec.groups:
        bad = [c for c in g.columns if c < 0 or c >= d]
        if bad:
            raise ConfigError(f"column index {bad[0]} out of range for {d} feature columns")
    unused = sorted(set(range(d)) - set(spec.used_columns))
    if unused:
        log.info("dropping %d unused feature column(s): %s", len(unused), unused)
    params = dict(fastsum_params or {})
    eps_b = params.get("eps_b", fastsum.DEFAULT_EPS_B)
    layers = []
    for g in spec.groups:
        Xg = X[:, list(g.columns)]
        comp = components if g.per_component else None
        if g.mode == "none":
            weights = KernelWeights(Xg, g.kernel, plan=None, components=comp)
        else:
            Xb, kern_box, _ = _scaled_group(Xg, g, eps_b)
            plan = None
            if len(g.columns) <= 3:
                plan = fastsum.build_plan(kern_box, d=len(g.columns), **params)
            weights = KernelWeights(Xb, kern_box, plan=plan, components=comp)
        layers.append(build_layer(weights))
    return MultilayerGraph(tuple(layers))


# ---------------------------------------------------------------------------
# stochastic block model


@dataclass(frozen=True)
class SbmLayerSpec:
    """Edge probabilities for one layer.

    `partition` assigns each class to a block; classes sharing a block are
    indistinguishable on this layer. A noisy layer is p_in == p_out.
    """

    p_in: float
    p_out: float
    partition: tuple

    def __post_init__(self):
        object.__setattr__(self, "partition", tuple(int(b) for b in self.partition))
        for name, p in (("p_in", self.p_in), ("p_out", self.p_out)):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} = {p} outside [0, 1]")


@dataclass(frozen=True)
class SbmSpec:
    sizes: tuple
    layers: tuple
    max_retries: int = 50

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "layers", tuple(self.layers))
        if any(s < 1 for s in self.sizes):
            raise ConfigError("class sizes must be >= 1")
        if not self.layers:
            raise ConfigError("need at least one layer")
        m = len(self.sizes)
        for t, layer in enumerate(self.layers):
            if len(layer.partition) != m:
                raise ConfigError(
                    f"layer {t} partition covers {len(layer.partition)} classes, expected {m}"
                )

    @property
    def n(self):
        return sum(self.sizes)


def sbm_generate(spec, seed):
    """Sample a multilayer stochastic block model.

    Returns (graph, truth) with truth the 0-based class per node. Each layer
    draws independent Bernoulli edges over unordered pairs: probability p_in
    when both endpoints' classes share a block under that layer's partition,
    p_out otherwise. Layers with an isolated node are redrawn (bounded).
    """
    rng = np.random.default_rng(seed)
    truth = np.repeat(np.arange(len(spec.sizes)), spec.sizes)
    n = spec.n
    iu = np.triu_indices(n, k=1)
    layers = []
    for t, lspec in enumerate(spec.layers):
        blocks = np.asarray(lspec.partition)[truth]
        same = blocks[iu[0]] == blocks[iu[1]]
        prob = np.where(same, lspec.p_in, lspec.p_out)
        for attempt in range(spec.max_retries + 1):
            edges = rng.random(iu[0].shape[0]) < prob
            W = np.zeros((n, n))
            W[iu] = edges
            W += W.T
            if W.sum(axis=1).min() > 0:
                break
            log.info("layer %d draw %d produced an isolated node, redrawing", t, attempt + 1)
        else:
            raise NumericalError(
                f"layer {t}: isolated node in {spec.max_retries + 1} consecutive draws; "
                "edge probabilities too small for this size"
            )
        layers.append(build_layer(DenseWeights(W)))
    return MultilayerGraph(tuple(layers)), truth


def noisy_pair_sbm(n_cluster=50, p_in=0.7, p_out=0.3, p_noise=0.5):
    """Two classes, two layers: one assortative layer plus one layer whose
    in/out probabilities coincide and therefore carries no class signal."""
    return SbmSpec(
        sizes=(n_cluster, n_cluster),
        layers=(
            SbmLayerSpec(p_in=p_in, p_out=p_out, partition=(0, 1)),
            SbmLayerSpec(p_in=p_noise, p_out=p_noise, partition=(0, 1)),
        ),
    )


def complementary_sbm(n_cluster=50, p_in=0.7, p_out=0.3):
    """Three classes, three layers; layer i separates class i from the other
    two (which share a block there), so no single layer resolves all classes."""
    partitions = ((0, 1, 1), (1, 0, 1), (1, 1, 0))
    return SbmSpec(
        sizes=(n_cluster,) * 3,
        layers=tuple(SbmLayerSpec(p_in=p_in, p_out=p_out, partition=q) for q in partitions),
    )


# ---------------------------------------------------------------------------
# images


@dataclass(frozen=True)
class ImageStack:
    """Row-major pixel features of one or more images.

    rgb is (n, 3) in [0, 255]; xy is (n, 2) as (column, row);
    `components` is the image index per pixel, and `shapes` the (height,
    width) per image for mask reconstruction.
    """

    rgb: np.ndarray
    xy: np.ndarray
    components: np.ndarray
    shapes: tuple

    @property
    def n(self):
        return self.rgb.shape[0]


def image_to_features(images):
    """Vectorize one image or a list of images, pixels in row-major order."""
    if isinstance(images, np.ndarray):
        images = [images]
    if not images:
        raise ConfigError("need at least one image")
    rgb_parts, xy_parts, comp_parts, shapes = [], [], [], []
    for idx, img in enumerate(images):
        img = np.asarray(img)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise FormatError(
                f"image {idx}: expected 8-bit RGB of shape (h, w, 3), got "
                f"{img.dtype} {img.shape}"
            )
        h, w = img.shape[:2]
        rgb_parts.append(img.reshape(h * w, 3).astype(float))
        cols, rows = np.meshgrid(np.arange(w), np.arange(h))
        xy_parts.append(np.column_stack([cols.ravel(), rows.ravel()]).astype(float))
        comp_parts.append(np.full(h * w, idx))
        shapes.append((h, w))
    return ImageStack(
        rgb=np.vstack(rgb_parts),
        xy=np.vstack(xy_parts),
        components=np.concatenate(comp_parts),
        shapes=tuple(shapes),
    )


def masks_from_labels(labels, shapes):
    """Undo the row-major vectorization: one (h, w) int array per image."""
    labels = np.asarray(labels)
    out = []
    start = 0
    for h, w in shapes:
        out.append(labels[start : start + h * w].reshape(h, w))
        start += h * w
    if start != labels.shape[0]:
        raise ConfigError(f"label vector length {labels.shape[0]} does not match shapes {shapes}")
    return out


def load_image(path):
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                raise FormatError(f"{path}: expected an 8-bit RGB image, got mode {img.mode!r}")
            return np.asarray(img, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except FormatError:
        raise
    except Exception as exc:  # Pillow raises various decode errors
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc


def save_image(path, array):
    array = np.asarray(array)
    if array.ndim == 2:
        Image.fromarray(array.astype(np.uint8), mode="L").save(path)
    else:
        Image.fromarray(array.astype(np.uint8), mode="RGB").save(path)


# ---------------------------------------------------------------------------
# label sampling


def sample_labels(truth, fraction, seed, omega0=1000.0):
    """Draw a known-label subset: per class, ceil(fraction * class size)
    nodes uniformly without replacement (at least one per class)."""
    truth = np.asarray(truth)
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"label fraction {fraction} outside (0, 1]")
    m = int(truth.max()) + 1
    if truth.min() < 0:
        raise ConfigError("ground truth must label every node (no negatives)")
    rng = np.random.default_rng(seed)
    ids = np.full(truth.shape[0], -1)
    for c in range(m):
        members = np.flatnonzero(truth == c)
        if members.size == 0:
            raise ConfigError(f"class {c} absent from ground truth")
        count = max(1, math.ceil(fraction * members.size))
        chosen = rng.choice(members, size=count, replace=False)
        ids[chosen] = c
    return LabelData.from_class_ids(ids, m, omega0)


# ---------------------------------------------------------------------------
# CSV formats


def _open_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError:
        raise
    except csv.Error as exc:
        raise FormatError(f"{path}: malformed CSV ({exc})") from exc


def load_features_csv(path):
    """Numeric matrix, comma separated, optional single header line."""
    rows = [r for r in _open_rows(path) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise FormatError(f"{path}: empty feature file")
    start = 0
    try:
        [float(cell) for cell in rows[0]]
    except ValueError:
        start = 1
        if len(rows) == 1:
            raise FormatError(f"{path}: header line but no data rows")
    width = len(rows[start])
    data = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise FormatError(f"{path}:{i}: expected {width} columns, found {len(row)}")
        try:
            data[i - start - 1] = [float(cell) for cell in row]
        except ValueError as exc:
            raise FormatError(f"{path}:{i}: non-numeric value ({exc})") from exc
    return data


def load_labels_csv(path, n=None):
    """Single column of integer class IDs, 1-based, 0 = unlabeled.

    Returns 0-based IDs with -1 for unlabeled nodes, one per line in order.
    """
    rows = [r for r in _open_rows(path) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise FormatError(f"{path}: empty label file")
    start = 0
    try:
        int(rows[0][0])
    except ValueError:
        start = 1
    ids = np.empty(len(rows) - start, dtype=int)
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != 1:
            raise FormatError(f"{path}:{i}: expected a single column, found {len(row)}")
        try:
            value = int(row[0])
        except ValueError as exc:
            raise FormatError(f"{path}:{i}: non-integer class ID ({exc})") from exc
        if value < 0:
            raise FormatError(f"{path}:{i}: class IDs are 1-based with 0 = unlabeled, got {value}")
        ids[i - start - 1] = value - 1
    if n is not None and ids.shape[0] != n:
        raise FormatError(f"{path}: {ids.shape[0]} labels for {n} nodes")
    return ids


def write_predictions_csv(path, predictions):
    """`node_id,class_id` lines; node IDs 0-based, class IDs 1-based."""
    predictions = np.asarray(predictions)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node_id,class_id\n")
        for i, c in enumerate(predictions):
            fh.write(f"{i},{int(c) + 1}\n")


def write_scores_csv(path, scores):
    np.savetxt(path, np.asarray(scores), fmt="%.17g", delimiter=",")


def write_values_csv(path, values):
    np.savetxt(path, np.asarray(values), fmt="%.17g", delimiter=",")
