"""Graph layers and symmetric normalized Laplacian operators.

A layer wraps a symmetric nonnegative weight matrix W with zero diagonal,
its precomputed degree vector d_i = sum_j W_ij and an optional diagonal
shift delta. The only operation downstream solvers need is the matvec

    L_{sym,delta} v = (1 + delta) v - D^{-1/2} W D^{-1/2} v,

whose spectrum lies in [delta, 2 + delta] with D^{1/2} 1 in the kernel of
the unshifted part. Weights come in three flavors: dense arrays, scipy
sparse matrices, and kernel weights defined implicitly by a point cloud
(evaluated either exactly or through a fastsum plan).
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import fastsum
from .errors import ConfigError, FormatError, NumericalError
from .kernels import KernelSpec

_SYM_TOL = 1e-12


class DenseWeights:
    """Explicitly stored weight matrix."""

    def __init__(self, W):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ConfigError(f"weight matrix must be square, got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ConfigError("weight matrix contains non-finite entries")
        scale = max(1.0, np.abs(W).max(initial=0.0))
        if np.abs(W - W.T).max(initial=0.0) > _SYM_TOL * scale:
            raise ConfigError("weight matrix is not symmetric")
        if W.min(initial=0.0) < 0:
            raise ConfigError("weight matrix has negative entries")
        if np.abs(np.diag(W)).max(initial=0.0) > 0:
            raise ConfigError("weight matrix must have a zero diagonal")
        self.W = W
        self.n = W.shape[0]

    def matvec(self, v):
        return self.W @ v

    def materialize(self):
        return self.W.copy()


class SparseWeights:
    """Sparse weight matrix (CSR)."""

    def __init__(self, W):
        W = sp.csr_array(W, dtype=float)
        if W.shape[0] != W.shape[1]:
            raise ConfigError(f"weight matrix must be square, got {W.shape}")
        if W.nnz and not np.all(np.isfinite(W.data)):
            raise ConfigError("weight matrix contains non-finite entries")
        scale = max(1.0, np.abs(W.data).max(initial=0.0) if W.nnz else 0.0)
        asym = W - W.T
        if asym.nnz and np.abs(asym.data).max() > _SYM_TOL * scale:
            raise ConfigError("weight matrix is not symmetric")
        if W.nnz and W.data.min() < 0:
            raise ConfigError("weight matrix has negative entries")
        if np.abs(W.diagonal()).max(initial=0.0) > 0:
            raise ConfigError("weight matrix must have a zero diagonal")
        self.W = W
        self.n = W.shape[0]

    def matvec(self, v):
        return self.W @ v

    def materialize(self):
        return self.W.toarray()


class KernelWeights:
    """Weights W_ij = K(x_i - x_j) defined by a point cloud, zero diagonal.

    With a fastsum plan the matvec costs O(n); without one it falls back to
    exact blockwise summation. An optional component index vector restricts
    the kernel to within-component pairs (entries across components are 0),
    used e.g. for spatial coordinates of several concatenated images.
    """

    def __init__(self, points, kernel, plan=None, components=None):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2:
            raise ConfigError(f"points must be a 2-d array, got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ConfigError("points contain non-finite values")
        self.points = points
        self.kernel = kernel
        self.plan = plan
        self.n = points.shape[0]
        if components is None:
            self._blocks = [np.arange(self.n)]
        else:
            components = np.asarray(components)
            if components.shape != (self.n,):
                raise ConfigError("components must be one label per point")
            self._blocks = [
                np.flatnonzero(components == c) for c in np.unique(components)
            ]
        if plan is not None:
            if plan.d != points.shape[1]:
                raise ConfigError(
                    f"plan dimension {plan.d} does not match points ({points.shape[1]})"
                )
            self._bindings = [
                fastsum.bind_points(plan, points[idx]) for idx in self._blocks
            ]
        else:
            self._bindings = None

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(self.n)
        for b, idx in enumerate(self._blocks):
            if self._bindings is not None:
                out[idx] = fastsum.fastsum_apply(
                    None, v[idx], self.plan, binding=self._bindings[b]
                )
            else:
                out[idx] = fastsum.direct_apply(self.points[idx], v[idx], self.kernel)
        return out

    def materialize(self):
        W = np.zeros((self.n, self.n))
        for idx in self._blocks:
            pts = self.points[idx]
            diff2 = (
                np.sum(pts**2, axis=1)[:, None]
                + np.sum(pts**2, axis=1)[None, :]
                - 2.0 * pts @ pts.T
            )
            np.maximum(diff2, 0.0, out=diff2)
            block = self.kernel.of_sqdist(diff2)
            np.fill_diagonal(block, 0.0)
            W[np.ix_(idx, idx)] = block
        return W


@dataclass(frozen=True)
class Layer:
    """One graph layer: weights, cached degrees, diagonal shift."""

    weights: object
    degrees: np.ndarray
    shift: float = 0.0

    @property
    def n(self):
        return self.weights.n

    @property
    def inv_sqrt_degrees(self):
        isd = self.__dict__.get("_isd")
        if isd is None:
            isd = 1.0 / np.sqrt(self.degrees)
            self.__dict__["_isd"] = isd
        return isd


def build_layer(weights, shift=0.0):
    """Construct a layer, computing degrees with one matvec on ones.

    Isolated nodes make D^{-1/2} undefined and are rejected with the index
    of the first offender.
    """
    if shift < 0:
        raise ConfigError(f"shift must be nonnegative, got {shift}")
    ones = np.ones(weights.n)
    degrees = weights.matvec(ones)
    bad = np.flatnonzero(degrees <= 1e-300)
    if bad.size:
        raise NumericalError(
            f"node {bad[0]} has zero degree; the normalized Laplacian is undefined"
        )
    return Layer(weights=weights, degrees=degrees, shift=float(shift))


def with_shift(layer, shift):
    """Same weights and degrees, different diagonal shift."""
    if shift < 0:
        raise ConfigError(f"shift must be nonnegative, got {shift}")
    return replace(layer, shift=float(shift))


def apply_weight(layer, v):
    return layer.weights.matvec(np.asarray(v, dtype=float))


def apply_sym_laplacian(layer, v):
    """(1 + shift) v - D^{-1/2} W D^{-1/2} v."""
    v = np.asarray(v, dtype=float)
    isd = layer.inv_sqrt_degrees
    return (1.0 + layer.shift) * v - isd * layer.weights.matvec(isd * v)


def materialize_sym_laplacian(layer):
    """Dense L_{sym,delta}; for oracles and the dense eigensolver path."""
    W = layer.weights.materialize()
    isd = layer.inv_sqrt_degrees
    L = -(isd[:, None] * W * isd[None, :])
    L[np.diag_indices_from(L)] += 1.0 + layer.shift
    return L


@dataclass(frozen=True)
class MultilayerGraph:
    """A tuple of layers over one shared node set."""

    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a multilayer graph needs at least one layer")
        sizes = {layer.n for layer in self.layers}
        if len(sizes) != 1:
            raise ConfigError(f"layers disagree on node count: {sorted(sizes)}")

    @property
    def n(self):
        return self.layers[0].n

    @property
    def T(self):
        return len(self.layers)

    def with_shift(self, shift):
        return MultilayerGraph(tuple(with_shift(s, shift) for s in self.layers))

    def subgraph(self, layer_indices):
        return MultilayerGraph(tuple(self.layers[i] for i in layer_indices))


def load_edge_list(path, n=None):
    """Read a whitespace-separated edge list into sparse weights.

    Lines are `i j w` with 0-based node ids; `#` starts a comment. Entries
    given in both orientations are symmetrized by the maximum.
    """
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(
                    f"{path}:{lineno}: expected 'i j w', got {raw.strip()!r}"
                )
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if i < 0 or j < 0:
                raise FormatError(f"{path}:{lineno}: node ids must be >= 0")
            if not np.isfinite(w) or w < 0:
                raise FormatError(f"{path}:{lineno}: weight must be finite and >= 0")
            if i == j:
                continue  # self loops carry no weight in this model
            rows.append(i)
            cols.append(j)
            vals.append(w)
    if n is None:
        if not rows:
            raise FormatError(f"{path}: empty edge list and no node count given")
        n = max(max(rows), max(cols)) + 1
    elif rows and max(max(rows), max(cols)) >= n:
        raise FormatError(f"{path}: node id exceeds declared node count {n}")
    W = sp.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
    W = W.maximum(W.T)
    return SparseWeights(W)
