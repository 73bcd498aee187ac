"""Power means of layer Laplacians and their extremal eigenpairs.

For a multilayer graph with layer Laplacians L^(t) = L_sym^(t) + delta I,
the matrix power mean is

    M_p = ((1/T) sum_t (L^(t))^p)^(1/p),

where matrix powers act on eigenvalues. Only the action of M_p^p on a
vector is ever formed; the smallest eigenpairs of M_p are read off the
largest eigenpairs of M_p^p (p < 0, the map mu -> mu^{1/p} reverses the
order) or of I - M_1 (p = 1). Positive powers other than 1 fall back to a
dense assembly, which is intentionally limited to small graphs.

The default shift follows delta = log(1 + |p|) for p < 0 and 0 otherwise.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .graphs import MultilayerGraph, materialize_sym_laplacian
from .krylov import SymmetricOperator, lanczos_largest_eigs, pksm_apply


def default_shift(p):
    return math.log1p(abs(p)) if p < 0 else 0.0


@dataclass(frozen=True)
class PowerMeanConfig:
    """Power p, diagonal shift delta (None = default rule), dense-path cap."""

    p: float
    delta: float | None = None
    dense_limit: int = 5000

    def __post_init__(self):
        if self.p == 0:
            raise ConfigError("p = 0 (geometric mean) is not supported")
        if self.delta is not None and self.delta < 0:
            raise ConfigError(f"delta must be nonnegative, got {self.delta}")
        if self.dense_limit < 1:
            raise ConfigError("dense_limit must be positive")

    @property
    def resolved_delta(self):
        return default_shift(self.p) if self.delta is None else self.delta


@dataclass(frozen=True)
class SpectralBasis:
    """The k smallest eigenpairs of M_p: values ascending, vectors n x k."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def k(self):
        return self.values.shape[0]


def apply_one_minus_L1(graph, v):
    """(I - M_1) v = (1/T) sum_t D_t^{-1/2} W_t D_t^{-1/2} v.

    Layers must be unshifted; the p = 1 eigensolver path works on the
    plain arithmetic mean.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    for layer in graph.layers:
        if layer.shift != 0.0:
            raise ConfigError("apply_one_minus_L1 expects unshifted layers")
        isd = layer.inv_sqrt_degrees
        out += isd * layer.weights.matvec(isd * v)
    return out / graph.T


def apply_Lp_power(graph, config, v, krylov_dim=50, tol=1e-8):
    """M_p^p v = (1/T) sum_t (L_sym^(t) + delta I)^p v, layers in order.

    Each layer power action runs through the Lanczos matrix-function
    method; layer shifts must match the configured delta.
    """
    v = np.asarray(v, dtype=float)
    delta = config.resolved_delta
    out = np.zeros_like(v)
    for t, layer in enumerate(graph.layers):
        if abs(layer.shift - delta) > 1e-14 * max(1.0, delta):
            raise ConfigError(
                f"layer {t} carries shift {layer.shift}, config wants {delta}"
            )
        out += pksm_apply(layer, config.p, v, krylov_dim=krylov_dim, tol=tol)
    return out / graph.T


def power_mean_dense(graph, config):
    """Dense M_p, assembled from full layer eigendecompositions.

    The dense fallback for positive powers other than 1, also handy as a
    reference at small n. Cost is O(T n^3); guarded by config.dense_limit.
    """
    n = graph.n
    if n > config.dense_limit:
        raise ConfigError(
            f"dense power mean needs n <= dense_limit ({config.dense_limit}), "
            f"got n = {n}; use p = 1 or p < 0 for the matrix-free paths"
        )
    delta = config.resolved_delta
    p = config.p
    mean = np.zeros((n, n))
    for layer in graph.layers:
        L = materialize_sym_laplacian(layer)
        L[np.diag_indices_from(L)] += delta - layer.shift
        lam, Q = np.linalg.eigh(L)
        if lam.min() < -1e-10:
            raise NumericalError(f"layer spectrum not PSD: {lam.min():.3e}")
        lam = np.maximum(lam, 0.0)
        if p < 0 and lam.min() <= 0.0:
            raise NumericalError("negative power needs a positive shift delta")
        mean += (Q * lam**p) @ Q.T
    mean /= graph.T
    mean = 0.5 * (mean + mean.T)
    mu, Q = np.linalg.eigh(mean)
    mu = np.maximum(mu, 0.0)
    return (Q * mu ** (1.0 / p)) @ Q.T


def power_mean_eigs(
    graph,
    config,
    k,
    tol=1e-8,
    max_subspace=None,
    max_restarts=60,
    krylov_dim=50,
    inner_tol=None,
    seed=0,
):
    """The k smallest eigenpairs of M_p as a SpectralBasis.

    p = 1: Lanczos on I - M_1, eigenvalues mapped back as 1 - mu.
    p < 0: Lanczos on M_p^p (layer powers via the Krylov matrix-function
           method with dimension krylov_dim and tolerance inner_tol,
           defaulting to tol), eigenvalues mapped back as mu^{1/p}.
    other p > 0: dense assembly, n <= config.dense_limit.
    """
    n = graph.n
    if not 1 <= k < n:
        raise ConfigError(f"need 1 <= k < n, got k={k}, n={n}")
    p = config.p
    if p == 1:
        work = graph.with_shift(0.0)
        op = SymmetricOperator(n, lambda v: apply_one_minus_L1(work, v), "I - L1")
        res = lanczos_largest_eigs(
            op, k, tol=tol, max_subspace=max_subspace,
            max_restarts=max_restarts, seed=seed,
        )
        values = 1.0 - res.values  # descending mu -> ascending lambda
        vectors = res.vectors
    elif p < 0:
        delta = config.resolved_delta
        if delta <= 0:
            raise ConfigError("negative powers require a positive shift delta")
        work = graph.with_shift(delta)
        itol = tol if inner_tol is None else inner_tol
        op = SymmetricOperator(
            n,
            lambda v: apply_Lp_power(work, config, v, krylov_dim=krylov_dim, tol=itol),
            "Lp^p",
        )
        res = lanczos_largest_eigs(
            op, k, tol=tol, max_subspace=max_subspace,
            max_restarts=max_restarts, seed=seed,
        )
        if res.values.min() <= 0.0:
            raise NumericalError(
                "power mean spectrum is not positive; cannot take the 1/p root"
            )
        values = res.values ** (1.0 / p)  # order-reversing: result ascending
        vectors = res.vectors
    else:
        M = power_mean_dense(graph, config)
        lam, Q = np.linalg.eigh(M)
        values = lam[:k]
        vectors = Q[:, :k]
    values = np.maximum(values, 0.0) if p > 0 else values
    return SpectralBasis(values=np.asarray(values), vectors=np.asarray(vectors))
