"""Shared fixtures and raw-numpy oracles.

Helpers here are built from numpy primitives only, so tests never end up
validating package code against itself.
"""

import numpy as np
import pytest

from multilap import DenseWeights, MultilayerGraph, build_layer

P3_W = np.array([
    [0.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 0.0],
])


def dense_sym_laplacian(W, shift=0.0):
    """(1 + shift) I - D^{-1/2} W D^{-1/2}, assembled directly."""
    W = np.asarray(W, dtype=float)
    isd = 1.0 / np.sqrt(W.sum(axis=1))
    L = -(isd[:, None] * W * isd[None, :])
    L[np.diag_indices_from(L)] += 1.0 + shift
    return L


def matrix_power_sym(A, p):
    lam, Q = np.linalg.eigh(np.asarray(A, dtype=float))
    return (Q * lam**p) @ Q.T


def dense_power_mean(weight_list, p, delta):
    """Dense power mean of normalized Laplacians via per-layer eigh."""
    acc = None
    for W in weight_list:
        lam, Q = np.linalg.eigh(dense_sym_laplacian(W))
        term = (Q * (np.clip(lam, 0.0, None) + delta) ** p) @ Q.T
        acc = term if acc is None else acc + term
    S = acc / len(weight_list)
    return matrix_power_sym(0.5 * (S + S.T), 1.0 / p)


def random_weights(rng, n, density=0.2):
    """Symmetric zero-diagonal weights with no isolated node."""
    W = (rng.random((n, n)) < density) * rng.random((n, n))
    W = np.triu(W, 1)
    W = W + W.T
    for i in np.flatnonzero(W.sum(axis=1) == 0):
        W[i, (i + 1) % n] = W[(i + 1) % n, i] = 1.0
    return W


def random_graph(rng, n, T, density=0.2):
    layers = tuple(build_layer(DenseWeights(random_weights(rng, n, density)))
                   for _ in range(T))
    return MultilayerGraph(layers)


@pytest.fixture
def p3_graph():
    """Path graph on three nodes, one layer; degrees (1, 2, 1)."""
    return MultilayerGraph((build_layer(DenseWeights(P3_W.copy())),))
