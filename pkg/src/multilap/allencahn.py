"""Multiclass graph Allen-Cahn classification with convexity splitting.

Minimizes (approximately) the graph Ginzburg-Landau energy

    E(U) = eps/2 tr(U^T L U)
         + 1/(2 eps) sum_i prod_l  (1/4) |u_i - e_l|_1^2
         + 1/2 sum_i omega_i |f_i - u_i|^2

over row-stochastic score matrices U whose rows live on the Gibbs simplex.
One iteration solves the convexity-split linear system in a truncated
eigenbasis Phi_k of L, adds the polynomial well force and the label
fidelity force, and projects every row back onto the simplex:

    V   = [(1 + c dt) I + eps dt Lambda_k]^{-1}
          Phi_k^T ((1 + c dt) U - dt/(2 eps) T(U) - dt omega (U - F))
    U^+ = proj_simplex(Phi_k V)

The scheme stops when the squared relative row change
max_i |u_i^+ - u_i|^2 / max_i |u_i^+|^2 drops to `tolerance`. The energy
is a diagnostic only; with the projection step it need not decrease
monotonically.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .powermean import SpectralBasis


@dataclass(frozen=True)
class LabelData:
    """Known labels as a one-hot matrix F plus a per-node fidelity weight.

    Unlabeled nodes have a zero row in F and zero fidelity.
    """

    F: np.ndarray
    fidelity: np.ndarray
    m: int

    @classmethod
    def from_class_ids(cls, ids, m, omega0):
        """ids: integer class per node, -1 marks unlabeled."""
        ids = np.asarray(ids)
        if m < 2:
            raise ConfigError(f"need at least 2 classes, got m={m}")
        if ids.ndim != 1:
            raise ConfigError("class ids must form a vector")
        if ids.max(initial=-1) >= m:
            raise ConfigError(f"class id {ids.max()} out of range for m={m}")
        if ids.min(initial=0) < -1:
            raise ConfigError("class ids must be >= -1 (-1 = unlabeled)")
        if omega0 <= 0:
            raise ConfigError(f"omega0 must be positive, got {omega0}")
        n = ids.shape[0]
        F = np.zeros((n, m))
        labeled = ids >= 0
        F[np.flatnonzero(labeled), ids[labeled]] = 1.0
        fidelity = np.where(labeled, float(omega0), 0.0)
        return cls(F=F, fidelity=fidelity, m=m)

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def labeled_mask(self):
        return self.fidelity > 0


@dataclass(frozen=True)
class AllenCahnParams:
    """Scheme parameters; c defaults to omega0 + 3/eps and must stay at or
    above the convexity bound omega0 + 1/eps."""

    epsilon: float = 5e-3
    omega0: float = 1000.0
    c: float | None = None
    dt: float = 0.01
    tolerance: float = 1e-6
    max_iter: int = 300

    def __post_init__(self):
        if self.epsilon <= 0 or self.dt <= 0:
            raise ConfigError("epsilon and dt must be positive")
        if self.omega0 < 0:
            raise ConfigError("omega0 must be nonnegative")
        if self.tolerance < 0:
            raise ConfigError("tolerance must be nonnegative")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.c_value < self.omega0 + 1.0 / self.epsilon - 1e-12:
            raise ConfigError(
                f"c = {self.c_value} violates the convexity bound "
                f"omega0 + 1/eps = {self.omega0 + 1.0 / self.epsilon}"
            )

    @property
    def c_value(self):
        return self.omega0 + 3.0 / self.epsilon if self.c is None else self.c


def simplex_project_rows(U):
    """Euclidean projection of every row onto the probability simplex.

    Sort-and-threshold: with the row sorted descending, the projection is
    max(u - tau, 0) where tau is determined by the largest prefix whose
    shifted entries stay positive.
    """
    U = np.asarray(U, dtype=float)
    squeeze = U.ndim == 1
    if squeeze:
        U = U[None, :]
    n, m = U.shape
    s = np.sort(U, axis=1)[:, ::-1]
    cumsum = np.cumsum(s, axis=1)
    j = np.arange(1, m + 1)
    cond = s + (1.0 - cumsum) / j > 0
    rho = m - np.argmax(cond[:, ::-1], axis=1) - 1  # last True index
    tau = (1.0 - cumsum[np.arange(n), rho]) / (rho + 1)
    out = np.maximum(U + tau[:, None], 0.0)
    return out[0] if squeeze else out


def _corner_distances(U):
    """A_iq = |u_i - e_q|_1 for arbitrary rows (no simplex assumption)."""
    absU = np.abs(U)
    return absU.sum(axis=1, keepdims=True) - absU + np.abs(U - 1.0)


def _leave_one_out_products(B):
    n, m = B.shape
    left = np.ones_like(B)
    right = np.ones_like(B)
    np.cumprod(B[:, :-1], axis=1, out=left[:, 1:])
    np.cumprod(B[:, :0:-1], axis=1, out=right[:, -2::-1])
    return left * right


def nonlinearity_T(U):
    """Row-wise derivative of the multi-well potential.

    T_ij(U) = sum_q 1/2 (1 - 2 delta_jq) |u_i - e_q|_1
              prod_{l != q} (1/4) |u_i - e_l|_1^2

    evaluates for arbitrary U; at a simplex corner the row vanishes.
    """
    U = np.asarray(U, dtype=float)
    A = _corner_distances(U)
    loo = _leave_one_out_products(0.25 * A * A)
    weighted = A * loo
    return 0.5 * weighted.sum(axis=1, keepdims=True) - weighted


def initial_scores(labels):
    """Labeled rows start at their corner, unlabeled ones at the barycenter."""
    U = np.full((labels.n, labels.m), 1.0 / labels.m)
    mask = labels.labeled_mask
    U[mask] = labels.F[mask]
    return U


@dataclass
class AllenCahnResult:
    scores: np.ndarray
    iterations: int
    converged: bool


def allen_cahn_solve(basis, labels, params, callback=None):
    """Run the convexity-splitting scheme in the eigenbasis `basis`.

    Parameters
    ----------
    basis : SpectralBasis with the k smallest eigenpairs of the Laplacian
    labels : LabelData
    params : AllenCahnParams
    callback : optional callable(iteration, scores) invoked after the
        projection of every step; handy for tracing.

    Returns an AllenCahnResult. `converged` reports whether the relative
    change reached `tolerance` within the iteration budget; False means
    the budget ran out first. At least one iteration always runs, so an
    infinite tolerance returns after exactly one step (trivially
    converged).
    """
    if labels.m < 2:
        raise ConfigError("multiclass scheme needs m >= 2")
    phi = basis.vectors
    lam = basis.values
    if phi.shape[0] != labels.n:
        raise ConfigError("basis and labels disagree on node count")
    eps = params.epsilon
    dt = params.dt
    c = params.c_value
    denom = 1.0 + c * dt + eps * dt * lam
    U = initial_scores(labels)
    fid = labels.fidelity[:, None]
    F = labels.F
    converged = False
    iterations = 0
    for it in range(1, params.max_iter + 1):
        R = (1.0 + c * dt) * U
        R -= (dt / (2.0 * eps)) * nonlinearity_T(U)
        R -= dt * fid * (U - F)
        V = (phi.T @ R) / denom[:, None]
        U_next = simplex_project_rows(phi @ V)
        diff = U_next - U
        num = np.max(np.einsum("ij,ij->i", diff, diff))
        den = np.max(np.einsum("ij,ij->i", U_next, U_next))
        if den <= 0 or not np.isfinite(num):
            raise NumericalError("Allen-Cahn iterate degenerated")
        rel_change = num / den
        U = U_next
        iterations = it
        if callback is not None:
            callback(it, U)
        if rel_change <= params.tolerance:
            converged = True
            break
    return AllenCahnResult(scores=U, iterations=iterations, converged=converged)


def predict_labels(scores):
    """Class per row as the argmax; ties resolve to the lowest class id."""
    scores = np.asarray(scores)
    return np.argmax(scores, axis=1)


def ginzburg_landau_energy(scores, operator, labels, epsilon):
    """Diagnostic energy of a score matrix.

    `operator` is either a SpectralBasis (Dirichlet term evaluated in the
    truncated eigenbasis) or a dense Laplacian matrix. The projection step
    of the solver is not a gradient step, so this energy is reported for
    monitoring only.
    """
    U = np.asarray(scores, dtype=float)
    if isinstance(operator, SpectralBasis):
        C = operator.vectors.T @ U
        dirichlet = 0.5 * epsilon * float(np.sum(operator.values[:, None] * C * C))
    else:
        L = np.asarray(operator)
        dirichlet = 0.5 * epsilon * float(np.sum(U * (L @ U)))
    A = _corner_distances(U)
    well = float(np.sum(np.prod(0.25 * A * A, axis=1))) / (2.0 * epsilon)
    diff = labels.F - U
    fidelity = 0.5 * float(labels.fidelity @ np.einsum("ij,ij->i", diff, diff))
    return dirichlet + well + fidelity


@dataclass
class BinaryAllenCahnResult:
    scores: np.ndarray
    iterations: int
    converged: bool


def binary_allen_cahn_solve(basis, f, params, callback=None):
    """Two-class scheme with scalar scores and labels f in {-1, 0, +1}.

    Spectral iteration with the double well (u^2 - 1)^2 / 4:

        v^+ = [(1 + c dt + dt/eps) v - (dt/eps) Phi^T (u^3) - dt Phi^T
               (omega (u - f))] / (1 + c dt + eps dt lambda)

    where u = Phi v. No projection step; class = sign of the score.
    """
    f = np.asarray(f, dtype=float)
    phi = basis.vectors
    lam = basis.values
    if f.shape != (phi.shape[0],):
        raise ConfigError("labels f must be one value per node")
    if np.any(np.abs(f[f != 0]) != 1.0):
        raise ConfigError("binary labels must be -1, 0 or +1")
    eps = params.epsilon
    dt = params.dt
    c = params.c_value
    fid = np.where(f != 0, params.omega0, 0.0)
    denom = 1.0 + c * dt + eps * dt * lam
    lead = 1.0 + c * dt + dt / eps
    v = phi.T @ f
    u = phi @ v
    converged = False
    iterations = 0
    for it in range(1, params.max_iter + 1):
        rhs = lead * v
        rhs -= (dt / eps) * (phi.T @ (u**3))
        rhs -= dt * (phi.T @ (fid * (u - f)))
        v = rhs / denom
        u_next = phi @ v
        num = np.max((u_next - u) ** 2)
        den = np.max(u_next**2)
        u = u_next
        iterations = it
        if callback is not None:
            callback(it, u)
        if den <= 0:
            # all-zero state is a fixed point (no labels, symmetric well)
            converged = True
            break
        if not np.isfinite(num):
            raise NumericalError("binary Allen-Cahn iterate degenerated")
        if num / den <= params.tolerance:
            converged = True
            break
    return BinaryAllenCahnResult(scores=u, iterations=iterations, converged=converged)


def predict_binary(scores):
    """+1 / -1 by sign; an exact zero counts as +1."""
    return np.where(np.asarray(scores) >= 0, 1, -1)
