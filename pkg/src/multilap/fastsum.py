"""NFFT-based fast evaluation of kernel sums.

Evaluates, for all i at once,

    (W~ v)_i = sum_j v_j K(x_i - x_j),        W v = W~ v - K(0) v,

in O(n + N^d log N) instead of O(n^2). The kernel is replaced by a
trigonometric polynomial

    K_RF(y) = sum_{l in I_N} bhat_l exp(2 pi i <l, y>),
    I_N = {-N/2, ..., N/2 - 1}^d,

whose coefficients come from a d-dimensional FFT of a regularized kernel
K_R: equal to K inside the ball |y| <= 1/2 - eps_b, bridged by a two-point
Hermite polynomial on the shell (1/2 - eps_b, 1/2] so that the 1-periodic
extension stays smooth, and constant beyond radius 1/2. Substituting K_RF
into the sum factorizes it into an adjoint nonequispaced FFT, a diagonal
multiplication by bhat, and a forward nonequispaced FFT.

Points must satisfy the componentwise box constraint
|x_i|_inf <= 1/4 - eps_b/2. Because K_R only matches K up to radius
1/2 - eps_b while box-constrained differences can be longer in dimensions
d > 1, plans shrink the geometry internally by 1/sqrt(d) and compensate
with a rescaled kernel length scale; both families are exactly closed
under this rescaling, so results are unaffected.

The nonequispaced transforms use a Kaiser-Bessel window (an equivalent
compact window to the classical truncated Gaussian, with a considerably
smaller truncation error at the same support) on a rho-fold oversampled
grid with 2*m_nfft + 1 grid points per dimension per source point.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.special import i0

from .errors import ConfigError, NumericalError
from .kernels import KernelSpec

# default accuracy parameters shared by plan construction and the data
# pipeline (which needs eps_b before a plan exists, to size the point box)
DEFAULT_N = 64
DEFAULT_M = 5
DEFAULT_EPS_B = 1.0 / 16.0
DEFAULT_P = 5
DEFAULT_RHO = 2.0

# scipy.fft worker count used for the gridded transforms. One worker keeps
# results reproducible on any machine; the CLI can raise it.
_fft_workers = 1


def set_fft_workers(n):
    global _fft_workers
    _fft_workers = max(1, int(n))


def box_halfwidth(eps_b):
    """Half width of the admissible point box, 1/4 - eps_b/2."""
    return 0.25 - 0.5 * eps_b


def validate_box(points, eps_b):
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ConfigError(f"points must be a 2-d array, got shape {points.shape}")
    if points.size and not np.all(np.isfinite(points)):
        raise ConfigError("points contain non-finite values")
    hw = box_halfwidth(eps_b)
    if points.size:
        worst = np.max(np.abs(points))
        if worst > hw + 1e-12:
            raise ConfigError(
                f"points exceed the admissible box: max |coord| = {worst:.6g} "
                f"> 1/4 - eps_b/2 = {hw:.6g}"
            )
    return points


# ---------------------------------------------------------------------------
# regularized kernel and its Fourier coefficients


def _boundary_polynomial(kernel, eps_b, p_deg):
    """Hermite bridge polynomial on the shell, in tau = (r - r0) / eps_b.

    Degree 2 p_deg - 1 with the 2 p_deg conditions
        Q^(j)(0) = eps_b^j K^(j)(r0),  j = 0..p_deg-1,
        Q(1) = K(1/2),  Q^(j)(1) = 0,  j = 1..p_deg-1,
    which match the kernel at the junction r0 = 1/2 - eps_b and kill all
    low-order derivatives (odd ones included) at r = 1/2 so the periodized
    radial profile is C^{p_deg-1}.
    """
    p = int(p_deg)
    if p < 1 or p > 12:
        raise ConfigError(f"p_nfft must be in [1, 12], got {p_deg}")
    r0 = 0.5 - eps_b
    ncoef = 2 * p
    A = np.zeros((ncoef, ncoef))
    rhs = np.zeros(ncoef)
    derivs = kernel.radial_derivatives(r0, p - 1)
    # conditions at tau = 0: Q^(j)(0) = j! c_j
    for j in range(p):
        A[j, j] = math.factorial(j)
        rhs[j] = derivs[j] * eps_b**j
    # conditions at tau = 1
    for j in range(p):
        row = p + j
        for a in range(j, ncoef):
            A[row, a] = math.factorial(a) / math.factorial(a - j)
        rhs[row] = kernel.radial(0.5) if j == 0 else 0.0
    coef = np.linalg.solve(A, rhs)
    return coef


def regularized_radial(kernel, eps_b, p_deg):
    """The radial profile of K_R as a vectorized callable of r >= 0."""
    if not 0.0 < eps_b < 0.5:
        raise ConfigError(f"eps_b must lie in (0, 1/2), got {eps_b}")
    r0 = 0.5 - eps_b
    coef = _boundary_polynomial(kernel, eps_b, p_deg)

    def profile(r):
        r = np.asarray(r, dtype=float)
        tau = np.clip((r - r0) / eps_b, 0.0, 1.0)
        bridge = np.polynomial.polynomial.polyval(tau, coef)
        return np.where(r <= r0, kernel.radial(np.minimum(r, r0)), bridge)

    return profile


def kernel_fourier_coefficients(kernel, d, N, eps_b, p_nfft):
    """Coefficients bhat_l of the trigonometric kernel approximant.

    Samples K_R on the grid {k/N : k in I_N}^d and applies a d-dimensional
    FFT, so bhat_l = N^-d sum_k K_R(k/N) exp(-2 pi i <l, k> / N). The
    returned complex array has shape (N,)*d in FFT frequency order.
    """
    if d not in (1, 2, 3):
        raise ConfigError(f"fastsum supports d in {{1, 2, 3}}, got d={d}")
    if N < 4 or N % 2:
        raise ConfigError(f"N must be even and >= 4, got {N}")
    profile = regularized_radial(kernel, eps_b, p_nfft)
    axis = sfft.fftfreq(N)  # k/N in FFT order, covers [-1/2, 1/2)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    radius = np.sqrt(sum(g * g for g in grids))
    samples = profile(radius)
    return sfft.fftn(samples, workers=_fft_workers) / N**d


# ---------------------------------------------------------------------------
# Kaiser-Bessel window


def _kb_window(t, m, b):
    """Window value at distance t (in grid units) from a grid node."""
    t = np.asarray(t, dtype=float)
    arg = m * m - t * t
    inside = arg > 0
    s_in = np.sqrt(np.where(inside, arg, 1.0))
    s_out = np.sqrt(np.where(inside, 1.0, -arg))
    with np.errstate(invalid="ignore"):
        vals = np.where(inside, np.sinh(b * s_in) / s_in, np.sin(b * s_out) / s_out)
    return np.where(arg == 0.0, b, vals) / math.pi


def _kb_deconv(freqs, n_grid, m, b):
    """1 / (n_grid * phi_hat) at integer frequencies inside the passband."""
    w = 2.0 * math.pi * np.asarray(freqs, dtype=float) / n_grid
    arg = b * b - w * w
    if np.any(arg <= 0):
        raise NumericalError("frequency outside the Kaiser-Bessel passband")
    return 1.0 / i0(m * np.sqrt(arg))


# ---------------------------------------------------------------------------
# plans


@dataclass
class FastsumPlan:
    """Precomputed data for fast kernel sums with one kernel in one dimension."""

    kernel: KernelSpec
    d: int
    N: int
    m_nfft: int
    eps_b: float
    p_nfft: int
    rho: float
    n_grid: int
    ball_scale: float
    kernel_eff: KernelSpec
    window: str
    window_shape: float
    coeffs: np.ndarray
    deconv_axis: np.ndarray = field(repr=False)
    fused_weights: np.ndarray = field(repr=False)
    K0: float = 1.0

    def describe(self):
        return {
            "kernel": self.kernel.family,
            "sigma": self.kernel.sigma,
            "d": self.d,
            "N": self.N,
            "m_nfft": self.m_nfft,
            "eps_b": self.eps_b,
            "p_nfft": self.p_nfft,
            "rho": self.rho,
            "window": self.window,
            "ball_scale": self.ball_scale,
        }


def _embed_axis(arr, axis, N, n_grid, split_nyquist):
    """Place size-N FFT-order data of one axis into a size-n_grid axis.

    FFT index N/2 holds the folded -N/2 frequency. With split_nyquist the
    value is halved onto both +N/2 and -N/2 (keeps the spectrum even and
    hence representable by real transforms); without it the value goes to
    the -N/2 slot only, matching the literal I_N convention.
    """
    shape = list(arr.shape)
    shape[axis] = n_grid
    out = np.zeros(shape, dtype=arr.dtype)
    half = N // 2

    def sl(src_lo, src_hi, dst_lo, dst_hi):
        src = [slice(None)] * arr.ndim
        dst = [slice(None)] * arr.ndim
        src[axis] = slice(src_lo, src_hi)
        dst[axis] = slice(dst_lo, dst_hi)
        out[tuple(dst)] = arr[tuple(src)]

    sl(0, half, 0, half)
    sl(half + 1, N, n_grid - half + 1, n_grid)
    src = [slice(None)] * arr.ndim
    src[axis] = slice(half, half + 1)
    nyq = arr[tuple(src)]
    dst_neg = [slice(None)] * arr.ndim
    dst_neg[axis] = slice(n_grid - half, n_grid - half + 1)
    if split_nyquist:
        out[tuple(dst_neg)] = 0.5 * nyq
        dst_pos = [slice(None)] * arr.ndim
        dst_pos[axis] = slice(half, half + 1)
        out[tuple(dst_pos)] = 0.5 * nyq
    else:
        out[tuple(dst_neg)] = nyq
    return out


def build_plan(kernel, d, N=DEFAULT_N, m_nfft=DEFAULT_M, eps_b=DEFAULT_EPS_B, p_nfft=DEFAULT_P, rho=DEFAULT_RHO):
    """Build a fastsum plan for the given kernel and point dimension."""
    if d not in (1, 2, 3):
        raise ConfigError(f"fastsum supports d in {{1, 2, 3}}, got d={d}")
    if N < 4 or N % 2:
        raise ConfigError(f"N must be even and >= 4, got {N}")
    if m_nfft < 2:
        raise ConfigError(f"m_nfft must be >= 2, got {m_nfft}")
    n_grid = int(round(rho * N))
    if n_grid < N + 2 or n_grid % 2:
        raise ConfigError(f"oversampling rho={rho} gives invalid grid size {n_grid}")

    ball_scale = 1.0 / math.sqrt(d)
    kernel_eff = kernel.scaled(ball_scale)
    coeffs = kernel_fourier_coefficients(kernel_eff, d, N, eps_b, p_nfft)

    b = math.pi * (2.0 - N / n_grid)
    freqs_N = sfft.fftfreq(N) * N
    deconv_axis = _kb_deconv(freqs_N, n_grid, m_nfft, b)

    # Fused convolution weights on the oversampled half spectrum:
    # symmetrized bhat, both deconvolution passes, and the unnormalized
    # inverse-FFT factor n_grid^d folded into one real array.
    imag_leak = np.max(np.abs(coeffs.imag)) if coeffs.size else 0.0
    if imag_leak > 1e-12 * max(1.0, np.max(np.abs(coeffs.real))):
        raise NumericalError("kernel coefficients are not real; kernel not even?")
    full = _embed_axis(coeffs.real, 0, N, n_grid, split_nyquist=True)
    for ax in range(1, d):
        full = _embed_axis(full, ax, N, n_grid, split_nyquist=True)
    freqs_full = sfft.fftfreq(n_grid) * n_grid
    band = np.abs(freqs_full) <= N // 2
    wfull = np.zeros(n_grid)
    wfull[band] = _kb_deconv(freqs_full[band], n_grid, m_nfft, b) ** 2
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n_grid
        full = full * wfull.reshape(shape)
    full *= float(n_grid) ** d
    half = np.ascontiguousarray(full[..., : n_grid // 2 + 1])

    return FastsumPlan(
        kernel=kernel,
        d=d,
        N=N,
        m_nfft=m_nfft,
        eps_b=eps_b,
        p_nfft=p_nfft,
        rho=rho,
        n_grid=n_grid,
        ball_scale=ball_scale,
        kernel_eff=kernel_eff,
        window="kaiser-bessel",
        window_shape=b,
        coeffs=coeffs,
        deconv_axis=deconv_axis,
        fused_weights=half,
        K0=kernel.value_at_zero(),
    )


# ---------------------------------------------------------------------------
# point bindings (precomputed spreading geometry)


@dataclass
class PointBinding:
    """Spreading indices and window weights for one fixed point set."""

    n: int
    d: int
    n_grid: int
    grid_size: int
    flat_idx: np.ndarray = field(repr=False)
    point_id: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


def _make_binding(plan, x_torus, sort=None):
    x = np.asarray(x_torus, dtype=float)
    n, d = x.shape
    ng = plan.n_grid
    m = plan.m_nfft
    b = plan.window_shape
    if n == 0:
        empty_i = np.zeros(0, dtype=np.int32)
        return PointBinding(n=0, d=d, n_grid=ng, grid_size=ng**d,
                            flat_idx=empty_i, point_id=empty_i, weights=np.zeros(0))
    offsets = np.arange(-m, m + 1)
    # int32 throughout halves the binding footprint; grid sizes and point
    # counts stay far below 2^31 in any supported configuration
    flat = np.zeros((n, 1), dtype=np.int32)
    wprod = np.ones((n, 1))
    for dim in range(d):
        tx = ng * x[:, dim, None]
        u = np.floor(tx).astype(np.int64) + offsets[None, :]
        wd = _kb_window(tx - u, m, b)
        idx = np.mod(u, ng).astype(np.int32)
        flat = (flat[:, :, None] * np.int32(ng) + idx[:, None, :]).reshape(n, -1)
        wprod = (wprod[:, :, None] * wd[:, None, :]).reshape(n, -1)
    C = flat.shape[1]
    flat = flat.ravel()
    wprod = wprod.ravel()
    pid = np.repeat(np.arange(n, dtype=np.int32), C)
    grid_size = ng**d
    # Sorting by grid cell makes the scatter/gather cache friendly; it only
    # pays off once the grid is too big for cache.
    if sort is None:
        sort = grid_size > 200_000
    if sort and n > 1:
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        wprod = wprod[order]
        pid = pid[order]
    return PointBinding(
        n=n, d=d, n_grid=ng, grid_size=grid_size,
        flat_idx=flat, point_id=pid, weights=wprod,
    )


def bind_points(plan, points, sort=None):
    """Validate the box constraint and precompute spreading data.

    Reuse the returned binding across many fastsum_apply calls with the
    same points; building it is the only O(n (2m+1)^d) setup cost.
    """
    points = validate_box(points, plan.eps_b)
    if points.shape[1] != plan.d:
        raise ConfigError(
            f"points have dimension {points.shape[1]}, plan expects {plan.d}"
        )
    return _make_binding(plan, points * plan.ball_scale, sort=sort)


def _spread_real(binding, v):
    vals = binding.weights * v[binding.point_id]
    return np.bincount(binding.flat_idx, weights=vals, minlength=binding.grid_size)


def _spread_complex(binding, v):
    re = _spread_real(binding, np.ascontiguousarray(v.real))
    im = _spread_real(binding, np.ascontiguousarray(v.imag))
    return re + 1j * im


def _gather(binding, grid_flat):
    vals = binding.weights * grid_flat[binding.flat_idx]
    if np.iscomplexobj(vals):
        re = np.bincount(binding.point_id, weights=vals.real, minlength=binding.n)
        im = np.bincount(binding.point_id, weights=vals.imag, minlength=binding.n)
        return re + 1j * im
    return np.bincount(binding.point_id, weights=vals, minlength=binding.n)


def _trunc_slices(N, n_grid):
    half = N // 2
    return np.r_[0:half, n_grid - half : n_grid]


# ---------------------------------------------------------------------------
# nonequispaced transforms


def nfft_adjoint(points, v, plan):
    """ghat_l = sum_j v_j exp(-2 pi i <l, x_j>) for l in I_N (FFT order).

    `points` live on the torus [-1/2, 1/2)^d; no box margin or internal
    rescaling applies here, this is the bare transform.
    """
    points = np.asarray(points, dtype=float)
    v = np.asarray(v)
    if points.ndim != 2 or points.shape[1] != plan.d:
        raise ConfigError(f"points must have shape (n, {plan.d})")
    if v.shape != (points.shape[0],):
        raise ConfigError("v must be a vector matching the number of points")
    if np.max(np.abs(points), initial=0.0) >= 0.5:
        raise ConfigError("nfft points must lie in [-1/2, 1/2)")
    binding = _make_binding(plan, points, sort=False)
    if np.iscomplexobj(v):
        grid = _spread_complex(binding, v.astype(complex))
    else:
        grid = _spread_real(binding, v.astype(float))
    shape = (plan.n_grid,) * plan.d
    ghat = sfft.fftn(grid.reshape(shape), workers=_fft_workers)
    keep = _trunc_slices(plan.N, plan.n_grid)
    ghat = ghat[np.ix_(*([keep] * plan.d))]
    for ax in range(plan.d):
        shape_ax = [1] * plan.d
        shape_ax[ax] = plan.N
        ghat = ghat * plan.deconv_axis.reshape(shape_ax)
    return ghat


def nfft_forward(coeffs, points, plan):
    """f_i = sum_{l in I_N} coeffs_l exp(+2 pi i <l, x_i>), complex output."""
    points = np.asarray(points, dtype=float)
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (plan.N,) * plan.d:
        raise ConfigError(f"coeffs must have shape {(plan.N,) * plan.d}")
    if points.ndim != 2 or points.shape[1] != plan.d:
        raise ConfigError(f"points must have shape (n, {plan.d})")
    if points.shape[0] and np.max(np.abs(points)) >= 0.5:
        raise ConfigError("nfft points must lie in [-1/2, 1/2)")
    hhat = coeffs
    for ax in range(plan.d):
        shape_ax = [1] * plan.d
        shape_ax[ax] = plan.N
        hhat = hhat * plan.deconv_axis.reshape(shape_ax)
    full = _embed_axis(hhat, 0, plan.N, plan.n_grid, split_nyquist=False)
    for ax in range(1, plan.d):
        full = _embed_axis(full, ax, plan.N, plan.n_grid, split_nyquist=False)
    grid = sfft.ifftn(full, workers=_fft_workers) * float(plan.n_grid) ** plan.d
    binding = _make_binding(plan, points, sort=False)
    return _gather(binding, grid.ravel())


# ---------------------------------------------------------------------------
# kernel sums


def fastsum_apply(points, v, plan, binding=None):
    """Approximate W v where W_ij = K(x_i - x_j), W_ii = 0.

    Runs the adjoint transform, the diagonal coefficient multiplication and
    the forward transform in one fused pass over the oversampled grid using
    real-valued FFTs (the symmetrized coefficients make the spectrum
    Hermitian, so the result is real by construction). Pass a binding from
    bind_points to amortize the spreading setup over repeated applies.
    """
    v = np.asarray(v, dtype=float)
    if binding is None:
        binding = bind_points(plan, points)
    if v.shape != (binding.n,):
        raise ConfigError("v must be a real vector matching the number of points")
    if binding.n == 0:
        return np.zeros(0)
    grid = _spread_real(binding, v)
    shape = (plan.n_grid,) * plan.d
    spec = sfft.rfftn(grid.reshape(shape), workers=_fft_workers)
    spec *= plan.fused_weights
    out_grid = sfft.irfftn(spec, s=shape, workers=_fft_workers)
    wtilde_v = _gather(binding, out_grid.ravel())
    return wtilde_v - plan.K0 * v


def direct_apply(points, v, kernel, block_rows=None):
    """Exact dense evaluation of W v (zero diagonal), the fastsum oracle.

    Blockwise over rows so memory stays bounded; the gaussian family uses
    the factorization exp(-|xi-xj|^2/s^2) = e_i exp(2<xi,xj>/s^2) e_j with
    e_i = exp(-|xi|^2/s^2) whenever it cannot overflow, which turns the
    inner loop into a GEMM plus a single exp pass.
    """
    x = np.asarray(points, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.ndim != 2:
        raise ConfigError(f"points must be a 2-d array, got shape {x.shape}")
    n = x.shape[0]
    if v.shape != (n,):
        raise ConfigError("v must be a vector matching the number of points")
    if n == 0:
        return np.zeros(0)
    if block_rows is None:
        block_rows = max(16, min(n, int(8e6 // max(n, 1)) + 1))
    out = np.empty(n)
    if kernel.family == "gaussian":
        xs = x / kernel.sigma
        sq = np.einsum("ij,ij->i", xs, xs)
        if 2.0 * sq.max() < 600.0:
            e = np.exp(-sq)
            ev = e * v
            for lo in range(0, n, block_rows):
                hi = min(lo + block_rows, n)
                C = (2.0 * xs[lo:hi]) @ xs.T
                np.exp(C, out=C)
                out[lo:hi] = e[lo:hi] * (C @ ev)
        else:
            for lo in range(0, n, block_rows):
                hi = min(lo + block_rows, n)
                C = (2.0 * xs[lo:hi]) @ xs.T
                C -= sq[lo:hi, None]
                C -= sq[None, :]
                np.exp(C, out=C)
                out[lo:hi] = C @ v
    else:
        xs = x
        sq = np.einsum("ij,ij->i", xs, xs)
        for lo in range(0, n, block_rows):
            hi = min(lo + block_rows, n)
            C = (-2.0 * xs[lo:hi]) @ xs.T
            C += sq[lo:hi, None]
            C += sq[None, :]
            np.maximum(C, 0.0, out=C)
            np.sqrt(C, out=C)
            C /= -kernel.sigma
            np.exp(C, out=C)
            out[lo:hi] = C @ v
    # the loops above include the diagonal K(0) v_i, the graph excludes it
    return out - kernel.value_at_zero() * v
