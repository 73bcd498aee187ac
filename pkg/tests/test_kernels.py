import numpy as np
import pytest
from numpy.testing import assert_allclose

from multilap import errors
from multilap.kernels import KernelSpec


def test_gaussian_values():
    k = KernelSpec("gaussian", 0.5)
    assert k.value_at_zero() == 1.0
    assert_allclose(k.radial(0.5), np.exp(-1.0))
    assert_allclose(k.radial([0.0, 1.0]), [1.0, np.exp(-4.0)])


def test_laplacian_values():
    k = KernelSpec("laplacian", 2.0)
    assert k.value_at_zero() == 1.0
    assert_allclose(k.radial(1.0), np.exp(-0.5))


def test_of_sqdist_matches_radial():
    r = np.linspace(0.0, 2.0, 17)
    for fam in ("gaussian", "laplacian"):
        k = KernelSpec(fam, 0.7)
        assert_allclose(k.of_sqdist(r**2), k.radial(r), rtol=1e-14)


def test_scaled_closure():
    # K_sigma(y / a) == K_{sigma a}(y) for both families
    y = np.array([0.1, 0.5, 1.3])
    for fam in ("gaussian", "laplacian"):
        k = KernelSpec(fam, 0.4)
        for a in (0.5, 2.0, 1 / np.sqrt(3)):
            assert_allclose(k.radial(y / a), k.scaled(a).radial(y), rtol=1e-14)


@pytest.mark.parametrize("family,sigma", [("gaussian", 0.3), ("laplacian", 0.8)])
def test_radial_derivatives_match_finite_differences(family, sigma):
    k = KernelSpec(family, sigma)
    r0, h = 0.42, 1e-5
    derivs = k.radial_derivatives(r0, 3)
    assert_allclose(derivs[0], k.radial(r0), rtol=1e-14)
    d1 = (k.radial(r0 + h) - k.radial(r0 - h)) / (2 * h)
    d2 = (k.radial(r0 + h) - 2 * k.radial(r0) + k.radial(r0 - h)) / h**2
    assert_allclose(derivs[1], d1, rtol=1e-7)
    assert_allclose(derivs[2], d2, rtol=1e-4)


def test_gaussian_third_derivative_closed_form():
    # d^3/dr^3 e^{-(r/s)^2} = -s^{-3} H_3(r/s) e^{-(r/s)^2}, H_3(x) = 8x^3 - 12x
    s, r = 0.6, 0.25
    x = r / s
    expected = -(8 * x**3 - 12 * x) * np.exp(-(x**2)) / s**3
    assert_allclose(KernelSpec("gaussian", s).radial_derivatives(r, 3)[3],
                    expected, rtol=1e-12)


def test_invalid_specs_rejected():
    with pytest.raises(errors.ConfigError):
        KernelSpec("cauchy", 1.0)
    with pytest.raises(errors.ConfigError):
        KernelSpec("gaussian", 0.0)
    with pytest.raises(errors.ConfigError):
        KernelSpec("gaussian", -1.0)
    with pytest.raises(errors.ConfigError):
        KernelSpec("gaussian", float("nan"))
