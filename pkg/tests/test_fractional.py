import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracext.errors import ArgumentError, DataError, DomainError, ResolutionError
from fracext.fractional import FracOrder, frac_lap_pv, frac_lap_spectral, pv_constant_exact

N = 256
Y = 2 * np.pi * np.arange(N) / N


def rel_inf(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def test_order_bijection():
    fo = FracOrder(0.25)
    assert fo.alpha == 0.5
    assert FracOrder.from_alpha(-0.5).s == 0.75
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            FracOrder(bad)
    with pytest.raises(DomainError):
        FracOrder.from_alpha(1.0)


def test_spectral_constant_maps_to_zero():
    assert np.max(np.abs(frac_lap_spectral(np.full(64, 2.5), 0.3))) < 1e-12


def test_spectral_eigenmodes():
    assert np.max(np.abs(frac_lap_spectral(np.cos(Y), 0.5) - np.cos(Y))) < 1e-12
    out = frac_lap_spectral(np.cos(2 * Y), 0.75)
    assert np.max(np.abs(out - 2**1.5 * np.cos(2 * Y))) < 1e-10


def test_spectral_two_dimensional_mode():
    y1, y2 = np.meshgrid(Y[::4], Y[::4], indexing="ij")
    v = np.cos(y1 + 2 * y2)
    assert np.max(np.abs(frac_lap_spectral(v, 0.5) - math.sqrt(5) * v)) < 1e-10


def test_spectral_box_length_scales_symbol():
    L = 5.0
    y = L * np.arange(64) / 64
    v = np.sin(2 * np.pi * y / L)
    assert np.max(np.abs(frac_lap_spectral(v, 0.3, L) - (2 * np.pi / L) ** 0.6 * v)) < 1e-12


def test_input_checks():
    with pytest.raises(ArgumentError):
        frac_lap_spectral(np.ones(100), 0.5)
    with pytest.raises(DataError):
        frac_lap_spectral(np.full(16, np.nan), 0.5)
    with pytest.raises(DomainError):
        frac_lap_spectral(np.ones(16), 1.5)
    with pytest.raises(ArgumentError):
        frac_lap_pv(np.ones((16, 16)), 0.5)
    with pytest.raises(ResolutionError):
        frac_lap_pv(np.ones(64), 0.5, delta=2 * np.pi / 64)


def test_pv_constant_field_is_zero():
    assert np.max(np.abs(frac_lap_pv(np.full(N, 1.7), 0.4).values)) < 1e-12


@pytest.mark.parametrize(
    "v, s",
    [(np.cos(Y), 0.5), (np.cos(Y) + 0.3 * np.cos(3 * Y), 0.25)],
)
def test_pv_matches_spectral(v, s):
    assert rel_inf(frac_lap_pv(v, s).values, frac_lap_spectral(v, s)) < 1e-3


def test_pv_calibrated_constant_matches_closed_form():
    for s in (0.25, 0.5, 0.75):
        c = frac_lap_pv(np.cos(Y), s).constant
        assert c == pytest.approx(pv_constant_exact(s), rel=1e-5)


def test_pv_tail_bound_reported():
    res = frac_lap_pv(np.cos(Y), 0.5)
    assert res.tail_bound >= 0 and not res.accuracy_warning
    assert res.delta >= 2 * 2 * np.pi / N


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_two_routes_agree_on_trig_polynomials(s, rng):
    for _ in range(3):
        a = rng.standard_normal(6)
        b = rng.standard_normal(6)
        v = sum(a[k] * np.cos(k * Y) + b[k] * np.sin(k * Y) for k in range(6))
        assert rel_inf(frac_lap_pv(v, s).values, frac_lap_spectral(v, s)) < 1e-3


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_linearity_both_routes(a, b, seed):
    r = np.random.default_rng(seed)
    v, w = r.standard_normal(64), r.standard_normal(64)
    for op in (lambda z: frac_lap_spectral(z, 0.3), lambda z: frac_lap_pv(z, 0.3, images=16).values):
        lhs = op(a * v + b * w)
        rhs = a * op(v) + b * op(w)
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(rhs)))


def test_translation_equivariance_spectral_bit_exact():
    v = np.exp(np.sin(Y)) + 0.2 * np.cos(5 * Y)
    assert np.array_equal(np.roll(frac_lap_spectral(v, 0.4), 1), frac_lap_spectral(np.roll(v, 1), 0.4))
    y1, y2 = np.meshgrid(Y[::8], Y[::8], indexing="ij")
    w = np.cos(y1) * np.exp(np.sin(y2))
    out = frac_lap_spectral(w, 0.7)
    assert np.array_equal(np.roll(out, (1, 3), axis=(0, 1)), frac_lap_spectral(np.roll(w, (1, 3), axis=(0, 1)), 0.7))


def test_large_inputs_use_the_transform():
    v = np.cos(2 * np.pi * np.arange(8192) / 8192 * 3)
    out = frac_lap_spectral(v, 0.5)
    assert np.max(np.abs(out - 3 * v)) < 1e-10


def test_even_input_gives_even_output():
    v = np.cos(Y) + 0.4 * np.cos(4 * Y) + np.exp(np.cos(Y))
    rev = lambda z: np.roll(z[::-1], 1)
    for out in (frac_lap_spectral(v, 0.6), frac_lap_pv(v, 0.6).values):
        assert np.max(np.abs(out - rev(out))) < 1e-10
