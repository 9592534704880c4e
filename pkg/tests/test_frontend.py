import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskwin import tensor as T
from maskwin.frontend import (FAMILIES, DownsampleSpec, WindowSpec, apply_window, downsample,
                              export_length, frontend_forward, hard_mask, spectrum_mask_grad_s,
                              spectrum_mask_values, window_grad_m, window_values)
from maskwin.tensor import Tensor

from _fd import rel_err

N = 256
NB = N // 2 + 1


def scalar(v):
    return Tensor(float(v), requires_grad=True)


# -- window values ------------------------------------------------------------


def test_gaussian_center_and_half_width():
    spec = WindowSpec("gaussian", 100.0, N)
    w = window_values(spec)
    c = (N - 1) // 2
    assert w[c] == 1.0
    assert w[c + 50] == pytest.approx(1e-5, rel=1e-12)
    assert w[c - 50] == pytest.approx(1e-5, rel=1e-12)


@pytest.mark.parametrize("family,edge", [("hamming", 0.08), ("hann", 0.0)])
def test_cosine_support_edge(family, edge):
    spec = WindowSpec(family, 101.3, N)
    w = window_values(spec)
    assert w[spec.start] == pytest.approx(edge, abs=1e-15)
    assert np.all(w[: spec.start] == 0) and np.all(w[spec.start + spec.length :] == 0)


@pytest.mark.parametrize("family", FAMILIES)
def test_values_in_unit_interval(family):
    for m in (8.0, 33.7, 100.5, 255.0, 256.0):
        w = window_values(WindowSpec(family, m, N))
        assert np.all(w >= 0) and np.all(w <= 1)


def _direct(family, n, m, start, alpha=0.5, eps=1e-5):
    c = (N - 1) // 2
    if family == "gaussian":
        return math.exp(4 * math.log(eps) * (n - c) ** 2 / m**2)
    theta = 2 * math.pi * (n - start) / (m - 1)
    if family == "hamming":
        return 0.54 - 0.46 * math.cos(theta)
    if family == "hann":
        return 0.5 - 0.5 * math.cos(theta)
    x = (n - start) / (m - 1)
    if x < alpha / 2:
        return 0.5 * (1 - math.cos(2 * math.pi * x / alpha))
    if x > 1 - alpha / 2:
        return 0.5 * (1 - math.cos(2 * math.pi * (1 - x) / alpha))
    return 1.0


@pytest.mark.parametrize("family", FAMILIES)
def test_matches_direct_formula_on_support(family):
    rng = np.random.default_rng(0)
    spec = WindowSpec(family, 150.2, N)
    w = window_values(spec)
    for n in rng.choice(np.flatnonzero(hard_mask(spec)), 5, replace=False):
        assert w[n] == pytest.approx(_direct(family, n, spec.m, spec.start), rel=1e-12, abs=1e-15)


def test_m_out_of_bounds():
    with pytest.raises(ValueError):
        WindowSpec("hann", 4.0, N)
    with pytest.raises(ValueError):
        WindowSpec("hann", N + 1.0, N)


# -- window gradient ----------------------------------------------------------


def test_gaussian_grad_zero_at_center_and_nonnegative():
    g = window_grad_m(WindowSpec("gaussian", 90.0, N))
    assert g[(N - 1) // 2] == 0.0
    assert np.all(g >= 0)


@pytest.mark.parametrize("family", FAMILIES)
def test_grad_m_matches_fd(family):
    rng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(20):
        m = float(rng.integers(20, 250)) + rng.uniform(-0.4, 0.4)
        spec = WindowSpec(family, m, N)
        fd = (window_values(replace(spec, m=m + h)) - window_values(replace(spec, m=m - h))) / (2 * h)
        assert rel_err(window_grad_m(spec), fd) < 1e-4


# -- apply_window -------------------------------------------------------------


@pytest.mark.parametrize("family", FAMILIES)
def test_hard_full_window_is_identity(family):
    x = np.random.default_rng(2).standard_normal((3, N))
    y, valid = apply_window(Tensor(x), WindowSpec(family, float(N), N), "hard")
    np.testing.assert_array_equal(y.data, x)
    assert valid.all()


@pytest.mark.parametrize("family", ["hamming", "hann", "tukey"])
def test_hard_zeros_outside_support(family):
    x = np.ones(N)
    for m in (9.0, 57.4, 100.0, 200.6):
        y, _ = apply_window(Tensor(x), WindowSpec(family, m, N), "hard")
        lo, hi = math.floor((N - m) / 2), math.floor((N + m) / 2)
        outside = np.ones(N, bool)
        outside[lo : hi + 1] = False
        assert np.all(y.data[outside] == 0)
        assert set(np.unique(y.data)) <= {0.0, 1.0}


def test_gaussian_hard_support_definition():
    spec = WindowSpec("gaussian", 64.0, N)
    n = np.arange(N)
    np.testing.assert_array_equal(hard_mask(spec), np.abs(n - (N - 1) // 2) <= 32)


@pytest.mark.parametrize("family", FAMILIES)
def test_soft_m_gradient_matches_fd(family):
    rng = np.random.default_rng(3)
    h = 1e-5
    for _ in range(20):
        m = float(rng.integers(50, 200)) + rng.uniform(-0.4, 0.4)
        x, proj = rng.standard_normal((2, N)), rng.standard_normal((2, N))
        spec = WindowSpec(family, m, N)

        def loss(mv):
            y, _ = apply_window(Tensor(x), replace(spec, m=mv), "soft")
            return float(np.sum(proj * y.data**2))

        mt = scalar(m)
        y, _ = apply_window(Tensor(x), spec, "soft", m=mt)
        T.backward(T.total(T.mul(T.mul(y, y), Tensor(proj))))
        fd = (loss(m + h) - loss(m - h)) / (2 * h)
        assert rel_err(mt.grad, fd) < 1e-4


@pytest.mark.parametrize("family", FAMILIES)
def test_hard_mode_straight_through_contract(family):
    rng = np.random.default_rng(4)
    x, proj = rng.standard_normal((2, 64)), rng.standard_normal((2, 64))
    spec = WindowSpec(family, 30.2, 64)
    mt, xt = scalar(spec.m), Tensor(x, requires_grad=True)
    y, valid = apply_window(xt, spec, "hard", m=mt)
    T.backward(T.total(T.mul(y, Tensor(proj))))
    manual = np.sum(proj * x * window_grad_m(spec))
    assert mt.grad == pytest.approx(manual, rel=1e-14)
    np.testing.assert_array_equal(xt.grad, proj * valid)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(FAMILIES), st.floats(8, N), st.floats(8, N))
def test_hard_support_monotone_in_m(family, m1, m2):
    m1, m2 = sorted((m1, m2))
    a, b = hard_mask(WindowSpec(family, m1, N)), hard_mask(WindowSpec(family, m2, N))
    assert np.all(b[a])


# -- spectral mask ------------------------------------------------------------


def test_spectrum_mask_saturation_and_midpoint():
    spec = DownsampleSpec(40.0, 8.0, NB, 16000.0)
    w = spectrum_mask_values(spec)
    assert np.all(w[:41] == 1.0) and np.all(w[48:] == 0.0)
    assert w[44] == 0.5


def test_spectrum_mask_grad_fd():
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(20):
        r = float(rng.integers(2, 20))
        s = rng.uniform(r + 2, NB - r - 2)
        s = math.floor(s) + 0.5 + rng.uniform(-0.3, 0.3)
        spec = DownsampleSpec(s, r, NB, 16000.0)
        total = lambda v: spectrum_mask_values(replace(spec, s=v)).sum()
        fd = (total(s + h) - total(s - h)) / (2 * h)
        analytic = spectrum_mask_grad_s(spec).sum()
        ramp = np.sum((np.arange(NB) > s) & (np.arange(NB) < s + r))
        assert analytic == pytest.approx(ramp / r)
        assert rel_err(analytic, fd) < 1e-4


@settings(max_examples=60, deadline=None)
@given(st.floats(1, 30), st.floats(0, 1), st.floats(0, 1))
def test_spectrum_mask_monotone_and_lipschitz(r, u1, u2):
    lo, hi = r + 1, NB
    s1, s2 = lo + u1 * (hi - lo), lo + u2 * (hi - lo)
    w1 = spectrum_mask_values(DownsampleSpec(s1, r, NB, 16000.0))
    w2 = spectrum_mask_values(DownsampleSpec(s2, r, NB, 16000.0))
    assert np.all(np.diff(w1) <= 0)
    assert np.all((w1 >= 0) & (w1 <= 1))
    assert np.max(np.abs(w1 - w2)) <= abs(s1 - s2) / r + 1e-12


# -- downsample ---------------------------------------------------------------


def test_downsample_full_band_identity():
    x = np.random.default_rng(6).standard_normal((2, N))
    y = downsample(Tensor(x), DownsampleSpec(float(NB), 4.0, NB, 16000.0))
    assert np.max(np.abs(y.data - x)) < 1e-9


def test_downsample_tone_pass_and_stop():
    n = np.arange(N)
    spec = DownsampleSpec(40.0, 8.0, NB, 16000.0)
    low = np.cos(2 * np.pi * 30 * n / N)
    high = np.cos(2 * np.pi * 50 * n / N)
    assert np.max(np.abs(downsample(Tensor(low), spec).data - low)) < 1e-6
    assert np.max(np.abs(downsample(Tensor(high), spec).data)) < 1e-6


def test_downsample_s_gradient_fd():
    rng = np.random.default_rng(7)
    h = 1e-5
    for _ in range(20):
        r = 8.0
        s = float(rng.integers(12, NB - 12)) + 0.5 + rng.uniform(-0.3, 0.3)
        x, proj = rng.standard_normal((2, N)), rng.standard_normal((2, N))
        spec = DownsampleSpec(s, r, NB, 16000.0)
        loss = lambda v: float(np.sum(proj * downsample(Tensor(x), replace(spec, s=v)).data ** 2))
        st_ = scalar(s)
        y = downsample(Tensor(x), spec, s=st_)
        T.backward(T.total(T.mul(T.mul(y, y), Tensor(proj))))
        assert rel_err(st_.grad, (loss(s + h) - loss(s - h)) / (2 * h)) < 1e-3


def test_downsample_x_gradient_fd():
    rng = np.random.default_rng(8)
    x, proj = rng.standard_normal(32), rng.standard_normal(32)
    spec = DownsampleSpec(6.3, 3.0, 17, 16000.0)
    xt = Tensor(x, requires_grad=True)
    T.backward(T.total(T.mul(downsample(xt, spec), Tensor(proj))))
    from _fd import fd_grad
    fd = fd_grad(lambda v: float(np.sum(proj * downsample(Tensor(v), spec).data)), x)
    assert rel_err(xt.grad, fd) < 1e-6


def test_downsample_export_length_and_content():
    n = np.arange(N)
    x = np.cos(2 * np.pi * 10 * n / N)
    spec = DownsampleSpec(32.0, 4.0, NB, 16000.0)
    y = downsample(Tensor(x), spec, "export").data
    L = export_length(N, 32.0, NB)
    assert len(y) == L == round(N * 32 / NB)
    # 10 cycles over the frame survive at the lower rate
    np.testing.assert_allclose(y, np.cos(2 * np.pi * 10 * np.arange(L) / L), atol=1e-9)


def test_downsample_length_mismatch():
    with pytest.raises(ValueError):
        downsample(Tensor(np.ones(100)), DownsampleSpec(40.0, 8.0, NB, 16000.0))


# -- composition --------------------------------------------------------------


@pytest.mark.parametrize("mask", ["soft", "hard"])
def test_frontend_full_size_identity(mask):
    x = np.random.default_rng(9).standard_normal((2, N))
    y, valid = frontend_forward(Tensor(x), WindowSpec("gaussian" if mask == "hard" else "tukey", float(N), N),
                                DownsampleSpec(float(NB), 4.0, NB, 16000.0), mask=mask)
    if mask == "hard":
        assert np.max(np.abs(y.data - x)) < 1e-9
    assert valid.all()


@pytest.mark.parametrize("family", FAMILIES)
def test_frontend_does_not_add_energy(family):
    rng = np.random.default_rng(10)
    for _ in range(5):
        x = rng.standard_normal(N)
        y, _ = frontend_forward(Tensor(x), WindowSpec(family, rng.uniform(8, N), N),
                                DownsampleSpec(rng.uniform(9, NB), 8.0, NB, 16000.0), mask="soft")
        assert np.sum(y.data**2) <= np.sum(x**2) + 1e-9


def test_frontend_joint_gradient_fd():
    rng = np.random.default_rng(11)
    h = 1e-5
    x, proj = rng.standard_normal((2, N)), rng.standard_normal((2, N))
    for m0 in (80.2, 140.3):
        for s0 in (30.4, 70.6):
            ws, ds = WindowSpec("hamming", m0, N), DownsampleSpec(s0, 8.0, NB, 16000.0)

            def loss(mv, sv):
                y, _ = frontend_forward(Tensor(x), replace(ws, m=mv), replace(ds, s=sv), mask="soft")
                return float(np.sum(proj * y.data**2))

            mt, st_ = scalar(m0), scalar(s0)
            y, _ = frontend_forward(Tensor(x), ws, ds, mask="soft", m=mt, s=st_)
            T.backward(T.total(T.mul(T.mul(y, y), Tensor(proj))))
            fd_m = (loss(m0 + h, s0) - loss(m0 - h, s0)) / (2 * h)
            fd_s = (loss(m0, s0 + h) - loss(m0, s0 - h)) / (2 * h)
            assert rel_err(mt.grad, fd_m) < 1e-3
            assert rel_err(st_.grad, fd_s) < 1e-3


def test_frontend_shapes_by_mode():
    x = np.random.default_rng(12).standard_normal((3, N))
    ws, ds = WindowSpec("hann", 100.0, N), DownsampleSpec(64.0, 4.0, NB, 16000.0)
    y, valid = frontend_forward(Tensor(x), ws, ds, "train")
    assert y.shape == (3, N) and valid.sum() == 100
    y, valid = frontend_forward(Tensor(x), ws, ds, "export")
    assert y.shape == (3, round(100 * 64 / NB)) and valid.all()
    assert export_length(N, 64.0, NB) == round(N * 64 / NB)
