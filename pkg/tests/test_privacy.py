import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairfl.privacy import (PrivacyLedger, PrivacyParams, adaptive_sigma, clip_to_sensitivity, compose_basic,
                            compose_strong, cosine_similarity, deviation_factors, gaussian_perturb, min_sigma)

DEFAULT = PrivacyParams(0.95, 1e-5)


def test_min_sigma_values():
    assert min_sigma(PrivacyParams(0.5, 1e-5)) == pytest.approx(9.6896, abs=1e-3)
    assert min_sigma(DEFAULT) == pytest.approx(5.100, abs=1e-2)
    assert min_sigma(PrivacyParams(0.3, 1e-5)) > min_sigma(PrivacyParams(0.6, 1e-5))


@pytest.mark.parametrize("eps,delta", [(0.0, 1e-5), (1.0, 1e-5), (1.5, 1e-5), (0.5, 0.0), (0.5, 1.0)])
def test_params_reject_out_of_range(eps, delta):
    with pytest.raises(ValueError):
        PrivacyParams(eps, delta)


def test_adaptive_sigma():
    assert adaptive_sigma(DEFAULT, 1.0, 0.6) == pytest.approx(12.75, abs=1e-2)
    for theta in (0.0, 0.3, 0.99):
        assert adaptive_sigma(DEFAULT, 0.0, theta) == min_sigma(DEFAULT)
    with pytest.raises(ValueError):
        adaptive_sigma(DEFAULT, 1.0, 1.0)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.01, 0.99))
def test_adaptive_sigma_increasing(e1, e2, theta):
    lo, hi = sorted((e1, e2))
    if hi - lo > 1e-9:
        assert adaptive_sigma(DEFAULT, lo, theta) < adaptive_sigma(DEFAULT, hi, theta)


def test_gaussian_perturb_zero_sigma_is_identity():
    v = np.arange(5.0)
    out = gaussian_perturb(v, 0.01, 0.0, np.random.default_rng(0))
    assert np.array_equal(out, v) and out is not v


def test_gaussian_perturb_moments():
    n, dim, s_f, sigma = 100_000, 4, 0.01, 5.1
    rng = np.random.default_rng(3)
    noise = np.stack([gaussian_perturb(np.zeros(dim), s_f, sigma, rng) for _ in range(n)])
    scale = s_f * sigma
    assert np.all(np.abs(noise.var(axis=0) / scale ** 2 - 1) < 0.05)
    assert abs(noise.mean()) <= 3 * scale / math.sqrt(n * dim)


def test_clip():
    h = np.array([0.003, 0.004])
    out, s = clip_to_sensitivity(h, 0.01)
    assert np.array_equal(out, h) and s == 0.01
    big = np.array([0.012, 0.016])
    out, _ = clip_to_sensitivity(big, 0.01)
    assert np.linalg.norm(out) == pytest.approx(0.01, abs=1e-12)
    assert np.allclose(out / np.linalg.norm(out), big / np.linalg.norm(big))


def test_cosine_similarity():
    a = np.array([1.0, 2.0, 3.0])
    assert cosine_similarity(a, a) == pytest.approx(1.0)
    assert cosine_similarity(a, -a) == pytest.approx(-1.0)
    assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0
    assert cosine_similarity(np.zeros(3), a) == 0.0


def test_deviation_factors():
    w = np.array([1.0, 0.0])
    assert deviation_factors(w, [np.array([0.3, 0.7])]).tolist() == [0.0]
    # cosines 0.8 and 0.4 against w
    u1 = np.array([0.8, 0.6])
    u2 = np.array([0.4, math.sqrt(1 - 0.16)])
    assert deviation_factors(w, [u1, u2]) == pytest.approx([0.0, 0.5], abs=1e-12)
    assert deviation_factors(w, [u1, u1, u1]).tolist() == [0.0, 0.0, 0.0]
    # no positive similarity: nobody is penalized
    assert deviation_factors(w, [-u1, -u2]).tolist() == [0.0, 0.0]


@given(st.lists(st.lists(st.floats(-1, 1), min_size=3, max_size=3), min_size=1, max_size=6))
def test_deviation_factors_in_unit_interval(rows):
    updates = [np.array(r) for r in rows]
    w = np.mean(updates, axis=0)
    dev = deviation_factors(w, updates)
    assert np.all((dev >= 0) & (dev <= 1))
    assert dev.min() == 0.0


def test_composition():
    assert compose_basic(0, DEFAULT) == (0.0, 0.0)
    assert compose_basic(1, DEFAULT) == (0.95, 1e-5)
    eps, delta = compose_basic(50, DEFAULT)
    assert eps == pytest.approx(47.5) and delta == pytest.approx(5e-4)
    e = math.exp(-1)
    assert compose_strong(1, PrivacyParams(0.5, e)) == pytest.approx((0.5, e))
    eps_s, delta_s = compose_strong(50, DEFAULT)
    assert eps_s == pytest.approx(22.79, abs=0.05)
    assert eps_s < compose_basic(50, DEFAULT)[0]


def test_ledger_matches_closed_forms():
    ledger = PrivacyLedger(DEFAULT)
    assert ledger.strong == (0.0, 0.0)
    for _ in range(37):
        ledger.record_round()
    assert ledger.basic == compose_basic(37, DEFAULT)
    assert ledger.strong == compose_strong(37, DEFAULT)
