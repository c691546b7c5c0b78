import math
import numpy as np
import pytest
from selfsim.errors import DomainError
from selfsim.kernel import (DirectExponent, ExponentTable, KernelParams, TableConfig, cache_key,
                            characteristic_exponent, damping, exponent_asymptote, levy_constant,
                            levy_constant_closed_form, step_pdf, step_transform)
from selfsim.quadrature import INNER_DEFAULT, integrate_semi_infinite
from .conftest import COARSE_TABLE, cauchy_exponent


@pytest.mark.parametrize('gamma', [0.0, -0.5, 2.0, float('nan')])
def test_params_reject_gamma(gamma):
    with pytest.raises(DomainError):
        KernelParams(gamma)


def test_step_pdf(cauchy):
    assert step_pdf(cauchy, 0.0) == 0.5
    assert step_pdf(cauchy, 1.0) == 0.125
    with pytest.raises(DomainError):
        step_pdf(cauchy, -1.0)


@pytest.mark.parametrize('gamma', [0.5, 1.0, 1.5])
def test_step_pdf_is_normalized(gamma):
    params = KernelParams(gamma)
    assert 2 * integrate_semi_infinite(lambda r: step_pdf(params, r), INNER_DEFAULT) == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize('p', [0.1, 1.0, 10.0])
def test_exponent_matches_cauchy_closed_form(cauchy, p):
    assert characteristic_exponent(cauchy, p) == pytest.approx(cauchy_exponent(p), abs=1e-8)


def test_step_transform_keeps_precision_at_large_p(cauchy):
    p = 1e3
    assert step_transform(cauchy, p) == pytest.approx(1 - cauchy_exponent(p), rel=1e-6)
    assert step_transform(cauchy, p) == pytest.approx(exponent_asymptote(cauchy, p), rel=1e-6)
    assert characteristic_exponent(cauchy, p) == pytest.approx(1.0, abs=1e-4)
    assert characteristic_exponent(cauchy, 0.0) == 0.0
    assert step_transform(cauchy, 0.0) == 1.0


@pytest.mark.parametrize('gamma', [0.5, 0.75, 1.0, 1.25, 1.5])
def test_levy_constant(gamma):
    assert levy_constant(KernelParams(gamma)) == pytest.approx(levy_constant_closed_form(gamma), rel=1e-4)


def test_small_p_power_law():
    params = KernelParams(0.5)
    levy = levy_constant(params)
    p = np.array([1e-6, 1e-5])
    g = np.array([characteristic_exponent(params, x) for x in p])
    slope = np.diff(np.log(g)) / np.diff(np.log(p))
    assert slope[0] == pytest.approx(0.5, abs=1e-2)
    assert g[0] == pytest.approx(levy * 1e-3, rel=1e-2)


def test_damping_branches_agree():
    t = 5.0
    g = np.array([0.49999, 0.50001])
    direct = np.exp(-t * g) - math.exp(-t)
    np.testing.assert_allclose(damping(t, g, 1 - g), direct, rtol=1e-10)
    assert damping(1e6, 0.9, 0.1) == 0.0


def test_table_matches_direct_quadrature(cauchy, cauchy_table):
    p = np.array([1e-3, 0.05, 0.7, 1.0, 3.0, 42.0])
    g, w = cauchy_table.evaluate(p)
    np.testing.assert_allclose(g, [cauchy_exponent(x) for x in p], rtol=1e-4)
    np.testing.assert_allclose(w, 1 - g, rtol=1e-12)
    direct = DirectExponent(cauchy, levy=math.pi / 2)
    dg, dw = direct.evaluate(p.reshape(2, 3))
    assert dg.shape == (2, 3)
    np.testing.assert_allclose(g.reshape(2, 3), dg, rtol=1e-4)


def test_table_limits(cauchy_table):
    low = cauchy_table.p_lo / 10
    assert cauchy_table(np.array([low]))[0] == pytest.approx(math.pi / 2 * low, rel=1e-12)
    high = cauchy_table.p_hi * 10
    _, w = cauchy_table.evaluate(np.array([high]))
    assert w[0] == pytest.approx(2 / high ** 2, rel=1e-3)


def test_table_cache_round_trip(tmp_path, cauchy, cauchy_table):
    key = cache_key(cauchy, COARSE_TABLE, cauchy_table.p_lo)
    path = tmp_path / 'gtable.csv'
    cauchy_table.save(str(path), key)
    again = ExponentTable.load(str(path), cauchy, COARSE_TABLE, key)
    np.testing.assert_array_equal(again.p, cauchy_table.p)
    np.testing.assert_array_equal(again.g, cauchy_table.g)
    np.testing.assert_array_equal(again.one_minus_g, cauchy_table.one_minus_g)
    assert again.levy == cauchy_table.levy
    assert ExponentTable.load(str(path), cauchy, COARSE_TABLE, 'other') is None
    assert ExponentTable.load(str(tmp_path / 'missing.csv'), cauchy, COARSE_TABLE, key) is None


def test_build_reuses_cache(tmp_path, monkeypatch, cauchy):
    cfg = TableConfig(points_per_decade=4, interp_tol=0.5, max_refinements=0, p_max=10)
    first = ExponentTable.build(cauchy, 1.0, cfg=cfg, cache_dir=str(tmp_path), levy=math.pi / 2)
    assert len(list(tmp_path.iterdir())) == 1

    def fail(*args, **kwargs):
        raise AssertionError('table was recomputed')
    monkeypatch.setattr('selfsim.kernel.exponent_values', fail)
    second = ExponentTable.build(cauchy, 1.0, cfg=cfg, cache_dir=str(tmp_path), levy=math.pi / 2)
    np.testing.assert_array_equal(second.g, first.g)


def test_table_config_rejects_unknown_keys():
    with pytest.raises(DomainError):
        TableConfig.from_dict({'density': 10})
    with pytest.raises(DomainError):
        TableConfig(p_max=0.5)


def test_cache_is_keyed_by_quadrature_tolerance(tmp_path, cauchy):
    cfg = TableConfig(points_per_decade=4, interp_tol=0.5, max_refinements=0, p_max=10)
    loose = INNER_DEFAULT.replace(rel_tol=1e-4)
    assert cache_key(cauchy, cfg, 1e-3, loose) != cache_key(cauchy, cfg, 1e-3, INNER_DEFAULT)
    ExponentTable.build(cauchy, 1.0, cfg=cfg, quad=loose, cache_dir=str(tmp_path), levy=math.pi / 2)
    tight = ExponentTable.build(cauchy, 1.0, cfg=cfg, quad=INNER_DEFAULT.replace(rel_tol=1e-12),
                                cache_dir=str(tmp_path), levy=math.pi / 2)
    assert tight.quad.rel_tol == 1e-12
    assert len(list(tmp_path.iterdir())) == 2


@pytest.mark.parametrize('gamma', [0.5, 1.0, 1.5])
def test_exponent_increases_with_p(gamma):
    params = KernelParams(gamma)
    p = np.logspace(-4, 3, 29)
    g, w = DirectExponent(params).evaluate(p)
    assert np.all(np.diff(g) > 0)
    assert np.all(np.diff(w) < 0)
    assert np.all((g > 0) & (g < 1))
