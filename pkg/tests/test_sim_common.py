import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from succref.sim_common import (SimConfig, SimReport, Typ, book_size, combine, distortion_means, draw_rows,
                                marginal, seq_rng)


@pytest.mark.parametrize("n,rate,want", [(10, 0.0, 1), (10, -1.0, 1), (10, 0.1, 2), (4, 0.5, 4),
                                         (3, 0.5, 3), (100, 1.0, 2 ** 100)])
def test_book_size(n, rate, want):
    assert book_size(n, rate) == want


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 400), st.floats(0.0, 1.0))
def test_book_size_is_ceiling(n, rate):
    m = book_size(n, rate)
    e = n * rate
    assert m >= 1
    if e < 1000:
        assert math.log2(m) >= e - 1e-9
        assert m == 1 or math.log2(m - 1) < e + 1e-9


def test_config_defaults():
    cfg = SimConfig(n=100)
    assert cfg.typ_delta == pytest.approx(0.2)
    assert cfg.dec_delta == pytest.approx(0.4)
    assert SimConfig(n=100, delta=0.05, decoder_delta=0.07).dec_delta == 0.07


@pytest.mark.parametrize("kw", [dict(n=0), dict(n=5, delta=0.0), dict(n=5, rate_margin=0.0),
                                dict(n=5, trials=0), dict(n=5, decoder_delta=-1.0), dict(n=5, scan_limit=0)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_seq_rng_keyed():
    a = seq_rng(1, 2, 3).random(4)
    assert np.array_equal(a, seq_rng(1, 2, 3).random(4))
    assert not np.array_equal(a, seq_rng(1, 2, 4).random(4))


def test_marginal_order():
    j = np.random.default_rng(0).dirichlet(np.ones(24)).reshape(2, 3, 4)
    np.testing.assert_allclose(marginal(j, [2, 0]), j.sum(axis=1).T)


def test_combine_mixed_radix():
    assert combine([np.array([1, 0]), np.array([2, 1])], [2, 3]).tolist() == [5, 1]


def test_typ_check():
    j = np.array([[0.25, 0.25], [0.25, 0.25]])
    t = Typ(j, [0, 1], 8, 0.05)
    assert t.check([np.array([0, 0, 0, 0, 1, 1, 1, 1]), np.array([0, 0, 1, 1, 0, 0, 1, 1])])
    assert not t.check([np.zeros(8, int), np.zeros(8, int)])


def test_draw_rows_typical_and_distributed():
    j = np.array([[0.63, 0.07], [0.03, 0.27]])  # P(a, b)
    n, d = 200, 0.05
    typ = Typ(j, [0, 1], n, d)
    ctx = np.where(np.arange(n) < 140, 0, 1)
    cond = j / j.sum(axis=1, keepdims=True)
    rows = draw_rows(seq_rng(0), 50, cond, ctx, typ, [ctx])
    assert rows.shape == (50, n)
    for r in rows:
        assert typ.check([ctx, r])
    assert rows[:, ctx == 0].mean() == pytest.approx(0.1, abs=0.02)


def test_report_csv_and_json():
    rep = SimReport("causal", 4, 1, 1, {"e1": 0}, {"dy1": 0.5}, {"dy1": 0.25}, {"c1": "2"}, {"n": 4},
                    rows=[{"trial": 0, "event": "ok", "dy1": 1 / 3, "k": None}])
    assert rep.csv_text() == "trial,event,dy1,k\n0,ok,0.333333333,\n"
    assert "rows" not in rep.to_json()


def test_distortion_means():
    assert distortion_means(np.array([1.0, 2, 3, 4]), 2) == {"dy1": 0.5, "dz1": 1.0, "dy2": 1.5, "dz2": 2.0}
    assert distortion_means(np.zeros(4), 0)["dz2"] is None
