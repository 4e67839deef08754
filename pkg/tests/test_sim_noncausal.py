import json
import math
from importlib import resources

import numpy as np
import pytest

from oracles import best_table_distortion, bsc, degraded_pxyz, entropy_loop
from succref.noncausal import NcAuxChannel, evaluate_nc
from succref.prob import make_source, sample_flat
from succref.problem import problem_from_dict
from succref.sim_common import CapExceeded, SimConfig, seq_rng
from succref.sim_noncausal import (NcTypicality, decode_nc_y, decode_nc_z, encode_nc, gen_nc_codebooks,
                                   nc_layout, partition_ok, simulate_nc)


def aux_of(nx=2, w1=None, w2=None, w3=None, w4=None, v=None):
    chans = []
    for c in (w1, w2, w3, w4, v):
        if c is None:
            chans.append(np.ones((nx, 1)))
        elif isinstance(c, str):
            chans.append(np.eye(nx))
        else:
            chans.append(np.asarray(c, dtype=float))
    return NcAuxChannel.from_array(np.einsum("xa,xb,xc,xd,xe->xabcde", *chans))


def example():
    doc = json.loads(resources.files("succref").joinpath("data/example_noncausal_sim.json").read_text())
    return problem_from_dict(doc)


def h(j, keep):
    drop = tuple(i for i in range(j.ndim) if i not in keep)
    return entropy_loop(j.sum(axis=drop))


def draw(src, n, seed):
    return np.unravel_index(sample_flat(src.pxyz.mass.ravel(), n, seq_rng(seed)), src.sizes)


class TestLayout:
    def test_subbin_count(self):
        src = make_source(degraded_pxyz(0.5, 0.05, 0.25))
        aux = aux_of(v=bsc(0.1))
        n, m = 10, 0.2
        lay = nc_layout(src, aux, SimConfig(n=n, rate_margin=m))
        # joint of (X, Y, Z, V) by direct products; W1 is constant
        j = np.einsum("xyz,xv->xyzv", src.pxyz.mass, bsc(0.1))
        i_zv = h(j, {2}) + h(j, {3}) - h(j, {2, 3})
        i_yv = h(j, {1}) + h(j, {3}) - h(j, {1, 3})
        i_xv = h(j, {0}) + h(j, {3}) - h(j, {0, 3})
        assert lay.m_v == math.ceil(2 ** (n * (i_xv + m)))
        want = math.ceil(2 ** (n * (i_zv - i_yv)))
        per_bin = -(-lay.m_v // lay.bins_v)
        assert lay.subbins_v == max(1, min(want, per_bin))
        assert lay.subbins_v > 1

    def test_constant_aux_sizes(self):
        lay = nc_layout(make_source(degraded_pxyz(0.5, 0.1, 0.2)), NcAuxChannel.constant(2),
                        SimConfig(n=10, rate_margin=0.2))
        assert (lay.m_w1, lay.m_v, lay.m_w2, lay.m_w3, lay.m_w4) == (4, 4, 4, 4, 4)
        assert lay.subbins_v == 1

    def test_cap_report(self):
        src = make_source(degraded_pxyz(0.5, 0.1, 0.2))
        with pytest.raises(CapExceeded) as e:
            gen_nc_codebooks(src, aux_of(w2="x"), SimConfig(n=14, rate_margin=0.2, codeword_cap=1000))
        rep = e.value.report
        assert rep["total_symbols"] > 1000
        assert set(rep) >= {"w1", "v", "w2", "w3", "w4"}
        assert rep["w2"]["symbols"] == rep["w2"]["total"] * 14

    def test_partition(self):
        ex = example()
        books = gen_nc_codebooks(ex.source, ex.nc_aux, SimConfig(n=8, rate_margin=0.2))
        assert partition_ok(books)
        lay = books.layout
        for row in books.bin_w2.reshape(-1, lay.m_w2):
            counts = np.bincount(row, minlength=lay.bins_w2)
            assert counts.sum() == lay.m_w2 and counts.max() - counts.min() <= 1

    def test_partition_detects_corruption(self):
        ex = example()
        books = gen_nc_codebooks(ex.source, ex.nc_aux, SimConfig(n=8, rate_margin=0.2))
        bad = books.bin_w2.copy()
        bad[0, 0, 0] = books.layout.bins_w2 + 3
        books.bin_w2 = bad
        assert not partition_ok(books)

    def test_seed_determinism(self):
        ex = example()
        cfg = SimConfig(n=8, rate_margin=0.2, seed=3)
        a = gen_nc_codebooks(ex.source, ex.nc_aux, cfg)
        b = gen_nc_codebooks(ex.source, ex.nc_aux, cfg)
        np.testing.assert_array_equal(a.w2, b.w2)
        np.testing.assert_array_equal(a.bin_w2, b.bin_w2)


class TestEncoder:
    def test_atypical_is_e1(self):
        src = make_source(degraded_pxyz(0.5, 0.1, 0.2))
        aux = NcAuxChannel.constant(2)
        cfg = SimConfig(n=10, delta=0.05, rate_margin=0.2)
        books = gen_nc_codebooks(src, aux, cfg)
        assert encode_nc(np.zeros(10, int), books, NcTypicality(src, aux, cfg)).event == "e1"

    def test_constant_aux_indices_zero(self):
        src = make_source(degraded_pxyz(0.5, 0.1, 0.2))
        aux = NcAuxChannel.constant(2)
        cfg = SimConfig(n=10, rate_margin=0.2)
        books = gen_nc_codebooks(src, aux, cfg)
        enc = encode_nc(np.tile([0, 1], 5), books, NcTypicality(src, aux, cfg))
        assert enc.event is None and enc.chosen == (0, 0, 0, 0, 0)


class TestDecoders:
    def test_z_equals_x(self):
        ex = example()
        cfg = SimConfig(n=8, rate_margin=0.2)
        books = gen_nc_codebooks(ex.source, ex.nc_aux, cfg)
        typ = NcTypicality(ex.source, ex.nc_aux, cfg)
        seen = 0
        for t in range(150):
            x, y, z = draw(ex.source, 8, t)
            enc = encode_nc(x, books, typ)
            if enc.event is not None:
                continue
            seen += 1
            dz = decode_nc_z(2, enc.indices, z, books, typ)
            assert dz.status != "NoneTypical"
            if dz.status == "ok":
                assert dz.found["w2"] == enc.chosen[2]
                np.testing.assert_array_equal(books.w2[0, 0, dz.found["w2"]], x)
        assert seen > 50

    def test_garbage_y_none_typical(self):
        src = make_source(degraded_pxyz(0.5, 0.05, 0.1))
        aux = aux_of(w1="x")
        cfg = SimConfig(n=6, rate_margin=0.2, delta=0.1)
        books = gen_nc_codebooks(src, aux, cfg)
        typ = NcTypicality(src, aux, cfg)
        statuses = []
        for t in range(60):
            x, _, _ = draw(src, 6, t)
            enc = encode_nc(x, books, typ)
            if enc.event is None:
                statuses.append(decode_nc_y(1, enc.indices, np.zeros(6, int), books, typ).status)
        assert statuses and statuses.count("NoneTypical") == len(statuses)

    def test_single_codeword_bins(self):
        p = np.zeros((2, 1, 2))
        p[:, 0, :] = 0.5 * bsc(0.1)
        src = make_source(p)  # Y constant
        aux = aux_of(w1="x")
        cfg = SimConfig(n=6, rate_margin=0.2)
        books = gen_nc_codebooks(src, aux, cfg)
        assert books.layout.bins_w1 == books.layout.m_w1
        typ = NcTypicality(src, aux, cfg)
        ok = 0
        for t in range(40):
            x, y, _ = draw(src, 6, t)
            enc = encode_nc(x, books, typ)
            if enc.event is None:
                d = decode_nc_y(1, enc.indices, y, books, typ)
                assert d.status == "ok" and d.found["w1"] == enc.chosen[0]
                ok += 1
        assert ok > 10

    def test_stage_validation(self):
        ex = example()
        cfg = SimConfig(n=8, rate_margin=0.2)
        books = gen_nc_codebooks(ex.source, ex.nc_aux, cfg)
        typ = NcTypicality(ex.source, ex.nc_aux, cfg)
        with pytest.raises(ValueError):
            decode_nc_y(3, None, np.zeros(8, int), books, typ)


class TestSimulate:
    def test_constant_aux_si_only(self):
        src = make_source(degraded_pxyz(0.5, 0.1, 0.25))
        rep = simulate_nc(src, NcAuxChannel.constant(2), None, SimConfig(n=12, rate_margin=0.2, trials=200))
        j = src.pxyz.mass
        dy = best_table_distortion(j.sum(axis=2), 1 - np.eye(2))
        dz = best_table_distortion(j.sum(axis=1), 1 - np.eye(2))
        assert rep.trials_ok >= 100
        for k, want in (("dy1", dy), ("dz1", dz), ("dy2", dy), ("dz2", dz)):
            assert rep.single_letter_distortions[k] == pytest.approx(want, abs=1e-12)
            assert abs(rep.empirical_distortions[k] - want) <= 0.05

    def test_z_copy_stage1_exact(self):
        ex = example()
        rep = simulate_nc(ex.source, ex.nc_aux, None, SimConfig(n=8, rate_margin=0.2, trials=120))
        good = [r for r in rep.rows if r["decode"] == "ok"]
        assert good and all(r["dz1"] == 0.0 for r in good)
        assert rep.agreement_violations == 0

    def test_seed_reproducible(self):
        ex = example()
        cfg = SimConfig(n=8, rate_margin=0.2, trials=40, seed=11)
        a = simulate_nc(ex.source, ex.nc_aux, None, cfg)
        b = simulate_nc(ex.source, ex.nc_aux, None, cfg)
        assert a.to_json() == b.to_json() and a.csv_text() == b.csv_text()

    def test_tallies(self):
        ex = example()
        rep = simulate_nc(ex.source, ex.nc_aux, None, SimConfig(n=8, rate_margin=0.2, trials=60))
        fails = sum(v for k, v in rep.decode_failures.items() if k != "wrong_unique")
        assert rep.trials_ok + sum(rep.error_counts.values()) + fails >= 60
        assert rep.trials_ok + sum(rep.error_counts.values()) <= 60

    def test_inner_oracle_matches(self):
        ex = example()
        rep = simulate_nc(ex.source, ex.nc_aux, None, SimConfig(n=8, rate_margin=0.2, trials=5))
        pt = evaluate_nc(ex.source, ex.nc_aux, "inner")
        assert tuple(rep.single_letter_distortions.values()) == pytest.approx(tuple(pt.achieved), abs=0)
