import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_table_distortion, bsc, degraded_pxyz, h2, no_si_pxyz
from succref.causal import (CausalAuxChannel, CausalDecoderRuleSet, DistortionQuad, GridSpec,
                            InfeasibleTarget, brute_force_causal, causal_joint, evaluate_causal,
                            min_rates_causal, optimal_decoders, separation_check)
from succref.prob import cmi_array, make_source
from succref.search import SearchConfig

R_01 = 0.5310044064107188   # 1 - h2(0.1), frozen from oracles.rd_blahut
R_02 = 0.2780719051126377   # 1 - h2(0.2)
C_011 = 0.500084041835472   # 1 - h2(0.11)
FAST = SearchConfig(restarts=2, iters=400)


def no_si_source():
    return make_source(no_si_pxyz([0.5, 0.5]))


def bsc_aux(q, w2_const=True):
    if w2_const:
        return CausalAuxChannel.from_array(bsc(q)[:, :, None])
    return CausalAuxChannel.from_array(np.einsum("xa,xb->xab", bsc(q), bsc(q)))


def random_aux(rng, nx=2, w1=2, w2=2):
    return CausalAuxChannel.from_array(rng.dirichlet(np.ones(w1 * w2), size=nx).reshape(nx, w1, w2))


def random_source(rng, nx=2, ny=2, nz=2):
    return make_source(rng.dirichlet(np.ones(nx * ny * nz)).reshape(nx, ny, nz))


class TestEvaluate:
    def test_constant_aux(self):
        src = make_source(degraded_pxyz(0.3, 0.1, 0.2))
        pt = evaluate_causal(src, CausalAuxChannel.constant(2))
        assert pt.r1 == 0.0 and pt.delta_r == 0.0
        # SI-only estimates: guess x from y or z
        j = src.pxyz.mass
        dy = best_table_distortion(j.sum(axis=2), 1 - np.eye(2))
        dz = best_table_distortion(j.sum(axis=1), 1 - np.eye(2))
        assert tuple(pt.achieved) == pytest.approx((dy, dz, dy, dz), abs=1e-12)

    def test_copy_with_projection(self):
        src = make_source(degraded_pxyz(0.3, 0.1, 0.2))
        aux = CausalAuxChannel.copy(2)
        g = np.tile(np.arange(2), (2, 1))  # g_y1[y, w1] = w1
        dec = optimal_decoders(src, aux)
        dec = CausalDecoderRuleSet(g, dec.g_z1, dec.g_y2, dec.g_z2)
        pt = evaluate_causal(src, aux, dec)
        assert pt.r1 == pytest.approx(h2(0.3), abs=1e-12)
        assert pt.achieved.dy1 == 0.0

    @pytest.mark.parametrize("q", [0.1, 0.2, 0.35])
    def test_bsc_test_channel(self, q):
        pt = evaluate_causal(no_si_source(), bsc_aux(q))
        assert pt.r1 == pytest.approx(1 - h2(q), abs=1e-12)
        assert pt.achieved.dy1 == pytest.approx(q, abs=1e-12)

    def test_frozen_bsc_values(self):
        assert 1 - h2(0.1) == pytest.approx(R_01, abs=1e-15)
        assert 1 - h2(0.2) == pytest.approx(R_02, abs=1e-15)

    def test_bad_decoder_shape(self):
        src = no_si_source()
        aux = bsc_aux(0.1)
        dec = optimal_decoders(src, aux)
        with pytest.raises(ValueError):
            evaluate_causal(src, aux, CausalDecoderRuleSet(dec.g_y1[:, :1], dec.g_z1, dec.g_y2, dec.g_z2))

    def test_decoder_out_of_alphabet(self):
        src = no_si_source()
        aux = bsc_aux(0.1)
        dec = optimal_decoders(src, aux)
        with pytest.raises(ValueError):
            evaluate_causal(src, aux, CausalDecoderRuleSet(dec.g_y1 + 5, dec.g_z1, dec.g_y2, dec.g_z2))


class TestOptimalDecoders:
    def test_copy_hamming(self):
        dec = optimal_decoders(make_source(degraded_pxyz(0.5, 0.1, 0.1)), CausalAuxChannel.copy(2))
        np.testing.assert_array_equal(dec.g_y1, [[0, 1], [0, 1]])

    def test_perfect_y(self):
        p = np.zeros((2, 2, 1))
        p[0, 0, 0] = p[1, 1, 0] = 0.5
        dec = optimal_decoders(make_source(p), CausalAuxChannel.constant(2))
        np.testing.assert_array_equal(dec.g_y1[:, 0], [0, 1])

    def test_tie_breaks_low(self):
        dec = optimal_decoders(no_si_source(), CausalAuxChannel.constant(2))
        assert dec.g_y1[0, 0] == 0

    @pytest.mark.parametrize("seed", range(12))
    def test_exhaustive_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        src = random_source(rng)
        aux = random_aux(rng)
        pt = evaluate_causal(src, aux)
        j = causal_joint(src, aux.q)  # (X, Y, Z, W1, W2)
        obs = [j.sum(axis=(2, 4)), j.sum(axis=(1, 4)), j.sum(axis=2), j.sum(axis=1)]
        for got, m, d in zip(pt.achieved, obs, src.distortions):
            ref = best_table_distortion(m.reshape(2, -1), d)
            assert got == pytest.approx(ref, abs=1e-12)


class TestMinRates:
    def test_unconstrained(self):
        pts = min_rates_causal(no_si_source(), DistortionQuad(), FAST)
        assert len(pts) == 1 and pts[0].r1 == 0 and pts[0].delta_r == 0

    def test_perfect_y(self):
        p = np.zeros((2, 2, 1))
        p[0, 0, 0] = p[1, 1, 0] = 0.5
        pts = min_rates_causal(make_source(p), DistortionQuad(dy1=0.0), FAST)
        assert pts[0].r1 == 0.0 and pts[0].achieved.dy1 == 0.0

    @pytest.mark.slow
    def test_classical_rd(self):
        pts = min_rates_causal(no_si_source(), DistortionQuad(0.1, 0.1, 0.1, 0.1))
        assert abs(pts[0].r1 - R_01) <= 0.02

    def test_infeasible(self):
        d = 1 - np.eye(2) + 0.1
        src = make_source(no_si_pxyz([0.5, 0.5]), d_y1=d)
        with pytest.raises(InfeasibleTarget):
            min_rates_causal(src, DistortionQuad(dy1=0.05), FAST)

    def test_frontier_and_consistency(self):
        src = make_source(degraded_pxyz(0.5, 0.1, 0.25))
        target = DistortionQuad(0.2, 0.15, 0.1, 0.08)
        pts = min_rates_causal(src, target, FAST)
        assert pts
        for a in pts:
            assert a.achieved.meets(target)
            again = evaluate_causal(src, a.aux, a.decoders)
            assert again.r1 == pytest.approx(a.r1, abs=1e-9)
            assert again.delta_r == pytest.approx(a.delta_r, abs=1e-9)
            np.testing.assert_allclose(again.achieved.as_array(), a.achieved.as_array(), atol=1e-9)
            for b in pts:
                if a is not b:
                    assert not (b.r1 <= a.r1 and b.delta_r <= a.delta_r)

    def test_seed_stable_across_workers(self):
        src = make_source(degraded_pxyz(0.5, 0.1, 0.25))
        target = DistortionQuad(0.2, 0.15, 0.15, 0.1)
        a = min_rates_causal(src, target, SearchConfig(restarts=2, iters=200, workers=1))
        b = min_rates_causal(src, target, SearchConfig(restarts=2, iters=200, workers=2))
        assert [(p.r1, p.delta_r) for p in a] == [(p.r1, p.delta_r) for p in b]

    def test_monotone_in_target(self):
        src = no_si_source()
        cfg = SearchConfig(restarts=2, iters=800)
        prev = math.inf
        for d in (0.1, 0.15, 0.2, 0.3):
            r = min_rates_causal(src, DistortionQuad(d, d, math.inf, math.inf), cfg)[0].r1
            # stochastic search: allow the search tolerance on top of monotonicity
            assert r <= prev + 5e-3
            prev = r


class TestBruteForce:
    def test_single_cell(self):
        src = make_source(degraded_pxyz(0.4, 0.1, 0.2))
        grid = GridSpec(2, 2, rows=((0.25, 0.25, 0.25, 0.25),))
        pts = brute_force_causal(src, DistortionQuad(), grid)
        ref = evaluate_causal(src, CausalAuxChannel.from_array(np.full((2, 2, 2), 0.25)))
        assert len(pts) == 1
        assert pts[0].r1 == pytest.approx(ref.r1, abs=1e-12)
        np.testing.assert_allclose(pts[0].achieved.as_array(), ref.achieved.as_array(), atol=1e-12)

    def test_unconstrained_has_origin(self):
        pts = brute_force_causal(no_si_source(), DistortionQuad(), GridSpec(2, 1, resolution=4))
        assert (pts[0].r1, pts[0].delta_r) == (0.0, 0.0)

    def test_grid_cap(self):
        with pytest.raises(ValueError):
            brute_force_causal(no_si_source(), DistortionQuad(), GridSpec(2, 2, resolution=30, max_points=10))

    def test_agrees_with_search(self):
        src = make_source(degraded_pxyz(0.5, 0.1, 0.2))
        target = DistortionQuad(0.15, 0.12, math.inf, math.inf)
        grid = brute_force_causal(src, target, GridSpec(2, 1, resolution=10))
        found = min_rates_causal(src, target, SearchConfig(restarts=2, iters=800), w1_size=2, w2_size=1)
        assert abs(grid[0].r1 - found[0].r1) <= 0.05
        assert found[0].r1 <= grid[0].r1 + 1e-9


class TestSeparation:
    def test_zero_capacity_si_only(self):
        src = make_source(degraded_pxyz(0.3, 0.1, 0.2))
        si = evaluate_causal(src, CausalAuxChannel.constant(2)).achieved
        ok, wit = separation_check(src, si, 1.0, 1.0, 0.0, 0.0, FAST)
        assert ok and wit.r1 == 0.0 and wit.delta_r == 0.0

    def test_large_capacity_lossless(self):
        src = no_si_source()
        ok, wit = separation_check(src, DistortionQuad(0, 0, 0, 0), 1.0, 1.0, 2.0, 2.0, FAST)
        # the witness may be a near-copy of X within the distortion tolerance
        assert ok and wit.achieved.dy1 <= 1e-9
        assert wit.r1 == pytest.approx(1.0, abs=1e-6)

    def test_classical_threshold(self):
        src = no_si_source()
        cfg = SearchConfig(restarts=2, iters=800)
        yes, _ = separation_check(src, DistortionQuad(dy1=0.13), 1.0, 1.0, C_011, 0.0, cfg)
        no, wit = separation_check(src, DistortionQuad(dy1=0.06), 1.0, 1.0, C_011, 0.0, cfg)
        assert yes and not no and wit is None

    def test_bad_rho(self):
        with pytest.raises(ValueError):
            separation_check(no_si_source(), DistortionQuad(), 0.0, 1.0, 1.0, 1.0)


class TestAuxChannel:
    def test_w1_cap(self):
        with pytest.raises(ValueError):
            CausalAuxChannel.from_array(np.full((2, 8, 1), 1 / 8))

    def test_w2_cap(self):
        with pytest.raises(ValueError):
            CausalAuxChannel.from_array(np.full((2, 1, 5), 1 / 5))

    def test_caps_inclusive(self):
        CausalAuxChannel.from_array(np.full((2, 7, 1), 1 / 7))
        CausalAuxChannel.from_array(np.full((2, 1, 4), 1 / 4))

    def test_distortion_quad_rejects_negative(self):
        with pytest.raises(ValueError):
            DistortionQuad(-0.1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3), st.integers(1, 3))
def test_aux_conditioned_on_x_only(seed, w1, w2):
    rng = np.random.default_rng(seed)
    src = random_source(rng)
    aux = random_aux(rng, 2, w1, w2)
    j = causal_joint(src, aux.q)
    assert cmi_array(j, [3, 4], [1, 2], [0]) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_optimal_beats_random_tables(seed):
    rng = np.random.default_rng(seed)
    src = random_source(rng)
    aux = random_aux(rng)
    best = evaluate_causal(src, aux).achieved.as_array()
    dec = CausalDecoderRuleSet(rng.integers(0, 2, (2, 2)), rng.integers(0, 2, (2, 2)),
                               rng.integers(0, 2, (2, 2, 2)), rng.integers(0, 2, (2, 2, 2)))
    other = evaluate_causal(src, aux, dec).achieved.as_array()
    assert np.all(best <= other + 1e-12)
