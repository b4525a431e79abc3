import numpy as np
import pytest

from langinv.detect import (
    DetectionResult,
    enumerate_symbol_vectors,
    ml_oracle,
    ml_oracle_batch,
    mmse_detect,
    mmse_detect_batch,
    project_constellation,
    select_candidate,
    symbol_error_rate,
    vblast_detect,
    vblast_detect_batch,
    _vblast_order,
)
from langinv.model import ChannelSpec, ForwardModel, complex_to_real, \
    make_constellation, sample_channel, sigma0_from_snr

QPSK = make_constellation("QPSK")
QAM16 = make_constellation("QAM16")
A = 1.0 / np.sqrt(10.0)  # QAM16 unit level


def _random_symbols(rng, n_rows, n_u, constellation):
    return rng.choice(constellation.points, size=(n_rows, 2 * n_u))


class TestProjection:
    def test_values(self):
        x = np.array([0.2, -0.5, 1.4, -2.0])
        np.testing.assert_allclose(
            project_constellation(x, QAM16), [A, -A, 3 * A, -3 * A])

    def test_midpoint_goes_low(self):
        # dyadic levels make the midpoints exact float ties
        from langinv.model import Constellation
        dyadic = Constellation("test", np.array([-0.75, -0.25, 0.25, 0.75]),
                               energy=0.625)
        got = project_constellation(np.array([0.0, 0.5, -0.5]), dyadic)
        np.testing.assert_array_equal(got, [-0.25, 0.25, -0.75])

    def test_idempotent(self):
        pts = QAM16.points
        np.testing.assert_allclose(project_constellation(pts, QAM16), pts)

    def test_batch_shape(self):
        x = np.zeros((3, 4))
        assert project_constellation(x, QPSK).shape == (3, 4)


class TestSelectCandidate:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((6, 4))
        y = rng.standard_normal(6)
        fm = ForwardModel(h, y, 0.1)
        cands = rng.standard_normal((8, 4))
        res = select_candidate(cands, fm)
        resids = [np.linalg.norm(y - h @ c) for c in cands]
        assert res.candidates_used == 8
        np.testing.assert_allclose(res.residual, min(resids))
        np.testing.assert_array_equal(res.xhat, cands[int(np.argmin(resids))])

    def test_single_candidate(self):
        fm = ForwardModel(np.eye(2), np.array([1.0, 0.0]), 0.1)
        res = select_candidate(np.array([[0.5, 0.5]]), fm)
        np.testing.assert_allclose(res.residual, np.sqrt(0.5))

    def test_empty_rejected(self):
        fm = ForwardModel(np.eye(2), np.zeros(2), 0.1)
        with pytest.raises(ValueError):
            select_candidate(np.empty((0, 2)), fm)


class TestMMSE:
    def test_closed_form_small(self):
        h = np.array([[1.0, 0.2], [0.0, 1.0], [0.3, 0.0]])
        y = np.array([0.5, -0.2, 0.1])
        sigma0 = 0.4
        # oracle: direct Wiener solve with noise-to-signal 0.4^2 / 0.5
        w = np.linalg.inv(h.T @ h + (0.16 / 0.5) * np.eye(2)) @ h.T
        soft = w @ y
        want = project_constellation(soft, QAM16)
        got = mmse_detect_batch(h, sigma0, y, QAM16)
        np.testing.assert_array_equal(got[0], want)

    def test_noiseless_identity_recovers(self):
        rng = np.random.default_rng(1)
        truth = _random_symbols(rng, 5, 2, QAM16)
        got = mmse_detect_batch(np.eye(4), 0.0, truth, QAM16)
        np.testing.assert_array_equal(got, truth)

    def test_high_snr_random_channel(self):
        rng = np.random.default_rng(2)
        hbar = sample_channel(ChannelSpec(4, 2), rng)
        h = complex_to_real(hbar)
        truth = _random_symbols(rng, 50, 2, QAM16)
        ys = truth @ h.T + 1e-4 * rng.standard_normal((50, 8))
        got = mmse_detect_batch(h, 1e-4, ys, QAM16)
        assert symbol_error_rate(got, truth) == 0.0

    def test_single_matches_batch(self):
        rng = np.random.default_rng(3)
        h = rng.standard_normal((6, 4))
        y = rng.standard_normal(6)
        fm = ForwardModel(h, y, 0.7)
        res = mmse_detect(fm, QAM16)
        assert isinstance(res, DetectionResult)
        np.testing.assert_array_equal(
            res.xhat, mmse_detect_batch(h, 0.7, y, QAM16)[0])


class TestVBLAST:
    def test_order_prefers_strong_stream(self):
        h = np.array([[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        order, rows = _vblast_order(h)
        assert order == [0, 1]
        np.testing.assert_allclose(rows[0], [1 / 3, 0.0, 0.0], atol=1e-12)

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(4)
        hbar = sample_channel(ChannelSpec(5, 3), rng)
        h = complex_to_real(hbar)
        truth = _random_symbols(rng, 20, 3, QAM16)
        got = vblast_detect_batch(h, truth @ h.T, QAM16)
        np.testing.assert_array_equal(got, truth)

    def test_single_stream_is_scalar_ml(self):
        h = np.array([[1.2], [0.4]])
        for target in QAM16.points:
            y = h[:, 0] * (target + 0.05)
            got = vblast_detect_batch(h, y, QAM16)[0, 0]
            # scalar ML: projection of the matched-filter estimate
            mf = h[:, 0] @ y / (h[:, 0] @ h[:, 0])
            assert got == project_constellation(np.array([mf]), QAM16)[0]

    def test_rank_deficient_raises(self):
        h = np.ones((4, 2))
        with pytest.raises(ValueError):
            vblast_detect_batch(h, np.ones(4), QAM16)

    def test_wide_channel_rejected(self):
        with pytest.raises(ValueError):
            vblast_detect_batch(np.ones((1, 2)), np.ones(1), QAM16)

    def test_single_interface(self):
        rng = np.random.default_rng(5)
        h = rng.standard_normal((6, 2))
        y = rng.standard_normal(6)
        fm = ForwardModel(h, y, 0.2)
        res = vblast_detect(fm, QPSK)
        np.testing.assert_array_equal(
            res.xhat, vblast_detect_batch(h, y, QPSK)[0])


class TestMLOracle:
    def test_enumeration_against_meshgrid(self):
        cand = enumerate_symbol_vectors(2, QPSK)
        assert cand.shape == (16, 4)
        # independent enumeration: meshgrid over the four real coordinates
        pts = QPSK.points
        grids = np.meshgrid(pts, pts, pts, pts, indexing="ij")
        alt = np.stack([g.ravel() for g in grids], axis=1)
        assert {tuple(r) for r in cand} == {tuple(r) for r in alt}

    def test_matches_independent_search(self):
        rng = np.random.default_rng(6)
        hbar = sample_channel(ChannelSpec(4, 2), rng)
        h = complex_to_real(hbar)
        truth = _random_symbols(rng, 30, 2, QAM16)
        ys = truth @ h.T + 0.3 * rng.standard_normal((30, 8))
        got = ml_oracle_batch(h, ys, QAM16)
        cand = enumerate_symbol_vectors(2, QAM16)
        for i in range(30):
            resids = np.linalg.norm(ys[i] - cand @ h.T, axis=1)
            np.testing.assert_array_equal(got[i], cand[int(np.argmin(resids))])

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(7)
        h = complex_to_real(sample_channel(ChannelSpec(3, 2), rng))
        truth = _random_symbols(rng, 10, 2, QPSK)
        got = ml_oracle_batch(h, truth @ h.T, QPSK)
        np.testing.assert_array_equal(got, truth)

    def test_candidate_cap(self):
        with pytest.raises(ValueError):
            enumerate_symbol_vectors(5, QAM16)  # 16^5 > 1e6
        assert enumerate_symbol_vectors(4, QAM16).shape[0] == 16**4

    def test_single_interface_counts_candidates(self):
        rng = np.random.default_rng(8)
        h = complex_to_real(sample_channel(ChannelSpec(3, 2), rng))
        fm = ForwardModel(h, rng.standard_normal(6), 0.5)
        res = ml_oracle(fm, QAM16)
        assert res.candidates_used == 256


class TestSymbolErrorRate:
    def test_counting(self):
        truth = np.array([[A, 3 * A, -A, -3 * A]])  # two complex symbols
        same = truth.copy()
        assert symbol_error_rate(same, truth) == 0.0
        re_err = truth.copy()
        re_err[0, 0] = -A  # real half of symbol 0
        assert symbol_error_rate(re_err, truth) == 0.5
        both_halves = truth.copy()
        both_halves[0, 0] = -A
        both_halves[0, 2] = A  # imaginary half of the same symbol
        assert symbol_error_rate(both_halves, truth) == 0.5
        two_syms = truth.copy()
        two_syms[0, 0] = -A
        two_syms[0, 3] = A  # second symbol's imaginary half
        assert symbol_error_rate(two_syms, truth) == 1.0

    def test_rows_average(self):
        truth = np.tile(np.array([[A, -A]]), (4, 1))
        dec = truth.copy()
        dec[0, 0] = -A
        assert symbol_error_rate(dec, truth) == 0.25

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            symbol_error_rate(np.zeros((1, 2)), np.zeros((1, 4)))


def test_sigma0_consistency_on_real_lift():
    # the per-real-dimension sigma0 feeds the real model directly; the SNR
    # definition averages over the channel ensemble, so draw many channels
    rng = np.random.default_rng(9)
    spec = ChannelSpec(4, 2)
    sigma0 = sigma0_from_snr(10.0, spec, QAM16)
    sig = noise = 0.0
    for _ in range(400):
        h = complex_to_real(sample_channel(spec, rng))
        truth = _random_symbols(rng, 10, 2, QAM16)
        sig += np.sum((truth @ h.T) ** 2)
        noise += np.sum((sigma0 * rng.standard_normal((10, 8))) ** 2)
    assert abs(sig / noise - 10.0) < 0.8
