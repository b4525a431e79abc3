import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langinv.model import (
    ChannelSpec,
    ForwardModel,
    apply_forward,
    complex_to_real,
    complex_to_real_vector,
    exponential_correlation,
    load_channel_ensemble,
    make_constellation,
    psd_sqrt,
    real_to_complex,
    real_to_complex_vector,
    sample_channel,
    save_channel_ensemble,
    sigma0_from_snr,
)


def _assert_close(a, b, rtol=1e-12, atol=1e-12):
    np.testing.assert_allclose(a, b, rtol=rtol, atol=atol)


class TestConstellation:
    def test_qpsk_points(self):
        c = make_constellation("QPSK")
        _assert_close(c.points, np.array([-1.0, 1.0]) / np.sqrt(2.0))
        assert c.energy == 1.0

    def test_qam16_points(self):
        c = make_constellation("QAM16")
        _assert_close(c.points, np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0))

    def test_unit_complex_energy(self):
        # average |a + ib|^2 over the full complex grid must be 1
        for name in ("QPSK", "QAM16", "QAM64"):
            pts = make_constellation(name).points
            grid = pts[:, None] + 1j * pts[None, :]
            _assert_close(np.mean(np.abs(grid) ** 2), 1.0)

    def test_per_dim_energy_is_half(self):
        c = make_constellation("QAM64")
        _assert_close(c.per_dim_energy(), 0.5)

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            make_constellation("PAM3")


class TestComplexRealLift:
    def test_round_trip_small(self):
        hbar = np.array([[1 + 2j, 3 - 1j], [0.5j, -2 + 0.25j]])
        ybar = np.array([1 - 1j, 2 + 3j])
        h, y = complex_to_real(hbar, ybar)
        hb2, yb2 = real_to_complex(h, y)
        _assert_close(hb2, hbar)
        _assert_close(yb2, ybar)

    def test_block_layout(self):
        hbar = np.array([[1 + 2j]])
        h = complex_to_real(hbar)
        _assert_close(h, np.array([[1.0, -2.0], [2.0, 1.0]]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_multiplication_commutes_with_lift(self, m, n, seed):
        # the real block form must reproduce complex matrix-vector products
        rng = np.random.default_rng(seed)
        hbar = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        xbar = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        h = complex_to_real(hbar)
        x = complex_to_real_vector(xbar)
        _assert_close(real_to_complex_vector(h @ x), hbar @ xbar)

    def test_vector_round_trip(self):
        xbar = np.array([1 + 5j, -2j, 3.5])
        _assert_close(real_to_complex_vector(complex_to_real_vector(xbar)), xbar)

    def test_malformed_block_rejected(self):
        bad = np.arange(16.0).reshape(4, 4)
        with pytest.raises(ValueError):
            real_to_complex(bad)


class TestCorrelation:
    def test_entries(self):
        r = exponential_correlation(4, 0.6)
        idx = np.arange(4)
        _assert_close(r, 0.6 ** np.abs(idx[:, None] - idx[None, :]))

    def test_rho_zero_identity(self):
        _assert_close(exponential_correlation(3, 0.0), np.eye(3))

    def test_psd_sqrt_squares_back(self):
        r = exponential_correlation(6, 0.9)
        s = psd_sqrt(r)
        _assert_close(s @ s, r, rtol=1e-10)
        _assert_close(s, s.T, rtol=1e-10)

    def test_psd_sqrt_clamps_round_off(self):
        # eigenvalue -1e-13 is round-off scale and must clamp to zero
        a = np.diag([1.0, -1e-13])
        s = psd_sqrt(a)
        _assert_close(s, np.diag([1.0, 0.0]))

    def test_psd_sqrt_rejects_indefinite(self):
        with pytest.raises(ValueError):
            psd_sqrt(np.diag([1.0, -0.5]))


class TestChannel:
    def test_iid_second_moment(self):
        spec = ChannelSpec(n_r=4, n_u=3, rho=0.0)
        rng = np.random.default_rng(7)
        acc = np.zeros((4, 4), dtype=complex)
        n = 4000
        for _ in range(n):
            h = sample_channel(spec, rng)
            acc += h @ h.conj().T
        _assert_close(acc.real / (n * spec.n_u), np.eye(4), rtol=0, atol=0.06)

    def test_kronecker_receive_moment(self):
        # E[H H^H] / n_u must reproduce the receive correlation matrix
        spec = ChannelSpec(n_r=4, n_u=8, rho=0.6)
        rng = np.random.default_rng(11)
        acc = np.zeros((4, 4), dtype=complex)
        n = 6000
        for _ in range(n):
            h = sample_channel(spec, rng)
            acc += h @ h.conj().T
        _assert_close(acc.real / (n * spec.n_u),
                      exponential_correlation(4, 0.6), rtol=0, atol=0.06)
        assert np.max(np.abs(acc.imag)) / (n * spec.n_u) < 0.06

    def test_unit_entry_variance_with_correlation(self):
        spec = ChannelSpec(n_r=3, n_u=3, rho=0.8)
        rng = np.random.default_rng(3)
        sq = np.zeros((3, 3))
        n = 8000
        for _ in range(n):
            h = sample_channel(spec, rng)
            sq += np.abs(h) ** 2
        _assert_close(sq / n, np.ones((3, 3)), rtol=0, atol=0.08)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            ChannelSpec(n_r=0, n_u=2)
        with pytest.raises(ValueError):
            ChannelSpec(n_r=2, n_u=2, rho=1.0)


class TestSigma0:
    def test_single_antenna_unit_snr(self):
        spec = ChannelSpec(n_r=1, n_u=1)
        c = make_constellation("QPSK")
        # complex noise variance 1 means per-real std 1/sqrt(2)
        _assert_close(sigma0_from_snr(1.0, spec, c), 1.0 / np.sqrt(2.0))

    def test_monte_carlo_snr(self):
        spec = ChannelSpec(n_r=8, n_u=4, rho=0.6)
        c = make_constellation("QAM16")
        snr = 10.0 ** (12.0 / 10.0)
        sigma0 = sigma0_from_snr(snr, spec, c)
        rng = np.random.default_rng(5)
        sig = noise = 0.0
        for _ in range(3000):
            hbar = sample_channel(spec, rng)
            xbar = rng.choice(c.points, 4) + 1j * rng.choice(c.points, 4)
            sig += np.sum(np.abs(hbar @ xbar) ** 2)
            noise += np.sum(rng.standard_normal(16) ** 2 * sigma0**2)
        assert abs(sig / noise - snr) / snr < 0.1


class TestForwardModel:
    def test_svd_reconstruction_and_pairing(self):
        rng = np.random.default_rng(2)
        spec = ChannelSpec(n_r=4, n_u=3, rho=0.6)
        hbar = sample_channel(spec, rng)
        h = complex_to_real(hbar)
        fm = ForwardModel(h, np.zeros(8), sigma0=0.1)
        k = len(fm.s)
        assert k == 6
        _assert_close(fm.u[:, :k] @ np.diag(fm.s) @ fm.v.T[:k], h, atol=1e-10)
        # each complex singular value appears twice in the real lift
        sc = np.linalg.svd(hbar, compute_uv=False)
        _assert_close(np.sort(fm.s), np.sort(np.repeat(sc, 2)), rtol=1e-10)

    def test_spectral_observation(self):
        rng = np.random.default_rng(9)
        h = rng.standard_normal((6, 4))
        y = rng.standard_normal(6)
        fm = ForwardModel(h, y, sigma0=0.5)
        _assert_close(fm.spectral_observation(), fm.u.T @ y)

    def test_with_observation_shares_svd(self):
        rng = np.random.default_rng(1)
        fm = ForwardModel(rng.standard_normal((4, 2)), np.zeros(4), 0.1)
        fm2 = fm.with_observation(np.ones(4))
        assert fm2.u is fm.u and fm2.s is fm.s and fm2.v is fm.v
        _assert_close(fm2.y, np.ones(4))

    def test_apply_forward(self):
        h = np.array([[1.0, 2.0], [0.0, 1.0]])
        fm = ForwardModel(h, np.zeros(2), sigma0=0.0)
        _assert_close(apply_forward(fm, np.array([1.0, 1.0])), [3.0, 1.0])
        batch = np.array([[1.0, 0.0], [0.0, 2.0]])
        _assert_close(apply_forward(fm, batch), [[1.0, 0.0], [4.0, 2.0]])

    def test_apply_forward_noise_level(self):
        h = np.eye(2)
        fm = ForwardModel(h, np.zeros(2), sigma0=2.0)
        rng = np.random.default_rng(0)
        draws = np.array([apply_forward(fm, np.zeros(2), rng) for _ in range(4000)])
        _assert_close(np.var(draws, axis=0), [4.0, 4.0], rtol=0.1)

    def test_sigma0_validation(self):
        with pytest.raises(ValueError):
            ForwardModel(np.eye(2), np.zeros(2), sigma0=-1.0)


class TestEnsembleIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        spec = ChannelSpec(n_r=3, n_u=2, rho=0.3)
        chans = [sample_channel(spec, rng) for _ in range(5)]
        path = tmp_path / "ens.bin"
        save_channel_ensemble(path, chans)
        back = load_channel_ensemble(path, 3, 2)
        assert len(back) == 5
        for a, b in zip(chans, back):
            _assert_close(a, b)

    def test_interleaved_layout(self, tmp_path):
        h = np.array([[1 + 2j, 3 + 4j]])
        path = tmp_path / "one.bin"
        save_channel_ensemble(path, [h])
        raw = np.fromfile(path, dtype="<f8")
        _assert_close(raw, [1.0, 2.0, 3.0, 4.0])

    def test_shape_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_channel_ensemble(tmp_path / "x.bin",
                                  [np.eye(2), np.eye(3)])

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        np.arange(3.0).tofile(path)
        with pytest.raises(ValueError):
            load_channel_ensemble(path, 1, 1)
