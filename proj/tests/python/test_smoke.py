"""Smoke tests of the python bindings: a miniature closed loop plus the
tomography primitives."""

import math

import numpy as np
import pytest

chronon = pytest.importorskip("_chronon")


def test_stream_round_trip(tmp_path):
    channels = np.array([0, 1, 0, 2], dtype=np.uint16)
    times = np.array([400, 100, 200, 300], dtype=np.uint64)
    stream = chronon.TagStream(channels, times, 3)
    assert len(stream) == 4
    path = tmp_path / "tags.qtt"
    chronon.write_stream(stream, path)
    back = chronon.read_stream(path)
    ch, t = back.arrays()
    assert list(t) == [100, 200, 300, 400]
    assert list(ch) == [1, 0, 2, 0]
    assert back.count_in_channel(0) == 2


def test_correlate_matches_brute_force():
    rng = np.random.default_rng(7)
    a = np.sort(rng.integers(0, 100_000, 400).astype(np.uint64))
    b = np.sort(rng.integers(0, 100_000, 400).astype(np.uint64))
    h = chronon.correlate(a, b, -5_000, 5_000, 250)
    d = a.astype(np.int64)[:, None] - b.astype(np.int64)[None, :]
    d = d[(d >= -5_000) & (d < 5_000)]
    expected, _ = np.histogram(d, bins=40, range=(-5_000, 5_000))
    assert list(h.counts) == list(expected)
    g2 = chronon.g2_normalize(h)
    assert g2[0] == h.counts[0] / math.sqrt(len(a) * len(b))


def test_closed_loop_offset_recovery():
    src = chronon.SourceParams()
    src.pair_prob = 3e-4
    link = chronon.LinkParams()
    link.one_way_delay_ps = 96_393_880
    clk = chronon.ClockParams()
    clk.offset_s = 0.123456789
    clk.set_uniform_jitter(7.0)
    meas = chronon.MeasurementConfig.unpolarized()
    stream, truth = chronon.simulate_run(src, link, clk, meas, 4.0, 11)

    t_xx = stream.channel_times(0)
    t_sub = stream.channel_times(1)
    t_ret = stream.channel_times(2)
    assert truth.pairs_emitted > 50_000

    peak1 = chronon.find_peak(t_sub, t_xx, -200_000_000_000, 200_000_000_000, 16)
    peak2 = chronon.find_peak(t_ret, t_xx, -1_000_000_000, 1_000_000_000, 16)

    def hist_around(a, b, center):
        return chronon.correlate(a, b, center - 9_600, center + 9_600, 16)

    fit1 = chronon.fit_cascade(hist_around(t_sub, t_xx, peak1.tau_peak_ps))
    fit2 = chronon.fit_cascade(hist_around(t_ret, t_xx, peak2.tau_peak_ps))
    assert fit1.converged and fit2.converged

    kappa = chronon.cascade_shape_kappa_ps(fit1, fit2)
    report = chronon.compute_sync(fit1, fit2, 0, kappa)
    assert abs(report.compensated_fine_ps - truth.offset_total_ps) < 30.0

    length_m = chronon.path_length_from_roundtrip_m(192.576560e6, 1.468)
    assert abs(length_m - 19_663.8) < 0.5


def test_tomography_primitives():
    labels = chronon.default_tomography_labels()
    assert len(labels) == 16

    phi = chronon.phi_plus()
    p = 0.8
    rho_w = p * np.outer(phi, phi.conj()) + (1 - p) * np.eye(4) / 4
    counts = [
        (label, int(round(1e5 * chronon.setting_probability(rho_w, label))))
        for label in labels
    ]
    rho = chronon.mle_reconstruct(counts)
    assert abs(chronon.fidelity(rho, phi) - (3 * p + 1) / 4) < 0.01
    assert abs(chronon.concurrence(rho) - (3 * p - 1) / 2) < 0.02

    corr = chronon.WaveplateCorrection()
    corr.theta_rad = 0.4545
    corr.phi_rad = -0.6763
    corr.target = chronon.WaveplateCorrection.Target.Both
    rotated = chronon.apply_waveplate(rho, corr)
    assert abs(chronon.concurrence(rotated) - chronon.concurrence(rho)) < 1e-9


def test_error_mapping():
    with pytest.raises(RuntimeError):
        chronon.read_stream("/nonexistent/file.qtt")
