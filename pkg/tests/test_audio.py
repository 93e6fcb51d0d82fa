"""Front-end tests: framing, spectrogram, normalization, noise, WAV/CSV I/O."""

import numpy as np
import pytest

from freqattn.audio import (
    NoiseSpec,
    SpectrogramConfig,
    Waveform,
    add_noise,
    add_noise_components,
    frame_signal,
    measured_snr_db,
    normalize_spectrogram,
    read_spectrogram_csv,
    read_wav,
    spectrogram,
    write_spectrogram_csv,
    write_wav,
)

from oracles import rel_err, spectrogram_direct


def sine(freq_hz=1000.0, duration_s=1.0, sr=16000, amp=0.4):
    t = np.arange(int(sr * duration_s)) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq_hz * t), sr)


def multitone(duration_s=1.0, sr=16000):
    t = np.arange(int(sr * duration_s)) / sr
    x = sum(
        a * np.sin(2 * np.pi * f * t)
        for a, f in [(0.3, 220.0), (0.2, 880.0), (0.1, 2500.0), (0.05, 5200.0)]
    )
    return Waveform(x, sr)


class TestFraming:
    def test_one_second_frame_count(self):
        # enumeration oracle: count window placements explicitly
        frames = frame_signal(sine(duration_s=1.0), 25.0, 10.0)
        n, win, hop = 16000, 400, 160
        expected = len([s for s in range(0, n, hop) if s + win <= n])
        assert expected == 98
        assert frames.shape == (98, 400)

    def test_exact_window_gives_one_frame(self):
        w = Waveform(np.ones(400) * 0.1, 16000)
        frames = frame_signal(w, 25.0, 10.0)
        assert frames.shape == (1, 400)

    def test_ms_to_samples(self):
        frames = frame_signal(sine(), 25.0, 10.0)
        assert frames.shape[1] == 400
        w = sine()
        f2 = frame_signal(w, 25.0, 10.0)
        # frame k starts at k*hop: spot-check against the raw samples
        assert np.array_equal(f2[3], w.samples[3 * 160 : 3 * 160 + 400])

    def test_too_short_errors(self):
        w = Waveform(np.ones(399) * 0.1, 16000)
        with pytest.raises(ValueError, match="utterance too short"):
            frame_signal(w, 25.0, 10.0)

    def test_partial_trailing_frame_dropped(self):
        w = Waveform(np.ones(400 + 159) * 0.1, 16000)
        assert frame_signal(w, 25.0, 10.0).shape[0] == 1
        w2 = Waveform(np.ones(400 + 160) * 0.1, 16000)
        assert frame_signal(w2, 25.0, 10.0).shape[0] == 2


class TestSpectrogram:
    def test_bin_count_257(self):
        s = spectrogram(sine())
        assert s.bin_count == 257
        assert s.frame_count == 98

    def test_sine_peak_bin(self):
        s = spectrogram(sine(1000.0))
        profile = s.values.sum(axis=1)
        peak = int(profile.argmax())
        assert peak == round(1000 * 512 / 16000) == 32
        # neighbors are dominated by the peak
        assert profile[32] > 2 * profile[30]
        assert profile[32] > 2 * profile[34]

    def test_matches_direct_dft_oracle(self):
        w = multitone(duration_s=0.12)
        s = spectrogram(w)
        ref = spectrogram_direct(w.samples, w.sample_rate, 25.0, 10.0, 512)
        assert ref.shape == s.values.shape
        err = np.linalg.norm(s.values - ref) / np.linalg.norm(ref)
        assert err < 1e-6

    def test_zero_signal_zero_spectrogram(self):
        w = Waveform(np.zeros(4000), 16000)
        s = spectrogram(w)
        assert np.all(s.values == 0.0)

    def test_deterministic(self):
        w = multitone()
        a = spectrogram(w).values
        b = spectrogram(w).values
        assert np.array_equal(a, b)

    def test_parseval_per_frame(self):
        w = multitone(duration_s=0.2)
        frames = frame_signal(w, 25.0, 10.0)
        windowed = frames * np.hamming(400)
        for row in windowed:
            full = np.fft.fft(row, 512)
            lhs = np.sum(np.abs(full) ** 2)
            rhs = 512 * np.sum(row**2)
            assert abs(lhs - rhs) / rhs < 1e-6

    def test_nfft_smaller_than_window_rejected(self):
        with pytest.raises(ValueError, match="nfft"):
            spectrogram(sine(), SpectrogramConfig(nfft=256))


class TestNormalize:
    def test_two_point_row(self):
        s = spectrogram(sine(duration_s=0.2))
        mat = np.tile(np.array([[1.0, 3.0]]), (3, 1))
        norm = normalize_spectrogram(
            type(s)(values=mat, sample_rate=16000, frame_len_ms=25, hop_ms=10, nfft=512)
        )
        assert np.array_equal(norm[0], np.array([-1.0, 1.0]))

    def test_constant_row_zeroed(self):
        s = spectrogram(sine(duration_s=0.2))
        mat = np.full((2, 3), 5.0)
        norm = normalize_spectrogram(
            type(s)(values=mat, sample_rate=16000, frame_len_ms=25, hop_ms=10, nfft=512)
        )
        assert np.array_equal(norm, np.zeros((2, 3)))

    def test_random_matrix_moments(self):
        rng = np.random.default_rng(7)
        mat = np.abs(rng.normal(size=(257, 98))) + 0.1
        s = spectrogram(sine())
        norm = normalize_spectrogram(
            type(s)(values=mat, sample_rate=16000, frame_len_ms=25, hop_ms=10, nfft=512)
        )
        assert np.all(np.abs(norm.mean(axis=1)) < 1e-9)
        assert np.all(np.abs(norm.var(axis=1) - 1.0) < 1e-6)


class TestNoise:
    @pytest.mark.parametrize("dist", ["gaussian", "uniform"])
    @pytest.mark.parametrize("snr", [20.0, 50.0, 100.0])
    def test_exact_snr(self, dist, snr):
        w = multitone()
        noisy, noise = add_noise_components(w, NoiseSpec(dist, snr), seed=3)
        assert abs(measured_snr_db(w.samples, noise) - snr) < 1e-9
        assert noisy.samples.shape == w.samples.shape

    def test_100db_nearly_identity(self):
        w = multitone()
        noisy = add_noise(w, NoiseSpec("gaussian", 100.0), seed=1)
        rel = np.linalg.norm(noisy.samples - w.samples) / np.linalg.norm(w.samples)
        # the noise norm is exactly 1e-5 of the signal norm; allow rounding
        assert rel <= 1e-5 * (1.0 + 1e-9)

    def test_silent_signal_rejected(self):
        w = Waveform(np.zeros(1000), 16000)
        with pytest.raises(ValueError, match="silent"):
            add_noise(w, NoiseSpec("gaussian", 20.0), seed=0)

    def test_seeds_differ_but_snr_matches(self):
        w = multitone()
        spec = NoiseSpec("uniform", 20.0)
        n1 = add_noise_components(w, spec, seed=1)[1]
        n2 = add_noise_components(w, spec, seed=2)[1]
        assert not np.array_equal(n1, n2)
        assert abs(measured_snr_db(w.samples, n1) - measured_snr_db(w.samples, n2)) < 1e-9

    def test_100db_spectrogram_close(self):
        w = multitone()
        clean = spectrogram(w).values
        noisy = spectrogram(add_noise(w, NoiseSpec("gaussian", 100.0), seed=5)).values
        assert np.linalg.norm(noisy - clean) / np.linalg.norm(clean) < 1e-3

    def test_bad_distribution_rejected(self):
        with pytest.raises(ValueError, match="distribution"):
            NoiseSpec("laplace", 20.0)


class TestWavIO:
    def test_round_trip(self, tmp_path):
        w = multitone(duration_s=0.6)
        path = tmp_path / "x.wav"
        write_wav(path, w)
        back = read_wav(path)
        assert back.sample_rate == w.sample_rate
        # stored values are the PCM16 quantization of the float input
        assert np.max(np.abs(back.samples - w.samples)) <= 1.0 / 32768.0
        write_wav(tmp_path / "y.wav", back)
        again = read_wav(tmp_path / "y.wav")
        assert np.array_equal(again.samples, back.samples)

    def test_rejects_stereo(self, tmp_path):
        import wave

        path = tmp_path / "stereo.wav"
        with wave.open(str(path), "wb") as f:
            f.setnchannels(2)
            f.setsampwidth(2)
            f.setframerate(16000)
            f.writeframes(np.zeros(100, dtype="<i2").tobytes())
        with pytest.raises(ValueError, match="mono"):
            read_wav(path)

    def test_rejects_8bit(self, tmp_path):
        import wave

        path = tmp_path / "pcm8.wav"
        with wave.open(str(path), "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(1)
            f.setframerate(16000)
            f.writeframes(bytes(100))
        with pytest.raises(ValueError, match="16-bit"):
            read_wav(path)


class TestSpectrogramCsv:
    def test_round_trip_9_digits(self, tmp_path):
        rng = np.random.default_rng(0)
        mat = np.abs(rng.normal(size=(5, 7)))
        path = tmp_path / "spec.csv"
        write_spectrogram_csv(path, mat)
        back = read_spectrogram_csv(path)
        assert back.shape == mat.shape
        assert rel_err(back, mat) < 1e-8

    def test_row_major_dc_first(self, tmp_path):
        mat = np.arange(6, dtype=np.float64).reshape(2, 3)
        path = tmp_path / "spec.csv"
        write_spectrogram_csv(path, mat)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "0,1,2"
        assert lines[1] == "3,4,5"
