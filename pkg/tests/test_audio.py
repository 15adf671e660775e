import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genresig.audio import (
    TOKEN_SPAN,
    AudioClip,
    SpectrogramConfig,
    SpectrogramImage,
    compute_spectrogram,
    frame_count,
    resample,
    tokenize,
)
from genresig.errors import ClipTooShort, WrongBinCount

CFG = SpectrogramConfig()


def sine_clip(freq, rate=22050, seconds=2.0, amplitude=0.5):
    t = np.arange(int(rate * seconds)) / rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), rate)


def dominant_bin(samples):
    return int(np.argmax(np.abs(np.fft.rfft(samples))))


class TestResample:
    def test_identity_rate(self):
        clip = sine_clip(440.0)
        out = resample(clip, clip.sample_rate)
        assert np.array_equal(out.samples, clip.samples)

    def test_upsample_doubles_length(self):
        clip = sine_clip(440.0, rate=22050, seconds=1.0)
        out = resample(clip, 44100)
        assert out.samples.size == 2 * clip.samples.size
        assert out.sample_rate == 44100

    def test_downsample_preserves_tone(self):
        # FFT-peak oracle: 440 Hz must stay 440 Hz (within one bin) at 22050
        clip = sine_clip(440.0, rate=44100, seconds=1.0)
        out = resample(clip, 22050)
        peak = dominant_bin(out.samples)
        expected = 440.0 * out.samples.size / 22050
        assert abs(peak - expected) <= 1.0


class TestSpectrogram:
    def test_gtzan_geometry(self):
        # floor((661500 - 432) / 1994) + 1
        assert frame_count(661500, CFG) == 332
        assert CFG.bins == 217

    def test_frame_count_matches_direct_loop(self):
        for n in (432, 1000, 661500, 662000):
            count, start = 0, 0
            while start + CFG.fft_size <= n:
                count += 1
                start += CFG.hop
            assert frame_count(n, CFG) == count

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=432, max_value=80000))
    def test_frame_count_property(self, n):
        count, start = 0, 0
        while start + CFG.fft_size <= n:
            count += 1
            start += CFG.hop
        clip = AudioClip(np.random.default_rng(n).uniform(-0.5, 0.5, n), 22050)
        assert compute_spectrogram(clip, CFG).frames == count

    def test_silence_normalizes_to_zero(self):
        clip = AudioClip(np.zeros(22050), 22050)
        image = compute_spectrogram(clip, CFG)
        assert np.all(image.values == 0.0)

    def test_sine_at_bin_center(self):
        k = 40
        freq = k * CFG.target_rate / CFG.fft_size
        image = compute_spectrogram(sine_clip(freq), CFG)
        assert np.all(image.values.argmax(axis=0) == k)

    def test_range_and_extremes(self):
        rng = np.random.default_rng(3)
        clip = AudioClip(rng.uniform(-0.9, 0.9, 30000), 22050)
        image = compute_spectrogram(clip, CFG)
        assert image.values.min() == 0.0
        assert image.values.max() == 1.0
        assert np.all((image.values >= 0.0) & (image.values <= 1.0))

    def test_amplitude_scale_invariance(self):
        rng = np.random.default_rng(4)
        samples = rng.uniform(-0.4, 0.4, 30000)
        a = compute_spectrogram(AudioClip(samples, 22050), CFG)
        b = compute_spectrogram(AudioClip(0.25 * samples, 22050), CFG)
        # uniform dB shift cancels in the per-track clamp + min-max
        assert np.allclose(a.values, b.values, atol=1e-9)

    def test_too_short(self):
        with pytest.raises(ClipTooShort):
            compute_spectrogram(AudioClip(np.ones(100), 22050), CFG)

    def test_rejects_wrong_rate(self):
        with pytest.raises(ValueError):
            compute_spectrogram(AudioClip(np.zeros(50000), 44100), CFG)


class TestTokenize:
    def _image(self, frames, fill=None):
        rng = np.random.default_rng(7)
        values = rng.random((217, frames)) if fill is None else np.full((217, frames), fill)
        return SpectrogramImage(values=values, frame_duration=CFG.frame_duration)

    def test_gtzan_image_gives_ten_padded_tokens(self):
        image = self._image(332)
        seq = tokenize(image)
        assert seq.tokens.shape == (10, 217, 45)
        # last token covers frames [297, 342): 10 columns of padding
        assert np.all(seq.tokens[9][:, -10:] == 0.0)
        assert np.any(seq.tokens[9][:, :-10] != 0.0)
        for i in range(10):
            start = i * 33
            width = min(45, 332 - start)
            assert np.array_equal(seq.tokens[i][:, :width], image.values[:, start:start + width])

    def test_overlap_is_twelve_frames(self):
        seq = tokenize(self._image(342))
        for i in range(9):
            assert np.array_equal(seq.tokens[i][:, 33:], seq.tokens[i + 1][:, :12])

    def test_exact_fit_needs_no_padding(self):
        seq = tokenize(self._image(TOKEN_SPAN, fill=1.0))
        assert np.all(seq.tokens == 1.0)

    def test_paper_timing(self):
        seq = tokenize(self._image(332))
        np.testing.assert_allclose(seq.start_times, np.arange(10) * 33 * CFG.frame_duration)
        # first token ~0-4 s, second starts ~3 s, overlap ~1 s
        assert abs(seq.end_times[0] - 4.07) < 0.01
        assert abs(seq.start_times[1] - 2.98) < 0.01
        overlap = seq.end_times[0] - seq.start_times[1]
        assert 0.9 < overlap < 1.2

    def test_wrong_bin_count(self):
        image = SpectrogramImage(values=np.zeros((100, 400)), frame_duration=0.1)
        with pytest.raises(WrongBinCount):
            tokenize(image)


def test_pipeline_shapes_for_thirty_second_clip():
    rng = np.random.default_rng(9)
    clip = AudioClip(rng.uniform(-0.8, 0.8, 661500), 22050)
    seq = tokenize(compute_spectrogram(clip, CFG))
    assert seq.tokens.shape == (10, 217, 45)
