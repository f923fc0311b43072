import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from milaed.dsp import (AudioClip, MfccConfig, TooShortError, frame_signal, load_mfcc_config,
                        mfcc, read_wav, write_wav)


def clip(x, rate=16000):
    return AudioClip(np.asarray(x, dtype=np.float64), rate, "c")


def test_frame_count_one_second():
    frames = frame_signal(clip(np.zeros(16000)), 0.02, 0.01)
    assert frames.shape == (99, 320)


def test_single_frame_covers_all_samples():
    x = np.arange(320, dtype=float)
    frames = frame_signal(clip(x), 0.02, 0.01)
    assert frames.shape == (1, 320)
    np.testing.assert_array_equal(frames[0], x)


def test_too_short():
    with pytest.raises(TooShortError):
        frame_signal(clip(np.zeros(319)), 0.02, 0.01)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(320, 20000), hop_ms=st.integers(5, 20))
def test_frame_count_formula(n, hop_ms):
    hop = hop_ms * 16
    frames = frame_signal(clip(np.zeros(n)), 0.02, hop_ms / 1000.0)
    assert frames.shape[0] == (n - 320) // hop + 1


def test_frames_are_contiguous_slices():
    x = np.random.default_rng(0).standard_normal(4000)
    frames = frame_signal(clip(x), 0.02, 0.01)
    for k in (0, 5, frames.shape[0] - 1):
        np.testing.assert_array_equal(frames[k], x[160 * k: 160 * k + 320])


def test_tone_shape_and_finite():
    t = np.arange(16000) / 16000.0
    m = mfcc(clip(np.sin(2 * np.pi * 440 * t)))
    assert m.vectors.shape == (99, 21)
    assert np.isfinite(m.vectors).all()


def test_deterministic():
    x = np.random.default_rng(1).standard_normal(16000)
    a, b = mfcc(clip(x)), mfcc(clip(x.copy()))
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_silence_hits_log_floor():
    m = mfcc(clip(np.zeros(16000)))
    assert np.isfinite(m.vectors).all()
    assert np.ptp(m.vectors[:, 0]) == 0.0


def test_scaling_shifts_only_c0():
    x = np.random.default_rng(2).standard_normal(16000)
    a, b = mfcc(clip(x)).vectors, mfcc(clip(2.0 * x)).vectors
    np.testing.assert_allclose(b[:, 1:], a[:, 1:], atol=1e-9)
    shift = b[:, 0] - a[:, 0]
    np.testing.assert_allclose(shift, shift[0], atol=1e-9)
    assert shift[0] > 0


def test_frame_centers():
    m = mfcc(clip(np.zeros(16000) + 1e-3))
    c = m.frame_centers()
    assert c[0] == pytest.approx(0.01)
    assert c[1] - c[0] == pytest.approx(0.01)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        MfccConfig(n_coeffs=50, n_mels=40)
    p = tmp_path / "mfcc.cfg"
    p.write_text("n_coeffs = 13\npre_emphasis = 0.9\n")
    cfg = load_mfcc_config(p)
    assert cfg.n_coeffs == 13 and cfg.pre_emphasis == 0.9
    p.write_text("n_ceps = 13\n")
    with pytest.raises(KeyError):
        load_mfcc_config(p)


def test_wav_round_trip_and_resample(tmp_path):
    x = 0.1 * np.random.default_rng(3).standard_normal(8000)
    write_wav(tmp_path / "a.wav", AudioClip(x, 8000, "a"))
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == 16000
    assert len(back.samples) == 16000
    assert back.duration == pytest.approx(1.0)


def test_stereo_rejected():
    with pytest.raises(ValueError):
        AudioClip(np.zeros((100, 2)), 16000, "s")
