"""Log-mel front end for voice input.

Frames are Hann-windowed (25 ms, 10 ms hop by default), zero-padded to
``n_fft``, and mapped to power spectra. A triangular HTK-mel filterbank then
gives 64 bins, and the output is ``log(energy + floor)``. Frames never extend
past the signal: ``1 + (len - window) // hop`` frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import DimensionError, FormatError, ValidationError

N_MELS = 64


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValidationError("waveform is empty")
        if not np.all(np.isfinite(x)):
            raise ValidationError("waveform samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValidationError("sample rate must be positive")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    frames: np.ndarray
    frame_duration: float
    hop: float

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != N_MELS:
            raise DimensionError(f"mel spectrogram must be (T, {N_MELS}), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValidationError("mel spectrogram must be finite")
        object.__setattr__(self, "frames", f)


@dataclass(frozen=True)
class MelConfig:
    window: float = 0.025
    hop: float = 0.010
    n_fft: int = 512
    n_mels: int = N_MELS
    fmin: float = 0.0
    fmax: float | None = None
    floor: float = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_edges(sample_rate: int, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """``n_mels + 2`` band edges in Hz; band ``k`` peaks at ``edges[k + 1]``."""
    fmax = sample_rate / 2 if cfg.fmax is None else cfg.fmax
    return mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(fmax), cfg.n_mels + 2))


def mel_centers(sample_rate: int, cfg: MelConfig = MelConfig()) -> np.ndarray:
    return mel_edges(sample_rate, cfg)[1:-1]


def mel_filterbank(sample_rate: int, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """``(n_mels, n_fft // 2 + 1)`` triangular weights with unit peaks."""
    edges = mel_edges(sample_rate, cfg)
    freqs = np.arange(cfg.n_fft // 2 + 1) * sample_rate / cfg.n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def frame_count(n_samples: int, window: int, hop: int) -> int:
    return 1 + (n_samples - window) // hop


def log_mel(wave: Waveform, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    sr = wave.sample_rate
    win = int(round(cfg.window * sr))
    hop = int(round(cfg.hop * sr))
    if win < 1 or hop < 1:
        raise ValidationError("window and hop must cover at least one sample")
    if win > cfg.n_fft:
        raise ValidationError(f"window of {win} samples exceeds n_fft={cfg.n_fft}")
    if wave.samples.size < win:
        raise ValidationError(f"waveform has {wave.samples.size} samples, shorter than one {win}-sample window")
    t = frame_count(wave.samples.size, win, hop)
    idx = np.arange(win)[None, :] + hop * np.arange(t)[:, None]
    frames = wave.samples[idx] * np.hanning(win + 2)[1:-1]
    power = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2
    energy = power @ mel_filterbank(sr, cfg).T
    return MelSpectrogram(np.log(energy + cfg.floor), win / sr, hop / sr)


def per_bin_normalize(spec: MelSpectrogram, var_floor: float = 1e-12) -> MelSpectrogram:
    """Zero-mean, unit-(population)-variance per mel bin; near-constant bins are only centred."""
    f = spec.frames
    if f.shape[0] < 2:
        raise ValidationError("normalization needs at least two frames")
    centred = f - f.mean(axis=0)
    var = np.mean(centred * centred, axis=0)
    scale = np.where(var < var_floor, 1.0, np.sqrt(var))
    return MelSpectrogram(centred / scale, spec.frame_duration, spec.hop)


def random_crop(wave: Waveform, min_s: float = 3.0, max_s: float = 8.0, seed: int = 0) -> Waveform:
    """Seeded contiguous crop with uniform length in ``[min_s, min(max_s, duration)]``."""
    if not 0 < min_s <= max_s:
        raise ValidationError("need 0 < min_s <= max_s")
    sr, n = wave.sample_rate, wave.samples.size
    lo = int(np.ceil(min_s * sr - 1e-9))
    if n < lo:
        raise ValidationError(f"waveform is {wave.duration:.3f} s, shorter than {min_s} s")
    hi = min(int(np.floor(max_s * sr + 1e-9)), n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 5])))
    length = int(rng.integers(lo, hi + 1))
    start = int(rng.integers(0, n - length + 1))
    return Waveform(wave.samples[start:start + length], sr)


def read_wav(path) -> Waveform:
    """Read mono 16-bit integer or 32-bit float PCM WAV into ``[-1, 1]`` samples."""
    try:
        sr, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample type {data.dtype}; use int16 or float32 PCM")
    return Waveform(samples, sr)


def write_wav(path, wave: Waveform, dtype: str = "float32") -> None:
    if dtype == "int16":
        data = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif dtype == "float32":
        data = wave.samples.astype(np.float32)
    else:
        raise ValidationError("dtype must be int16 or float32")
    wavfile.write(path, wave.sample_rate, data)
