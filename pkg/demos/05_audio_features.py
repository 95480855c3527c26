"""
Log-mel features for voice input
================================

Waveforms become 64-bin log-mel spectrograms, normalized per bin. Training
uses random crops of a few seconds.
"""

# %%
import numpy as np

from facekit.audio import Waveform, log_mel, mel_centers, per_bin_normalize, random_crop

sr = 16000
t = np.arange(10 * sr) / sr
rng = np.random.default_rng(0)
# a gliding tone over noise stands in for speech
voice = 0.4 * np.sin(2 * np.pi * (200 + 150 * t) * t) + 0.05 * rng.standard_normal(t.size)
wave = Waveform(voice, sr)

# %%
spec = log_mel(wave)
print("frames x bins:", spec.frames.shape, " frame hop:", spec.hop, "s")
print("first mel centres (Hz):", mel_centers(sr)[:5].round(1))

# %%
# The strongest bin tracks the rising pitch.
peak = spec.frames.argmax(axis=1)
print("peak bin at 1 s, 5 s, 9 s:", peak[[100, 500, 900]])

# %%
norm = per_bin_normalize(spec)
print("per-bin |mean| max:", np.abs(norm.frames.mean(axis=0)).max())
print("per-bin var range:", norm.frames.var(axis=0).min().round(6), norm.frames.var(axis=0).max().round(6))

# %%
# Crops are seeded: the same seed always gives the same excerpt.
for seed in range(3):
    crop = random_crop(wave, 3.0, 8.0, seed=seed)
    print(f"seed {seed}: {crop.duration:.3f} s -> {log_mel(crop).frames.shape[0]} frames")
