"""Synthetic data for the two tasks, plus a flat binary container format.

Channel task: single-antenna OFDM pilot grids.  Per resource element the
received symbol is y = x * h + z with unit-magnitude pilot x, Rayleigh
gain h ~ CN(0, 1) and AWGN z ~ CN(0, sigma_z^2), sigma_z^2 = 10^(-SNR/10).
The model input is |y|, the target |h|.  Pilots are drawn from {1, i, -1,
-i} so that multiplying by x is exact in floating point and the noiseless
input equals the target bit-for-bit.

Radar task: procedural spectrograms on a Gaussian-noise background with
0-2 horizontal frequency bands (LTE/NR) of smoothed band-limited texture
and 0-2 short high-intensity pulse rectangles (Radar).  Labels exactly
match the painted regions; pulses paint over bands.

Container layout (little-endian):
    header  magic "QFDS", u16 version, u8 task (0 channel / 1 radar),
            u8 reserved, u32 count, 4 x u32 dims
    channel sample: f32 pilots (H*W), f32 truth (H*W), f32 snr_db
    radar sample:   f32 spectrogram (S*S*3), u8 labels (S*S)
A JSON sidecar at <path>.json records the generation parameters.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"QFDS"
CONTAINER_VERSION = 1
_TASK_CODES = {"channel": 0, "radar": 1}
_HEADER = struct.Struct("<4sHBBIIIII")

CLASS_NOISE, CLASS_LTE, CLASS_NR, CLASS_RADAR = 0, 1, 2, 3
RADAR_CLASS_NAMES = ("Noise", "LTE", "NR", "Radar")

# Unit pilot alphabet; multiplication by any of these is exact in float64.
_PILOT_SYMBOLS = np.array([1.0 + 0.0j, 0.0 + 1.0j, -1.0 + 0.0j, 0.0 - 1.0j])

# Relative gain of the three spectrogram channels for painted signal energy.
_CHANNEL_GAINS = np.array([1.0, 0.85, 0.7])


@dataclass
class ChannelSample:
    pilots: np.ndarray  # (H, W, 1) |y|
    truth: np.ndarray  # (H, W, 1) |h|
    snr_db: float


@dataclass
class RadarSample:
    spectrogram: np.ndarray  # (S, S, 3)
    labels: np.ndarray  # (S, S) ints in {0, 1, 2, 3}


def gen_channel_dataset(
    n: int, snr_db: float, dims: tuple[int, int] = (48, 14), seed: int = 0
) -> list[ChannelSample]:
    """Generate n pilot/channel pairs at one SNR; deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h_dim, w_dim = dims
    rng = np.random.default_rng(seed)
    shape = (n, h_dim, w_dim)

    h = np.sqrt(0.5) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    sigma_z2 = 0.0 if np.isinf(snr_db) else 10.0 ** (-snr_db / 10.0)
    z = np.sqrt(sigma_z2 / 2.0) * (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    )
    x = _PILOT_SYMBOLS[rng.integers(0, 4, size=shape)]
    y = x * h + z

    pilots = np.abs(y)[..., None]
    truth = np.abs(h)[..., None]
    return [
        ChannelSample(pilots=pilots[i], truth=truth[i], snr_db=float(snr_db))
        for i in range(n)
    ]


def gen_radar_dataset(n: int, size: int = 32, seed: int = 0) -> list[RadarSample]:
    """Generate n labeled spectrograms; deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if size < 16:
        raise ValueError("size must be >= 16")
    rng = np.random.default_rng(seed)
    return [_gen_radar_sample(rng, size) for _ in range(n)]


def _smooth_texture(rng: np.random.Generator, length: int) -> np.ndarray:
    """Band-limited texture in [0.5, 1]: moving-average smoothed uniform noise."""
    raw = rng.random(length + 6)
    kernel = np.ones(7) / 7.0
    smooth = np.convolve(raw, kernel, mode="valid")
    lo, hi = smooth.min(), smooth.max()
    if hi - lo < 1e-12:
        return np.full(length, 0.75)
    return 0.5 + 0.5 * (smooth - lo) / (hi - lo)


def _gen_radar_sample(rng: np.random.Generator, s: int) -> RadarSample:
    spect = rng.normal(0.0, 0.05, size=(s, s, 3))
    labels = np.zeros((s, s), dtype=np.int64)
    row_used = np.zeros(s, dtype=bool)

    n_bands = int(rng.choice([0, 1, 2], p=[0.1, 0.3, 0.6]))
    if n_bands == 2:
        band_classes = [CLASS_LTE, CLASS_NR]
        rng.shuffle(band_classes)
    elif n_bands == 1:
        band_classes = [int(rng.choice([CLASS_LTE, CLASS_NR]))]
    else:
        band_classes = []

    for cls in band_classes:
        height = int(rng.integers(2, s // 4 + 1))
        placed = False
        for _ in range(10):
            r0 = int(rng.integers(0, s - height + 1))
            if not row_used[r0 : r0 + height].any():
                placed = True
                break
        if not placed:
            continue
        row_used[r0 : r0 + height] = True
        amp = 0.9 if cls == CLASS_LTE else 1.2
        texture = amp * _smooth_texture(rng, s)
        spect[r0 : r0 + height, :, :] += (
            texture[None, :, None] * _CHANNEL_GAINS[None, None, :]
        )
        labels[r0 : r0 + height, :] = cls

    n_pulses = int(rng.choice([0, 1, 2], p=[0.2, 0.4, 0.4]))
    for _ in range(n_pulses):
        ph = int(rng.integers(max(2, s // 8), s // 3 + 1))  # frequency extent
        pw = int(rng.integers(1, max(2, s // 10) + 1))  # short in time
        r0 = int(rng.integers(0, s - ph + 1))
        c0 = int(rng.integers(0, s - pw + 1))
        intensity = 2.5 + 0.5 * rng.random()
        spect[r0 : r0 + ph, c0 : c0 + pw, :] += intensity * _CHANNEL_GAINS[None, None, :]
        labels[r0 : r0 + ph, c0 : c0 + pw] = CLASS_RADAR

    return RadarSample(spectrogram=spect, labels=labels)


# ---------------------------------------------------------------------------
# Binary container
# ---------------------------------------------------------------------------


def _dataset_task(samples) -> str:
    return "channel" if isinstance(samples[0], ChannelSample) else "radar"


def save_dataset(path, samples: list, gen_params: dict | None = None) -> None:
    """Write samples to the flat binary container plus a JSON sidecar."""
    if not samples:
        raise ValueError("cannot save an empty dataset")
    path = Path(path)
    task = _dataset_task(samples)
    if task == "channel":
        h, w, _ = samples[0].pilots.shape
        dims = (h, w, 1, 0)
    else:
        s = samples[0].labels.shape[0]
        dims = (s, s, 3, 0)

    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC, CONTAINER_VERSION, _TASK_CODES[task], 0, len(samples), *dims
            )
        )
        for sample in samples:
            if task == "channel":
                fh.write(sample.pilots.astype("<f4").tobytes())
                fh.write(sample.truth.astype("<f4").tobytes())
                fh.write(np.float32(sample.snr_db).tobytes())
            else:
                fh.write(sample.spectrogram.astype("<f4").tobytes())
                fh.write(sample.labels.astype(np.uint8).tobytes())

    sidecar = {
        "task": task,
        "count": len(samples),
        "dims": list(dims),
        "container_version": CONTAINER_VERSION,
        "gen_params": gen_params or {},
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> tuple[list, dict]:
    """Read a container back; returns (samples, sidecar dict)."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, task_code, _, count, d0, d1, d2, _ = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a dataset container (bad magic)")
        if version != CONTAINER_VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        samples = []
        if task_code == _TASK_CODES["channel"]:
            plane = d0 * d1
            for _ in range(count):
                pilots = np.frombuffer(fh.read(4 * plane), dtype="<f4")
                truth = np.frombuffer(fh.read(4 * plane), dtype="<f4")
                snr = np.frombuffer(fh.read(4), dtype="<f4")[0]
                samples.append(
                    ChannelSample(
                        pilots=pilots.astype(np.float64).reshape(d0, d1, 1),
                        truth=truth.astype(np.float64).reshape(d0, d1, 1),
                        snr_db=float(snr),
                    )
                )
        else:
            for _ in range(count):
                spect = np.frombuffer(fh.read(4 * d0 * d1 * d2), dtype="<f4")
                labels = np.frombuffer(fh.read(d0 * d1), dtype=np.uint8)
                samples.append(
                    RadarSample(
                        spectrogram=spect.astype(np.float64).reshape(d0, d1, d2),
                        labels=labels.astype(np.int64).reshape(d0, d1),
                    )
                )

    sidecar_path = Path(str(path) + ".json")
    sidecar = {}
    if sidecar_path.exists():
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
    return samples, sidecar


def stack_batch(samples: list) -> tuple[np.ndarray, np.ndarray]:
    """Stack a list of samples into (inputs, targets) arrays for the model."""
    if isinstance(samples[0], ChannelSample):
        x = np.stack([s.pilots for s in samples])
        y = np.stack([s.truth for s in samples])
    else:
        x = np.stack([s.spectrogram for s in samples])
        y = np.stack([s.labels for s in samples])
    return x, y
