"""Auditory spectral features and the third-octave baseline feature set.

The 54-dimensional set is, per frame: 26 log-compressed Mel band powers,
their 26 half-wave-rectified first differences, log frame energy, and the
rectified first difference of log frame energy. The baseline set is four
log third-octave band energies over non-overlapping 125 ms bins.

All logs are natural; log(x + 1) compression keeps every feature >= 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ingest import AudioClip, LabeledSequence

THIRD_OCTAVE_CENTERS = (200.0, 630.0, 1600.0, 5000.0)


@dataclass
class FrameSpec:
    """Analysis window length and hop, both in milliseconds."""

    frame_ms: float = 30.0
    step_ms: float = 10.0

    def __post_init__(self):
        if not 0 < self.step_ms <= self.frame_ms:
            raise ValidationError("need 0 < step_ms <= frame_ms")

    def frame_len(self, sample_rate: float) -> int:
        return int(round(self.frame_ms * sample_rate / 1000.0))

    def hop_len(self, sample_rate: float) -> int:
        return int(round(self.step_ms * sample_rate / 1000.0))


@dataclass
class MelFilterbank:
    """Triangular filters on the Mel scale, sampled at FFT bin frequencies."""

    weights: np.ndarray  # (num_filters, fft_size//2 + 1), nonnegative
    center_freqs: np.ndarray  # Hz per filter
    fft_size: int
    sample_rate: float

    @property
    def num_filters(self) -> int:
        return self.weights.shape[0]


@dataclass
class FeatureMatrix:
    """Per-frame feature vectors plus frame start times and column names."""

    values: np.ndarray  # (frames, dims)
    frame_times: np.ndarray  # seconds, one per frame
    feature_names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValidationError("feature values must be a 2-D matrix")
        if self.values.shape[0] != self.frame_times.shape[0]:
            raise ValidationError("one frame time per feature row required")
        if self.values.shape[1] != len(self.feature_names):
            raise ValidationError("one name per feature column required")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


def frame_signal(clip: AudioClip, spec: FrameSpec):
    """Slice a clip into fixed-length windows.

    Returns (frames, frame_times) where frames is (count, L). A trailing
    partial window is dropped; a clip shorter than one window yields zero
    frames.
    """
    if clip.samples.size == 0:
        raise ValidationError("cannot frame an empty clip")
    L = spec.frame_len(clip.sample_rate)
    H = spec.hop_len(clip.sample_rate)
    n = clip.samples.size
    if n < L:
        return np.zeros((0, L)), np.zeros(0)
    count = (n - L) // H + 1
    idx = np.arange(L)[None, :] + H * np.arange(count)[:, None]
    times = H * np.arange(count) / clip.sample_rate
    return clip.samples[idx], times


def hann_window(length: int) -> np.ndarray:
    """Symmetric Hann window: 0.5 - 0.5 cos(2 pi n / (L - 1))."""
    if length == 1:
        return np.ones(1)
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (length - 1))


def _check_fft_size(fft_size: int) -> None:
    if fft_size < 1 or (fft_size & (fft_size - 1)) != 0:
        raise ValidationError(f"fft_size must be a power of two, got {fft_size}")


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def power_spectrum(frame: np.ndarray, fft_size: int) -> np.ndarray:
    """Squared-magnitude spectrum of a Hann-windowed frame.

    The frame is zero-padded to fft_size; result has fft_size//2 + 1 bins.
    """
    _check_fft_size(fft_size)
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size > fft_size:
        raise ValidationError("frame longer than fft_size")
    windowed = frame * hann_window(frame.size)
    spectrum = np.fft.rfft(windowed, n=fft_size)
    return np.abs(spectrum) ** 2


def _power_spectra(frames: np.ndarray, fft_size: int) -> np.ndarray:
    # batch version of power_spectrum over (count, L) frames
    _check_fft_size(fft_size)
    if frames.shape[1] > fft_size:
        raise ValidationError("frame longer than fft_size")
    windowed = frames * hann_window(frames.shape[1])[None, :]
    return np.abs(np.fft.rfft(windowed, n=fft_size, axis=1)) ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(
    num_filters: int,
    fft_size: int,
    sample_rate: float,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> MelFilterbank:
    """Construct unnormalized triangular Mel filters.

    num_filters + 2 boundary points are equally spaced on the Mel scale
    between f_min and f_max; filter i is the unit-peak triangle over
    boundary points (i-1, i, i+1) evaluated at FFT bin frequencies.
    """
    _check_fft_size(fft_size)
    if f_max is None:
        f_max = sample_rate / 2.0
    if num_filters < 1:
        raise ValidationError("num_filters must be >= 1")
    if f_min < 0 or f_max > sample_rate / 2.0 or f_min >= f_max:
        raise ValidationError(f"invalid Mel range [{f_min}, {f_max}] at rate {sample_rate}")
    bounds_hz = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), num_filters + 2))
    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    weights = np.zeros((num_filters, bin_freqs.size))
    for i in range(num_filters):
        left, center, right = bounds_hz[i], bounds_hz[i + 1], bounds_hz[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        weights[i] = np.maximum(0.0, np.minimum(rising, falling))
        if not weights[i].any():
            raise ValidationError(
                f"filter {i} spans zero FFT bins; fewer filters or a larger fft_size needed"
            )
    return MelFilterbank(
        weights=weights,
        center_freqs=bounds_hz[1:-1],
        fft_size=fft_size,
        sample_rate=sample_rate,
    )


def asf_feature_names(num_filters: int) -> list[str]:
    names = [f"logmel_{m:02d}" for m in range(num_filters)]
    names += [f"dlogmel_{m:02d}" for m in range(num_filters)]
    names += ["log_energy", "dlog_energy"]
    return names


def asf_features(clip: AudioClip, spec: FrameSpec, bank: MelFilterbank) -> FeatureMatrix:
    """Auditory spectral features: log-Mel bands, rectified deltas, energy.

    Column layout for a 26-filter bank (54 dims total):
      0..25   log(M + 1) per Mel band
      26..51  max(0, delta of the above), zero on the first frame
      52      log(1 + sum of squared frame samples)
      53      max(0, delta log energy), zero on the first frame
    """
    if abs(bank.sample_rate - clip.sample_rate) > 1e-9:
        raise ValidationError("filterbank built for a different sample rate")
    frames, times = frame_signal(clip, spec)
    if frames.shape[0] == 0:
        raise ValidationError("clip too short: yields zero frames")
    L = frames.shape[1]
    if L > bank.fft_size:
        raise ValidationError("filterbank fft_size smaller than frame length")
    power = _power_spectra(frames, bank.fft_size)
    mel_power = power @ bank.weights.T
    mel_log = np.log(mel_power + 1.0)
    deltas = np.zeros_like(mel_log)
    deltas[1:] = np.maximum(0.0, mel_log[1:] - mel_log[:-1])
    energy = np.log(1.0 + np.sum(frames**2, axis=1))
    denergy = np.zeros_like(energy)
    denergy[1:] = np.maximum(0.0, energy[1:] - energy[:-1])
    values = np.column_stack([mel_log, deltas, energy, denergy])
    return FeatureMatrix(
        values=values,
        frame_times=times,
        feature_names=asf_feature_names(bank.num_filters),
    )


def third_octave_edges(center: float) -> tuple[float, float]:
    """Band edges [f_c * 2^(-1/6), f_c * 2^(1/6)) around a center frequency."""
    return center * 2.0 ** (-1.0 / 6.0), center * 2.0 ** (1.0 / 6.0)


def third_octave_features(
    clip: AudioClip,
    bin_ms: float = 125.0,
    centers=THIRD_OCTAVE_CENTERS,
) -> FeatureMatrix:
    """Log band energies of third-octave bands over non-overlapping bins.

    Band energy sums FFT-bin powers whose frequency lies inside the band;
    features are ordered by ascending center frequency.
    """
    centers = sorted(float(c) for c in centers)
    top_edge = third_octave_edges(centers[-1])[1]
    if top_edge >= clip.sample_rate / 2.0:
        raise ValidationError(
            f"band edge {top_edge:.1f} Hz not below Nyquist {clip.sample_rate / 2:.1f} Hz"
        )
    B = int(round(bin_ms * clip.sample_rate / 1000.0))
    count = clip.samples.size // B
    fft_size = next_pow2(B)
    names = [f"oct_{int(c)}hz" for c in centers]
    if count == 0:
        return FeatureMatrix(np.zeros((0, len(centers))), np.zeros(0), names)
    frames = clip.samples[: count * B].reshape(count, B)
    times = B * np.arange(count) / clip.sample_rate
    power = _power_spectra(frames, fft_size)
    bin_freqs = np.arange(fft_size // 2 + 1) * clip.sample_rate / fft_size
    values = np.zeros((count, len(centers)))
    for j, c in enumerate(centers):
        lo, hi = third_octave_edges(c)
        mask = (bin_freqs >= lo) & (bin_freqs < hi)
        values[:, j] = np.log(1.0 + power[:, mask].sum(axis=1))
    return FeatureMatrix(values=values, frame_times=times, feature_names=names)


def write_features(path, trips: list[LabeledSequence]) -> None:
    """Write labeled per-frame features as CSV.

    Columns: trip_id, frame_time_s, label, speed_mph, then one column per
    feature; floats carry 9 significant digits.
    """
    if not trips:
        raise ValidationError("no trips to write")
    names = trips[0].features.feature_names
    for t in trips:
        if t.features is None:
            raise ValidationError(f"trip {t.trip_id} has no features attached")
        if t.features.feature_names != names:
            raise ValidationError("all trips must share one feature set")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trip_id", "frame_time_s", "label", "speed_mph"] + list(names))
        for t in trips:
            for i in range(len(t.frame_times)):
                row = [t.trip_id, f"{t.frame_times[i]:.9g}", int(t.labels[i]), f"{t.speeds[i]:.9g}"]
                row += [f"{v:.9g}" for v in t.features.values[i]]
                writer.writerow(row)


def read_features(path) -> list[LabeledSequence]:
    """Read a feature CSV back into per-trip LabeledSequence objects."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["trip_id", "frame_time_s", "label", "speed_mph"]:
            raise ValidationError(f"{path}: not a feature CSV (bad header)")
        names = header[4:]
        by_trip: dict[str, list] = {}
        order: list[str] = []
        for row in reader:
            if not row:
                continue
            trip_id = row[0]
            if trip_id not in by_trip:
                by_trip[trip_id] = []
                order.append(trip_id)
            by_trip[trip_id].append(row[1:])
    trips = []
    for trip_id in order:
        rows = by_trip[trip_id]
        times = np.array([float(r[0]) for r in rows])
        labels = np.array([int(r[1]) for r in rows])
        speeds = np.array([float(r[2]) for r in rows])
        values = np.array([[float(x) for x in r[3:]] for r in rows])
        trips.append(
            LabeledSequence(
                trip_id=trip_id,
                frame_times=times,
                labels=labels,
                speeds=speeds,
                features=FeatureMatrix(values=values, frame_times=times, feature_names=list(names)),
            )
        )
    return trips
