"""Trip loading: WAV audio, JSON manifests, speed alignment, frame labels.

A trip is one recording of tire-surface audio plus metadata (route id,
wet/dry condition, speed log). The manifest file is a JSON list; each
entry references a mono WAV file. Downstream stages consume frame-level
LabeledSequence objects produced by ``label_frames``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile

from .errors import ValidationError

DRY, WET = 0, 1

_CONDITIONS = {"dry": DRY, "wet": WET}


@dataclass
class AudioClip:
    """Mono sample sequence in [-1, 1] with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValidationError("AudioClip requires a 1-D sample array")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if self.samples.size and (
            self.samples.min() < -1.0 or self.samples.max() > 1.0
        ):
            raise ValidationError("samples must lie within [-1.0, 1.0]")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class TripManifest:
    """Metadata for one trip: identity, condition, audio path, speed log."""

    trip_id: str
    route_id: int
    condition: int  # DRY or WET
    audio_path: str
    speed_log: list  # [(time_s, mph), ...], times strictly increasing
    avg_iri: float | None = None  # in/mi, carried as metadata only

    def __post_init__(self):
        if self.condition not in (DRY, WET):
            raise ValidationError(f"condition must be wet or dry, got {self.condition!r}")
        times = [t for t, _ in self.speed_log]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValidationError(f"trip {self.trip_id}: speed_log times must be strictly increasing")
        if any(v < 0 for _, v in self.speed_log):
            raise ValidationError(f"trip {self.trip_id}: speeds must be >= 0")


@dataclass
class LabeledSequence:
    """Per-frame labels and speeds for one trip.

    ``features`` starts as None and is attached after extraction; all
    per-frame arrays share the same length.
    """

    trip_id: str
    frame_times: np.ndarray
    labels: np.ndarray
    speeds: np.ndarray
    features: object = None

    def __post_init__(self):
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.speeds = np.asarray(self.speeds, dtype=np.float64)
        if not (len(self.frame_times) == len(self.labels) == len(self.speeds)):
            raise ValidationError("frame_times, labels and speeds must have equal length")
        if len(set(self.labels.tolist())) > 1:
            raise ValidationError("a trip carries exactly one condition")


def load_wav(path) -> AudioClip:
    """Read a mono PCM WAV file into an AudioClip.

    16-bit integer samples are scaled by 1/32768; 32-bit float samples
    are taken as-is. Multichannel files are rejected, not downmixed.
    """
    if not os.path.exists(path):
        raise ValidationError(f"audio file not found: {path}")
    try:
        rate, data = scipy.io.wavfile.read(path)
    except ValueError as exc:
        raise ValidationError(f"unreadable WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise ValidationError(
            f"{path}: expected mono audio, got {data.shape[1]} channels"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValidationError(
            f"{path}: unsupported sample encoding {data.dtype}, "
            "need 16-bit PCM or 32-bit float"
        )
    return AudioClip(samples=samples, sample_rate=float(rate))


def write_wav(path, clip: AudioClip) -> None:
    """Write an AudioClip as 16-bit PCM (inverse of the load_wav scaling)."""
    ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    scipy.io.wavfile.write(path, int(clip.sample_rate), ints)


def _manifest_from_entry(entry: dict, base_dir: str = "") -> TripManifest:
    known = {"trip_id", "route_id", "condition", "audio_path", "speed_log", "avg_iri"}
    unknown = set(entry) - known
    if unknown:
        raise ValidationError(f"unknown manifest keys: {sorted(unknown)}")
    try:
        cond_str = str(entry["condition"]).lower()
        if cond_str not in _CONDITIONS:
            raise ValidationError(f"unknown condition {entry['condition']!r}")
        audio_path = entry["audio_path"]
        if base_dir and not os.path.isabs(audio_path):
            audio_path = os.path.join(base_dir, audio_path)
        return TripManifest(
            trip_id=str(entry["trip_id"]),
            route_id=int(entry["route_id"]),
            condition=_CONDITIONS[cond_str],
            audio_path=audio_path,
            speed_log=[(float(t), float(v)) for t, v in entry["speed_log"]],
            avg_iri=float(entry["avg_iri"]) if entry.get("avg_iri") is not None else None,
        )
    except KeyError as exc:
        raise ValidationError(f"manifest entry missing key {exc}") from exc


def parse_manifest(path) -> list[TripManifest]:
    """Parse a JSON manifest into validated TripManifest records.

    Relative audio paths are resolved against the manifest's directory.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise ValidationError("manifest must be a top-level JSON list")
    base_dir = os.path.dirname(os.path.abspath(path))
    return [_manifest_from_entry(entry, base_dir) for entry in doc]


def write_manifest(path, manifests: list[TripManifest], audio_paths=None) -> None:
    """Write manifests back to the JSON format accepted by parse_manifest.

    ``audio_paths`` optionally overrides the stored (absolute) paths with
    e.g. manifest-relative ones.
    """
    entries = []
    for i, m in enumerate(manifests):
        entry = {
            "trip_id": m.trip_id,
            "route_id": m.route_id,
            "condition": "wet" if m.condition == WET else "dry",
            "audio_path": audio_paths[i] if audio_paths else m.audio_path,
            "speed_log": [[t, v] for t, v in m.speed_log],
        }
        if m.avg_iri is not None:
            entry["avg_iri"] = m.avg_iri
        entries.append(entry)
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")


def speed_at(manifest: TripManifest, t: float) -> float:
    """Speed in mph at time t: linear interpolation inside the logged
    range, constant extrapolation outside it."""
    if not manifest.speed_log:
        raise ValidationError(f"trip {manifest.trip_id}: empty speed_log")
    times = np.array([p[0] for p in manifest.speed_log])
    speeds = np.array([p[1] for p in manifest.speed_log])
    return float(np.interp(t, times, speeds))


def label_frames(manifest: TripManifest, frame_times) -> LabeledSequence:
    """Attach the trip's condition and interpolated speed to every frame."""
    frame_times = np.asarray(frame_times, dtype=np.float64)
    if frame_times.size and np.any(np.diff(frame_times) < 0):
        raise ValidationError("frame_times must be sorted ascending")
    if not manifest.speed_log:
        raise ValidationError(f"trip {manifest.trip_id}: empty speed_log")
    times = np.array([p[0] for p in manifest.speed_log])
    speeds = np.array([p[1] for p in manifest.speed_log])
    return LabeledSequence(
        trip_id=manifest.trip_id,
        frame_times=frame_times,
        labels=np.full(frame_times.shape, manifest.condition, dtype=np.int64),
        speeds=np.interp(frame_times, times, speeds),
    )
