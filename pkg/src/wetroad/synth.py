"""Deterministic synthetic tire-audio corpus generator.

Stands in for unavailable road recordings: each route gets one wet and
one dry trip sharing the same speed trajectory. Wet surfaces are modeled
as rolling noise with a flatter spectral tilt (more high-frequency
content) and higher level than dry; both start with a stationary dwell
where the only class cue is sparse "passing vehicle" noise bursts
carrying the surface's tilt. All randomness flows from per-trip
sub-seeds of the master seed, so corpora are byte-identical across runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ValidationError
from .ingest import DRY, WET, AudioClip, TripManifest, write_manifest, write_wav
from .util import atomic_write

SPEED_LOG_HZ = 1.0
REFERENCE_MPH = 15.0


@dataclass
class SurfaceProfile:
    """Spectral and temporal signature of one surface condition.

    The wet signature is a mid-high "sizzle" bump riding on the broadband
    rolling noise, plus deeper amplitude modulation; bursts reuse the same
    spectral shape so stationary segments stay (weakly) classifiable.
    """

    tilt_db_per_octave: float
    rolling_level: float  # rolling-noise RMS at the reference speed
    am_depth: float  # amplitude-modulation depth at the reference speed
    am_rate_per_mph: float = 1.1  # modulation rate in Hz per mph
    burst_level: float = 0.03  # passing-vehicle burst RMS
    bump_gain_db: float = 0.0  # peak of the log-frequency Gaussian bump
    bump_center_hz: float = 3000.0
    bump_width_octaves: float = 0.3


def _default_wet() -> SurfaceProfile:
    return SurfaceProfile(tilt_db_per_octave=-3.5, rolling_level=0.085,
                          am_depth=0.30, bump_gain_db=12.0)


def _default_dry() -> SurfaceProfile:
    return SurfaceProfile(tilt_db_per_octave=-4.5, rolling_level=0.08,
                          am_depth=0.08)


@dataclass
class SynthSpec:
    seed: int = 0
    routes: int = 3
    trip_seconds: float = 60.0
    sample_rate: float = 16000.0
    wet: SurfaceProfile = field(default_factory=_default_wet)
    dry: SurfaceProfile = field(default_factory=_default_dry)
    min_mph: float = 5.0
    max_mph: float = 25.0
    dwell_zero_s: float = 6.0
    ambient_level: float = 0.004
    burst_gap_s: tuple[float, float] = (0.7, 1.6)
    burst_duration_s: float = 0.5
    headroom: float = 0.99
    # route-to-route recording/surface variation (shared by the wet/dry pair)
    route_gain_range: tuple[float, float] = (0.85, 1.2)
    route_tilt_jitter_db: float = 0.3

    def __post_init__(self):
        if self.routes < 1:
            raise ValidationError("need at least one route")
        if self.trip_seconds <= 0 or self.sample_rate <= 0:
            raise ValidationError("trip_seconds and sample_rate must be positive")
        if self.dwell_zero_s >= self.trip_seconds:
            raise ValidationError("dwell must be shorter than the trip")
        if isinstance(self.wet, dict):
            self.wet = SurfaceProfile(**self.wet)
        if isinstance(self.dry, dict):
            self.dry = SurfaceProfile(**self.dry)
        self.burst_gap_s = tuple(self.burst_gap_s)
        self.route_gain_range = tuple(self.route_gain_range)


def spec_from_dict(doc: dict) -> SynthSpec:
    known = {f for f in SynthSpec.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown corpus spec keys: {sorted(unknown)}")
    return SynthSpec(**doc)


def _route_speed_log(spec: SynthSpec, rng) -> list[tuple[float, float]]:
    """1 Hz speed trajectory: stationary dwell, ramp, then varied cruising."""
    times = np.arange(0.0, spec.trip_seconds + 1e-9, 1.0 / SPEED_LOG_HZ)
    waypoint_times = [0.0, spec.dwell_zero_s]
    waypoint_speeds = [0.0, 0.0]
    t = spec.dwell_zero_s + 6.0  # ramp-up to the first cruising waypoint
    while t < spec.trip_seconds:
        waypoint_times.append(t)
        waypoint_speeds.append(rng.uniform(spec.min_mph, spec.max_mph))
        t += rng.uniform(8.0, 14.0)
    waypoint_times.append(spec.trip_seconds + 1.0)
    waypoint_speeds.append(waypoint_speeds[-1])
    speeds = np.interp(times, waypoint_times, waypoint_speeds)
    return [(float(t), float(round(s, 3))) for t, s in zip(times, speeds)]


def _shaped_noise(rng, n: int, sample_rate: float, profile: SurfaceProfile,
                  tilt_jitter_db: float = 0.0, anchor_hz: float = 300.0) -> np.ndarray:
    """Unit-RMS noise with the profile's tilt and log-frequency bump."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    octaves = np.log2(np.maximum(freqs, anchor_hz) / anchor_hz)
    gain_db = (profile.tilt_db_per_octave + tilt_jitter_db) * octaves
    if profile.bump_gain_db != 0.0:
        distance = np.log2(np.maximum(freqs, 1.0) / profile.bump_center_hz)
        gain_db = gain_db + profile.bump_gain_db * np.exp(
            -0.5 * (distance / profile.bump_width_octaves) ** 2
        )
    spectrum *= 10.0 ** (gain_db / 20.0)
    shaped = np.fft.irfft(spectrum, n=n)
    return shaped / np.sqrt(np.mean(shaped**2))


def _burst_envelope(spec: SynthSpec, rng, n: int) -> np.ndarray:
    """Sum of Hann bumps marking passing-vehicle bursts."""
    env = np.zeros(n)
    dur = int(round(spec.burst_duration_s * spec.sample_rate))
    bump = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(dur) / max(dur - 1, 1))
    t = rng.uniform(*spec.burst_gap_s)
    while True:
        start = int(round(t * spec.sample_rate))
        if start + dur >= n:
            break
        env[start:start + dur] += bump
        t += rng.uniform(*spec.burst_gap_s)
    return env


def _trip_audio(spec: SynthSpec, profile: SurfaceProfile, speed_log, route_gain: float,
                route_tilt_jitter: float, rng) -> np.ndarray:
    n = int(round(spec.trip_seconds * spec.sample_rate))
    sample_times = np.arange(n) / spec.sample_rate
    log_t = np.array([p[0] for p in speed_log])
    log_v = np.array([p[1] for p in speed_log])
    speed = np.interp(sample_times, log_t, log_v)

    rolling = _shaped_noise(rng, n, spec.sample_rate, profile, route_tilt_jitter)
    envelope = (speed / REFERENCE_MPH) ** 0.8
    am_phase = 2.0 * np.pi * np.cumsum(profile.am_rate_per_mph * speed) / spec.sample_rate
    am = 1.0 + profile.am_depth * (speed / REFERENCE_MPH) * np.sin(am_phase)
    tire = profile.rolling_level * route_gain * envelope * am * rolling

    bursts = profile.burst_level * route_gain * _burst_envelope(spec, rng, n) * _shaped_noise(
        rng, n, spec.sample_rate, profile, route_tilt_jitter
    )
    ambient = spec.ambient_level * rng.standard_normal(n)

    samples = tire + bursts + ambient
    peak = np.abs(samples).max()
    if peak > spec.headroom:
        samples *= spec.headroom / peak
    return samples


def generate_corpus(spec: SynthSpec, out_dir) -> str:
    """Write routes x {wet, dry} WAV trips plus a manifest; returns the
    manifest path. The wet/dry pair of a route shares one speed
    trajectory and one average-IRI value."""
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise ValidationError(f"output directory not writable: {out_dir}")
    manifests = []
    rel_paths = []
    for route in range(1, spec.routes + 1):
        route_rng = np.random.default_rng([spec.seed, route, 0])
        speed_log = _route_speed_log(spec, route_rng)
        route_gain = route_rng.uniform(*spec.route_gain_range)
        route_tilt_jitter = route_rng.uniform(-spec.route_tilt_jitter_db,
                                              spec.route_tilt_jitter_db)
        avg_iri = float(round(route_rng.uniform(80.0, 320.0)))
        for condition, name, profile in ((WET, "wet", spec.wet), (DRY, "dry", spec.dry)):
            trip_rng = np.random.default_rng([spec.seed, route, 1 + condition])
            samples = _trip_audio(spec, profile, speed_log, route_gain,
                                  route_tilt_jitter, trip_rng)
            trip_id = f"{name}{route}"
            rel = f"{trip_id}.wav"
            clip = AudioClip(samples=np.clip(samples, -1.0, 1.0),
                             sample_rate=spec.sample_rate)
            atomic_write(os.path.join(out_dir, rel),
                         lambda tmp, clip=clip: write_wav(tmp, clip))
            manifests.append(
                TripManifest(
                    trip_id=trip_id,
                    route_id=route,
                    condition=condition,
                    audio_path=os.path.join(out_dir, rel),
                    speed_log=speed_log,
                    avg_iri=avg_iri,
                )
            )
            rel_paths.append(rel)
    manifest_path = os.path.join(out_dir, "manifest.json")
    atomic_write(manifest_path,
                 lambda tmp: write_manifest(tmp, manifests, audio_paths=rel_paths))
    return manifest_path
