"""Synthetic FMCW datacube generator with material-dependent returns.

Each virtual channel is a sum of complex exponentials in fast time: a
near-field clutter tone in the first range bins, the primary surface
return at the configured distance, a weaker penetration echo slightly
behind it, and complex white noise at a configured SNR.  Fast-time bin k
maps to range k * c / (2B), so beat frequencies are expressed directly in
bins; chirp timing never enters.

The five built-in material profiles are invented engineering constants
chosen to make the classes separable and to give porous materials (drywall,
wood) visibly broader range peaks than metal.  They are documented in
``data/material_profiles.json`` and make no claim of matching any physical
measurement campaign.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import json
import numpy as np

from .datacube import DataCube, DatasetManifest, ManifestEntry, MaterialClass, save_cube, save_manifest
from .errors import ConfigError

SPEED_OF_LIGHT = 299792458.0

# Near-field clutter sits just above DC, mimicking antenna coupling.
CLUTTER_BIN = 1.5

# Sub-scatterer count of the diffuse penetration echo.
ECHO_SCATTERERS = 12


@dataclass(frozen=True)
class MaterialProfile:
    """Reflection behaviour of one surface class.

    ``penetration_echo_delay_m`` is the extra path of the internal
    reflection; with ``penetration_echo_attenuation`` it controls how much
    the range peak broadens.  ``roughness_jitter`` is the per-channel
    amplitude standard deviation.
    """

    name: str
    reflection_magnitude: float
    reflection_phase: float
    penetration_echo_delay_m: float
    penetration_echo_attenuation: float
    roughness_jitter: float

    def __post_init__(self):
        if not 0.0 <= self.reflection_magnitude <= 1.0:
            raise ConfigError(f"reflection_magnitude must be in [0, 1], got {self.reflection_magnitude}")
        if not 0.0 <= self.penetration_echo_attenuation < 1.0:
            raise ConfigError(
                f"penetration_echo_attenuation must be in [0, 1), got {self.penetration_echo_attenuation}"
            )
        if self.penetration_echo_delay_m < 0 or self.roughness_jitter < 0:
            raise ConfigError("echo delay and roughness jitter must be nonnegative")


# Echo delays sit on an eighth-wavelength grid (65.5 GHz carrier) and act
# as the per-class penetration depth scale: the diffuse echo smears each
# range peak over roughly delay / (c/2B) bins.  Echo energies are kept
# close (only metal has none) so the distance-invariant class signature is
# the EXTENT of the peak skirt, not its power.  Reflection magnitudes
# differ strongly (metal bright, drywall dim) while roughness is
# identical, so brightness is an easy cue at trained distances but,
# entangled with the 1/R^2 path loss, an unreliable one at unseen
# distances.
_EIGHTH_WAVELENGTH = SPEED_OF_LIGHT / 65.5e9 / 8.0

DEFAULT_PROFILES: dict[MaterialClass, MaterialProfile] = {
    MaterialClass.CONCRETE: MaterialProfile("concrete", 0.55, 1.9, 104 * _EIGHTH_WAVELENGTH, 0.45, 0.05),
    MaterialClass.DRYWALL: MaterialProfile("drywall", 0.30, 0.5, 66 * _EIGHTH_WAVELENGTH, 0.55, 0.05),
    MaterialClass.GLASS: MaterialProfile("glass", 0.68, 2.4, 15 * _EIGHTH_WAVELENGTH, 0.40, 0.05),
    MaterialClass.METAL: MaterialProfile("metal", 0.95, 3.1, 0.010, 0.00, 0.05),
    MaterialClass.WOOD: MaterialProfile("wood", 0.42, 1.1, 38 * _EIGHTH_WAVELENGTH, 0.50, 0.05),
}


def load_profiles(path: str | Path) -> dict[MaterialClass, MaterialProfile]:
    """Load material profiles from a JSON object keyed by class name."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    profiles = {}
    for name, fields in raw.items():
        cls = MaterialClass.from_name(name)
        profiles[cls] = MaterialProfile(name=name.lower(), **fields)
    missing = set(MaterialClass) - set(profiles)
    if missing:
        raise ConfigError(f"profile file missing classes: {sorted(c.name.lower() for c in missing)}")
    return profiles


@dataclass(frozen=True)
class SynthConfig:
    """Sensor constants plus corpus layout for one generated dataset.

    Defaults are desk scale (8x8 array, 64 fast-time samples, 40 samples
    per class and distance); :meth:`full_scale` mirrors the reference
    sensor (20x20, N = 100) and corpus size (1200 + 160 captures).
    """

    center_freq_hz: float = 65.5e9
    bandwidth_hz: float = 5e9
    fast_time_len: int = 64
    rx_count: int = 8
    tx_count: int = 8
    distances_mm: tuple[int, ...] = (500, 700, 1000)
    holdout_distances_mm: tuple[int, ...] = (600, 800)
    samples_per_class_distance: int = 40
    holdout_samples_per_class_distance: int = 8
    snr_db: float | None = 18.0
    clutter_amplitude: float = 0.15
    room_scatter_amplitude: float = 0.05
    distance_jitter_mm: float = 5.0
    micro_jitter_mm: float = 0.05
    reference_distance_m: float = 0.5
    echo_coherence: float = 0.2
    sessions: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "distances_mm", tuple(int(d) for d in self.distances_mm))
        object.__setattr__(self, "holdout_distances_mm",
                           tuple(int(d) for d in self.holdout_distances_mm))
        if self.bandwidth_hz <= 0 or self.center_freq_hz <= 0:
            raise ConfigError("center frequency and bandwidth must be positive")
        if min((*self.distances_mm, *self.holdout_distances_mm), default=1) <= 0:
            raise ConfigError("all distances must be positive")
        overlap = set(self.distances_mm) & set(self.holdout_distances_mm)
        if overlap:
            raise ConfigError(
                f"holdout distances {sorted(overlap)} also appear in the training distances"
            )
        if self.sessions < 1:
            raise ConfigError("sessions must be >= 1")
        if not 0.0 <= self.echo_coherence <= 1.0:
            raise ConfigError(f"echo_coherence must be in [0, 1], got {self.echo_coherence}")
        max_range_m = self.fast_time_len * range_resolution(self)
        worst = max((*self.distances_mm, *self.holdout_distances_mm), default=0)
        if (worst + self.distance_jitter_mm + self.micro_jitter_mm) / 1000.0 >= max_range_m:
            raise ConfigError(
                f"distance {worst} mm exceeds the unambiguous range "
                f"{max_range_m * 1000:.0f} mm (= N * c / 2B)"
            )

    @classmethod
    def full_scale(cls, **overrides) -> "SynthConfig":
        base = dict(fast_time_len=100, rx_count=20, tx_count=20,
                    samples_per_class_distance=80, holdout_samples_per_class_distance=16,
                    sessions=15)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)


def range_resolution(cfg: SynthConfig) -> float:
    """Range covered by one FFT bin: c / (2B), in meters."""
    return SPEED_OF_LIGHT / (2.0 * cfg.bandwidth_hz)


def wavelength(cfg: SynthConfig) -> float:
    return SPEED_OF_LIGHT / cfg.center_freq_hz


def synth_channel(cfg: SynthConfig, profile: MaterialProfile, distance_m: float,
                  rng: np.random.Generator, *, channel_phase: float | None = None,
                  clutter_phase: float | None = None, global_phase: float = 0.0) -> np.ndarray:
    """One virtual channel of fast-time IQ samples (complex128, length N).

    The channel carries near-field clutter, the primary surface return
    (amplitude rolled off by (reference_distance / R)^2 free-space loss),
    a penetration echo whose relative phase is fixed by the extra two-way
    path, and AWGN at ``cfg.snr_db`` relative to the jittered primary
    amplitude.  ``channel_phase``/``clutter_phase`` default to fresh random
    draws; cube generation passes stable per-channel values instead so the
    virtual array has a fixed manifold signature.
    """
    n_samples = cfg.fast_time_len
    dr = range_resolution(cfg)
    k_primary = distance_m / dr
    if not 0.0 < k_primary < n_samples:
        raise ConfigError(
            f"distance {distance_m:.3f} m maps to bin {k_primary:.1f}, outside the "
            f"unambiguous range of {n_samples} bins"
        )
    n = np.arange(n_samples)
    x = np.zeros(n_samples, dtype=np.complex128)

    if cfg.clutter_amplitude > 0:
        phi_c = rng.uniform(0.0, 2.0 * math.pi) if clutter_phase is None else clutter_phase
        x += cfg.clutter_amplitude * np.exp(1j * (phi_c + 2.0 * math.pi * CLUTTER_BIN * n / n_samples))

    psi = rng.uniform(0.0, 2.0 * math.pi) if channel_phase is None else channel_phase
    scale = max(1.0 + profile.roughness_jitter * rng.standard_normal(), 0.05)
    path_loss = (cfg.reference_distance_m / distance_m) ** 2
    amp = profile.reflection_magnitude * scale * path_loss
    if amp > 0:
        theta = profile.reflection_phase + psi + global_phase
        x += amp * np.exp(1j * (theta + 2.0 * math.pi * k_primary * n / n_samples))
        if profile.penetration_echo_attenuation > 0:
            echo_amp = amp * profile.penetration_echo_attenuation
            coherent = cfg.echo_coherence
            if coherent > 0:
                k_echo = (distance_m + profile.penetration_echo_delay_m) / dr
                # relative echo phase fixed by the internal two-way path length
                delta = (4.0 * math.pi * profile.penetration_echo_delay_m / wavelength(cfg)) % (2.0 * math.pi)
                x += (echo_amp * coherent
                      * np.exp(1j * (theta + delta + 2.0 * math.pi * k_echo * n / n_samples)))
            if coherent < 1:
                # diffuse sub-surface speckle: random scatterers with depths on
                # the profile's echo-delay scale; random per capture, so their
                # time-domain envelope never repeats while the range-domain
                # skirt statistics stay class-specific
                depths = np.minimum(rng.exponential(profile.penetration_echo_delay_m, ECHO_SCATTERERS),
                                    6.0 * profile.penetration_echo_delay_m)
                phases = rng.uniform(0.0, 2.0 * math.pi, ECHO_SCATTERERS)
                k_scatter = (distance_m + depths) / dr
                diffuse = np.exp(
                    1j * (phases[:, None] + 2.0 * math.pi * k_scatter[:, None] * n[None, :] / n_samples)
                ).sum(axis=0)
                x += echo_amp * math.sqrt((1.0 - coherent * coherent) / ECHO_SCATTERERS) * diffuse

    if cfg.snr_db is not None and amp > 0:
        noise_power = amp * amp / (10.0 ** (cfg.snr_db / 10.0))
        sigma = math.sqrt(noise_power / 2.0)
        x += sigma * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples))
    return x


@dataclass(frozen=True)
class SceneState:
    """Everything about a dataset's scene that stays fixed across captures.

    ``target_phases``/``clutter_phases`` are the per-channel array manifold:
    real MIMO pairs have fixed relative path lengths that vary smoothly
    across the aperture, so both follow random walks with small steps.
    The room background is a fixed set of static scatterers (walls, mounts)
    whose ranges and per-channel phases never move; they fill the whole
    range profile with stable structure the way a real indoor scene does.
    """

    target_phases: np.ndarray      # (channels,)
    clutter_phases: np.ndarray     # (channels,)
    room_bins: np.ndarray          # (K,) fractional range bins
    room_amps: np.ndarray          # (K,)
    room_phases: np.ndarray        # (K, channels)


ROOM_SCATTERERS = 24


def scene_state(cfg: SynthConfig) -> SceneState:
    channels = cfg.rx_count * cfg.tx_count
    rng = np.random.default_rng([cfg.seed, 104729])
    target = np.cumsum(rng.normal(0.0, 0.25, channels)) + rng.uniform(0.0, 2.0 * math.pi)
    clutter = np.cumsum(rng.normal(0.0, 0.35, channels)) + rng.uniform(0.0, 2.0 * math.pi)
    room_bins = rng.uniform(3.0, 0.95 * cfg.fast_time_len, ROOM_SCATTERERS)
    room_amps = cfg.room_scatter_amplitude * rng.lognormal(0.0, 0.6, ROOM_SCATTERERS)
    room_phases = np.cumsum(rng.normal(0.0, 0.4, (ROOM_SCATTERERS, channels)), axis=1)
    room_phases += rng.uniform(0.0, 2.0 * math.pi, ROOM_SCATTERERS)[:, None]
    return SceneState(target, clutter, room_bins, room_amps, room_phases)


def _room_background(cfg: SynthConfig, scene: SceneState, session_phase: float) -> np.ndarray:
    """Static room response for every channel, rotated by the session phase."""
    n = np.arange(cfg.fast_time_len)
    tones = np.exp(2j * math.pi * scene.room_bins[:, None] * n[None, :] / cfg.fast_time_len)
    weights = scene.room_amps[:, None] * np.exp(1j * (scene.room_phases + session_phase))
    return weights.T @ tones  # (channels, N)


def synth_cube(cfg: SynthConfig, profile: MaterialProfile, label: MaterialClass,
               distance_mm: int, sample_id: int, session_id: int,
               scene: SceneState | None = None) -> DataCube:
    """Generate one cube from a per-cube derived RNG stream (reproducible)."""
    rng = np.random.default_rng([cfg.seed, int(label), distance_mm, sample_id])
    session_rng = np.random.default_rng([cfg.seed, 7919, session_id])
    session_phase = session_rng.uniform(0.0, 2.0 * math.pi)
    # the sensor sits on a fixed mount per session: millimeter placement
    # error is shared by every capture of the session, captures themselves
    # wobble only by micro-vibration
    placement_mm = session_rng.uniform(-cfg.distance_jitter_mm, cfg.distance_jitter_mm)
    micro_mm = rng.uniform(-cfg.micro_jitter_mm, cfg.micro_jitter_mm)
    distance_m = (distance_mm + placement_mm + micro_mm) / 1000.0
    # two-way carrier phase: stable within a session up to the micro wobble,
    # a fresh rotation from session to session, while the room stays put
    global_phase = 4.0 * math.pi * distance_m / wavelength(cfg) + session_phase
    scene = scene_state(cfg) if scene is None else scene
    channels = cfg.rx_count * cfg.tx_count
    # small per-capture wobble so the manifold pattern never repeats exactly
    wobble = rng.normal(0.0, 0.15, channels)
    iq = _room_background(cfg, scene, session_phase)
    for ch in range(channels):
        iq[ch] += synth_channel(cfg, profile, distance_m, rng,
                                channel_phase=scene.target_phases[ch] + wobble[ch],
                                clutter_phase=scene.clutter_phases[ch] + session_phase,
                                global_phase=global_phase)
    return DataCube(
        rx_count=cfg.rx_count,
        tx_count=cfg.tx_count,
        fast_time_len=cfg.fast_time_len,
        iq=iq.astype(np.complex64),
        label=label,
        distance_mm=distance_mm,
        session_id=session_id,
        sample_id=sample_id,
    )


def generate_dataset(cfg: SynthConfig, out_dir: str | Path,
                     profiles: Mapping[MaterialClass, MaterialProfile] | None = None,
                     manifest_name: str = "manifest.jsonl") -> DatasetManifest:
    """Write the full corpus plus manifest into ``out_dir``.

    Training-distance cubes are tagged ``train`` (the stratified splitter
    carves the d0 test portion later); holdout-distance cubes are tagged
    ``test_d1``.  Identical configs produce byte-identical corpora.
    """
    profiles = dict(DEFAULT_PROFILES if profiles is None else profiles)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = scene_state(cfg)
    entries: list[ManifestEntry] = []
    plan = [("train", cfg.distances_mm, cfg.samples_per_class_distance),
            ("test_d1", cfg.holdout_distances_mm, cfg.holdout_samples_per_class_distance)]
    for split, distances, count in plan:
        for label in MaterialClass:
            profile = profiles[label]
            for distance_mm in distances:
                for i in range(count):
                    session_id = i % cfg.sessions
                    cube = synth_cube(cfg, profile, label, distance_mm, i, session_id,
                                      scene=scene)
                    fname = f"{label.name.lower()}_{distance_mm:05d}mm_{i:04d}.rdc"
                    try:
                        save_cube(cube, out_dir / fname)
                    except OSError as exc:
                        raise OSError(f"failed writing cube {out_dir / fname}: {exc}") from exc
                    entries.append(ManifestEntry(
                        path=fname, label=label, distance_mm=distance_mm,
                        session_id=session_id, split=split,
                    ))
    save_manifest(entries, out_dir / manifest_name)
    return DatasetManifest(entries=tuple(entries), root=out_dir)


def default_profiles_json() -> str:
    """The built-in profiles as the JSON document shipped in ``data/``."""
    doc = {p.name: {k: v for k, v in asdict(p).items() if k != "name"}
           for p in DEFAULT_PROFILES.values()}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
