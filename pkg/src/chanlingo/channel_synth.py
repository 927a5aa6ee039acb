"""Synthetic time-varying fading channels and the physical quantities around them.

Each tap is a Clarke-model sum of sinusoids: ``num_sinusoids`` plane waves with
uniformly random arrival angles and phases, Doppler-shifted by the user speed.
Taps are independent, so a multi-tap channel is just a list of series.

Also home to :class:`ChannelSeries` and its text file format (CSF)::

    # csf v1 interval_s=0.001 label=route-10
    0.7071067811865476 -0.7071067811865476
    ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import InvalidArgumentError, ParseError

SPEED_OF_LIGHT = 299_792_458.0  # m/s
CSF_VERSION = "v1"


def _check_finite_nonneg(name, value):
    if not math.isfinite(value) or value < 0:
        raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value!r}")


def doppler_frequency(speed_mps: float, carrier_freq_hz: float) -> float:
    """Maximum Doppler shift ``v * f_c / c`` in Hz."""
    _check_finite_nonneg("speed_mps", speed_mps)
    if not math.isfinite(carrier_freq_hz) or carrier_freq_hz <= 0:
        raise InvalidArgumentError(f"carrier_freq_hz must be finite and > 0, got {carrier_freq_hz!r}")
    return speed_mps * carrier_freq_hz / SPEED_OF_LIGHT


def wavelength_span(duration_s: float, speed_mps: float, carrier_freq_hz: float) -> float:
    """Distance travelled in carrier wavelengths during ``duration_s`` seconds.

    Equal to ``duration_s * doppler_frequency(speed_mps, carrier_freq_hz)``.
    """
    _check_finite_nonneg("duration_s", duration_s)
    return duration_s * doppler_frequency(speed_mps, carrier_freq_hz)


@dataclass(frozen=True)
class ChannelSeries:
    """Uniformly sampled complex channel coefficients."""

    samples: np.ndarray
    sample_interval_s: float
    label: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128).reshape(-1)
        if samples.size < 1:
            raise InvalidArgumentError("a channel series needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("channel series contains NaN or Inf")
        if not (math.isfinite(self.sample_interval_s) and self.sample_interval_s > 0):
            raise InvalidArgumentError(f"sample_interval_s must be > 0, got {self.sample_interval_s!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_interval_s", float(self.sample_interval_s))

    def __len__(self) -> int:
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, ChannelSeries):
            return NotImplemented
        return (
            self.sample_interval_s == other.sample_interval_s
            and self.label == other.label
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples, label: str | None = None) -> ChannelSeries:
        return ChannelSeries(samples, self.sample_interval_s, self.label if label is None else label)


@dataclass(frozen=True)
class FadingConfig:
    """Parameters of a multi-tap sum-of-sinusoids fading channel.

    ``tap_gains_db`` are relative powers; :attr:`linear_gains` normalizes them
    so the total channel power is one.
    """

    carrier_freq_hz: float = 3.45e9
    speed_mps: float = 3 / 3.6
    sample_interval_s: float = 1e-3
    num_sinusoids: int = 32
    num_taps: int = 1
    tap_gains_db: tuple[float, ...] = (0.0,)
    duration_samples: int = 10_000
    rng_seed: int = 0
    linear_gains: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        gains = tuple(float(g) for g in self.tap_gains_db)
        object.__setattr__(self, "tap_gains_db", gains)
        if not self.carrier_freq_hz > 0:
            raise InvalidArgumentError("carrier_freq_hz must be > 0")
        if not self.speed_mps >= 0:
            raise InvalidArgumentError("speed_mps must be >= 0")
        if not self.sample_interval_s > 0:
            raise InvalidArgumentError("sample_interval_s must be > 0")
        if self.num_sinusoids < 1 or self.num_taps < 1:
            raise InvalidArgumentError("num_sinusoids and num_taps must be >= 1")
        if len(gains) != self.num_taps:
            raise InvalidArgumentError(
                f"tap_gains_db has {len(gains)} entries but num_taps is {self.num_taps}"
            )
        if self.duration_samples < 2:
            raise InvalidArgumentError("duration_samples must be >= 2")
        linear = 10.0 ** (np.asarray(gains) / 10.0)
        linear = linear / linear.sum()
        linear.setflags(write=False)
        object.__setattr__(self, "linear_gains", linear)

    @property
    def doppler_hz(self) -> float:
        return doppler_frequency(self.speed_mps, self.carrier_freq_hz)

    @property
    def normalized_doppler(self) -> float:
        """Doppler frequency times sample interval (cycles per sample)."""
        return self.doppler_hz * self.sample_interval_s


def tap_rng(rng_seed: int, tap_index: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(rng_seed, tap_index)``."""
    seq = np.random.SeedSequence([int(rng_seed) & 0xFFFFFFFFFFFFFFFF, int(tap_index)])
    return np.random.Generator(np.random.Philox(seq))


def sum_of_sinusoids(doppler_hz, times, arrival_angles, phases) -> np.ndarray:
    """Unit-power Clarke sum: mean over k of exp(i(2 pi f_d cos(a_k) t + phi_k)), times sqrt(K)."""
    angles = np.asarray(arrival_angles, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    freqs = 2.0 * np.pi * doppler_hz * np.cos(angles)
    out = np.zeros(times.shape, dtype=np.complex128)
    # per-sinusoid accumulation keeps memory at O(len(times))
    for w, phi in zip(freqs, phases):
        out += np.exp(1j * (w * times + phi))
    return out / math.sqrt(angles.size)


def generate_tap(config: FadingConfig, tap_index: int) -> ChannelSeries:
    """Generate the fading sequence of one tap; its mean power equals the tap's linear gain."""
    if not 0 <= tap_index < config.num_taps:
        raise InvalidArgumentError(f"tap_index {tap_index} out of range for {config.num_taps} taps")
    if config.normalized_doppler >= 0.5:
        raise InvalidArgumentError(
            f"Doppler {config.doppler_hz:.3f} Hz violates Nyquist at "
            f"interval {config.sample_interval_s} s (f_d*T = {config.normalized_doppler:.3f})"
        )
    rng = tap_rng(config.rng_seed, tap_index)
    angles = rng.uniform(0.0, 2.0 * np.pi, config.num_sinusoids)
    phases = rng.uniform(0.0, 2.0 * np.pi, config.num_sinusoids)
    t = np.arange(config.duration_samples) * config.sample_interval_s
    h = sum_of_sinusoids(config.doppler_hz, t, angles, phases)
    # A finite sum has random time-averaged power (arrivals at a and -a share
    # one Doppler frequency and never average out), so pin the realized power.
    h *= math.sqrt(config.linear_gains[tap_index] / np.mean(np.abs(h) ** 2))
    return ChannelSeries(h, config.sample_interval_s, label=f"tap{tap_index}")


def generate_channel(config: FadingConfig) -> list[ChannelSeries]:
    return [generate_tap(config, k) for k in range(config.num_taps)]


def add_noise(series: ChannelSeries, snr_db: float, rng_seed: int) -> ChannelSeries:
    """Add circularly-symmetric complex Gaussian noise at the given SNR.

    ``snr_db = math.inf`` returns the series unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return series
    noise_var = series.mean_power / 10.0 ** (snr_db / 10.0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng_seed))))
    n = len(series)
    noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return series.with_samples(series.samples + noise * math.sqrt(noise_var / 2.0))


# -- CSF text format -----------------------------------------------------------


def format_csf(series: ChannelSeries) -> str:
    if "\n" in series.label:
        raise InvalidArgumentError("label must be a single line")
    lines = [f"# csf {CSF_VERSION} interval_s={series.sample_interval_s!r} label={series.label}"]
    lines.extend(f"{float(z.real)!r} {float(z.imag)!r}" for z in series.samples)
    return "\n".join(lines) + "\n"


def write_csf(series: ChannelSeries, path) -> None:
    atomic_write_text(path, format_csf(series))


def parse_csf(text: str, path=None) -> ChannelSeries:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file, expected '# csf v1' header", 1, path)
    header = lines[0].split(maxsplit=4)
    if len(header) < 4 or header[:3] != ["#", "csf", CSF_VERSION]:
        raise ParseError(f"bad header {lines[0]!r}", 1, path)
    interval = None
    label = ""
    rest = lines[0].split(maxsplit=3)[3]
    if "label=" in rest:
        rest, label = rest.split("label=", 1)
    for item in rest.split():
        key, sep, value = item.partition("=")
        if key == "interval_s" and sep:
            try:
                interval = float(value)
            except ValueError:
                raise ParseError(f"bad interval_s {value!r}", 1, path) from None
        else:
            raise ParseError(f"unknown header field {item!r}", 1, path)
    if interval is None:
        raise ParseError("header lacks interval_s", 1, path)
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected '<real> <imag>', got {line!r}", lineno, path)
        try:
            values.append(complex(float(parts[0]), float(parts[1])))
        except ValueError:
            raise ParseError(f"non-numeric sample {line!r}", lineno, path) from None
    try:
        return ChannelSeries(np.array(values, dtype=np.complex128), interval, label.strip())
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), None, path) from None


def read_csf(path) -> ChannelSeries:
    return parse_csf(Path(path).read_text(encoding="utf-8"), path=path)
