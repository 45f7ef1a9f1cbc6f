"""Non-stationary ground-motion synthesis and observation-noise injection."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class GroundMotionSpec:
    """Kanai-Tajimi ground motion with an Amin-type envelope.

    Attributes
    ----------
    omega_g : float
        Dominant ground angular frequency (rad/s).
    zeta : float
        Ground bandwidth parameter.
    phi_0 : float
        Intensity of the bedrock white noise (two-sided PSD level).
    duration, dt : float
        Record length and sampling period (s).
    stationary_window : (float, float)
        Interval on which the envelope equals one.
    highpass_cutoff : float
        Corner of the high-pass filter (Hz); content below half of it is removed.
    end_level : float
        Envelope value reached at the end of the record.
    seed : int
    """

    omega_g: float = 8 * np.pi
    zeta: float = 0.6
    phi_0: float = 5.0
    duration: float = 40.96
    dt: float = 0.01
    stationary_window: tuple = (8.20, 20.48)
    highpass_cutoff: float = 0.5
    end_level: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        n = self.duration / self.dt
        if abs(n - round(n)) > 1e-6:
            raise ValueError("duration must be a multiple of dt")
        t0, t1 = self.stationary_window
        if not 0 <= t0 < t1 <= self.duration:
            raise ValueError("stationary window must satisfy 0 <= start < end <= duration")
        if not 0 < self.zeta <= 1:
            raise ValueError("zeta must lie in (0, 1]")
        if self.phi_0 <= 0:
            raise ValueError("phi_0 must be positive")
        if not 0 < self.end_level <= 1:
            raise ValueError("end_level must lie in (0, 1]")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt))

    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def with_seed(self, seed: int) -> "GroundMotionSpec":
        d = asdict(self)
        d["seed"] = int(seed)
        d["stationary_window"] = tuple(d["stationary_window"])
        return GroundMotionSpec(**d)

    @classmethod
    def from_dict(cls, d: dict) -> "GroundMotionSpec":
        d = dict(d)
        if "stationary_window" in d:
            d["stationary_window"] = tuple(d["stationary_window"])
        return cls(**d)


def kanai_tajimi_psd(omega, spec: GroundMotionSpec):
    """Two-sided Kanai-Tajimi PSD at angular frequency ``omega``."""
    r2 = (np.asarray(omega, dtype=float) / spec.omega_g) ** 2
    z4 = 4.0 * spec.zeta**2 * r2
    return spec.phi_0 * (1.0 + z4) / ((1.0 - r2) ** 2 + z4)


def envelope(t, spec: GroundMotionSpec):
    """Quadratic rise, flat stationary part, exponential decay."""
    t = np.asarray(t, dtype=float)
    t0, t1 = spec.stationary_window
    rate = np.log(1.0 / spec.end_level) / (spec.duration - t1) if spec.duration > t1 else 0.0
    env = np.ones_like(t)
    if t0 > 0:
        rise = t < t0
        env[rise] = (t[rise] / t0) ** 2
    decay = t > t1
    env[decay] = np.exp(-rate * (t[decay] - t1))
    return env


def stationary_process(spec: GroundMotionSpec) -> np.ndarray:
    """Spectral-representation sample of the stationary Kanai-Tajimi process.

    Cosines at the FFT frequencies ``n * 2 pi / duration`` strictly between DC
    and Nyquist, amplitudes ``sqrt(4 S dw)`` and independent uniform phases.
    """
    n = spec.n_samples
    dw = 2.0 * np.pi / (n * spec.dt)
    k = np.arange(n // 2 + 1)
    amp = np.sqrt(4.0 * kanai_tajimi_psd(k * dw, spec) * dw)
    amp[0] = 0.0
    if n % 2 == 0:
        amp[-1] = 0.0
    rng = np.random.default_rng(spec.seed)
    phase = rng.uniform(0.0, 2.0 * np.pi, k.size)
    X = 0.5 * n * amp * np.exp(1j * phase)
    return np.fft.irfft(X, n)


def highpass_mask(freq_hz, cutoff_hz):
    """Cosine taper from zero at ``cutoff/2`` to one at ``cutoff``."""
    f = np.asarray(freq_hz, dtype=float)
    lo = 0.5 * cutoff_hz
    mask = np.ones_like(f)
    mask[f <= lo] = 0.0
    band = (f > lo) & (f < cutoff_hz)
    mask[band] = 0.5 * (1.0 - np.cos(np.pi * (f[band] - lo) / (cutoff_hz - lo)))
    return mask


def highpass(x, dt, cutoff_hz):
    """Zero-phase high-pass filter applied as a real frequency-domain mask."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    X = np.fft.rfft(x, axis=-1)
    X *= highpass_mask(np.fft.rfftfreq(n, dt), cutoff_hz)
    return np.fft.irfft(X, n, axis=-1)


def synthesize_record(spec: GroundMotionSpec) -> np.ndarray:
    """Enveloped, high-pass filtered ground acceleration (length ``n_samples``)."""
    x = stationary_process(spec) * envelope(spec.time(), spec)
    return highpass(x, spec.dt, spec.highpass_cutoff)


# ---------------------------------------------------------------------------
# observation noise

NOISE_CASES = {
    1: (0.01, 0.01),
    2: (0.10, 0.01),
    3: (0.01, 0.10),
    4: (0.10, 0.10),
}


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian observation noise as fractions of reference-channel RMS values."""

    accel_sigma_ratio: float = 0.01
    moment_sigma_ratio: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.accel_sigma_ratio < 0 or self.moment_sigma_ratio < 0:
            raise ValueError("noise ratios must be nonnegative")

    @classmethod
    def from_case(cls, case: int, seed: int = 0) -> "NoiseSpec":
        if case not in NOISE_CASES:
            raise ValueError(f"noise case must be one of {sorted(NOISE_CASES)}")
        a, m = NOISE_CASES[case]
        return cls(a, m, seed)


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x**2)))


def add_noise(series: dict[str, np.ndarray], noise: NoiseSpec, accel_channels, moment_channels,
              accel_reference: str, moment_reference: str) -> dict[str, np.ndarray]:
    """Return a copy of ``series`` with white Gaussian noise added.

    Every channel in ``accel_channels`` (excitation included) receives noise of
    s.d. ``accel_sigma_ratio * rms(series[accel_reference])``; moment channels
    likewise with the moment reference. Channels are processed in sorted-name
    order from a single generator, so output depends only on the seed.
    """
    if not series or any(np.asarray(v).size == 0 for v in series.values()):
        raise ValueError("series must be non-empty")
    for ref in (accel_reference, moment_reference):
        if ref not in series:
            raise KeyError(f"reference channel {ref!r} missing")
    sd = {}
    sa = noise.accel_sigma_ratio * rms(series[accel_reference])
    sm = noise.moment_sigma_ratio * rms(series[moment_reference])
    for c in accel_channels:
        sd[c] = sa
    for c in moment_channels:
        sd[c] = sm
    rng = np.random.default_rng(noise.seed)
    out = {}
    for name in sorted(series):
        x = np.asarray(series[name], dtype=float)
        s = sd.get(name, 0.0)
        out[name] = x + s * rng.standard_normal(x.shape) if s > 0 else x.copy()
    return {name: out[name] for name in series}
