"""Sampled complex-envelope records and elementary transforms.

The complex envelope x(t) = I(t) + jQ(t) = A(t) e^{j phi(t)} is the common
currency of this package: modulators produce it, impairment stages transform
it, and both the communication metrics and the qubit propagator consume it.
Records are uniformly sampled baseband arrays; no passband carrier is ever
represented explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ComplexEnvelope",
    "PolarTracks",
    "Spectrum",
    "DELAY_KERNEL_HALF",
    "make_envelope",
    "scale_envelope",
    "to_polar",
    "from_polar",
    "fractional_delay",
    "delay_real_track",
    "windowed_fft",
]

# Windowed-sinc interpolator support, samples each side of the output point.
# Samples within this distance of a record end are edge-contaminated after a
# fractional delay and must be excluded from metric windows.
DELAY_KERNEL_HALF = 8


@dataclass(frozen=True)
class ComplexEnvelope:
    """Uniformly sampled complex baseband record.

    Parameters
    ----------
    samples : ndarray of complex128
        Envelope samples, one-dimensional, at least one sample.
    sample_rate : float
        Sample rate in Hz, strictly positive.
    t0 : float
        Time of the first sample in seconds.
    """

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.complex128, copy=True)
        if samples.ndim != 1:
            raise ValueError("envelope samples must be one-dimensional")
        if samples.size == 0:
            raise ValueError("envelope must contain at least one sample")
        if not np.isfinite(self.sample_rate) or self.sample_rate <= 0.0:
            raise ValueError("sample_rate must be positive and finite")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Record length in seconds (number of samples over sample rate)."""
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class PolarTracks:
    """Amplitude/phase decomposition of a complex envelope.

    ``phase`` is unwrapped: it carries no 2*pi discontinuities, so filtering
    or delaying it is well posed.  Amplitude is nonnegative by construction.
    """

    amplitude: np.ndarray
    phase: np.ndarray
    sample_rate: float

    def __post_init__(self) -> None:
        amp = np.array(self.amplitude, dtype=np.float64, copy=True)
        ph = np.array(self.phase, dtype=np.float64, copy=True)
        if amp.shape != ph.shape or amp.ndim != 1 or amp.size == 0:
            raise ValueError("amplitude and phase must be matching 1-d arrays")
        if not self.sample_rate > 0.0:
            raise ValueError("sample_rate must be positive")
        if np.any(amp < 0.0):
            raise ValueError("amplitude track must be nonnegative")
        amp.flags.writeable = False
        ph.flags.writeable = False
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)

    def __len__(self) -> int:
        return self.amplitude.size


@dataclass(frozen=True)
class Spectrum:
    """Two-sided power spectral density on a strictly increasing frequency grid."""

    freqs: np.ndarray
    psd: np.ndarray
    resolution_bw: float

    def __post_init__(self) -> None:
        freqs = np.array(self.freqs, dtype=np.float64, copy=True)
        psd = np.array(self.psd, dtype=np.float64, copy=True)
        if freqs.shape != psd.shape or freqs.ndim != 1:
            raise ValueError("freqs and psd must be matching 1-d arrays")
        if freqs.size > 1 and not np.all(np.diff(freqs) > 0.0):
            raise ValueError("frequency grid must be strictly increasing")
        if np.any(psd < 0.0):
            raise ValueError("psd must be nonnegative")
        freqs.flags.writeable = False
        psd.flags.writeable = False
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "psd", psd)


def make_envelope(i, q, sample_rate: float, t0: float = 0.0) -> ComplexEnvelope:
    """Assemble a complex envelope from I and Q sample arrays.

    Arrays must have equal length; the result is x = i + 1j*q.
    """
    i = np.asarray(i, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if i.shape != q.shape:
        raise ValueError("i and q must have the same shape")
    return ComplexEnvelope(i + 1j * q, sample_rate, t0)


def scale_envelope(env: ComplexEnvelope, factor: complex) -> ComplexEnvelope:
    """Multiply every sample by a complex factor (pure gain/rotation)."""
    return ComplexEnvelope(env.samples * factor, env.sample_rate, env.t0)


def to_polar(env: ComplexEnvelope) -> PolarTracks:
    """Decompose into amplitude and unwrapped phase.

    At samples of exactly zero amplitude the phase is undefined; the previous
    valid phase is carried forward (0.0 if the record starts at zero) so the
    track stays continuous through gated-off segments.
    """
    x = env.samples
    amp = np.abs(x)
    raw = np.where(amp > 0.0, np.angle(x), 0.0)
    if not np.all(amp > 0.0):
        last_valid = np.where(amp > 0.0, np.arange(x.size), -1)
        np.maximum.accumulate(last_valid, out=last_valid)
        raw = np.where(last_valid >= 0, raw[np.maximum(last_valid, 0)], 0.0)
    phase = np.unwrap(raw)
    return PolarTracks(amp, phase, env.sample_rate)


def from_polar(tracks: PolarTracks, t0: float = 0.0) -> ComplexEnvelope:
    """Recombine amplitude/phase tracks into a complex envelope."""
    samples = tracks.amplitude * np.exp(1j * tracks.phase)
    return ComplexEnvelope(samples, tracks.sample_rate, t0)


def _interp_kernels(fracs: np.ndarray) -> np.ndarray:
    """Blackman-windowed sinc interpolation taps for fractional offsets.

    16 taps at integer offsets -7..8 around each output point; ``fracs`` holds
    fractional sample positions in [0, 1), one row of taps per entry.  After
    windowing, the taps get a quadratic moment correction (exact reproduction
    of constant, linear, and quadratic records) so cascaded delays compose to
    interpolation-kernel accuracy instead of accumulating passband droop.
    """
    fracs = np.atleast_1d(np.asarray(fracs, dtype=np.float64))
    m = np.arange(-DELAY_KERNEL_HALF + 1, DELAY_KERNEL_HALF + 1, dtype=np.float64)
    d = m[None, :] - fracs[:, None]
    # Blackman taper with support exactly (-8, 8); endpoints evaluate to 0.
    w = 0.42 + 0.5 * np.cos(np.pi * d / DELAY_KERNEL_HALF) + 0.08 * np.cos(
        2.0 * np.pi * d / DELAY_KERNEL_HALF
    )
    h = np.sinc(d) * w
    # Solve per-row for p0 + p1*d + p2*d^2 with sum h*corr*d^k = delta_k0.
    powers = np.stack([np.sum(h * d**k, axis=1) for k in range(5)], axis=1)
    a = np.empty((fracs.size, 3, 3))
    for r in range(3):
        for c in range(3):
            a[:, r, c] = powers[:, r + c]
    b = np.zeros((fracs.size, 3, 1))
    b[:, 0, 0] = 1.0
    coef = np.linalg.solve(a, b)[..., 0]
    corr = coef[:, 0, None] + coef[:, 1, None] * d + coef[:, 2, None] * d**2
    return h * corr


def _interp_kernel(frac: float) -> np.ndarray:
    return _interp_kernels(np.array([frac]))[0]


def _delayed_samples(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Shift a sample array by a (possibly fractional) number of samples.

    Content shifted in from beyond the record is zero.  Integer shifts are
    exact; fractional shifts use the windowed-sinc kernel.
    """
    n = x.size
    base = int(np.floor(delay_samples))
    frac = delay_samples - base
    if frac > 1.0 - 1e-9:  # snap float-noise fractions to the next integer
        base += 1
        frac = 0.0
    elif frac < 1e-9:
        frac = 0.0

    if frac == 0.0:
        out = np.zeros(n, dtype=x.dtype)
        if base >= 0:
            if base < n:
                out[base:] = x[: n - base]
        else:
            if -base < n:
                out[: n + base] = x[-base:]
        return out

    h = _interp_kernel(frac).astype(x.dtype)
    full = np.convolve(x, h)
    # full[i] = sum_j h[j] x[i-j]; output k picks i = k - base + (half - 1).
    start = -base + DELAY_KERNEL_HALF - 1
    out = np.zeros(n, dtype=x.dtype)
    lo = max(0, -start)
    hi = min(n, full.size - start)
    if hi > lo:
        out[lo:hi] = full[start + lo : start + hi]
    return out


def fractional_delay(env: ComplexEnvelope, tau: float) -> ComplexEnvelope:
    """Delay the envelope by ``tau`` seconds (negative advances).

    Integer-sample delays are exact shifts; fractional parts are interpolated
    with a 16-tap Blackman-windowed sinc.  The first and last
    ``DELAY_KERNEL_HALF`` samples (plus the integer shift) are
    edge-contaminated and should not enter metric windows.
    """
    if abs(tau) >= env.duration / 4.0:
        raise ValueError("|tau| must be below a quarter of the record duration")
    out = _delayed_samples(env.samples, tau * env.sample_rate)
    return ComplexEnvelope(out, env.sample_rate, env.t0)


def delay_real_track(track: np.ndarray, tau: float, sample_rate: float) -> np.ndarray:
    """Fractionally delay a real-valued track (amplitude or phase path)."""
    track = np.asarray(track, dtype=np.float64)
    return _delayed_samples(track, tau * sample_rate)


def windowed_fft(env: ComplexEnvelope, window: str = "rect") -> np.ndarray:
    """FFT of the windowed record.

    ``window`` is ``"rect"`` or ``"hann"`` (periodic Hann).  With the rect
    window Parseval holds exactly: sum |x|^2 == sum |X|^2 / N.
    """
    x = env.samples
    if x.size < 8:
        raise ValueError("record too short for a meaningful FFT (need >= 8)")
    if window == "rect":
        wx = x
    elif window == "hann":
        n = x.size
        w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
        wx = x * w
    else:
        raise ValueError(f"unknown window {window!r}")
    return np.fft.fft(wx)
