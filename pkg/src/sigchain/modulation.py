"""Constellations, pulse shaping, and gate-envelope generation.

This is the "ideal waveform" layer: everything here is noiseless and
impairment-free.  Communication waveforms come from bit->symbol mapping plus
Nyquist pulse shaping; qubit drives come from parametric gate envelopes
(optionally with a derivative quadrature for leakage suppression).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from sigchain.envelope import ComplexEnvelope

__all__ = [
    "Constellation",
    "SymbolStream",
    "PulseShape",
    "GateEnvelopeSpec",
    "build_constellation",
    "map_bits",
    "shape_filter",
    "shape_symbols",
    "gate_envelope",
    "gate_envelope_unit_area",
    "with_peak",
    "constellation_to_csv",
]

_NORM_TOL = 1e-12


def _gray(n: int) -> int:
    return n ^ (n >> 1)


def _gray_inverse(g: int) -> int:
    n = 0
    while g:
        n ^= g
        g >>= 1
    return n


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Constellation:
    """A labeled set of complex symbol points, normalized to unit RMS.

    ``points[label]`` is the point whose bit pattern is the
    ``bits_per_symbol``-bit big-endian expansion of ``label``.
    """

    points: np.ndarray
    bits_per_symbol: int
    scheme: str

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.complex128, copy=True)
        if pts.ndim != 1 or pts.size != 2**self.bits_per_symbol:
            raise ValueError("points must hold 2**bits_per_symbol entries")
        rms = math.sqrt(float(np.mean(np.abs(pts) ** 2)))
        if abs(rms - 1.0) > _NORM_TOL:
            raise ValueError("constellation must be normalized to unit RMS")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size

    @property
    def labels(self) -> list[str]:
        """Bit pattern of each point, index-aligned with ``points``."""
        return [format(i, f"0{self.bits_per_symbol}b") for i in range(len(self))]


@dataclass(frozen=True)
class SymbolStream:
    """A run of complex symbols at a fixed symbol period."""

    symbols: np.ndarray
    symbol_period: float

    def __post_init__(self) -> None:
        sym = np.array(self.symbols, dtype=np.complex128, copy=True)
        if sym.ndim != 1:
            raise ValueError("symbols must be one-dimensional")
        if not self.symbol_period > 0.0:
            raise ValueError("symbol_period must be positive")
        sym.flags.writeable = False
        object.__setattr__(self, "symbols", sym)

    def __len__(self) -> int:
        return self.symbols.size


@dataclass(frozen=True)
class PulseShape:
    """Shaping-filter recipe.

    kind: "rect", "sinc", "raised_cosine", "root_raised_cosine", "gaussian".
    ``rolloff`` is the Nyquist roll-off for the raised-cosine family and the
    bandwidth-time product for "gaussian" (0 selects a default of 0.3).
    """

    kind: str
    rolloff: float = 0.35
    span_symbols: int = 16
    samples_per_symbol: int = 32

    def __post_init__(self) -> None:
        if self.kind not in (
            "rect",
            "sinc",
            "raised_cosine",
            "root_raised_cosine",
            "gaussian",
        ):
            raise ValueError(f"unknown pulse shape {self.kind!r}")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.span_symbols < 4:
            raise ValueError("span_symbols must be at least 4")
        if self.samples_per_symbol < 4:
            raise ValueError("samples_per_symbol must be at least 4")


@dataclass(frozen=True)
class GateEnvelopeSpec:
    """Parametric qubit drive envelope.

    shape: "rect", "gaussian", or "cosine" over ``duration_s``.  Gaussian
    pulses use sigma = sigma_fraction * duration and are truncated to the
    gate window with the edge value subtracted, so they start and end at
    exactly zero (the quoted peak_amplitude is the pre-subtraction peak).
    When ``drag_enabled``, the imaginary quadrature is
    -drag_coefficient_s * d(amplitude)/dt with the derivative evaluated
    analytically.  ``peak_amplitude=None`` lets the synthesizer solve the
    peak for a requested rotation angle.
    """

    shape: str
    duration_s: float
    peak_amplitude: float | None = 1.0
    sigma_fraction: float = 0.25
    drag_enabled: bool = False
    drag_coefficient_s: float = 0.0

    def __post_init__(self) -> None:
        if self.shape not in ("rect", "gaussian", "cosine"):
            raise ValueError(f"unknown gate envelope shape {self.shape!r}")
        if not self.duration_s > 0.0:
            raise ValueError("duration_s must be positive")
        if self.peak_amplitude is not None and self.peak_amplitude < 0.0:
            raise ValueError("peak_amplitude must be nonnegative")
        if not 0.0 < self.sigma_fraction <= 1.0:
            raise ValueError("sigma_fraction must lie in (0, 1]")


def _psk_points(m: int) -> np.ndarray:
    """Unit-RMS m-PSK ring; quadrature offset for m >= 4 puts QPSK on diagonals."""
    offset = np.pi / m if m >= 4 else 0.0
    pts = np.empty(m, dtype=np.complex128)
    for k in range(m):
        pts[_gray(k)] = np.exp(1j * (2.0 * np.pi * k / m + offset))
    return pts


def _normalize(points: np.ndarray) -> np.ndarray:
    rms = math.sqrt(float(np.mean(np.abs(points) ** 2)))
    if rms == 0.0:
        raise ValueError("degenerate constellation: zero RMS")
    return points / rms


def _check_distinct(points: np.ndarray, scheme: str) -> None:
    for i in range(points.size):
        d = np.abs(points[i + 1 :] - points[i])
        if d.size and d.min() < 1e-9:
            raise ValueError(f"degenerate {scheme} constellation: coincident points")


def build_constellation(scheme: str, **params) -> Constellation:
    """Construct a named constellation, Gray-labeled and unit-RMS.

    Schemes
    -------
    m_ask(m):        m unipolar amplitude levels (includes on-off keying).
    m_psk(m):        m phase states on the unit circle.
    square_qam(m):   independent Gray-coded amplitude levels on I (label
                     MSBs) and Q (label LSBs); m must be a square power of 4.
    qpsk_sum(ratios): superposition of one QPSK point per entry of ``ratios``,
                     scaled by that ratio; the label's MSB pair drives the
                     largest-amplitude path.
    star_qam(rings, phases): concentric rings in geometric ratio 2 crossed
                     with equally spaced phases; ring bits are the label MSBs.
    """
    if scheme == "m_ask":
        m = int(params["m"])
        if not _is_pow2(m) or m < 2:
            raise ValueError("m_ask requires m a power of two, m >= 2")
        pts = np.empty(m, dtype=np.complex128)
        for k in range(m):
            pts[_gray(k)] = k / (m - 1)
        bits = m.bit_length() - 1
    elif scheme == "m_psk":
        m = int(params["m"])
        if not _is_pow2(m) or m < 2:
            raise ValueError("m_psk requires m a power of two, m >= 2")
        pts = _psk_points(m)
        bits = m.bit_length() - 1
    elif scheme == "square_qam":
        m = int(params["m"])
        side = math.isqrt(m)
        if not _is_pow2(m) or side * side != m or not _is_pow2(side) or side < 2:
            raise ValueError("square_qam requires m in {4, 16, 64, 256, ...}")
        half = (m.bit_length() - 1) // 2
        pts = np.empty(m, dtype=np.complex128)
        for label in range(m):
            i_lab, q_lab = label >> half, label & (side - 1)
            i_level = 2 * _gray_inverse(i_lab) - (side - 1)
            q_level = 2 * _gray_inverse(q_lab) - (side - 1)
            pts[label] = i_level + 1j * q_level
        bits = m.bit_length() - 1
    elif scheme == "qpsk_sum":
        ratios = [float(r) for r in params["ratios"]]
        if not ratios or any(r <= 0.0 for r in ratios):
            raise ValueError("qpsk_sum requires positive path ratios")
        ratios = sorted(ratios, reverse=True)
        qpsk = _psk_points(4)
        n_paths = len(ratios)
        m = 4**n_paths
        pts = np.zeros(m, dtype=np.complex128)
        for label in range(m):
            for path in range(n_paths):
                pair = (label >> (2 * (n_paths - 1 - path))) & 0b11
                pts[label] += ratios[path] * qpsk[pair]
        bits = 2 * n_paths
    elif scheme == "star_qam":
        rings, phases = int(params["rings"]), int(params["phases"])
        if not (_is_pow2(rings) and _is_pow2(phases)) or rings * phases < 2:
            raise ValueError("star_qam requires power-of-two ring/phase counts")
        ring_amp = 2.0 ** np.arange(rings)
        offset = np.pi / phases if phases >= 4 else 0.0
        angles = 2.0 * np.pi * np.arange(phases) / phases + offset
        phase_bits = phases.bit_length() - 1
        m = rings * phases
        pts = np.empty(m, dtype=np.complex128)
        for label in range(m):
            r_lab, p_lab = label >> phase_bits, label & (phases - 1)
            r, p = _gray_inverse(r_lab), _gray_inverse(p_lab)
            pts[label] = ring_amp[r] * np.exp(1j * angles[p])
        bits = m.bit_length() - 1
    else:
        raise ValueError(f"unknown constellation scheme {scheme!r}")

    pts = _normalize(pts)
    _check_distinct(pts, scheme)
    return Constellation(pts, bits, scheme)


def map_bits(bits, constellation: Constellation, symbol_period: float = 1.0) -> SymbolStream:
    """Map a bit array (values 0/1, MSB first per symbol) onto symbols."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must contain only 0 and 1")
    b = constellation.bits_per_symbol
    if bits.size % b != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {b}")
    groups = bits.reshape(-1, b)
    weights = 1 << np.arange(b - 1, -1, -1)
    labels = groups @ weights
    return SymbolStream(constellation.points[labels], symbol_period)


def shape_filter(shape: PulseShape) -> np.ndarray:
    """Impulse-response taps for a pulse shape.

    Nyquist kinds are evaluated on a grid of span_symbols*samples_per_symbol+1
    points (odd length, symmetric).  Raised-cosine taps are peak-normalized
    (h(0)=1, zeros at nonzero symbol multiples); root-raised-cosine taps are
    unit-energy so a matched-filter cascade restores symbol amplitudes.
    """
    sps = shape.samples_per_symbol
    if shape.kind == "rect":
        return np.ones(sps, dtype=np.float64)

    n_half = shape.span_symbols * sps // 2
    t = np.arange(-n_half, n_half + 1, dtype=np.float64) / sps  # symbol units
    beta = shape.rolloff

    if shape.kind == "sinc":
        taps = np.sinc(t)
    elif shape.kind == "raised_cosine":
        taps = np.sinc(t) * np.cos(np.pi * beta * t)
        denom = 1.0 - (2.0 * beta * t) ** 2
        singular = np.isclose(denom, 0.0, atol=1e-12)
        taps = np.where(singular, 0.0, taps) / np.where(singular, 1.0, denom)
        if beta > 0.0:
            taps[singular] = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * beta))
    elif shape.kind == "root_raised_cosine":
        taps = np.empty_like(t)
        for i, ti in enumerate(t):
            if abs(ti) < 1e-12:
                taps[i] = 1.0 - beta + 4.0 * beta / np.pi
            elif beta > 0.0 and abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-12:
                taps[i] = (beta / math.sqrt(2.0)) * (
                    (1.0 + 2.0 / np.pi) * math.sin(np.pi / (4.0 * beta))
                    + (1.0 - 2.0 / np.pi) * math.cos(np.pi / (4.0 * beta))
                )
            else:
                num = math.sin(np.pi * ti * (1.0 - beta)) + 4.0 * beta * ti * math.cos(
                    np.pi * ti * (1.0 + beta)
                )
                taps[i] = num / (np.pi * ti * (1.0 - (4.0 * beta * ti) ** 2))
        taps /= math.sqrt(float(np.sum(taps**2)))
    elif shape.kind == "gaussian":
        bt = shape.rolloff if shape.rolloff > 0.0 else 0.3
        sigma = math.sqrt(math.log(2.0)) / (2.0 * np.pi * bt)  # symbol units
        taps = np.exp(-(t**2) / (2.0 * sigma**2))
    else:  # pragma: no cover - guarded by PulseShape validation
        raise ValueError(shape.kind)
    return taps


def shape_symbols(stream: SymbolStream, shape: PulseShape) -> ComplexEnvelope:
    """Upsample symbols and convolve with the shaping filter.

    The output sample rate is samples_per_symbol / symbol_period.  Symbol k's
    decision instant sits at sample k*sps + (ntaps-1)//2 ("full" convolution
    group delay); metric code trims span/2 symbols at each end before use.
    """
    if len(stream) == 0:
        raise ValueError("cannot shape an empty symbol stream")
    sps = shape.samples_per_symbol
    if shape.kind == "rect":
        # hold each symbol for exactly one period; no spill, zero group delay
        samples = np.repeat(stream.symbols, sps)
    else:
        taps = shape_filter(shape).astype(np.complex128)
        up = np.zeros(len(stream) * sps, dtype=np.complex128)
        up[::sps] = stream.symbols
        samples = np.convolve(up, taps)
    return ComplexEnvelope(samples, sps / stream.symbol_period)


def _gaussian_params(spec: GateEnvelopeSpec) -> tuple[float, float]:
    sigma = spec.sigma_fraction * spec.duration_s
    baseline = math.exp(-((spec.duration_s / 2.0) ** 2) / (2.0 * sigma**2))
    return sigma, baseline


def gate_envelope_unit_area(spec: GateEnvelopeSpec) -> float:
    """Analytic area (integral of amplitude over the gate) at unit peak."""
    tau = spec.duration_s
    if spec.shape == "rect":
        return tau
    if spec.shape == "cosine":
        return tau / 2.0
    sigma, baseline = _gaussian_params(spec)
    z = tau / (2.0 * sigma)
    return sigma * math.sqrt(2.0 * np.pi) * math.erf(z / math.sqrt(2.0)) - tau * baseline


def gate_envelope(spec: GateEnvelopeSpec, sample_rate: float) -> ComplexEnvelope:
    """Sample a gate envelope at midpoint instants over [0, duration].

    Requires duration_s * sample_rate >= 64 so a gate is never
    under-resolved.  With DRAG enabled the imaginary quadrature is the scaled
    analytic derivative of the real amplitude shape.
    """
    if spec.peak_amplitude is None:
        raise ValueError("peak_amplitude unset; synthesize via a gate target")
    n = round(spec.duration_s * sample_rate)
    if n < 64:
        raise ValueError("gate must span at least 64 samples")
    t = (np.arange(n) + 0.5) / sample_rate
    tc = spec.duration_s / 2.0
    peak = spec.peak_amplitude

    if spec.shape == "rect":
        amp = np.full(n, peak)
        deriv = np.zeros(n)
    elif spec.shape == "cosine":
        amp = 0.5 * peak * (1.0 - np.cos(2.0 * np.pi * t / spec.duration_s))
        deriv = peak * (np.pi / spec.duration_s) * np.sin(2.0 * np.pi * t / spec.duration_s)
    else:
        sigma, baseline = _gaussian_params(spec)
        bell = np.exp(-((t - tc) ** 2) / (2.0 * sigma**2))
        amp = peak * (bell - baseline)
        deriv = peak * bell * (-(t - tc) / sigma**2)

    if spec.drag_enabled:
        samples = amp - 1j * spec.drag_coefficient_s * deriv
    else:
        samples = amp.astype(np.complex128)
    return ComplexEnvelope(samples, sample_rate)


def with_peak(spec: GateEnvelopeSpec, peak: float) -> GateEnvelopeSpec:
    return replace(spec, peak_amplitude=peak)


def constellation_to_csv(constellation: Constellation, path) -> None:
    """Write (label_bits, i, q) rows for every point."""
    lines = ["label_bits,i,q"]
    for label, point in zip(constellation.labels, constellation.points):
        lines.append(f"{label},{point.real:.17g},{point.imag:.17g}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
