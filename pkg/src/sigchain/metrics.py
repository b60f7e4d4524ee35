"""Link-quality metrics: symbol decisions, EVM, error budgets, eye diagrams,
spectra, and a small LMS equalizer.

Decision sampling is deliberately dumb: fixed instants from the pulse shape's
group delay, an optional blind integer timing search, and no carrier, phase,
or scale recovery.  What the hardware distorts, the metric reports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from sigchain import modulation as mod
from sigchain.envelope import ComplexEnvelope, Spectrum
from sigchain.chains import StageSpec, TxChain, run_chain, synth_comm_waveform

__all__ = [
    "DemodResult",
    "EvmReport",
    "BudgetReport",
    "EyeReport",
    "demodulate",
    "reference_symbols",
    "evm",
    "evm_budget",
    "BUDGET_TERM_OF_STAGE",
    "eye_metrics",
    "psd_welch",
    "spurs_sfdr",
    "image_rejection",
    "lms_equalizer_train",
]


@dataclass(frozen=True)
class DemodResult:
    """Decision-point samples and hard decisions for one record."""

    rx_symbols: np.ndarray
    decided_labels: np.ndarray
    timing_offset: int


@dataclass(frozen=True)
class EvmReport:
    evm_rms: float
    evm_db: float
    num_symbols: int


@dataclass(frozen=True)
class BudgetReport:
    """Per-mechanism EVM terms and their root-sum-square versus the measured
    total for the full chain."""

    terms: dict
    total_rss: float
    total_measured: float

    @property
    def rss_deviation(self) -> float:
        """Relative deviation of the RSS prediction from the measured total."""
        if self.total_measured == 0.0:
            return 0.0 if self.total_rss == 0.0 else math.inf
        return abs(self.total_rss - self.total_measured) / self.total_measured


@dataclass(frozen=True)
class EyeReport:
    eye_height: float
    eye_width_fraction: float
    sample_instant_fraction: float
    levels: np.ndarray


def _decision_grid(shape: mod.PulseShape, sps_out: int, n_total: int,
                   rx_filtered: bool) -> tuple[int, int]:
    """First decision index and inferred symbol count on the output grid."""
    if shape.kind == "rect":
        first = sps_out // 2
        n_sym = n_total // sps_out
    else:
        half = shape.span_symbols * sps_out // 2
        first = 2 * half if rx_filtered else half
        n_sym = (n_total - shape.span_symbols * sps_out) // sps_out
    return first, n_sym


def demodulate(
    env: ComplexEnvelope,
    constellation: mod.Constellation,
    shape: mod.PulseShape,
    symbol_period: float,
    n_symbols: int | None = None,
    timing_search: bool = False,
    equalizer_taps: np.ndarray | None = None,
    skip_edge_symbols: int = 0,
) -> DemodResult:
    """Recover decision-point symbols from a waveform.

    Root-raised-cosine shapes get the matched receive filter; every other
    shape is sampled directly at its group delay.  ``timing_search`` scans
    integer sample offsets within half a symbol and keeps the one whose first
    symbols (at most 64) sit closest to the constellation.  There is no
    carrier, phase, or amplitude recovery.
    """
    x = env.samples
    if equalizer_taps is not None:
        x = np.convolve(x, np.asarray(equalizer_taps), mode="same")

    sps_f = symbol_period * env.sample_rate
    sps = int(round(sps_f))
    if sps < 1 or abs(sps_f - sps) > 1e-6:
        raise ValueError("symbol period must be an integer number of samples")

    rx_filtered = shape.kind == "root_raised_cosine"
    if rx_filtered:
        rx_shape = mod.PulseShape(shape.kind, shape.rolloff,
                                  shape.span_symbols, max(sps, 4))
        x = np.convolve(x, mod.shape_filter(rx_shape))

    first, n_auto = _decision_grid(shape, sps, len(env), rx_filtered)
    if n_symbols is None:
        n_symbols = n_auto
    if n_symbols < 1:
        raise ValueError("record too short to carry a symbol")

    offset = 0
    if timing_search:
        n_pre = min(64, n_symbols)
        pts = constellation.points
        best = math.inf
        for cand in range(-(sps // 2), sps // 2 + 1):
            idx = first + cand + sps * np.arange(n_pre)
            idx = idx[(idx >= 0) & (idx < x.size)]
            if idx.size == 0:
                continue
            d2 = np.min(
                np.abs(x[idx][:, None] - pts[None, :]) ** 2, axis=1)
            cost = float(np.mean(d2))
            if cost < best:
                best, offset = cost, cand

    idx = first + offset + sps * np.arange(n_symbols)
    if idx[0] < 0 or idx[-1] >= x.size:
        raise ValueError("decision instants fall outside the record")
    rx = x[idx]
    if skip_edge_symbols > 0:
        if 2 * skip_edge_symbols >= rx.size:
            raise ValueError("skip_edge_symbols leaves no symbols")
        rx = rx[skip_edge_symbols:-skip_edge_symbols]
    labels = np.argmin(
        np.abs(rx[:, None] - constellation.points[None, :]) ** 2, axis=1)
    return DemodResult(rx, labels.astype(np.int64), offset)


def reference_symbols(labels, constellation: mod.Constellation) -> np.ndarray:
    """Ideal constellation points for a label sequence."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0
                        or labels.max() >= constellation.points.size):
        raise ValueError("label out of range for this constellation")
    return constellation.points[labels]


def evm(rx_symbols, ref_symbols) -> EvmReport:
    """Error vector magnitude, normalized by the reference RMS."""
    rx = np.asarray(rx_symbols, dtype=np.complex128)
    ref = np.asarray(ref_symbols, dtype=np.complex128)
    if rx.shape != ref.shape or rx.ndim != 1 or rx.size == 0:
        raise ValueError("rx and ref must be matching nonempty 1-d arrays")
    ref_power = float(np.mean(np.abs(ref) ** 2))
    if ref_power == 0.0:
        raise ValueError("reference power is zero")
    e = math.sqrt(float(np.mean(np.abs(rx - ref) ** 2)) / ref_power)
    e_db = 20.0 * math.log10(e) if e > 0.0 else -math.inf
    return EvmReport(e, e_db, rx.size)


# Additive error budget: every atomic impairment belongs to one term
BUDGET_TERM_OF_STAGE = {
    "amplitude_error": "amp",
    "am_ampm": "amp",
    "quantize": "amp",
    "dpd": "amp",
    "state_errors": "amp",
    "static_phase_error": "phase",
    "phase_noise": "pn",
    "sample_jitter": "pn",
    "iq_imbalance": "iq_lo",
    "lo_feedthrough": "iq_lo",
    "onoff_leakage": "iq_lo",
    "spur_inject": "iq_lo",
    "gated_offset": "iq_lo",
    "iq_correction": "iq_lo",
    "bandwidth_limit": "bw",
    "path_skew": "bw",
    "rise_fall": "bw",
}

BUDGET_TERMS = ("amp", "phase", "pn", "iq_lo", "bw")


def evm_budget(
    bits,
    constellation: mod.Constellation,
    shape: mod.PulseShape,
    chain: TxChain,
    symbol_period: float = 1.0,
    skip_edge_symbols: int | None = None,
) -> BudgetReport:
    """Split a chain's EVM into additive mechanism terms.

    Each term's EVM is measured by running only that term's stages (in chain
    order); the root sum of squares is compared with the full chain.  Chains
    must be built from atomic impairment stages so each one attributes to a
    single term; composite path stages are rejected.
    """
    for spec in chain.stages:
        if spec.kind not in BUDGET_TERM_OF_STAGE:
            raise ValueError(
                f"stage {spec.kind!r} cannot be attributed to a budget term; "
                "build the chain from atomic impairment stages"
            )
    if skip_edge_symbols is None:
        skip_edge_symbols = shape.span_symbols

    stream, clean = synth_comm_waveform(bits, constellation, shape,
                                        None, symbol_period)
    if stream is None:
        raise ValueError("bit stream is empty")

    def measure(sub: tuple) -> float:
        env = run_chain(TxChain(chain.architecture, sub), clean)
        res = demodulate(env, constellation, shape, stream.symbol_period,
                         skip_edge_symbols=skip_edge_symbols)
        n_edge = skip_edge_symbols
        ref = stream.symbols[n_edge:-n_edge] if n_edge else stream.symbols
        ref = ref[: res.rx_symbols.size]
        return evm(res.rx_symbols, ref).evm_rms

    terms = {}
    for term in BUDGET_TERMS:
        sub = tuple(s for s in chain.stages
                    if BUDGET_TERM_OF_STAGE[s.kind] == term)
        if sub:
            terms[term] = measure(sub)
    total = measure(chain.stages)
    rss = math.sqrt(sum(v * v for v in terms.values()))
    return BudgetReport(terms, rss, total)


def _kmeans_1d(values: np.ndarray, k: int, n_iter: int = 64) -> np.ndarray:
    """Deterministic 1-d Lloyd iteration, centers returned sorted."""
    centers = np.quantile(values, (np.arange(k) + 0.5) / k)
    for _ in range(n_iter):
        assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        new = centers.copy()
        for j in range(k):
            sel = values[assign == j]
            if sel.size:
                new[j] = sel.mean()
        new = np.sort(new)
        if np.allclose(new, centers, rtol=0.0, atol=1e-12):
            centers = new
            break
        centers = new
    return centers


def _worst_adjacent_gap(values: np.ndarray, classes: np.ndarray,
                        k: int) -> float:
    """Smallest opening between neighboring level classes; negative when the
    classes interleave (eye closed at this phase)."""
    gaps = []
    present = [j for j in range(k) if np.any(classes == j)]
    for lo, hi in zip(present, present[1:]):
        gaps.append(float(values[classes == hi].min()
                          - values[classes == lo].max()))
    return min(gaps) if gaps else math.inf


def _recut_traces(x: np.ndarray, n_traces: int, sps: int,
                  instant: int) -> np.ndarray:
    """One-period traces centered on a candidate sampling phase."""
    start = instant - sps // 2
    k_first = 0 if start >= 0 else 1
    k_last = n_traces - 1 if start + n_traces * sps <= x.size \
        else n_traces - 2
    rows = np.arange(k_first, k_last + 1)
    idx = start + rows[:, None] * sps + np.arange(sps)[None, :]
    return x[idx]


def _identity_gaps(traces: np.ndarray, n_levels: int):
    """Classify traces by their center value, then track the worst opening
    between classes at every phase with trace identity held fixed."""
    center = traces.shape[1] // 2
    centers = _kmeans_1d(traces[:, center], n_levels)
    classes = np.argmin(
        np.abs(traces[:, center][:, None] - centers[None, :]), axis=1)
    gaps = np.array([
        _worst_adjacent_gap(traces[:, m], classes, n_levels)
        for m in range(traces.shape[1])
    ])
    return gaps, classes


def eye_metrics(env: ComplexEnvelope, symbol_period: float,
                n_levels: int = 2) -> EyeReport:
    """Eye opening of the in-phase rail.

    Every candidate sampling phase is scored by re-cutting one-period traces
    around it, classifying each trace once by its center value, and taking
    the smallest opening between classes over a small window of neighboring
    phases.  Holding trace identity fixed means intersymbol interference that
    drives a trace across the eye registers as closure rather than as a
    clean crossing into another level, so closed eyes report as closed.
    """
    sps_f = symbol_period * env.sample_rate
    sps = int(round(sps_f))
    if sps < 4 or abs(sps_f - sps) > 1e-6:
        raise ValueError("symbol period must be >= 4 integer samples")
    x = env.samples.real
    n_traces = x.size // sps
    if n_traces < 8:
        raise ValueError("need at least 8 symbol periods for an eye")

    center = sps // 2
    halfwin = max(1, sps // 8)
    window = (center + np.arange(-halfwin, halfwin + 1)) % sps

    def open_run(open_cols: np.ndarray) -> int:
        if np.all(open_cols):
            return open_cols.size
        if not np.any(open_cols):
            return 0
        doubled = np.concatenate([open_cols, open_cols])
        best = run = 0
        for v in doubled:
            run = run + 1 if v else 0
            best = max(best, run)
        return min(best, open_cols.size)

    # score = worst opening near the instant; ties broken by total open width
    best_key, opt = (-math.inf, -1), 0
    for p in range(sps):
        gaps_p, _ = _identity_gaps(_recut_traces(x, n_traces, sps, p),
                                   n_levels)
        key = (float(np.min(gaps_p[window])), open_run(gaps_p > 0.0))
        if key > best_key:
            best_key, opt = key, p

    traces = _recut_traces(x, n_traces, sps, opt)
    gaps, classes = _identity_gaps(traces, n_levels)
    width = open_run(gaps > 0.0) / sps
    levels = np.array([
        traces[classes == j, center].mean()
        for j in range(n_levels) if np.any(classes == j)
    ])
    return EyeReport(float(gaps[center]), float(width), opt / sps, levels)


def psd_welch(env: ComplexEnvelope, nperseg: int = 1024,
              window: str = "hann") -> Spectrum:
    """Two-sided Welch power spectral density, centered on zero frequency."""
    if nperseg < 8:
        raise ValueError("nperseg must be at least 8")
    nperseg = min(nperseg, len(env))
    freqs, psd = signal.welch(
        env.samples, fs=env.sample_rate, window=window, nperseg=nperseg,
        noverlap=nperseg // 2, detrend=False, return_onesided=False,
        scaling="density",
    )
    order = np.argsort(freqs)
    w = signal.get_window(window, nperseg)
    enbw = env.sample_rate * np.sum(w ** 2) / np.sum(w) ** 2
    return Spectrum(freqs[order], np.maximum(psd[order], 0.0), float(enbw))


def spurs_sfdr(spectrum: Spectrum, carrier_freq: float,
               exclusion_bins: int = 3, threshold_db: float = 10.0,
               min_dbc: float = -200.0):
    """Spur table and spurious-free dynamic range from a PSD.

    A spur is a local maximum more than ``threshold_db`` above the median
    level and above ``min_dbc`` relative to the carrier (numerical floor
    guard), outside the carrier exclusion window.  Returns (sfdr_db, spurs)
    with spurs as (freq_hz, level_dbc) sorted strongest first.
    """
    p = spectrum.psd
    if p.size < 8:
        raise ValueError("spectrum too short")
    floor = np.median(p[p > 0.0]) if np.any(p > 0.0) else 0.0
    if floor == 0.0:
        return math.inf, []
    carrier_idx = int(np.argmin(np.abs(spectrum.freqs - carrier_freq)))
    carrier_power = p[max(0, carrier_idx - exclusion_bins):
                      carrier_idx + exclusion_bins + 1].max()
    local_max = np.zeros(p.size, dtype=bool)
    local_max[1:-1] = (p[1:-1] >= p[:-2]) & (p[1:-1] >= p[2:])
    above = p > floor * 10.0 ** (threshold_db / 10.0)
    above &= p > carrier_power * 10.0 ** (min_dbc / 10.0)
    spur_mask = local_max & above
    spur_mask[max(0, carrier_idx - exclusion_bins):
              carrier_idx + exclusion_bins + 1] = False
    spur_idx = np.flatnonzero(spur_mask)
    spurs = sorted(
        ((float(spectrum.freqs[i]),
          float(10.0 * math.log10(p[i] / carrier_power))) for i in spur_idx),
        key=lambda fr: -fr[1],
    )
    if not spurs:
        return math.inf, []
    return -spurs[0][1], spurs


def image_rejection(env: ComplexEnvelope, tone_freq: float) -> float:
    """Power ratio (dB) of a tone to its mirror at minus the frequency.

    Uses the second half of the record (filters settled) and requires the
    tone to land on an exact analysis bin of that slice.
    """
    x = env.samples[len(env) // 2:]
    n = x.size
    k_f = tone_freq * n / env.sample_rate
    k = int(round(k_f))
    if abs(k_f - k) > 1e-6 or k == 0:
        raise ValueError("tone must land on a nonzero analysis bin; "
                         "adjust the record length")
    spec = np.fft.fft(x) / n
    p_sig = abs(spec[k % n]) ** 2
    p_img = abs(spec[-k % n]) ** 2
    if p_img == 0.0:
        return math.inf
    return 10.0 * math.log10(p_sig / p_img)


def lms_equalizer_train(
    rx: ComplexEnvelope,
    ref: ComplexEnvelope,
    n_taps: int = 11,
    step: float = 1e-3,
    n_passes: int = 1,
):
    """Train a symbol-spaced LMS FIR equalizer so conv(rx, taps, 'same')
    approaches the reference.  Returns (taps, mse_history); raises if the
    error grows instead of shrinking (step too large)."""
    if n_taps < 1 or n_taps % 2 == 0:
        raise ValueError("n_taps must be odd and positive")
    if rx.sample_rate != ref.sample_rate or len(rx) != len(ref):
        raise ValueError("rx and ref must share grid and length")
    x = rx.samples
    d = ref.samples
    c = n_taps // 2
    w = np.zeros(n_taps, dtype=np.complex128)
    w[c] = 1.0
    history = []
    block_err, block_n = 0.0, 0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_passes):
            for k in range(c, x.size - c):
                u = x[k + c: k - c - 1 if k - c - 1 >= 0 else None: -1]
                y = np.dot(w, u)
                e = d[k] - y
                w = w + step * e * np.conj(u)
                block_err += abs(e) ** 2
                block_n += 1
                if block_n == 256:
                    history.append(block_err / block_n)
                    block_err, block_n = 0.0, 0
    if block_n:
        history.append(block_err / block_n)
    grew = len(history) >= 2 and history[-1] > 4.0 * history[0]
    if grew or not np.all(np.isfinite(w)):
        raise ValueError("LMS diverged; reduce the step size")
    return w, np.asarray(history)
