"""End-to-end calibration routines.

Each routine probes a transmit chain with a known stimulus, measures the
distortion it cares about, and returns a new chain with a correction stage
attached.  All of them are meant to be idempotent: running a calibration on
an already-corrected chain should produce a correction close to identity.
Routines raise CalibrationError instead of returning a bad correction when
the measurement says the model does not apply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sigchain import modulation as mod
from sigchain.chains import (StageSpec, TxChain, append_stage, prepend_stage,
                             run_chain, synth_comm_waveform, with_stage_param)
from sigchain.envelope import ComplexEnvelope, fractional_delay
from sigchain.metrics import demodulate, evm

__all__ = [
    "CalibrationError",
    "AmplitudeLut",
    "rabi_amplitude_cal",
    "iq_cal",
    "polar_delay_align",
    "dpd_fit",
    "leakage_cancel",
]


class CalibrationError(RuntimeError):
    """A calibration probe measured something its model cannot correct."""


def _isotonic(y: np.ndarray) -> np.ndarray:
    """Nondecreasing least-squares fit by pooling adjacent violators."""
    vals: list[float] = []
    counts: list[int] = []
    for v in np.asarray(y, dtype=np.float64):
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, n2 = vals.pop(), counts.pop()
            v1, n1 = vals.pop(), counts.pop()
            vals.append((v1 * n1 + v2 * n2) / (n1 + n2))
            counts.append(n1 + n2)
    out = np.empty(len(y))
    at = 0
    for v, n in zip(vals, counts):
        out[at:at + n] = v
        at += n
    return out


def _parabola_vertex(x: np.ndarray, y: np.ndarray) -> float:
    """Abscissa of the parabola through three points."""
    d21 = (y[1] - y[0]) / (x[1] - x[0])
    d32 = (y[2] - y[1]) / (x[2] - x[1])
    curv = (d32 - d21) / (x[2] - x[0])
    if curv >= 0.0:
        raise CalibrationError("population peak is not locally concave")
    return 0.5 * (x[0] + x[1] - d21 / curv)


@dataclass(frozen=True)
class AmplitudeLut:
    """Drive code versus measured rotation angle, monotone by construction.

    The top knot is the interpolated code for an exact half-turn, so
    ``code_for_angle(pi)`` never extrapolates.
    """

    codes: np.ndarray
    theta: np.ndarray
    theta_raw: np.ndarray

    @property
    def pi_code(self) -> float:
        return float(self.codes[-1])

    def code_for_angle(self, angle: float) -> float:
        if not self.theta[0] <= angle <= self.theta[-1] + 1e-12:
            raise CalibrationError(
                f"angle {angle:.4f} is outside the calibrated range")
        return float(np.interp(angle, self.theta, self.codes))

    def angle_for_code(self, code: float) -> float:
        if not self.codes[0] <= code <= self.codes[-1] + 1e-12:
            raise CalibrationError(
                f"code {code:.4f} is outside the calibrated range")
        return float(np.interp(code, self.codes, self.theta))


def rabi_amplitude_cal(model, envelope_spec, sample_rate: float,
                       scales, chain: TxChain | None = None,
                       residual_tol: float = 0.15,
                       saturation: float = 0.995) -> AmplitudeLut:
    """Map drive amplitude codes to rotation angles from a population sweep.

    Sweeps the envelope peak through ``scales``, reads the excited-state
    population, and inverts it on the first half turn.  The population peak
    is refined with a three-point parabola so the half-turn code does not
    inherit the flat top of the sine.  A nonmonotone angle map beyond
    ``residual_tol`` radians means the inversion is untrustworthy.
    """
    from sigchain.qubit import rabi_protocol

    codes = np.asarray(scales, dtype=np.float64)
    if codes.size < 5:
        raise ValueError("need at least 5 sweep points")
    if np.any(np.diff(codes) <= 0.0):
        raise ValueError("scales must be strictly increasing")
    p1 = rabi_protocol(model, envelope_spec, sample_rate, codes, chain=chain)

    peak = int(np.argmax(p1))
    if p1[peak] < saturation:
        raise CalibrationError(
            "sweep never reaches a half turn; extend the amplitude range")
    if peak == 0 or peak == codes.size - 1:
        raise CalibrationError(
            "population peak sits on the sweep edge; extend the range")
    pi_code = _parabola_vertex(codes[peak - 1:peak + 2], p1[peak - 1:peak + 2])

    keep = codes < pi_code
    theta_raw = 2.0 * np.arcsin(np.sqrt(np.clip(p1[keep], 0.0, 1.0)))
    theta_fit = _isotonic(theta_raw)
    residual = float(np.max(np.abs(theta_raw - theta_fit), initial=0.0))
    if residual > residual_tol:
        raise CalibrationError(
            f"rotation map deviates {residual:.3f} rad from monotone; "
            "the drive is too distorted for a single-valued inversion")

    lut_codes = np.append(codes[keep], pi_code)
    lut_theta = np.append(np.minimum(theta_fit, math.pi), math.pi)
    return AmplitudeLut(lut_codes, lut_theta, theta_raw)


def iq_cal(chain: TxChain, sample_rate: float, tone_freq: float | None = None,
           n_samples: int = 4096) -> TxChain:
    """Prepend the exact inverse of the chain's quadrature error.

    A single complex tone separates the direct gain, the image gain, and
    the static offset into three FFT bins.  The correction solves the
    2x2 mixing exactly, so a second pass measures identity.
    """
    if tone_freq is None:
        k = n_samples // 8
    else:
        k = int(round(tone_freq * n_samples / sample_rate))
    if not 0 < k < n_samples // 2:
        raise ValueError("tone must land strictly inside the first Nyquist "
                         "zone on an analysis bin")
    t = np.arange(n_samples)
    probe = ComplexEnvelope(np.exp(2j * np.pi * k * t / n_samples),
                            sample_rate)
    out = run_chain(chain, probe)
    if len(out) != n_samples:
        raise CalibrationError("chain changed the record length; "
                               "quadrature probe bins no longer line up")
    spec = np.fft.fft(out.samples)
    mu = spec[k] / n_samples
    nu = spec[-k] / n_samples
    offs = spec[0] / n_samples
    det = abs(mu) ** 2 - abs(nu) ** 2
    if abs(det) < 1e-12:
        raise CalibrationError("image is as strong as the carrier; "
                               "quadrature mixing is not invertible")
    a = np.conj(mu) / det
    b = -nu / det
    d = (-offs * np.conj(mu) + nu * np.conj(offs)) / det
    matrix = [[float(np.real(a + b)), float(-np.imag(a - b))],
              [float(np.imag(a + b)), float(np.real(a - b))]]
    stage = StageSpec("iq_correction", {"matrix": matrix, "offset": complex(d)})
    return prepend_stage(chain, stage)


def _probe_bits(n_symbols: int, bits_per_symbol: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=n_symbols * bits_per_symbol)


def polar_delay_align(chain: TxChain, sample_rate: float,
                      symbol_period: float, window_s: float, step_s: float,
                      n_symbols: int = 96, seed: int = 7):
    """Grid-search the amplitude-path trim delay that minimizes waveform EVM.

    Returns (aligned_chain, best_delay_s, evm_per_candidate).  Each trial
    removes the candidate delay from the whole record before scoring, the
    way receiver timing recovery absorbs a bulk delay, so the score tracks
    the residual skew between the paths rather than the common shift.  The
    best candidate landing on either end of the grid raises, since the
    true optimum may sit outside the window.
    """
    if window_s <= 0.0 or step_s <= 0.0:
        raise ValueError("window_s and step_s must be positive")
    sps = symbol_period * sample_rate
    if abs(sps - round(sps)) > 1e-6 or round(sps) < 4:
        raise ValueError("symbol_period must span an integer number of "
                         "samples, at least 4")
    const = mod.build_constellation("m_psk", m=4)
    shape = mod.PulseShape("raised_cosine", span_symbols=8,
                           samples_per_symbol=int(round(sps)))
    bits = _probe_bits(n_symbols, const.bits_per_symbol, seed)

    candidates = np.arange(-window_s, window_s + 0.5 * step_s, step_s)
    scores = np.empty(candidates.size)
    for idx, cand in enumerate(candidates):
        trial = with_stage_param(chain, "polar_paths",
                                 comp_delay_s=float(cand))
        stream, env = synth_comm_waveform(bits, const, shape, chain=trial,
                                          symbol_period=symbol_period)
        if cand != 0.0:
            env = fractional_delay(env, -float(cand))
        result = demodulate(env, const, shape, symbol_period,
                            skip_edge_symbols=shape.span_symbols)
        ref = stream.symbols[shape.span_symbols:-shape.span_symbols]
        n = min(len(result.rx_symbols), len(ref))
        scores[idx] = evm(result.rx_symbols[:n], ref[:n]).evm_rms
    best = int(np.argmin(scores))
    if best in (0, candidates.size - 1):
        raise CalibrationError("best trim delay sits on the search boundary; "
                               "widen the window")
    best_delay = float(candidates[best])
    aligned = with_stage_param(chain, "polar_paths", comp_delay_s=best_delay)
    return aligned, best_delay, scores


def dpd_fit(chain: TxChain, sample_rate: float, order: int = 5,
            n_levels: int = 32, full_scale: float = 1.0,
            hold_samples: int = 64):
    """Fit an odd-polynomial predistorter from an amplitude staircase.

    Returns (corrected_chain, gain_poly, phase_poly).  The staircase walks
    ``n_levels`` amplitudes up to full_scale, each held long enough to
    settle; the settled output versus input gives the AM-AM and AM-PM
    curves.  The forward curve is fit first and then inverted by Newton
    iteration exactly on the drive range the predistorter will see, so
    the fit never extrapolates.  A nonmonotone AM-AM curve, or a forward
    fit whose slope collapses inside the range, raises: no static
    predistorter can undo a fold, and full_scale outputs the chain cannot
    reach have no preimage.
    """
    if order not in (3, 5, 7):
        raise ValueError("order must be 3, 5, or 7")
    if n_levels < order + 2:
        raise ValueError("need more staircase levels than fit coefficients")
    levels = full_scale * np.arange(1, n_levels + 1) / n_levels
    probe = ComplexEnvelope(
        np.repeat(levels, hold_samples).astype(np.complex128), sample_rate)
    out = run_chain(chain, probe)
    ratio = len(out) / len(probe)
    hold_out = int(round(hold_samples * ratio))
    if hold_out < 4 or abs(hold_out * n_levels - len(out)) > 0:
        raise CalibrationError("chain resampling broke the staircase grid")
    steps = out.samples.reshape(n_levels, hold_out)
    settled = steps[:, 3 * hold_out // 4:].mean(axis=1)
    amp_out = np.abs(settled)
    phase_out = np.unwrap(np.angle(settled))
    if np.any(np.diff(amp_out) <= 0.0):
        raise CalibrationError("amplitude response folds over; static "
                               "predistortion cannot invert it")

    powers = np.arange(1, order + 1, 2)
    fwd, *_ = np.linalg.lstsq(levels[:, None] ** powers, amp_out, rcond=None)
    drive = levels.copy()
    for _ in range(60):
        val = (drive[:, None] ** powers) @ fwd
        slope = (drive[:, None] ** (powers - 1)) @ (fwd * powers)
        if np.any(slope <= 0.0):
            raise CalibrationError("amplitude response folds over; static "
                                   "predistortion cannot invert it")
        drive = drive - (val - levels) / slope
    if np.max(np.abs((drive[:, None] ** powers) @ fwd - levels)) > \
            1e-6 * full_scale:
        raise CalibrationError("forward amplitude fit has no preimage for "
                               "the requested range")
    gain_poly, *_ = np.linalg.lstsq(levels[:, None] ** powers, drive,
                                    rcond=None)

    all_powers = np.arange(1, order + 1)
    phase_fwd, *_ = np.linalg.lstsq(levels[:, None] ** all_powers,
                                    phase_out, rcond=None)
    phase_at_drive = (drive[:, None] ** all_powers) @ phase_fwd
    phase_fit, *_ = np.linalg.lstsq(levels[:, None] ** all_powers,
                                    -phase_at_drive, rcond=None)
    phase_poly = np.concatenate([[0.0], phase_fit])
    stage = StageSpec("dpd", {"gain_poly": [float(c) for c in gain_poly],
                              "phase_poly": [float(c) for c in phase_poly]})
    return prepend_stage(chain, stage), gain_poly, phase_poly


def leakage_cancel(chain: TxChain, sample_rate: float,
                   on_samples: int = 256, off_samples: int = 256,
                   guard_samples: int = 8):
    """Append a gated offset that nulls the static level in gate gaps.

    Returns (corrected_chain, measured_off_level).  The probe is a unit
    burst followed by silence; the mean output over the silent window
    (past a settling guard) becomes the correction.  An off level that
    wobbles by more than 10 percent of itself is not static, so it raises
    rather than baking a wrong constant into the chain.
    """
    if off_samples <= guard_samples + 8:
        raise ValueError("off window too short for the settling guard")
    probe = ComplexEnvelope(
        np.concatenate([np.ones(on_samples), np.zeros(off_samples)])
        .astype(np.complex128), sample_rate)
    out = run_chain(chain, probe)
    ratio = len(out) / len(probe)
    start = int(round((on_samples + guard_samples) * ratio))
    tail = out.samples[start:]
    level = complex(tail.mean())
    wobble = float(np.std(tail))
    on_rms = float(np.sqrt(np.mean(np.abs(
        out.samples[:int(round(on_samples * ratio))]) ** 2)))
    floor = max(abs(level), 1e-9 * max(on_rms, 1e-30))
    if wobble > 0.1 * floor:
        raise CalibrationError("off-state level is not static; a constant "
                               "offset cannot cancel it")
    stage = StageSpec("gated_offset", {"offset": -level})
    return append_stage(chain, stage), level
