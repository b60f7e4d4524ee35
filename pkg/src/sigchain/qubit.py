"""Qubit-side scoring: drive the two- or three-level system with a complex
envelope and grade the resulting gate.

The drive is modeled in the frame rotating at the drive frequency after the
rotating-wave approximation, so the baseband envelope is the whole story:
its magnitude sets the instantaneous Rabi rate, its phase sets the rotation
axis in the equatorial plane.  Propagation is piecewise constant over the
sample grid (samples are interval-center values); ``substeps`` refines each
interval by linear interpolation and ``propagate_converged`` doubles the
refinement until the propagator stops moving.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sigchain.envelope import ComplexEnvelope

__all__ = [
    "QubitModel",
    "GateSpec",
    "FidelityReport",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "target_unitary",
    "propagate",
    "propagate_converged",
    "pulse_area",
    "axis_angle",
    "average_gate_fidelity",
    "infidelity_model",
    "leakage_population",
    "bloch_trajectory",
    "rabi_protocol",
    "phase_coherency_protocol",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)


@dataclass(frozen=True)
class QubitModel:
    """Driven qubit in the drive rotating frame.

    drive_gain converts envelope amplitude to Rabi rate (rad/s per unit).
    detuning is drive frequency minus qubit frequency (rad/s).  A third
    level needs a negative anharmonicity (rad/s).
    """

    drive_gain: float
    detuning: float = 0.0
    levels: int = 2
    anharmonicity: float = 0.0

    def __post_init__(self) -> None:
        if self.levels not in (2, 3):
            raise ValueError("levels must be 2 or 3")
        if not self.drive_gain > 0.0:
            raise ValueError("drive_gain must be positive")
        if self.levels == 3 and not self.anharmonicity < 0.0:
            raise ValueError("a three-level model needs anharmonicity < 0")


@dataclass(frozen=True)
class GateSpec:
    """Single-qubit rotation: angle about an equatorial axis at axis_phase."""

    rotation_angle: float
    axis_phase: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.rotation_angle <= 2.0 * math.pi:
            raise ValueError("rotation_angle must lie in (0, 2*pi]")


@dataclass(frozen=True)
class FidelityReport:
    """Average gate fidelity plus an axis-angle error decomposition."""

    fidelity: float
    infidelity: float
    amp_error: float
    phase_error: float
    leakage: float | None = None


def target_unitary(gate: GateSpec) -> np.ndarray:
    """Ideal 2x2 rotation for a gate spec."""
    th, ph = gate.rotation_angle, gate.axis_phase
    axis = math.cos(ph) * SIGMA_X + math.sin(ph) * SIGMA_Y
    return math.cos(th / 2.0) * np.eye(2) - 1j * math.sin(th / 2.0) * axis


def _refined_samples(env: ComplexEnvelope, substeps: int) -> np.ndarray:
    if substeps == 1:
        return env.samples
    n = len(env)
    coarse = np.arange(n) + 0.5
    fine = (np.arange(n * substeps) + 0.5) / substeps
    re = np.interp(fine, coarse, env.samples.real)
    im = np.interp(fine, coarse, env.samples.imag)
    return re + 1j * im


def _ordered_product(steps: np.ndarray) -> np.ndarray:
    # time-ordered product steps[n-1] @ ... @ steps[0], paired up for speed
    while steps.shape[0] > 1:
        if steps.shape[0] % 2:
            head = np.matmul(steps[1:-1:2], steps[0:-1:2])
            steps = np.concatenate([head, steps[-1:]])
        else:
            steps = np.matmul(steps[1::2], steps[0::2])
    return steps[0]


def _propagate_two_level(model: QubitModel, x: np.ndarray,
                         dt: float) -> np.ndarray:
    # H = (detuning/2) sz + (g/2)(Re x sx + Im x sy); per-step closed form
    ax = 0.5 * model.drive_gain * x.real
    ay = 0.5 * model.drive_gain * x.imag
    az = np.full(x.size, 0.5 * model.detuning)
    r = np.sqrt(ax * ax + ay * ay + az * az)
    ang = r * dt
    c = np.cos(ang)
    s = np.where(r > 0.0, np.sin(ang) / np.where(r > 0.0, r, 1.0), dt)
    u = np.empty((x.size, 2, 2), dtype=np.complex128)
    u[:, 0, 0] = c - 1j * s * az
    u[:, 0, 1] = -1j * s * (ax - 1j * ay)
    u[:, 1, 0] = -1j * s * (ax + 1j * ay)
    u[:, 1, 1] = c + 1j * s * az
    return _ordered_product(u)


def _three_level_hamiltonians(model: QubitModel, x: np.ndarray) -> np.ndarray:
    n = x.size
    h = np.zeros((n, 3, 3), dtype=np.complex128)
    d = model.detuning
    h[:, 0, 0] = 0.5 * d
    h[:, 1, 1] = -0.5 * d
    h[:, 2, 2] = -1.5 * d + model.anharmonicity
    cpl = 0.5 * model.drive_gain * np.conj(x)
    h[:, 0, 1] = cpl
    h[:, 1, 2] = math.sqrt(2.0) * cpl
    h[:, 1, 0] = np.conj(h[:, 0, 1])
    h[:, 2, 1] = np.conj(h[:, 1, 2])
    return h


def _propagate_three_level(model: QubitModel, x: np.ndarray,
                           dt: float) -> np.ndarray:
    h = _three_level_hamiltonians(model, x)
    evals, evecs = np.linalg.eigh(h)
    phase = np.exp(-1j * evals * dt)
    steps = np.einsum("kij,kj,klj->kil", evecs, phase, np.conj(evecs))
    return _ordered_product(steps)


def propagate(model: QubitModel, env: ComplexEnvelope,
              substeps: int = 1) -> np.ndarray:
    """Total propagator for a drive record (time-ordered product)."""
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    x = _refined_samples(env, substeps)
    dt = 1.0 / (env.sample_rate * substeps)
    if model.levels == 2:
        return _propagate_two_level(model, x, dt)
    return _propagate_three_level(model, x, dt)


def propagate_converged(model: QubitModel, env: ComplexEnvelope,
                        tol: float = 1e-10,
                        max_doublings: int = 12) -> np.ndarray:
    """Refine substeps by doubling until the propagator stops changing."""
    substeps = 1
    coarse = propagate(model, env, substeps)
    for _ in range(max_doublings):
        substeps *= 2
        fine = propagate(model, env, substeps)
        if np.max(np.abs(fine - coarse)) < tol:
            return fine
        coarse = fine
    raise RuntimeError(f"propagator did not converge to {tol:g}")


def pulse_area(env: ComplexEnvelope, drive_gain: float) -> float:
    """Rotation angle a resonant drive would accumulate: g * integral |x| dt."""
    return float(drive_gain * np.sum(np.abs(env.samples)) / env.sample_rate)


def _unitarize(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def axis_angle(u: np.ndarray) -> tuple[float, np.ndarray]:
    """Rotation angle in [0, 2*pi) and unit axis of a 2x2 unitary.

    The global phase is stripped via the determinant; the leftover sign
    ambiguity is resolved toward the smaller rotation angle.
    """
    if u.shape != (2, 2):
        raise ValueError("axis_angle expects a 2x2 unitary")
    det = np.linalg.det(u)
    u0 = u * np.exp(-0.5j * np.angle(det))
    best = None
    for cand in (u0, -u0):
        c = 0.5 * np.real(np.trace(cand))
        s = np.array([
            0.5j * np.trace(SIGMA_X @ cand),
            0.5j * np.trace(SIGMA_Y @ cand),
            0.5j * np.trace(SIGMA_Z @ cand),
        ])
        mag = np.linalg.norm(s)
        theta = 2.0 * math.atan2(mag, c)
        axis = np.real(s / mag) if mag > 1e-12 else np.array([0.0, 0.0, 1.0])
        if best is None or theta < best[0]:
            best = (theta, axis)
    return best


def infidelity_model(theta: float, eps_a: float, eps_phi: float) -> float:
    """Small-error infidelity of a rotation with relative amplitude error
    eps_a and axis phase error eps_phi (radians)."""
    return (theta ** 2 / 6.0) * eps_a ** 2 \
        + (2.0 / 3.0) * math.sin(theta / 2.0) ** 2 * eps_phi ** 2


def leakage_population(actual: np.ndarray) -> float:
    """Population escaping the computational subspace, averaged over it."""
    m = actual[:2, :2]
    return float(1.0 - np.real(np.trace(m.conj().T @ m)) / 2.0)


def average_gate_fidelity(actual: np.ndarray,
                          target: np.ndarray) -> FidelityReport:
    """Average fidelity of an implemented gate against a 2x2 target.

    A 3x3 actual is compared on the computational subspace; its leakage is
    reported separately rather than folded into the axis-angle errors.
    """
    if target.shape != (2, 2):
        raise ValueError("target must be a 2x2 unitary")
    if actual.shape == (2, 2):
        m = actual
        tr_mm = 2.0
        leak = None
    elif actual.shape == (3, 3):
        m = actual[:2, :2]
        tr_mm = float(np.real(np.trace(m.conj().T @ m)))
        leak = 1.0 - tr_mm / 2.0
    else:
        raise ValueError("actual must be 2x2 or 3x3")
    overlap = np.trace(target.conj().T @ m)
    fid = (tr_mm + abs(overlap) ** 2) / 6.0

    th_t, ax_t = axis_angle(target)
    th_a, ax_a = axis_angle(_unitarize(m))
    if np.dot(ax_a, ax_t) < 0.0:
        # same rotation written with the axis flipped; use the target's book
        th_a, ax_a = 2.0 * math.pi - th_a, -ax_a
    amp_err = (th_a - th_t) / th_t if th_t > 0.0 else 0.0
    ph_t = math.atan2(ax_t[1], ax_t[0])
    ph_a = math.atan2(ax_a[1], ax_a[0])
    ph_err = math.remainder(ph_a - ph_t, 2.0 * math.pi)
    return FidelityReport(float(fid), float(1.0 - fid), float(amp_err),
                          float(ph_err), leak)


def bloch_trajectory(model: QubitModel, env: ComplexEnvelope,
                     substeps: int = 1):
    """Pauli expectation track of |0> under the drive.

    Returns (times, points) where points[k] = (<sx>, <sy>, <sz>) after
    sample k.  Two-level models only.
    """
    if model.levels != 2:
        raise ValueError("bloch_trajectory needs a two-level model")
    x = _refined_samples(env, substeps)
    dt = 1.0 / (env.sample_rate * substeps)
    psi = np.array([1.0, 0.0], dtype=np.complex128)
    pts = np.empty((x.size + 1, 3))
    times = np.empty(x.size + 1)

    def record(k: int, state: np.ndarray) -> None:
        a, b = state
        pts[k, 0] = 2.0 * np.real(np.conj(a) * b)
        pts[k, 1] = 2.0 * np.imag(np.conj(a) * b)
        pts[k, 2] = np.abs(a) ** 2 - np.abs(b) ** 2
        times[k] = env.t0 + k * dt

    record(0, psi)
    ax = 0.5 * model.drive_gain * x.real
    ay = 0.5 * model.drive_gain * x.imag
    az = 0.5 * model.detuning
    for k in range(x.size):
        r = math.sqrt(ax[k] ** 2 + ay[k] ** 2 + az ** 2)
        ang = r * dt
        c = math.cos(ang)
        s = math.sin(ang) / r if r > 0.0 else dt
        u = np.array([
            [c - 1j * s * az, -1j * s * (ax[k] - 1j * ay[k])],
            [-1j * s * (ax[k] + 1j * ay[k]), c + 1j * s * az],
        ])
        psi = u @ psi
        record(k + 1, psi)
    return times, pts


def rabi_protocol(model: QubitModel, envelope_spec, sample_rate: float,
                  scales, chain=None) -> np.ndarray:
    """Excited-state population versus drive amplitude scale.

    Each scale sets the envelope peak directly; the pulse runs through the
    transmit chain (when given) before hitting the qubit.
    """
    from sigchain import modulation as mod
    from sigchain.chains import synth_qubit_pulse

    p1 = np.empty(len(scales))
    for k, scale in enumerate(scales):
        spec = mod.with_peak(envelope_spec, float(scale))
        env = synth_qubit_pulse(chain, spec, sample_rate)
        u = propagate(model, env)
        p1[k] = abs(u[1, 0]) ** 2
    return p1


def phase_coherency_protocol(model: QubitModel, envelope_spec,
                             sample_rate: float, theta_a: float,
                             phi_b_values, chain=None) -> np.ndarray:
    """Two-pulse axis-coherency check.

    Pulse A rotates by theta_a about x, pulse B by pi about an axis at each
    phi_b; ideal hardware returns ground population sin^2(theta_a / 2)
    independent of phi_b, so any phi_b ripple measures inter-pulse phase
    error injected by the chain.
    """
    from sigchain.chains import synth_qubit_pulse

    p0 = np.empty(len(phi_b_values))
    env_a = synth_qubit_pulse(chain, envelope_spec, sample_rate,
                              rotation_angle=theta_a, axis_phase=0.0,
                              drive_gain=model.drive_gain)
    u_a = propagate(model, env_a)
    for k, phi_b in enumerate(phi_b_values):
        env_b = synth_qubit_pulse(chain, envelope_spec, sample_rate,
                                  rotation_angle=math.pi,
                                  axis_phase=float(phi_b),
                                  drive_gain=model.drive_gain)
        u = propagate(model, env_b) @ u_a
        p0[k] = abs(u[0, 0]) ** 2
    return p0
