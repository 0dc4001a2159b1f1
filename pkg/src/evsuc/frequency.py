"""Post-fault frequency security: RoCoF, quasi-steady-state and nadir.

The loss of the largest infeed P_l is covered by enhanced frequency
response (EFR, fully delivered after t_e seconds) and primary frequency
response (PFR, after t_p seconds), both ramping linearly from the
instant of the fault and sustained for the two-minute delivery window.
Load damping is neglected, which keeps every requirement expressible in
terms of post-loss inertia H, EFR volume R_E and PFR volume R_P.

The nadir requirement couples H and R_P bilinearly.  It is handled
either exactly (rotated second-order cone, for conic-capable solvers)
or through a family of supporting hyperplanes ("nadir cuts") whose
intersection contains the conic set, refined by a cutting-plane loop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "FrequencyParams",
    "FrState",
    "NadirCut",
    "MstgPoint",
    "rocof_min_inertia",
    "steady_state_ok",
    "nadir_terms",
    "nadir_ok",
    "min_inertia_for_nadir",
    "swing_nadir_oracle",
    "analytic_nadir",
    "nadir_cuts",
    "cut_at_state",
    "mstg_curve",
    "write_mstg_csv",
]

#: FR services are sustained for two minutes before slower reserves take over.
DELIVERY_WINDOW_S = 120.0


@dataclass(frozen=True)
class FrequencyParams:
    """Grid code limits and FR delivery speeds.

    f0 nominal frequency (Hz), delta_f_max maximum transient deviation
    (Hz), rocof_max maximum rate of change of frequency (Hz/s), p_l
    largest credible infeed loss (GW), t_e / t_p full-delivery times of
    EFR / PFR (s).
    """

    f0: float = 50.0
    delta_f_max: float = 0.8
    rocof_max: float = 1.0
    p_l: float = 1.8
    t_e: float = 1.0
    t_p: float = 10.0

    def validate(self) -> None:
        if min(self.f0, self.delta_f_max, self.rocof_max, self.p_l) <= 0:
            raise ValueError("f0, delta_f_max, rocof_max and p_l must be positive")
        if not 0 < self.t_e <= self.t_p:
            raise ValueError("need 0 < t_e <= t_p")


@dataclass(frozen=True)
class FrState:
    """Post-loss inertia H (GW s) and scheduled FR volumes (GW)."""

    h: float
    r_e: float
    r_p: float


@dataclass(frozen=True)
class NadirCut:
    """Supporting hyperplane a_h*H + a_e*R_E + a_p*R_P >= rhs."""

    a_h: float
    a_e: float
    a_p: float
    rhs: float

    def satisfied(self, s: FrState, tol: float = 1e-9) -> bool:
        return self.a_h * s.h + self.a_e * s.r_e + self.a_p * s.r_p >= self.rhs - tol


def rocof_min_inertia(freq: FrequencyParams) -> float:
    """Minimum post-loss inertia (GW s) so the initial RoCoF stays legal.

    |RoCoF| = P_l * f0 / (2 H) at the instant of the loss.
    """
    freq.validate()
    return freq.p_l * freq.f0 / (2.0 * freq.rocof_max)


def steady_state_ok(state: FrState, freq: FrequencyParams) -> bool:
    """Frequency settles only if delivered FR covers the loss."""
    return state.r_e + state.r_p >= freq.p_l


def nadir_terms(state: FrState, freq: FrequencyParams) -> tuple[float, float, float]:
    """Return (x1, x2, rhs) of the nadir requirement x1 * x2 >= rhs.

    x1 = H/f0 - R_E*t_e/(4 df_max), x2 = R_P,
    rhs = max(P_l - R_E, 0)^2 * t_p / (4 df_max).

    A fully covered loss (R_E >= P_l) leaves only the sign face x1 >= 0;
    clamping keeps feasibility monotone in R_E.
    """
    x1 = state.h / freq.f0 - state.r_e * freq.t_e / (4.0 * freq.delta_f_max)
    x2 = state.r_p
    shortfall = max(freq.p_l - state.r_e, 0.0)
    rhs = shortfall**2 * freq.t_p / (4.0 * freq.delta_f_max)
    return x1, x2, rhs


def nadir_ok(state: FrState, freq: FrequencyParams, tol: float = 0.0) -> bool:
    """Nadir requirement with the first factor required nonnegative.

    For R_E >= P_l the right-hand side is nonpositive and the
    requirement is vacuous provided x1 >= 0; x1 < 0 is flagged
    infeasible regardless of the product.
    """
    x1, x2, rhs = nadir_terms(state, freq)
    if x1 < -tol:
        return False
    return x1 * x2 >= rhs - tol


def min_inertia_for_nadir(r_e: float, r_p: float, freq: FrequencyParams) -> float:
    """Inertia at which the nadir constraint holds with equality.

    Infinite when r_p = 0 while EFR alone cannot cover the loss.
    """
    if r_e >= freq.p_l:
        return freq.f0 * r_e * freq.t_e / (4.0 * freq.delta_f_max)
    if r_p <= 0.0:
        return math.inf
    rhs = (freq.p_l - r_e) ** 2 * freq.t_p / (4.0 * freq.delta_f_max)
    return freq.f0 * (rhs / r_p + r_e * freq.t_e / (4.0 * freq.delta_f_max))


def _ramp_energy(t: np.ndarray, volume: float, t_full: float) -> np.ndarray:
    """Integral of the delivery ramp volume*min(t/t_full, 1) from 0 to t."""
    ramped = volume * t**2 / (2.0 * t_full)
    held = volume * (t - t_full / 2.0)
    return np.where(t <= t_full, ramped, held)


def swing_nadir_oracle(
    state: FrState, freq: FrequencyParams, dt: float = 5e-4
) -> float:
    """Maximum frequency drop (Hz) from integrating the swing equation.

    df/dt = -(f0 / 2H) * (P_l - ramp_e(t) - ramp_p(t)) over the
    two-minute delivery window, damping neglected.  Over-frequency after
    recovery is not counted: in practice response backs off once the
    deficit is closed.  Independent of the algebraic nadir check; used
    to certify it.
    """
    if state.h <= 0:
        raise ValueError("inertia must be positive")
    if dt > 1e-3:
        raise ValueError("dt must be at most 1 ms")
    t = np.arange(0.0, DELIVERY_WINDOW_S + dt, dt)
    deficit_integral = (
        freq.p_l * t
        - _ramp_energy(t, state.r_e, freq.t_e)
        - _ramp_energy(t, state.r_p, freq.t_p)
    )
    dev = (freq.f0 / (2.0 * state.h)) * deficit_integral
    return float(np.max(dev))


def analytic_nadir(state: FrState, freq: FrequencyParams) -> float:
    """Closed-form maximum deviation; cross-check for the integrator.

    The deficit is piecewise linear in t, so the deviation is piecewise
    quadratic and its maximum sits where the deficit crosses zero or at
    a segment boundary.
    """
    if state.h <= 0:
        raise ValueError("inertia must be positive")

    def integral(t: float) -> float:
        return (
            freq.p_l * t
            - float(_ramp_energy(np.array([t]), state.r_e, freq.t_e)[0])
            - float(_ramp_energy(np.array([t]), state.r_p, freq.t_p)[0])
        )

    candidates = [freq.t_e, freq.t_p, DELIVERY_WINDOW_S]
    # deficit(t) = p_l - r_e*min(t/t_e,1) - r_p*min(t/t_p,1); roots per segment
    segments = [(0.0, freq.t_e), (freq.t_e, freq.t_p), (freq.t_p, DELIVERY_WINDOW_S)]
    for lo, hi in segments:
        slope = (state.r_e / freq.t_e if hi <= freq.t_e else 0.0) + (
            state.r_p / freq.t_p if hi <= freq.t_p else 0.0
        )
        if slope > 0:
            offset = freq.p_l
            if hi > freq.t_e:
                offset -= state.r_e
            root = offset / slope
            if lo <= root <= hi:
                candidates.append(root)
    dev = [freq.f0 / (2.0 * state.h) * integral(t) for t in candidates]
    return max(dev + [0.0])


def _hyperbola_cut(
    freq: FrequencyParams, re0: float, x1_ref: float, x2_ref: float
) -> NadirCut:
    """Supporting hyperplane of the nadir set at reference EFR level re0.

    Every conic-feasible state satisfies
        x2_ref*x1 + x1_ref*x2 >= 2*c*(p_l - re0)*(p_l - r_e)
    with c = t_p/(4 df_max): by the AM-GM inequality the left side is at
    least 2*sqrt(x1_ref*x2_ref*x1*x2) >= 2*sqrt(K(re0)*K(r_e)), and for
    r_e > p_l the right side is negative while the left is nonnegative.
    """
    c = freq.t_p / (4.0 * freq.delta_f_max)
    scale = 2.0 * c * (freq.p_l - re0)
    a_h = x2_ref / freq.f0
    a_e = scale - x2_ref * freq.t_e / (4.0 * freq.delta_f_max)
    a_p = x1_ref
    return NadirCut(a_h=a_h, a_e=a_e, a_p=a_p, rhs=scale * freq.p_l)


def sign_cut(freq: FrequencyParams) -> NadirCut:
    """The x1 >= 0 face: H/f0 - R_E*t_e/(4 df_max) >= 0."""
    return NadirCut(
        a_h=1.0 / freq.f0,
        a_e=-freq.t_e / (4.0 * freq.delta_f_max),
        a_p=0.0,
        rhs=0.0,
    )


def nadir_cuts(
    freq: FrequencyParams,
    re_points: Sequence[float],
    rp_points: Sequence[float] | None = None,
) -> list[NadirCut]:
    """Tangent outer approximation of the nadir set.

    One cut per (EFR reference, PFR reference) pair plus the x1 >= 0
    face.  References at or beyond P_l are skipped (the constraint is
    vacuous there and the face cut covers it).
    """
    freq.validate()
    if rp_points is None:
        rp_points = [f * freq.p_l for f in (0.15, 0.35, 0.7, 1.2, 2.0)]
    c = freq.t_p / (4.0 * freq.delta_f_max)
    cuts = [sign_cut(freq)]
    for re0 in re_points:
        if re0 >= freq.p_l:
            continue
        k = c * (freq.p_l - re0) ** 2
        for rp0 in rp_points:
            if rp0 <= 0:
                continue
            cuts.append(_hyperbola_cut(freq, re0, x1_ref=k / rp0, x2_ref=rp0))
    return cuts


def cut_at_state(state: FrState, freq: FrequencyParams) -> NadirCut:
    """Cut separating a nadir-violating state from the conic set.

    The reference point is the projection of the state onto the
    boundary hyperbola at its own EFR level.
    """
    c = freq.t_p / (4.0 * freq.delta_f_max)
    re0 = min(max(state.r_e, 0.0), freq.p_l * (1.0 - 1e-9))
    k = c * (freq.p_l - re0) ** 2
    x1, x2, _ = nadir_terms(state, freq)
    x1 = max(x1, 0.0)
    x2 = max(x2, 0.0)
    if x1 > 1e-12 and x2 > 1e-12:
        t = math.sqrt(k / (x1 * x2))
        ref1, ref2 = x1 * t, x2 * t
    elif x2 > 1e-12:
        ref1, ref2 = k / x2, x2
    elif x1 > 1e-12:
        ref1, ref2 = x1, k / x1
    else:
        ref1 = ref2 = math.sqrt(k)
    return _hyperbola_cut(freq, re0, x1_ref=ref1, x2_ref=ref2)


@dataclass(frozen=True)
class MstgPoint:
    fr_gw: float
    mstg_gw: float
    binding: str  # rocof | nadir | steady_state


def mstg_curve(
    freq: FrequencyParams,
    avg_inertia_s: float,
    msg_fraction: float,
    delivery_time_s: float,
    fr_levels: Iterable[float],
) -> list[MstgPoint]:
    """Minimum stable thermal generation versus procured FR volume.

    A single FR product of the given delivery time covers the loss on
    its own (no EFR), thermal plant has a fleet-average inertia
    constant and stable-generation fraction.  FR below P_l cannot
    arrest the fall at all (steady-state violation).
    """
    freq.validate()
    if avg_inertia_s <= 0 or not 0 < msg_fraction <= 1:
        raise ValueError("avg_inertia_s must be positive, msg_fraction in (0, 1]")
    h_rocof = rocof_min_inertia(freq)
    points: list[MstgPoint] = []
    for fr in fr_levels:
        if fr < freq.p_l:
            points.append(MstgPoint(fr, math.nan, "steady_state"))
            continue
        h_nadir = freq.f0 * freq.p_l**2 * delivery_time_s / (4.0 * freq.delta_f_max * fr)
        h_req = max(h_rocof, h_nadir)
        binding = "rocof" if h_rocof >= h_nadir else "nadir"
        points.append(MstgPoint(fr, msg_fraction * h_req / avg_inertia_s, binding))
    return points


def write_mstg_csv(points: Sequence[MstgPoint], path: str, config_hash: str = "") -> None:
    with open(path, "w", newline="") as f:
        if config_hash:
            f.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(f)
        writer.writerow(["fr_gw", "mstg_gw", "binding_constraint"])
        for p in points:
            writer.writerow([f"{p.fr_gw:.6f}", f"{p.mstg_gw:.6f}", p.binding])
