"""Battery calendar fade model for the aggregated EV fleet.

Fade rate is a cubic function of state of charge; the unit commitment
penalises a fade variable that is bounded below by two straight lines
so the whole thing stays linear.  Rates are in percent of original
capacity per hour, SOC is normalised to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegradationParams",
    "fade_cubic",
    "fade_linear",
    "fit_linear_cuts",
    "fleet_fade_cost",
    "workday_fade",
]


@dataclass(frozen=True)
class DegradationParams:
    """Calendar-fade coefficients and the cost of lost capacity.

    ``a1``/``a2`` define the cubic rate a1*(soc - 0.5)^3 + a2 in %/h.
    ``alpha*``/``beta*`` are the two lower-bounding lines used inside
    the optimiser.  ``shoulder`` is the SOC where the two line segments
    used in the fit meet.  ``cost_per_percent`` converts fade to pounds
    per EV (battery replacement cost spread over its usable life).
    """

    a1: float = 5.70e-4
    a2: float = 5.70e-5
    alpha1: float = 2.76e-5
    alpha2: float = 4.29e-5
    beta1: float = 1.88e-4
    beta2: float = -7.76e-5
    shoulder: float = 0.76
    cost_per_percent: float = 1500.0


def fade_cubic(soc: float, p: DegradationParams = DegradationParams()) -> float:
    """Calendar fade rate (%/h) at a given SOC, cubic model."""
    return p.a1 * (soc - 0.5) ** 3 + p.a2


def fade_linear(soc: float, p: DegradationParams = DegradationParams()) -> float:
    """Fade rate (%/h) as the optimiser sees it: max of the two line cuts.

    A minimisation with constraints q >= alpha1*soc + alpha2 and
    q >= beta1*soc + beta2 drives q to exactly this value.
    """
    return max(p.alpha1 * soc + p.alpha2, p.beta1 * soc + p.beta2)


def fit_linear_cuts(
    p: DegradationParams = DegradationParams(),
    soc_min: float = 0.2,
    soc_max: float = 0.9,
    n: int = 200,
) -> tuple[float, float, float, float]:
    """Re-fit the two-line under-approximation of the cubic rate.

    Least-squares fit of one line on [soc_min, shoulder] and one on
    [shoulder, soc_max].  Off by default; the shipped coefficients are
    the published ones so results stay bit-reproducible.  Returns
    (alpha1, alpha2, beta1, beta2).
    """
    if not soc_min < p.shoulder < soc_max:
        raise ValueError("shoulder must lie strictly inside the SOC range")
    lo = np.linspace(soc_min, p.shoulder, n)
    hi = np.linspace(p.shoulder, soc_max, n)
    a1, a2 = np.polyfit(lo, [fade_cubic(s, p) for s in lo], 1)
    b1, b2 = np.polyfit(hi, [fade_cubic(s, p) for s in hi], 1)
    return float(a1), float(a2), float(b1), float(b2)


def fleet_fade_cost(
    rate: float, hours: float, n_ev: int, cost_per_percent: float
) -> float:
    """Cost in pounds of fading at ``rate`` %/h for ``hours`` across the fleet."""
    return rate * hours * n_ev * cost_per_percent


def workday_fade(
    c_out: float, c_in: float, p: DegradationParams = DegradationParams()
) -> float:
    """Fade (%) accrued per EV over the workday driving window.

    While disconnected the SOC profile is unobservable, so the
    convention is four hours parked at the departure SOC and four at
    the return SOC.
    """
    return 4.0 * fade_cubic(c_out, p) + 4.0 * fade_cubic(c_in, p)
