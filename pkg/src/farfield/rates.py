"""Log-log decay-rate fitting shared by the diagnostic probes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["DecayFit", "fit_loglog_slope", "richardson_orders"]

DEVIATION_FLOOR = 1e-13


@dataclass
class DecayFit:
    """Least-squares slope of log(value) against log(radius).

    ``exponent`` is None ("not applicable") when fewer than two shells
    survive the deviation floor, e.g. when the measured quantity is
    identically zero up to round-off.
    """

    exponent: float | None
    intercept: float | None
    fit_residual: float
    radii: list = field(default_factory=list)
    values: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    @property
    def applicable(self) -> bool:
        return self.exponent is not None


def fit_loglog_slope(radii, values, floor: float = DEVIATION_FLOOR) -> DecayFit:
    radii = [float(r) for r in radii]
    values = [float(v) for v in values]
    if len(radii) != len(values):
        raise ValueError("radii and values must have equal length")
    used_r, used_v, excluded = [], [], []
    for r, v in zip(radii, values):
        if v <= floor:
            excluded.append(r)
        else:
            used_r.append(r)
            used_v.append(v)
    if len(used_r) < 2:
        return DecayFit(None, None, 0.0, used_r, used_v, excluded)
    lx = np.log(np.asarray(used_r))
    ly = np.log(np.asarray(used_v))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return DecayFit(float(coef[0]), float(coef[1]), resid, used_r, used_v, excluded)


def richardson_orders(errors) -> list:
    """Observed orders log2(e_k / e_{k+1}) between successive halved levels."""
    errors = [float(e) for e in errors]
    orders = []
    for a, b in zip(errors, errors[1:]):
        if a <= 0.0 or b <= 0.0:
            orders.append(float("nan"))
        else:
            orders.append(float(np.log2(a / b)))
    return orders
