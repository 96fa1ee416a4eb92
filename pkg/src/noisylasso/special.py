"""Gaussian special functions used by the scalar theory."""

import math

import numpy as np
from scipy import special as _sp

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    # erfc form keeps relative accuracy in the lower tail
    return 0.5 * _sp.erfc(-np.asarray(x, dtype=float) / SQRT2)


def std_normal_sf(x):
    """Upper tail 1 - Phi(x), accurate for large positive x."""
    return 0.5 * _sp.erfc(np.asarray(x, dtype=float) / SQRT2)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


def erf(x):
    return _sp.erf(x)


def erfinv(y):
    """Inverse error function on the open interval (-1, 1).

    Raises ValueError at or beyond +-1 instead of returning +-inf / nan.
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y_arr)) or np.any(np.abs(y_arr) >= 1.0):
        raise ValueError(f"erfinv argument must lie strictly inside (-1, 1), got {y!r}")
    out = _sp.erfinv(y_arr)
    return float(out) if out.ndim == 0 else out


def gaussian_tail_second_moment(nu):
    """E[(Z - nu)_+^2] for standard normal Z.

    Equals (1 + nu^2)(1 - Phi(nu)) - nu * phi(nu).
    """
    nu = np.asarray(nu, dtype=float)
    out = (1.0 + nu * nu) * std_normal_sf(nu) - nu * std_normal_pdf(nu)
    # cancellation can leave tiny negatives far in the tail
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out
