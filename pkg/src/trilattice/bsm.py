"""Closed-form lognormal European call price, used as a convergence target."""

from __future__ import annotations

import math

__all__ = ["black_scholes_call"]


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def black_scholes_call(S0: float, K: float, T: float, r: float, sigma: float) -> float:
    """Call price under lognormal dynamics; rates and sigma share T's units."""
    if T <= 0.0:
        return max(S0 - K, 0.0)
    if K <= 0.0:
        return S0
    vol = sigma * math.sqrt(T)
    d1 = (math.log(S0 / K) + (r + 0.5 * sigma * sigma) * T) / vol
    d2 = d1 - vol
    return S0 * _norm_cdf(d1) - K * math.exp(-r * T) * _norm_cdf(d2)
