"""Finite-key decoy-state estimation of the secret key length."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtri

from ..errors import AbortBlock, IntensityOrderViolation, InvalidQBER
from .sifting import DecoyStats

#: Number of confidence bounds entering the key length.
N_BOUNDS = 7


def quantile(eps_decoy: float) -> float:
    """Normal quantile z with P(Z > z) = eps_decoy / 7.

    >>> round(quantile(0.07), 4)
    2.3263
    """
    if not 0.0 < eps_decoy < N_BOUNDS:
        raise ValueError(f"eps_decoy must lie in (0, {N_BOUNDS}), got {eps_decoy}")
    # -ndtri(p) keeps full relative precision when p is tiny
    return float(-ndtri(eps_decoy / N_BOUNDS))


def binary_entropy(x: float) -> float:
    """Shannon binary entropy in bits."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


@dataclass(frozen=True)
class DecoyBounds:
    Q_upper: tuple[float, float, float]
    Q_lower: tuple[float, float, float]
    Y0_lower: float
    Q1_lower: float


def check_intensities(mu, nu1, nu2):
    if not (0 <= nu2 < nu1 and nu1 + nu2 < mu):
        raise IntensityOrderViolation(f"need 0 <= nu2 < nu1 and nu1 + nu2 < mu, got mu={mu}, nu1={nu1}, nu2={nu2}")


def wald_bounds(q_hat, n, z):
    half = z * np.sqrt(q_hat * (1 - q_hat) / n)
    return np.clip(q_hat + half, 0.0, 1.0), np.clip(q_hat - half, 0.0, 1.0)


def decoy_bounds(stats: DecoyStats, z: float, mu: float, nu1: float, nu2: float) -> DecoyBounds:
    """Wald intervals on the gains, then the vacuum-yield and single-photon-gain bounds."""
    check_intensities(mu, nu1, nu2)
    n = np.asarray(stats.sent, float)
    if np.any(n <= 0):
        raise ValueError("every intensity needs at least one sent pulse")
    qu, ql = wald_bounds(stats.gains, n, z)
    y0 = max((nu1 * ql[2] * math.exp(nu2) - nu2 * qu[1] * math.exp(nu1)) / (nu1 - nu2), 0.0)
    pre = mu * mu * math.exp(-mu) / ((nu1 - nu2) * (mu - nu1 - nu2))
    q1 = pre * (
        ql[1] * math.exp(nu1)
        - qu[2] * math.exp(nu2)
        - (nu1 * nu1 - nu2 * nu2) / (mu * mu) * (qu[0] * math.exp(mu) - y0)
    )
    return DecoyBounds(tuple(qu.tolist()), tuple(ql.tolist()), y0, q1)


@dataclass(frozen=True)
class EstimationResult:
    z: float
    Q_upper: tuple[float, float, float]
    Q_lower: tuple[float, float, float]
    Y0_lower: float
    Q1_lower: float
    m1_lower: float
    m0bar_lower: float
    E1_upper: float
    l_sec_real: float
    l_sec: int

    def as_record(self) -> dict:
        d = asdict(self)
        d["Q_upper"] = list(self.Q_upper)
        d["Q_lower"] = list(self.Q_lower)
        return d


def single_photon_bits_lower(q1_l, q_mu_u, l_ver, z):
    r = q1_l / q_mu_u if q_mu_u > 0 else 0.0
    return l_ver * r - z * math.sqrt(max(l_ver * r * (1 - r), 0.0))


def vacuum_errors_lower(n_mu, mu, y0_l, z):
    a = math.exp(-mu) * y0_l / 4
    return max(n_mu * a - z * math.sqrt(n_mu * a * (1 - a)), 0.0)


def secret_length(
    q1_l: float,
    q_mu_u: float,
    y0_l: float,
    l_ver: int,
    e_mu: float,
    n_mu: int,
    mu: float,
    leak: float,
    z: float,
    eps_pa: float,
    strict: bool = True,
) -> tuple[int, dict]:
    """Secret key length and the intermediate bounds.

    The vacuum-error bound is clamped at 0 and a negative E1 upper bound at
    0; E1 above 1/2 aborts. With ``strict`` a non-positive length raises
    :class:`AbortBlock`, otherwise it is returned as is.
    """
    if not 0.0 <= e_mu <= 1.0 or math.isnan(e_mu):
        raise InvalidQBER(f"E_mu must lie in [0, 1], got {e_mu}")
    m1 = single_photon_bits_lower(q1_l, q_mu_u, l_ver, z)
    m0 = vacuum_errors_lower(n_mu, mu, y0_l, z)
    parts = {"m1_lower": m1, "m0bar_lower": m0}
    if m1 <= 0:
        parts.update(E1_upper=math.nan, l_sec_real=-math.inf)
        if strict:
            raise AbortBlock("no_single_photons", "single-photon lower bound is not positive", parts)
        return 0, parts
    e1 = max((l_ver * e_mu - m0) / m1, 0.0)
    parts["E1_upper"] = e1
    if e1 > 0.5:
        parts["l_sec_real"] = -math.inf
        if strict:
            raise AbortBlock("e1_above_half", f"E1 upper bound {e1:.4f} exceeds 1/2", parts)
        return 0, parts
    real = m1 * (1 - binary_entropy(e1)) - leak - 5 * math.log2(1 / eps_pa)
    parts["l_sec_real"] = real
    l_sec = math.floor(real)
    if l_sec <= 0 and strict:
        raise AbortBlock("negative_length", f"secret length {real:.1f} is not positive", parts)
    return l_sec, parts


def estimate(stats: DecoyStats, l_ver, e_mu, leak, eps_decoy, eps_pa, mu, nu1, nu2, strict=True) -> EstimationResult:
    z = quantile(eps_decoy)
    b = decoy_bounds(stats, z, mu, nu1, nu2)
    try:
        l_sec, p = secret_length(b.Q1_lower, b.Q_upper[0], b.Y0_lower, l_ver, e_mu, stats.sent[0], mu, leak, z, eps_pa, strict)
    except AbortBlock as exc:
        exc.partial.update(z=z, Q_upper=b.Q_upper, Q_lower=b.Q_lower, Y0_lower=b.Y0_lower, Q1_lower=b.Q1_lower)
        raise
    return EstimationResult(
        z=z, Q_upper=b.Q_upper, Q_lower=b.Q_lower, Y0_lower=b.Y0_lower, Q1_lower=b.Q1_lower,
        m1_lower=p["m1_lower"], m0bar_lower=p["m0bar_lower"], E1_upper=p["E1_upper"],
        l_sec_real=p["l_sec_real"], l_sec=max(l_sec, 0),
    )
