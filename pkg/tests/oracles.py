"""Reference evaluations used only by the tests.

Everything here is computed in arbitrary precision (mpmath or Python
integers) from the defining formulas, without calling the library.
"""
from __future__ import annotations

import mpmath as mp

mp.mp.dps = 50

HC = mp.mpf("1.99e-25")


def db_to_linear(db):
    return mp.power(10, -mp.mpf(db) / 10)


def photons_per_pulse(w, f, wl_nm):
    return mp.mpf(w) / mp.mpf(f) * (mp.mpf(wl_nm) * mp.mpf("1e-9")) / HC


def z_quantile(eps_decoy):
    # P(Z > z) = eps/7, solved on erfc so tiny tails do not round to 1
    p = mp.mpf(eps_decoy) / 7
    if p >= mp.mpf(1) / 1000:
        return mp.sqrt(2) * mp.erfinv(1 - 2 * p)
    g = mp.sqrt(-2 * mp.log(p))
    return mp.findroot(lambda z: mp.log(mp.erfc(z / mp.sqrt(2)) / 2) - mp.log(p), g)


def h2(x):
    x = mp.mpf(x)
    if x in (0, 1):
        return mp.mpf(0)
    return -x * mp.log(x, 2) - (1 - x) * mp.log(1 - x, 2)


def secret_length_real(sent, det, l_ver, e_mu, leak, eps_decoy, eps_pa, mu, nu1, nu2):
    """Straight-line decoy estimate: Wald bounds, Y0, Q1, m1, m0bar, E1, l_sec."""
    mu, nu1, nu2 = (mp.mpf(str(v)) for v in (mu, nu1, nu2))
    z = z_quantile(eps_decoy)
    qu, ql = [], []
    for n, m in zip(sent, det):
        q = mp.mpf(m) / n
        half = z * mp.sqrt(q * (1 - q) / n)
        qu.append(min(max(q + half, 0), 1))
        ql.append(min(max(q - half, 0), 1))
    y0 = max((nu1 * ql[2] * mp.e ** nu2 - nu2 * qu[1] * mp.e ** nu1) / (nu1 - nu2), 0)
    q1 = mu**2 * mp.e ** (-mu) / ((nu1 - nu2) * (mu - nu1 - nu2)) * (
        ql[1] * mp.e ** nu1 - qu[2] * mp.e ** nu2 - (nu1**2 - nu2**2) / mu**2 * (qu[0] * mp.e ** mu - y0)
    )
    r = q1 / qu[0]
    m1 = l_ver * r - z * mp.sqrt(l_ver * r * (1 - r))
    a = mp.e ** (-mu) * y0 / 4
    m0 = max(sent[0] * a - z * mp.sqrt(sent[0] * a * (1 - a)), 0)
    e1 = max((l_ver * mp.mpf(e_mu) - m0) / m1, 0)
    return m1 * (1 - h2(e1)) - leak - 5 * mp.log(1 / mp.mpf(eps_pa), 2), {"z": z, "Q1": q1, "m1": m1, "E1": e1}


def polyhash(k, bits, q=2**50 - 27, w=49):
    s = "".join(str(int(b)) for b in bits) + "1"
    s += "0" * ((-len(s)) % w)
    acc = 0
    for i in range(0, len(s), w):
        acc = (acc * k + int(s[i:i + w], 2)) % q
    return (acc * k + len(bits)) % q


def toeplitz(key, seed):
    n, m = len(key), len(seed) - len(key) + 1
    return [sum(int(seed[i + j]) * int(key[j]) for j in range(n)) % 2 for i in range(m)]


def eps_col(length, q=2**50 - 27, w=49):
    return mp.mpf(-(-length // w) - 1) / q
