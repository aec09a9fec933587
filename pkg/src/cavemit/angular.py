"""Angular-momentum bookkeeping for collective spin states.

Everything here concerns the coupling of N spin-1/2 systems: multiplet
degeneracies, Clebsch-Gordan coefficients for adding one spin-1/2, the
ladder coefficient of the collective lowering operator, and an explicit
construction of the coupled basis in the 2^N product space (used by the
brute-force oracle to project onto collective sectors).

Convention: site basis index 0 is the ground state (spin down, m = -1/2),
index 1 the excited state.  Within a multiplet, row index i corresponds to
m = -j + i (ascending m).
"""

from __future__ import annotations

import math

import numpy as np


def j_values(n):
    """Collective spins for n spin-1/2 emitters, descending from n/2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    jmax = n / 2.0
    count = int(jmax - (0.0 if n % 2 == 0 else 0.5)) + 1
    return [jmax - k for k in range(count)]


def degeneracy(n, j):
    """Number of spin-j multiplets in the decomposition of n spin-1/2s:
    d_n(j) = (2j+1)/(n/2+j+1) * C(n, n/2-j)."""
    k = n / 2.0 - j
    if k < -1e-9 or abs(k - round(k)) > 1e-9 or j < -1e-9:
        return 0
    k = int(round(k))
    if k > n:
        return 0
    return round((2 * j + 1) / (n / 2.0 + j + 1) * math.comb(n, k))


def a_minus_coefficient(j, m):
    """Ladder coefficient of the collective lowering operator,
    A-(j, m) = sqrt((j+m)(j-m+1)); J-|j,m> = A-(j,m)|j,m-1>."""
    if abs(m) > j + 1e-9:
        raise ValueError(f"|M| <= J required, got J={j}, M={m}")
    return math.sqrt(max((j + m) * (j - m + 1), 0.0))


def cg_half(j1, m, mu, j):
    """<j1, m-mu; 1/2, mu | j, m> for j = j1 +- 1/2 (Condon-Shortley).

    Returns 0 when (j1, m-mu) or (j, m) is out of range.
    """
    if abs(m - mu) > j1 + 1e-9 or abs(m) > j + 1e-9 or j1 < -1e-9:
        return 0.0
    two_mu = round(2 * mu)
    if abs(two_mu) != 1:
        raise ValueError("mu must be +-1/2")
    if abs(j - (j1 + 0.5)) < 1e-9:
        return math.sqrt(max((j1 + two_mu * m + 0.5) / (2 * j1 + 1), 0.0))
    if abs(j - (j1 - 0.5)) < 1e-9:
        return -two_mu * math.sqrt(max((j1 - two_mu * m + 0.5) / (2 * j1 + 1), 0.0))
    return 0.0


def coupled_basis(n):
    """Explicitly coupled basis of n spin-1/2 systems.

    Returns a list of multiplets ``(j, V)`` where V has shape
    (2j+1, 2**n); V[i] is the product-space vector of |j, m=-j+i, alpha>
    and the multiplicity label alpha is the position in the list.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    down = np.array([1.0, 0.0])
    up = np.array([0.0, 1.0])
    multiplets = [(0.5, np.array([down, up]))]
    for _ in range(1, n):
        new = []
        for j1, v in multiplets:
            for j in (j1 + 0.5, j1 - 0.5):
                if j < -1e-9:
                    continue
                dim = int(round(2 * j + 1))
                vecs = np.zeros((dim, v.shape[1] * 2))
                for i in range(dim):
                    m = -j + i
                    for mu, spin in ((0.5, up), (-0.5, down)):
                        c = cg_half(j1, m, mu, j)
                        if c == 0.0:
                            continue
                        i1 = int(round(m - mu + j1))
                        if 0 <= i1 < v.shape[0]:
                            vecs[i] += c * np.kron(v[i1], spin)
                if np.any(vecs):
                    new.append((j, vecs))
        multiplets = new
    return multiplets
