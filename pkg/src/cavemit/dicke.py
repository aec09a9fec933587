"""Permutation-invariant master-equation solver in the collective basis.

For N identical two-level emitters after adiabatic elimination of the
cavity, the density matrix decomposes into blocks rho^J_{MM'} labelled by
the collective spin J; blocks store the degeneracy-summed matrix elements
of each (J, M) manifold, so observables like the radiation rate read off
directly as Gamma * sum (J+M)(J-M+1) rho^J_{MM}.

The generator combines the collective decay channel (rate Gamma, acting
within a J block through the ladder coefficients) with individual pump,
decay and dephasing channels.  The individual channels connect J -> J, J+-1
and their rates are obtained here by decomposing the N-emitter collective
states into (N-1) x 1 products with Clebsch-Gordan coefficients:

    sum_i s_i rho s_i^dag acting on the summed block elements equals

    N/d_N(J) * sum_{J1} d_{N-1}(J1) K(J,M;J1,J') K(J,M';J1,J') rho^J_{MM'}

where K collects the two Clebsch-Gordan factors of lowering/raising/
flipping the last spin and d_n(j) is the multiplet degeneracy.  The
coefficients are pinned by equivalence with the brute-force product-space
solver (see tests), not transcribed from a table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .angular import a_minus_coefficient, cg_half, degeneracy, j_values
from .params import RateSet

#: Hard cap on the emitter number; the block state is O(N^3) complex numbers.
DEFAULT_N_CAP = 100

DENSE_DIM_LIMIT = 1200


class SteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class DickeBasis:
    """Enumeration of the (J, M) levels for N emitters with index maps for
    the vectorized block representation."""

    n_emitters: int

    def __post_init__(self):
        if self.n_emitters < 1:
            raise ValueError("n_emitters must be >= 1")

    @property
    def js(self):
        return j_values(self.n_emitters)

    @property
    def levels(self):
        return [(j, -j + i) for j in self.js for i in range(int(round(2 * j + 1)))]

    def n_levels(self):
        n = self.n_emitters
        return (n // 2 + 1) ** 2 if n % 2 == 0 else (n + 1) * (n + 3) // 4

    def block_dim(self, j):
        return int(round(2 * j + 1))

    @property
    def block_offsets(self):
        """Offset of each J block in the vectorized (coherence-carrying)
        representation; blocks are stored row-major, M ascending."""
        offsets = {}
        pos = 0
        for j in self.js:
            offsets[j] = pos
            pos += self.block_dim(j) ** 2
        return offsets

    def vec_dim(self):
        return sum(self.block_dim(j) ** 2 for j in self.js)

    def level_index(self, j, m):
        idx = 0
        for jj in self.js:
            if abs(jj - j) < 1e-9:
                return idx + int(round(m + j))
            idx += self.block_dim(jj)
        raise KeyError((j, m))


@dataclass
class DickeBlockState:
    """Degeneracy-summed block density matrix.

    ``blocks[i]`` is the complex (2J+1, 2J+1) matrix for J = basis.js[i],
    row/column index i <-> M = -J + i.
    """

    basis: DickeBasis
    blocks: list

    @classmethod
    def ground(cls, n):
        basis = DickeBasis(n)
        blocks = [
            np.zeros((basis.block_dim(j), basis.block_dim(j)), dtype=complex)
            for j in basis.js
        ]
        blocks[0][0, 0] = 1.0  # J = N/2, M = -J
        return cls(basis, blocks)

    @classmethod
    def fully_inverted(cls, n):
        state = cls.ground(n)
        state.blocks[0][0, 0] = 0.0
        state.blocks[0][-1, -1] = 1.0
        return state

    def copy(self):
        return DickeBlockState(self.basis, [b.copy() for b in self.blocks])

    def trace(self):
        return float(sum(np.trace(b).real for b in self.blocks))

    def populations(self):
        """Diagonal elements as a flat vector ordered like basis.levels."""
        return np.concatenate([np.diag(b).real for b in self.blocks])

    @classmethod
    def from_populations(cls, basis, pops):
        blocks = []
        pos = 0
        for j in basis.js:
            d = basis.block_dim(j)
            blocks.append(np.diag(pops[pos : pos + d]).astype(complex))
            pos += d
        return cls(basis, blocks)

    def to_vector(self):
        return np.concatenate([b.reshape(-1) for b in self.blocks])

    @classmethod
    def from_vector(cls, basis, vec):
        blocks = []
        pos = 0
        for j in basis.js:
            d = basis.block_dim(j)
            blocks.append(vec[pos : pos + d * d].reshape(d, d).copy())
            pos += d * d
        return cls(basis, blocks)

    def is_diagonal(self, tol=1e-12):
        return all(
            np.max(np.abs(b - np.diag(np.diag(b)))) <= tol if b.size > 1 else True
            for b in self.blocks
        )

    def validate(self, tol=1e-8):
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"trace is {self.trace()}, not 1")
        for j, b in zip(self.basis.js, self.blocks):
            if np.max(np.abs(b - b.conj().T)) > tol:
                raise ValueError(f"block J={j} not Hermitian")
            if np.min(np.diag(b).real) < -tol:
                raise ValueError(f"block J={j} has negative population")
        return self

    def distance(self, other):
        """Trace distance 1/2 sum_J ||rho^J - sigma^J||_1 in the summed
        block representation."""
        total = 0.0
        for a, b in zip(self.blocks, other.blocks):
            total += np.abs(np.linalg.eigvalsh(a - b)).sum()
        return 0.5 * total


@dataclass
class DickeLiouvillian:
    """Sparse generator acting on the vectorized block state, plus its
    restriction to the (closed) population sector."""

    basis: DickeBasis
    generator: sp.csr_matrix
    pop_generator: sp.csr_matrix
    gamma_collective: float
    rates: RateSet
    delta_omega: float

    @property
    def n(self):
        return self.basis.n_emitters


def _sandwich_coefficient(n, j, m, mp, jprime, kind):
    """Summed-block matrix element of N * S(s_N rho s_N^dag) taking
    (j, m, mp) -> (jprime, m', mp') for one local channel.

    kind: '-' lowering (target m-1), '+' raising (m+1), 'z' flip-free (m).
    """
    total = 0.0
    for j1 in (j - 0.5, j + 0.5):
        if j1 < -1e-9 or degeneracy(n - 1, j1) == 0:
            continue
        if abs(j1 - jprime) > 0.51:
            continue
        if kind == "-":
            ka = cg_half(j1, m, 0.5, j) * cg_half(j1, m - 1, -0.5, jprime)
            kb = cg_half(j1, mp, 0.5, j) * cg_half(j1, mp - 1, -0.5, jprime)
        elif kind == "+":
            ka = cg_half(j1, m, -0.5, j) * cg_half(j1, m + 1, 0.5, jprime)
            kb = cg_half(j1, mp, -0.5, j) * cg_half(j1, mp + 1, 0.5, jprime)
        else:
            ka = sum(
                2 * mu * cg_half(j1, m, mu, j) * cg_half(j1, m, mu, jprime)
                for mu in (0.5, -0.5)
            )
            kb = sum(
                2 * mu * cg_half(j1, mp, mu, j) * cg_half(j1, mp, mu, jprime)
                for mu in (0.5, -0.5)
            )
        total += degeneracy(n - 1, j1) * ka * kb
    return n * total / degeneracy(n, j)


def build_liouvillian(n, gamma_collective, rates, delta_omega=0.0, n_cap=DEFAULT_N_CAP):
    """Assemble the Dicke-basis generator for N identical emitters.

    Channels: collective decay at rate ``gamma_collective`` within each J
    block; individual decay/pump/dephasing (rates.gamma, rates.eta,
    rates.chi) connecting J -> J, J+-1; Hamiltonian J_z shift
    ``delta_omega`` acting on coherences only.
    """
    if n > n_cap:
        raise ValueError(f"N={n} exceeds the dimension cap {n_cap}")
    if gamma_collective < 0:
        raise ValueError("collective rate must be >= 0")
    basis = DickeBasis(n)
    offsets = basis.block_offsets
    gam, eta, chi = rates.gamma, rates.eta, rates.chi

    rows, cols, vals = [], [], []

    def idx(j, m, mp):
        d = basis.block_dim(j)
        return offsets[j] + int(round(m + j)) * d + int(round(mp + j))

    def add(r, c, v):
        if v != 0.0:
            rows.append(r)
            cols.append(c)
            vals.append(v)

    for j in basis.js:
        d = basis.block_dim(j)
        for im in range(d):
            m = -j + im
            for imp in range(d):
                mp = -j + imp
                src = idx(j, m, mp)
                # J_z shift (coherences only)
                if im != imp:
                    add(src, src, -1j * delta_omega * (m - mp))
                # collective decay
                a_m = a_minus_coefficient(j, m)
                a_mp = a_minus_coefficient(j, mp)
                add(src, src, -0.5 * gamma_collective * (a_m**2 + a_mp**2))
                if m - 1 >= -j - 1e-9 and mp - 1 >= -j - 1e-9:
                    add(
                        idx(j, m - 1, mp - 1),
                        src,
                        gamma_collective * a_m * a_mp,
                    )
                # individual channels: anticommutator parts
                add(src, src, -0.5 * gam * (n + m + mp))
                add(src, src, -0.5 * eta * (n - m - mp))
                add(src, src, -0.5 * chi * n)
                # individual channels: sandwich parts
                for jprime in (j - 1.0, j, j + 1.0):
                    if degeneracy(n, jprime) == 0:
                        continue
                    if gam > 0 and abs(m - 1) <= jprime + 1e-9 and abs(mp - 1) <= jprime + 1e-9:
                        coeff = _sandwich_coefficient(n, j, m, mp, jprime, "-")
                        add(idx(jprime, m - 1, mp - 1), src, gam * coeff)
                    if eta > 0 and abs(m + 1) <= jprime + 1e-9 and abs(mp + 1) <= jprime + 1e-9:
                        coeff = _sandwich_coefficient(n, j, m, mp, jprime, "+")
                        add(idx(jprime, m + 1, mp + 1), src, eta * coeff)
                    if chi > 0 and abs(m) <= jprime + 1e-9 and abs(mp) <= jprime + 1e-9:
                        coeff = _sandwich_coefficient(n, j, m, mp, jprime, "z")
                        add(idx(jprime, m, mp), src, 0.5 * chi * coeff)

    dim = basis.vec_dim()
    gen = sp.csr_matrix(
        sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
    )

    # population sector: indices of the (j, m, m) entries
    diag_idx = np.array([idx(j, m, m) for j, m in basis.levels])
    pop_gen = sp.csr_matrix(gen[np.ix_(diag_idx, diag_idx)].real)
    return DickeLiouvillian(
        basis=basis,
        generator=gen,
        pop_generator=pop_gen,
        gamma_collective=gamma_collective,
        rates=rates,
        delta_omega=delta_omega,
    )


def steady_state(liouv, tol=1e-10, method="direct"):
    """Steady state of the generator, trace-normalized.

    The population sector is closed and contains the stationary state
    (coherence sectors are strictly damped for any nonzero rate set), so
    the null vector is solved there.  ``method='integrate'`` cross-checks
    by long-time propagation instead of a direct null-space solve.
    """
    r = liouv.rates
    if r.eta <= 0 and r.gamma <= 0 and liouv.gamma_collective <= 0:
        raise SteadyStateError("no dissipation: steady state not unique")
    m = liouv.pop_generator
    npop = m.shape[0]

    if method == "integrate":
        p0 = np.zeros(npop)
        p0[0] = 1.0
        scale = max(r.gamma, r.eta, 1e-6)
        sol = solve_ivp(
            lambda t, y: m @ y,
            (0.0, 200.0 / scale),
            p0,
            method="BDF",
            jac=m,
            rtol=1e-10,
            atol=1e-13,
        )
        p = sol.y[:, -1]
    else:
        dense = m.toarray()
        # null space with trace constraint: replace one row by the trace row
        a = np.vstack([dense, np.ones((1, npop))])
        b = np.zeros(npop + 1)
        b[-1] = 1.0
        p, *_ = np.linalg.lstsq(a, b, rcond=None)
        # uniqueness check on small problems
        if npop <= DENSE_DIM_LIMIT:
            svals = np.linalg.svd(dense, compute_uv=False)
            norm = svals[0] if svals[0] > 0 else 1.0
            null_dim = int(np.sum(svals <= 1e-12 * norm * npop))
            if null_dim > 1:
                raise SteadyStateError(
                    f"steady state not unique (null space dim {null_dim})"
                )

    p = p.real
    p = p / p.sum()
    resid = np.linalg.norm(m @ p)
    scale = spla.norm(m) if m.nnz else 1.0
    if resid > max(tol * scale, 1e4 * tol):
        raise SteadyStateError(f"steady-state residual {resid:.3e} above tolerance")
    return DickeBlockState.from_populations(liouv.basis, p)


def evolve(liouv, rho0, t_grid, rtol=1e-10, atol=1e-12):
    """Propagate d rho/dt = L rho, returning a state per grid time.

    Uses exact matrix-exponential stepping for small generators and BDF
    integration (with the sparse generator as Jacobian) above
    DENSE_DIM_LIMIT.  t_grid must be ascending and start at t >= 0.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    vec = rho0.to_vector()
    dim = vec.size
    out = []
    if dim <= DENSE_DIM_LIMIT:
        from scipy.linalg import expm

        dense = liouv.generator.toarray()
        t_prev = 0.0
        for t in t_grid:
            if t > t_prev:
                vec = expm(dense * (t - t_prev)) @ vec
                t_prev = t
            out.append(DickeBlockState.from_vector(liouv.basis, vec.copy()))
        return out
    gen = liouv.generator
    sol = solve_ivp(
        lambda t, y: gen @ y,
        (0.0, float(t_grid[-1])),
        vec.astype(complex),
        method="BDF",
        jac=gen,
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    for k in range(sol.y.shape[1]):
        out.append(DickeBlockState.from_vector(liouv.basis, sol.y[:, k]))
    return out


def evolve_populations(liouv, p0, t_grid, rtol=1e-9, atol=1e-12):
    """Population-sector propagation (used by the correlation module where
    the regression initial condition is diagonal)."""
    m = liouv.pop_generator
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] == 0.0:
        eval_grid = t_grid[1:]
    else:
        eval_grid = t_grid
    if eval_grid.size == 0:
        return np.asarray(p0)[None, :].copy()
    sol = solve_ivp(
        lambda t, y: m @ y,
        (0.0, float(eval_grid[-1])),
        np.asarray(p0, dtype=float),
        method="BDF",
        jac=m,
        t_eval=eval_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    ys = sol.y.T
    if t_grid[0] == 0.0:
        ys = np.vstack([np.asarray(p0)[None, :], ys])
    return ys


def radiation_rate(state, gamma_collective):
    """Photon emission rate Gamma * sum_{J,M} (J+M)(J-M+1) rho^J_{MM}."""
    total = 0.0
    for j, b in zip(state.basis.js, state.blocks):
        d = state.basis.block_dim(j)
        for i in range(d):
            m = -j + i
            total += (j + m) * (j - m + 1) * b[i, i].real
    return gamma_collective * total


def local_loglog_slope(x, y):
    """d log y / d log x by centered finite differences on the grid."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.gradient(np.log(y), np.log(x))


def pump_scaling_curve(n, gamma_collective, rates, eta_grid):
    """Steady-state radiation rate versus pump rate.

    Returns (eta_over_gamma, i_rad, local_slope) arrays; the slope is the
    local log-log derivative of the radiation rate.
    """
    eta_grid = np.asarray(eta_grid, dtype=float)
    if np.any(eta_grid <= 0) or np.any(np.diff(eta_grid) <= 0):
        raise ValueError("eta_grid must be positive and ascending")
    rates_list = [
        RateSet(gamma=rates.gamma, chi=rates.chi, eta=float(eta)) for eta in eta_grid
    ]
    i_rad = np.empty_like(eta_grid)
    for k, r in enumerate(rates_list):
        liouv = build_liouvillian(n, gamma_collective, r)
        ss = steady_state(liouv)
        i_rad[k] = radiation_rate(ss, gamma_collective)
    slope = local_loglog_slope(eta_grid, i_rad)
    return eta_grid / rates.gamma, i_rad, slope
