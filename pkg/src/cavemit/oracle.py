"""Brute-force Lindblad solver over the full product Hilbert space.

N distinguishable emitters, optionally tensored with a truncated cavity
Fock space; used as the ground-truth reference for the Dicke-basis engine,
the adiabatic elimination and the mean-field solver at small N.  All
simulations run in the frame rotating at the cavity frequency, storing
only detunings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .angular import coupled_basis, degeneracy
from .dicke import DickeBasis, DickeBlockState

DEFAULT_DIM_CAP = 2**14

_SIGMA_M = np.array([[0.0, 1.0], [0.0, 0.0]])  # |g><e| with |g>=index 0
_SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]])
_ID2 = np.eye(2)


def _site_operator(op, site, n_sites, cavity_dim=0):
    """Embed a single-site 2x2 operator; the cavity factor (if any) is the
    last tensor slot."""
    mats = [sp.identity(2, format="csr")] * n_sites
    mats[site] = sp.csr_matrix(op)
    if cavity_dim:
        mats.append(sp.identity(cavity_dim, format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def _cavity_operator(op, n_sites):
    out = sp.identity(2**n_sites, format="csr")
    return sp.kron(out, sp.csr_matrix(op), format="csr")


def _destroy(dim):
    return np.diag(np.sqrt(np.arange(1, dim)), k=1)


@dataclass
class FockLindbladSystem:
    """Hamiltonian + collapse channels over the full product space."""

    spec: object
    include_cavity: bool
    hilbert_dim: int
    hamiltonian: sp.csr_matrix
    collapse_channels: list  # (sparse operator, rate)
    n_emitters: int
    cavity_dim: int = 0
    liouvillian_cache: sp.csr_matrix = field(default=None, repr=False)

    def liouvillian(self):
        """Sparse generator on the row-major vectorized density matrix."""
        if self.liouvillian_cache is None:
            d = self.hilbert_dim
            ident = sp.identity(d, format="csr")
            h = self.hamiltonian
            gen = -1j * (sp.kron(h, ident) - sp.kron(ident, h.T))
            for op, rate in self.collapse_channels:
                if rate == 0:
                    continue
                opd = op.conj().T @ op
                gen = gen + rate * (
                    sp.kron(op, op.conj())
                    - 0.5 * (sp.kron(opd, ident) + sp.kron(ident, opd.T))
                )
            self.liouvillian_cache = sp.csr_matrix(gen)
        return self.liouvillian_cache

    def number_operator(self):
        if not self.include_cavity:
            raise ValueError("system has no cavity factor")
        a = _destroy(self.cavity_dim)
        return _cavity_operator(a.conj().T @ a, self.n_emitters)

    def annihilation_operator(self):
        if not self.include_cavity:
            raise ValueError("system has no cavity factor")
        return _cavity_operator(_destroy(self.cavity_dim), self.n_emitters)

    def excitation_operator(self):
        """sum_i sigma^+_i sigma^-_i (total excited population)."""
        n = self.n_emitters
        cav = self.cavity_dim if self.include_cavity else 0
        tot = None
        proj = _SIGMA_M.T @ _SIGMA_M
        for i in range(n):
            op = _site_operator(proj, i, n, cav)
            tot = op if tot is None else tot + op
        return tot


def build_full_system(spec, include_cavity=True, dim_cap=DEFAULT_DIM_CAP):
    """Assemble the quantum master equation in the rotating frame of the
    cavity.

    Channels: photon loss at kappa; per emitter sigma- at gamma_k, sigma+
    at eta_k, sigma_z at chi_k/2.
    """
    n = spec.total_count
    cavity_dim = spec.cavity.n_max + 1 if include_cavity else 0
    dim = 2**n * (cavity_dim if include_cavity else 1)
    if dim > dim_cap:
        raise ValueError(f"Hilbert dimension {dim} exceeds cap {dim_cap}")

    h = sp.csr_matrix((dim, dim), dtype=complex)
    channels = []
    site = 0
    a_full = _cavity_operator(_destroy(cavity_dim), n) if include_cavity else None
    for sub in spec.sub_ensembles:
        detuning = sub.omega - spec.cavity.omega_c
        for _ in range(sub.count):
            sz = _site_operator(_SIGMA_Z, site, n, cavity_dim)
            sm = _site_operator(_SIGMA_M, site, n, cavity_dim)
            h = h + (detuning / 2.0) * sz
            if include_cavity and sub.g != 0:
                h = h + sub.g * (sm.conj().T @ a_full + a_full.conj().T @ sm)
            channels.append((sm, sub.rates.gamma))
            if sub.rates.eta > 0:
                channels.append((sm.conj().T, sub.rates.eta))
            if sub.rates.chi > 0:
                channels.append((sz, sub.rates.chi / 2.0))
            site += 1
    if include_cavity:
        channels.append((a_full, spec.cavity.kappa))
    return FockLindbladSystem(
        spec=spec,
        include_cavity=include_cavity,
        hilbert_dim=dim,
        hamiltonian=h,
        collapse_channels=channels,
        n_emitters=n,
        cavity_dim=cavity_dim,
    )


def build_eliminated_system(n, gamma_collective, rates, delta_omega=0.0):
    """Product-space version of the adiabatically eliminated model: the
    collective decay channel sum_i sigma^-_i at rate Gamma plus individual
    channels.  Reference for the Dicke-engine equivalence tests."""
    dim = 2**n
    h = sp.csr_matrix((dim, dim), dtype=complex)
    channels = []
    collective = sp.csr_matrix((dim, dim), dtype=complex)
    for i in range(n):
        sz = _site_operator(_SIGMA_Z, i, n)
        sm = _site_operator(_SIGMA_M, i, n)
        h = h + (delta_omega / 2.0) * sz
        collective = collective + sm
        channels.append((sm, rates.gamma))
        if rates.eta > 0:
            channels.append((sm.conj().T, rates.eta))
        if rates.chi > 0:
            channels.append((sz, rates.chi / 2.0))
    if gamma_collective > 0:
        channels.append((collective, gamma_collective))
    return FockLindbladSystem(
        spec=None,
        include_cavity=False,
        hilbert_dim=dim,
        hamiltonian=h,
        collapse_channels=channels,
        n_emitters=n,
    )


class DenseState:
    """Density matrix over the full Hilbert space with validity checks."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=complex)

    def trace(self):
        return float(np.trace(self.matrix).real)

    def validate(self, tol=1e-8):
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise ValueError("state not Hermitian")
        if abs(np.trace(m).real - 1.0) > tol:
            raise ValueError("state not trace one")
        if np.min(np.linalg.eigvalsh(m)) < -max(tol, 1e-9):
            raise ValueError("state not positive")
        return self

    def expect(self, op):
        return complex((op @ self.matrix).diagonal().sum())


def oracle_evolve(system, rho0, t_grid, rtol=1e-10, atol=1e-12):
    """Integrate the full master equation; returns one DenseState per grid
    time.  Dense matrix-exponential stepping below dimension 512 (exact to
    machine precision), BDF above."""
    t_grid = np.asarray(t_grid, dtype=float)
    mat = rho0.matrix if isinstance(rho0, DenseState) else np.asarray(rho0)
    d = system.hilbert_dim
    vec = mat.reshape(-1).astype(complex)
    gen = system.liouvillian()
    out = []
    if d <= 512 and gen.shape[0] <= 512 * 512:
        from scipy.linalg import expm

        dense = gen.toarray()
        t_prev = 0.0
        for t in t_grid:
            if t > t_prev:
                vec = expm(dense * (t - t_prev)) @ vec
                t_prev = t
            out.append(DenseState(vec.reshape(d, d).copy()))
        return out
    sol = solve_ivp(
        lambda t, y: gen @ y,
        (0.0, float(t_grid[-1])),
        vec,
        method="BDF",
        jac=gen,
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"oracle integration failed: {sol.message}")
    for k in range(sol.y.shape[1]):
        out.append(DenseState(sol.y[:, k].reshape(d, d)))
    return out


def oracle_steady_state(system, tol=1e-10):
    """Null space of the full generator, trace-normalized.

    Small systems go through a dense least-squares solve of the generator
    stacked with the trace constraint; larger ones swap the first
    population row of the sparse generator for the trace row and solve
    directly (the kernel is one-dimensional, so the replaced system is
    nonsingular)."""
    gen = system.liouvillian()
    d = system.hilbert_dim
    scale = abs(gen).max()
    if d <= 64:
        dense = gen.toarray()
        trace_row = np.eye(d).reshape(1, -1)
        a = np.vstack([dense, trace_row])
        b = np.zeros(a.shape[0], dtype=complex)
        b[-1] = 1.0
        vec, *_ = np.linalg.lstsq(a, b, rcond=None)
    else:
        a = sp.lil_matrix(gen.tocsr(), dtype=complex)
        trace_row = np.eye(d, dtype=complex).reshape(-1)
        a[0, :] = scale * trace_row
        b = np.zeros(d * d, dtype=complex)
        b[0] = scale
        vec = sp.linalg.spsolve(a.tocsc(), b)
    rho = vec.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    resid = np.linalg.norm(gen @ rho.reshape(-1))
    if resid > max(1e4 * tol, tol * scale * d):
        raise RuntimeError(f"oracle steady-state residual {resid:.3e}")
    return DenseState(rho)


def steady_state_photon_number(spec, top_tol=1e-6):
    """Intracavity photon number with automatic Fock-truncation doubling
    until the top Fock state carries less than ``top_tol`` population."""
    from dataclasses import replace

    cavity = spec.cavity
    while True:
        system = build_full_system(spec, include_cavity=True)
        ss = oracle_steady_state(system)
        d = system.cavity_dim
        rho = ss.matrix.reshape(2**system.n_emitters, d, 2**system.n_emitters, d)
        pops = np.einsum("inin->n", rho).real
        if pops[-1] < top_tol:
            n_photon = float(np.arange(d) @ pops)
            return n_photon, system, ss
        cavity = replace(cavity, n_max=2 * cavity.n_max)
        spec = replace(spec, cavity=cavity)


_BASIS_CACHE = {}


def _collective_multiplets(n):
    if n not in _BASIS_CACHE:
        _BASIS_CACHE[n] = coupled_basis(n)
    return _BASIS_CACHE[n]


def symmetrize_and_project(rho, n):
    """Project a product-space density matrix onto degeneracy-summed Dicke
    blocks.  Cross-J coherences are discarded (they have no slot in the
    block representation); the trace is preserved exactly because the
    multiplets resolve the identity."""
    mat = rho.matrix if isinstance(rho, DenseState) else np.asarray(rho)
    if mat.shape != (2**n, 2**n):
        raise ValueError("emitter-only state required; trace out the cavity first")
    basis = DickeBasis(n)
    state = DickeBlockState(
        basis,
        [
            np.zeros((basis.block_dim(j), basis.block_dim(j)), dtype=complex)
            for j in basis.js
        ],
    )
    j_index = {round(2 * j): k for k, j in enumerate(basis.js)}
    for j, vecs in _collective_multiplets(n):
        k = j_index[round(2 * j)]
        state.blocks[k] += vecs.conj() @ mat @ vecs.T
    return state


def embed_blocks(state):
    """Inverse of symmetrize_and_project: the unique permutation-invariant
    product-space density matrix with the given summed blocks."""
    n = state.basis.n_emitters
    rho = np.zeros((2**n, 2**n), dtype=complex)
    j_index = {round(2 * j): k for k, j in enumerate(state.basis.js)}
    for j, vecs in _collective_multiplets(n):
        k = j_index[round(2 * j)]
        block = state.blocks[k] / degeneracy(n, j)
        rho += vecs.T @ block @ vecs.conj()
    return DenseState(rho)


def trace_out_cavity(system, state):
    mat = state.matrix if isinstance(state, DenseState) else np.asarray(state)
    ne = 2**system.n_emitters
    d = system.cavity_dim
    rho = mat.reshape(ne, d, ne, d)
    return DenseState(np.einsum("injn->ij", rho))
