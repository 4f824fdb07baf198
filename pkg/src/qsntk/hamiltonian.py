"""Sparse lattice Hamiltonians, ground states, and real-time evolution.

Implements the transverse-field Ising model

    H_s = - sum_<i,j> sigma^z_i sigma^z_j - J sum_i sigma^x_i

on a spin basis, and the Fermi-Hubbard model

    H_f = - sum_<i,j>,s (c+_{i,s} c_{j,s} + h.c.) + U sum_i n_{i,up} n_{i,down}

on a fixed particle-number Fock basis with Jordan-Wigner fermion signs
(up modes 0..n-1 ordered before down modes n..2n-1). Units: hbar = 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import FockBasis, Lattice, SpinBasis

# Above this dimension evolve() switches from dense eigendecomposition to
# Krylov expm-times-vector.
DENSE_EVOLVE_DIM = 8192


class ConvergenceError(Exception):
    """Iterative eigensolver / propagator failed to converge."""


@dataclass
class Wavefunction:
    """Complex amplitude vector over a basis enumeration."""

    basis: SpinBasis | FockBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.basis.size,):
            raise ValueError(
                f"amplitude vector has shape {self.amplitudes.shape}, basis size {self.basis.size}"
            )
        if not np.all(np.isfinite(self.amplitudes.view(np.float64))):
            raise ValueError("non-finite amplitudes")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.basis, self.amplitudes / self.norm)


def _basis_metadata(basis) -> dict:
    if isinstance(basis, SpinBasis):
        return {"kind": "spin", "n_sites": basis.n_sites}
    return {
        "kind": "fock",
        "n_sites": basis.n_sites,
        "n_up": basis.n_up,
        "n_down": basis.n_down,
    }


def save_wavefunction(psi: Wavefunction, path) -> None:
    """Write the shared JSON wavefunction format: basis metadata + [re, im] pairs."""
    payload = {
        "basis": _basis_metadata(psi.basis),
        "amplitudes": [[float(a.real), float(a.imag)] for a in psi.amplitudes],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_wavefunction(path) -> Wavefunction:
    from .hilbert import enumerate_hubbard_basis, enumerate_spin_basis

    with open(path) as fh:
        payload = json.load(fh)
    meta = payload["basis"]
    if meta["kind"] == "spin":
        basis = enumerate_spin_basis(meta["n_sites"])
    elif meta["kind"] == "fock":
        basis = enumerate_hubbard_basis(meta["n_sites"], meta["n_up"], meta["n_down"])
    else:
        raise ValueError(f"unknown basis kind {meta['kind']!r}")
    amps = np.array([complex(re, im) for re, im in payload["amplitudes"]])
    return Wavefunction(basis, amps)


@dataclass
class SparseHamiltonian:
    """Hermitian sparse matrix tied to a basis enumeration."""

    basis: SpinBasis | FockBasis
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.getH()
        return 0.0 if d.nnz == 0 else float(np.abs(d.data).max())


def build_tfim(lattice: Lattice, J: float, basis: SpinBasis | None = None) -> SparseHamiltonian:
    """Transverse-field Ising Hamiltonian on the lattice's spin basis.

    Diagonal: -sum_bonds s_i s_j with s = +/-1; off-diagonal: -J between
    states differing by a single spin flip.
    """
    from .hilbert import enumerate_spin_basis

    n = lattice.sites
    if basis is None:
        basis = enumerate_spin_basis(n)
    if basis.n_sites != n:
        raise ValueError("basis does not match lattice")
    dim = basis.size
    ks = np.arange(dim, dtype=np.int64)
    spins = 2.0 * ((ks[:, None] >> np.arange(n)[None, :]) & 1) - 1.0  # (dim, n)

    diag = np.zeros(dim)
    for i, j in lattice.adjacency:
        diag -= spins[:, i] * spins[:, j]

    rows, cols, vals = [list(ks)], [list(ks)], [list(diag)]
    if J != 0.0:
        for i in range(n):
            flipped = ks ^ (1 << i)
            rows.append(list(ks))
            cols.append(list(flipped))
            vals.append([-J] * dim)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    H = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    return SparseHamiltonian(basis=basis, matrix=H)


def _jw_hops(states: np.ndarray, n_sites: int, bonds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single-species hopping matrix elements of -sum_<ij> (c+_i c_j + h.c.).

    Returns (row, col, sign) triples over the given occupation bitstrings,
    with the Jordan-Wigner sign (-1)^(occupied modes strictly between i and j).
    """
    index = {int(s): k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for k, s in enumerate(states):
        s = int(s)
        for i, j in bonds:
            for a, b in ((i, j), (j, i)):
                # c+_a c_b : b occupied, a empty
                if (s >> b) & 1 and not (s >> a) & 1:
                    t = s ^ (1 << b) ^ (1 << a)
                    lo, hi = (a, b) if a < b else (b, a)
                    mask = ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)
                    sign = -1.0 if bin(s & mask).count("1") % 2 else 1.0
                    rows.append(index[t])
                    cols.append(k)
                    vals.append(-sign)
    return np.array(rows), np.array(cols), np.array(vals)


def build_hubbard(lattice: Lattice, U: float, basis: FockBasis) -> SparseHamiltonian:
    """Fermi-Hubbard Hamiltonian in the fixed (n_up, n_down) sector."""
    if basis.n_sites != lattice.sites:
        raise ValueError("basis sector does not match lattice sites")
    n_up_states = basis.up_states.shape[0]
    n_dn_states = basis.down_states.shape[0]
    bonds = lattice.adjacency

    ru, cu, vu = _jw_hops(basis.up_states, basis.n_sites, bonds)
    rd, cd, vd = _jw_hops(basis.down_states, basis.n_sites, bonds)
    hop_up = sp.csr_matrix((vu, (ru, cu)), shape=(n_up_states, n_up_states))
    hop_dn = sp.csr_matrix((vd, (rd, cd)), shape=(n_dn_states, n_dn_states))

    # With up modes ordered before down modes, up hops carry no down-string
    # and vice versa, so the sector Hamiltonian is a Kronecker sum.
    eye_up = sp.identity(n_up_states, format="csr")
    eye_dn = sp.identity(n_dn_states, format="csr")
    H = sp.kron(hop_up, eye_dn, format="csr") + sp.kron(eye_up, hop_dn, format="csr")

    # Interaction: U * (number of doubly occupied sites), diagonal.
    u_bits = basis.up_states.astype(np.int64)
    d_bits = basis.down_states.astype(np.int64)
    doubles = np.zeros((n_up_states, n_dn_states))
    for i in range(basis.n_sites):
        doubles += (((u_bits >> i) & 1)[:, None]) * (((d_bits >> i) & 1)[None, :])
    H = H + sp.diags(U * doubles.reshape(-1))
    return SparseHamiltonian(basis=basis, matrix=H.tocsr())


def ground_state(H: SparseHamiltonian, dense_cutoff: int = 4096) -> tuple[float, Wavefunction]:
    """Lowest eigenpair; global phase fixed so the largest amplitude is real positive."""
    A = H.matrix
    if H.dimension <= 2:
        w, v = np.linalg.eigh(A.toarray())
        energy, vec = float(w[0]), v[:, 0]
    elif H.dimension <= dense_cutoff:
        w, v = np.linalg.eigh(A.toarray())
        energy, vec = float(w[0]), v[:, 0]
    else:
        try:
            w, v = spla.eigsh(A, k=1, which="SA")
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"ground-state iteration did not converge: {exc}") from exc
        energy, vec = float(w[0]), v[:, 0]
    vec = vec.astype(np.complex128)
    vec /= np.linalg.norm(vec)
    pivot = vec[np.argmax(np.abs(vec))]
    vec *= np.conj(pivot) / abs(pivot)
    return energy, Wavefunction(H.basis, vec)


def evolve(H: SparseHamiltonian, psi0: Wavefunction, t: float) -> Wavefunction:
    """Real-time evolution exp(-i H t) psi0, unitary to 1e-10."""
    if psi0.basis.size != H.dimension:
        raise ValueError("wavefunction dimension does not match Hamiltonian")
    if t == 0.0:
        return Wavefunction(psi0.basis, psi0.amplitudes.copy())
    if H.dimension <= DENSE_EVOLVE_DIM:
        w, v = np.linalg.eigh(H.matrix.toarray())
        phases = np.exp(-1j * w * t)
        out = v @ (phases * (v.conj().T @ psi0.amplitudes))
    else:
        out = spla.expm_multiply(-1j * t * H.matrix.astype(np.complex128), psi0.amplitudes)
        drift = abs(np.linalg.norm(out) - psi0.norm)
        if drift > 1e-8:
            raise ConvergenceError(f"Krylov propagation norm drift {drift:.2e}")
    return Wavefunction(psi0.basis, out)


def polarized_state(n_sites: int) -> Wavefunction:
    """|+>^n: uniform amplitudes 2^(-n/2) over the spin basis."""
    from .hilbert import enumerate_spin_basis

    basis = enumerate_spin_basis(n_sites)
    amps = np.full(basis.size, 2.0 ** (-n_sites / 2), dtype=np.complex128)
    return Wavefunction(basis, amps)
