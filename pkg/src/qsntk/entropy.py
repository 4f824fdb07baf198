"""Ensemble entanglement measures for random wavefunctions.

A wavefunction psi on a domain of size d_A * d_B is reshaped into a
d_A x d_B matrix W; the reduced density matrix of subregion A is
rho_A = W W^dag (normalized when |psi| = 1). For ensembles psi = psi_1 +
i psi_2 with psi_1, psi_2 i.i.d. zero-mean Gaussian processes of kernel G/2,
the covariance is that of a complex Gaussian field:

    E[psi(x) psi*(y)] = G(x, y),   E[psi(x) psi(y)] = 0,

and ensemble moments E Tr[rho_A^n] reduce to sums of Wick pairings of the
2n-point correlator over the replica index pattern.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import lgamma

import numpy as np

MAX_WICK_DOMAIN = 64
MAX_WICK_ORDER = 3


@dataclass(frozen=True)
class RegionSplit:
    """Bipartition of a domain of size d_A * d_B; index k = a * d_B + b."""

    d_A: int
    d_B: int

    def __post_init__(self):
        if self.d_A < 1 or self.d_B < 1:
            raise ValueError("subsystem dimensions must be positive")

    @property
    def size(self) -> int:
        return self.d_A * self.d_B

    def reshape(self, psi: np.ndarray) -> np.ndarray:
        return np.asarray(psi).reshape(*psi.shape[:-1], self.d_A, self.d_B)


def half_cut(n_qubits: int) -> RegionSplit:
    """Half-system bipartition of an n-qubit domain (smaller half first)."""
    d_a = 2 ** (n_qubits // 2)
    return RegionSplit(d_A=d_a, d_B=2**n_qubits // d_a)


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Squared-exponential field covariance E[psi(x) psi*(y)] on embedded indices."""

    alpha: float
    sigma: float
    embedding: np.ndarray  # (d,) or (d, dim) real positions of the domain indices

    def __post_init__(self):
        if self.alpha <= 0 or self.sigma <= 0:
            raise ValueError("alpha and sigma must be positive")

    def gram(self) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(self.embedding, dtype=float).T).T
        diff = pts[:, None, :] - pts[None, :, :]
        return self.alpha * np.exp(-np.einsum("xyk,xyk->xy", diff, diff) / (2 * self.sigma**2))


def iid_embedding(d: int, sigma: float) -> np.ndarray:
    """Index embedding k -> k * Delta with Delta >> sigma, realizing the i.i.d. regime."""
    return np.arange(d, dtype=float) * (50.0 * sigma)


def renyi_wick(spec: GaussianKernelSpec, split: RegionSplit, n: int) -> float:
    """Exact ensemble moment E Tr[rho_A^n] (unnormalized) by Wick enumeration.

    Sums, over all permutations pairing each psi with a psi*, the products of
    covariances C[u_k, v_perm(k)] with u_k = (a_k, b_k), v_k = (a_{k+1}, b_k).
    """
    if not 2 <= n <= MAX_WICK_ORDER:
        raise ValueError(f"replica order n={n} unsupported (2 <= n <= {MAX_WICK_ORDER})")
    if split.size > MAX_WICK_DOMAIN:
        raise ValueError(f"domain size {split.size} exceeds Wick guard {MAX_WICK_DOMAIN}")
    C = spec.gram()
    if C.shape[0] != split.size:
        raise ValueError("embedding size does not match the split")
    C4 = C.reshape(split.d_A, split.d_B, split.d_A, split.d_B)

    a_idx = [chr(ord("a") + k) for k in range(n)]
    b_idx = [chr(ord("p") + k) for k in range(n)]
    total = 0.0
    for perm in permutations(range(n)):
        subs = []
        for k in range(n):
            j = perm[k]
            subs.append(a_idx[k] + b_idx[k] + a_idx[(j + 1) % n] + b_idx[j])
        total += float(np.einsum(",".join(subs) + "->", *([C4] * n), optimize=True))
    return total


def gp_sampler(spec: GaussianKernelSpec, jitter: float = 1e-12):
    """Sampler of complex Gaussian fields with E[psi psi*] = G (components GP(0, G/2))."""
    G = spec.gram()
    L = np.linalg.cholesky(G / 2 + jitter * np.trace(G) / G.shape[0] * np.eye(G.shape[0]))

    def sample(rng: np.random.Generator, n_samples: int) -> np.ndarray:
        z = rng.standard_normal((2, n_samples, G.shape[0]))
        return (z[0] + 1j * z[1]) @ L.T

    return sample


def iid_complex_sampler(d: int, alpha: float = 1.0):
    """i.i.d. complex Gaussian amplitudes with E|psi_k|^2 = alpha."""
    scale = np.sqrt(alpha / 2)

    def sample(rng: np.random.Generator, n_samples: int) -> np.ndarray:
        z = rng.standard_normal((2, n_samples, d))
        return scale * (z[0] + 1j * z[1])

    return sample


def product_state_sampler(split: RegionSplit):
    """psi(a, b) = u(a) v(b) with random complex factors: zero entanglement."""

    def sample(rng: np.random.Generator, n_samples: int) -> np.ndarray:
        u = rng.standard_normal((n_samples, split.d_A, 2)) @ np.array([1, 1j])
        v = rng.standard_normal((n_samples, split.d_B, 2)) @ np.array([1, 1j])
        return (u[:, :, None] * v[:, None, :]).reshape(n_samples, split.size)

    return sample


def nnqs_sampler(width: int, inputs: np.ndarray):
    """Complex network states of the reference ReLU architecture evaluated at fixed inputs."""
    from .nnqs import init_complex, nnqs_value

    def sample(rng: np.random.Generator, n_samples: int) -> np.ndarray:
        out = np.empty((n_samples, inputs.shape[0]), dtype=complex)
        for k in range(n_samples):
            c = init_complex(width, inputs.shape[1], seed=int(rng.integers(2**63)))
            out[k] = nnqs_value(c, inputs)
        return out

    return sample


def _singular_values(psi: np.ndarray, split: RegionSplit) -> np.ndarray:
    return np.linalg.svd(split.reshape(psi), compute_uv=False)


def renyi_mc(sampler, split: RegionSplit, n: int, n_samples: int,
             normalize: bool = False, seed: int = 0, batch: int = 4096) -> dict:
    """Monte Carlo estimate of E Tr[rho_A^n] with standard error."""
    if n_samples < 2:
        raise ValueError("need n_samples >= 2 for a standard error")
    rng = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        psi = sampler(rng, m)
        if normalize:
            psi = psi / np.linalg.norm(psi, axis=1, keepdims=True)
        s = _singular_values(psi, split)
        vals[done:done + m] = (s ** (2 * n)).sum(axis=1)
        done += m
    return {
        "estimate": float(vals.mean()),
        "stderr": float(vals.std(ddof=1) / np.sqrt(n_samples)),
        "n_samples": n_samples,
    }


def entanglement_entropy_mc(sampler, split: RegionSplit, n_samples: int,
                            seed: int = 0, batch: int = 4096) -> dict:
    """Mean von Neumann entropy of normalized draws, with standard error."""
    rng = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    done = 0
    resampled = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        psi = sampler(rng, m)
        norms = np.linalg.norm(psi, axis=1)
        bad = norms == 0
        if bad.any():  # pathological sampler draw; redraw those rows
            resampled += int(bad.sum())
            psi = psi[~bad]
            norms = norms[~bad]
            m = psi.shape[0]
            if m == 0:
                continue
        psi = psi / norms[:, None]
        lam = _singular_values(psi, split) ** 2
        lam = np.clip(lam, 1e-300, None)
        vals[done:done + m] = -(lam * np.log(lam)).sum(axis=1)
        done += m
    return {
        "estimate": float(vals.mean()),
        "stderr": float(vals.std(ddof=1) / np.sqrt(n_samples)),
        "n_samples": n_samples,
        "resampled": resampled,
    }


def page_value(d_A: int, d_B: int, exact: bool = False) -> float:
    """Mean entanglement entropy of a random pure state.

    Leading approximation ln d_A - d_A / (2 d_B); the exact mode evaluates
    the full average sum_{k=d_B+1}^{d_A d_B} 1/k - (d_A - 1) / (2 d_B),
    valid for 1 <= d_A <= d_B (and exactly 0 at d_A = 1).
    """
    if not 1 <= d_A <= d_B:
        raise ValueError("require 1 <= d_A <= d_B")
    if exact:
        ks = np.arange(d_B + 1, d_A * d_B + 1)
        return float((1.0 / ks).sum() - (d_A - 1) / (2.0 * d_B))
    return float(np.log(d_A) - d_A / (2.0 * d_B))


def renyi_entropy(purity: float, n: int) -> float:
    """Renyi entropy S_n = log(Tr rho^n) / (1 - n) for a normalized state."""
    return float(np.log(purity) / (1 - n))
