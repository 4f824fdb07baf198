"""Positive-definiteness toolkit for translation-invariant and dot-product kernels.

Covers the squared-exponential limit kernel of the exponential-activation
single layer ("Gauss-net"), numerical Bochner checks of 1-d translation
profiles via the discrete Fourier transform, random-Fourier-feature kernel
composition, and direct Gram positive-definiteness certification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class TranslationInvariantKernel:
    """Kernel k(x, y) = profile(x - y)."""

    profile: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    def __call__(self, x, y):
        tau = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return self.profile(tau)


def gaussnet_kernel(x: np.ndarray, y: np.ndarray, sigma: float, d: int) -> float | np.ndarray:
    """Limiting kernel exp(-sigma^2 |x - y|^2 / (2 d)) of the Gauss-net layer.

    With only the last linear layer trained, this is also the limiting NTK.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sq = np.sum((x - y) ** 2, axis=-1)
    return np.exp(-0.5 * sigma**2 / d * sq)


def gaussnet_features(xs: np.ndarray, width: int, sigma: float, d: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Hidden features g_j(x) = exp(W0_j . x) / sqrt(exp(2 sigma^2 x.x / d)).

    W0 entries ~ N(0, sigma^2/d); E[g(x) g(y)] equals gaussnet_kernel(x, y).
    """
    xs = np.atleast_2d(xs)
    W0 = rng.normal(0.0, sigma / np.sqrt(d), size=(width, d))
    z = xs @ W0.T
    norm = np.exp(sigma**2 * np.einsum("ij,ij->i", xs, xs) / d)
    return np.exp(z) / norm[:, None]


def gaussnet_tik(sigma: float, d: int) -> TranslationInvariantKernel:
    return TranslationInvariantKernel(
        profile=lambda tau: np.exp(-0.5 * sigma**2 / d * np.sum(np.atleast_1d(tau) ** 2, axis=-1)),
        params={"sigma": sigma, "d": d},
    )


def gram_pd_check(kernel, points: np.ndarray, jitter: float | None = None) -> dict:
    """Assemble the Gram on `points` and certify positive definiteness.

    `kernel` is either a callable k(x, y) broadcasting over rows or a
    prebuilt Gram matrix. The PD threshold defaults to 1e-10 * trace / n.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if callable(kernel):
        G = np.empty((pts.shape[0], pts.shape[0]))
        for i, p in enumerate(pts):
            G[i] = np.asarray(kernel(p[None, :], pts)).reshape(-1)
    else:
        G = np.asarray(kernel, dtype=float)
    G = (G + G.T) / 2
    eig = np.linalg.eigvalsh(G)
    thresh = jitter if jitter is not None else 1e-10 * float(np.trace(G)) / G.shape[0]
    return {
        "min_eigenvalue": float(eig[0]),
        "max_eigenvalue": float(eig[-1]),
        "threshold": float(thresh),
        "is_pd": bool(eig[0] > thresh),
        "n_points": int(G.shape[0]),
    }


class TruncationError(Exception):
    """Kernel profile has not decayed at the grid edges."""


def bochner_check(profile, grid: np.ndarray, tol: float = 1e-10,
                  decay_tol: float = 1e-8, require_decay: bool = True) -> dict:
    """Numerical Bochner test of a 1-d translation profile.

    Samples k(tau) on a symmetric uniform grid, takes the DFT, and reports
    whether the spectral density is non-negative (PD-consistent). The profile
    must have decayed below `decay_tol` at the grid edges, otherwise the
    truncated transform is unreliable. `require_decay=False` admits
    non-decaying profiles like pure cosines, whose spectra are spikes.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 8:
        raise ValueError("grid must be a 1-d array with at least 8 points")
    step = np.diff(grid)
    if not np.allclose(step, step[0], rtol=1e-9) or not np.isclose(grid[0], -grid[-1], rtol=1e-9):
        raise ValueError("grid must be uniform and symmetric about 0")
    k = np.asarray(profile(grid), dtype=float)
    if require_decay and (abs(k[0]) > decay_tol or abs(k[-1]) > decay_tol):
        raise TruncationError(
            f"profile is {max(abs(k[0]), abs(k[-1])):.2e} at the grid edge (> {decay_tol:.0e})"
        )
    # the symmetric grid holds both +/- edge samples; drop the duplicate so
    # the DFT sees one exact period of the window
    spectrum = np.real(np.fft.fft(np.fft.ifftshift(k[:-1]))) * step[0]
    min_density = float(spectrum.min())
    scale = float(np.abs(spectrum).max())
    return {
        "min_spectral_density": min_density,
        "is_pd_consistent": bool(min_density >= -tol * max(scale, 1.0)),
        "spectrum": spectrum,
    }


@dataclass
class RFFMap:
    """Random Fourier feature map R^d -> R^{2d} on a hypersphere.

    gamma_{2k}(v) = a_k cos(2 pi b_k . v), gamma_{2k+1}(v) = a_k sin(2 pi b_k . v);
    |gamma(v)|^2 = sum_k a_k^2 for every v.
    """

    amplitudes: np.ndarray  # (d,)
    frequencies: np.ndarray  # (d, d)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        self.frequencies = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        if self.amplitudes.shape[0] != self.frequencies.shape[0]:
            raise ValueError("need one frequency vector per amplitude")

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        phase = 2 * np.pi * (np.atleast_2d(v) @ self.frequencies.T)  # (B, d)
        feats = np.empty(phase.shape[:-1] + (2 * self.amplitudes.shape[0],))
        feats[..., 0::2] = self.amplitudes * np.cos(phase)
        feats[..., 1::2] = self.amplitudes * np.sin(phase)
        return feats[0] if v.ndim == 1 else feats

    def dot_profile(self, tau: np.ndarray) -> np.ndarray:
        """gamma(v1).gamma(v2) as a function of tau = v1 - v2."""
        phase = 2 * np.pi * (np.atleast_2d(tau) @ self.frequencies.T)
        out = (self.amplitudes**2 * np.cos(phase)).sum(axis=-1)
        return out if np.ndim(tau) > 1 else float(out[0])


def default_rff(d: int, seed: int = 0) -> RFFMap:
    """Standard sampling of a Gaussian spectral measure: a_k = 1/sqrt(d), b_k ~ N(0, I)."""
    rng = np.random.default_rng(seed)
    return RFFMap(amplitudes=np.full(d, 1.0 / np.sqrt(d)),
                  frequencies=rng.standard_normal((d, d)))


def rff_compose(rff: RFFMap, h_g: Callable[[np.ndarray], np.ndarray]) -> TranslationInvariantKernel:
    """Compose a dot-product kernel profile with the RFF map.

    The downstream kernel restricted to the feature hypersphere becomes the
    translation-invariant kernel h_g(gamma(v1).gamma(v2)) = h_g(h_gamma(v1 - v2)).
    """

    def profile(tau):
        return h_g(np.asarray(rff.dot_profile(np.atleast_2d(tau))))

    return TranslationInvariantKernel(profile=profile, params={"rff": rff, "h_g": h_g})
