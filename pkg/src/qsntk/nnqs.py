"""Finite-width network quantum states.

The wavefunction is psi(x) = psi_1(x) + i psi_2(x), where psi_1 and psi_2 are
independent real single-hidden-layer networks

    f(x) = W2 . relu(W1 x / sqrt(d) + b1) / sqrt(N) + b2

with W1, W2 ~ N(0, 0.25) and b1, b2 ~ N(0, 0.01) at initialization.
Parameter vectors flatten in the fixed order (W1 row-major, b1, W2, b2).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

WEIGHT_VAR = 0.25
BIAS_VAR = 0.01


@dataclass
class NetworkParams:
    """Weights of one real single-hidden-layer ReLU network."""

    W1: np.ndarray  # (N, d)
    b1: np.ndarray  # (N,)
    W2: np.ndarray  # (N,)
    b2: float
    seed: int | None = None

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def n_params(self) -> int:
        n, d = self.W1.shape
        return n * d + n + n + 1

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2, [self.b2]])

    def with_flat(self, theta: np.ndarray) -> "NetworkParams":
        n, d = self.W1.shape
        w1, b1, w2, b2 = np.split(theta, [n * d, n * d + n, n * d + 2 * n])
        return replace(self, W1=w1.reshape(n, d).copy(), b1=b1.copy(), W2=w2.copy(), b2=float(b2[0]))


def init_params(width: int, input_dim: int, seed: int, dtype=np.float64) -> NetworkParams:
    """Draw initialization from per-tensor RNG streams spawned off `seed`."""
    streams = np.random.SeedSequence(seed).spawn(4)
    rngs = [np.random.default_rng(s) for s in streams]
    sw, sb = np.sqrt(WEIGHT_VAR), np.sqrt(BIAS_VAR)
    return NetworkParams(
        W1=(sw * rngs[0].standard_normal((width, input_dim))).astype(dtype),
        b1=(sb * rngs[1].standard_normal(width)).astype(dtype),
        W2=(sw * rngs[2].standard_normal(width)).astype(dtype),
        b2=float(sb * rngs[3].standard_normal()),
        seed=seed,
    )


def pre_activations(p: NetworkParams, xs: np.ndarray) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=p.W1.dtype))
    if xs.shape[1] != p.input_dim:
        raise ValueError(f"input dim {xs.shape[1]} != network dim {p.input_dim}")
    return xs @ p.W1.T / np.sqrt(p.input_dim) + p.b1


def forward(p: NetworkParams, xs: np.ndarray) -> np.ndarray:
    """Network output for a single input (d,) or a batch (B, d)."""
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    a = np.maximum(pre_activations(p, xs), 0.0)
    out = a @ p.W2 / np.sqrt(p.width) + p.b2
    return float(out[0]) if single else out


def jacobian(p: NetworkParams, xs: np.ndarray) -> np.ndarray:
    """Exact parameter gradient of forward, one flattened row per input.

    ReLU subgradient at 0 is taken as 0. Returns (B, n_params) for batched
    input, (n_params,) for a single input.
    """
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    X = np.atleast_2d(xs)
    z = pre_activations(p, X)
    gate = (z > 0).astype(float)  # (B, N)
    n, d = p.W1.shape
    sqn, sqd = np.sqrt(n), np.sqrt(d)
    gW2 = np.maximum(z, 0.0) / sqn  # (B, N)
    gb1 = gate * (p.W2 / sqn)  # (B, N)
    gW1 = gb1[:, :, None] * (X[:, None, :] / sqd)  # (B, N, d)
    J = np.concatenate(
        [gW1.reshape(X.shape[0], n * d), gb1, gW2, np.ones((X.shape[0], 1))], axis=1
    )
    return J[0] if single else J


@dataclass
class ComplexNNQS:
    """psi = psi_1 + i psi_2 with independent (disjoint-parameter) networks."""

    re: NetworkParams
    im: NetworkParams
    shared_hidden: bool = False  # when True, im reuses re's hidden layer (W1, b1)

    @property
    def input_dim(self) -> int:
        return self.re.input_dim


def init_complex(width: int, input_dim: int, seed: int, shared_hidden: bool = False) -> ComplexNNQS:
    s_re, s_im = np.random.SeedSequence(seed).spawn(2)
    re = _init_from_seedseq(width, input_dim, s_re)
    im = _init_from_seedseq(width, input_dim, s_im)
    if shared_hidden:
        im = replace(im, W1=re.W1, b1=re.b1)
    return ComplexNNQS(re=re, im=im, shared_hidden=shared_hidden)


def _init_from_seedseq(width: int, input_dim: int, ss: np.random.SeedSequence) -> NetworkParams:
    rngs = [np.random.default_rng(s) for s in ss.spawn(4)]
    sw, sb = np.sqrt(WEIGHT_VAR), np.sqrt(BIAS_VAR)
    return NetworkParams(
        W1=sw * rngs[0].standard_normal((width, input_dim)),
        b1=sb * rngs[1].standard_normal(width),
        W2=sw * rngs[2].standard_normal(width),
        b2=float(sb * rngs[3].standard_normal()),
    )


def nnqs_value(c: ComplexNNQS, xs: np.ndarray) -> np.ndarray | complex:
    """psi(x) = forward(re, x) + i forward(im, x)."""
    re = forward(c.re, xs)
    im = forward(c.im, xs)
    if np.ndim(re) == 0:
        return complex(re, im)
    return re + 1j * im


def evaluate_on_basis(c: ComplexNNQS, basis):
    """Unnormalized amplitude vector psi(x_k) over all basis elements."""
    from .hamiltonian import Wavefunction
    from .hilbert import encode_basis

    X = encode_basis(basis)
    return Wavefunction(basis, nnqs_value(c, X))


def save_checkpoint(c: ComplexNNQS, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        re_W1=c.re.W1, re_b1=c.re.b1, re_W2=c.re.W2, re_b2=c.re.b2,
        im_W1=c.im.W1, im_b1=c.im.b1, im_W2=c.im.W2, im_b2=c.im.b2,
        shared_hidden=c.shared_hidden,
    )


def load_checkpoint(path) -> ComplexNNQS:
    z = np.load(path)
    re = NetworkParams(W1=z["re_W1"], b1=z["re_b1"], W2=z["re_W2"], b2=float(z["re_b2"]))
    im = NetworkParams(W1=z["im_W1"], b1=z["im_b1"], W2=z["im_W2"], b2=float(z["im_b2"]))
    return ComplexNNQS(re=re, im=im, shared_hidden=bool(z["shared_hidden"]))
