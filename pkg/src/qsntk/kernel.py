"""Tangent kernels for network quantum states.

Empirical kernels are exact jacobian contractions at finite width:

    Theta(x, y)   = sum_i dpsi(x)/dtheta_i . dpsi(y)/dtheta_i      (NTK)
    Phi(x, y)     = sum_i dpsi(x)/dtheta_i . dpsi*(y)/dtheta_i     (Hermitian NTK)
    Theta_12(x,y) = sum_{shared i} dpsi_1(x)/dtheta_i . dpsi_2(y)/dtheta_i

The block kernel over (psi, psi*) and its real/imaginary form are assembled
from the component Grams:

    Theta    = Theta_1 - Theta_2 + i (Theta_12 + Theta_12^T)
    Phi      = Theta_1 + Theta_2 - i (Theta_12 - Theta_12^T)
    Omega_RI = [[Theta_1, Theta_12], [Theta_12^T, Theta_2]]
    Omega    = R Omega_RI R^T,   R = [[1, i], [1, -i]]

The closed-form infinite-width NTK of the single-hidden-layer ReLU
architecture is derived from the arc-cosine expectations over the
preactivation Gaussian; it is what the empirical Gram converges to as the
width grows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .nnqs import BIAS_VAR, WEIGHT_VAR, ComplexNNQS, NetworkParams, jacobian


class ConditioningError(Exception):
    """Gram matrix too ill-conditioned for the requested operation."""


@dataclass
class KernelGram:
    """Matrix of kernel evaluations on two point sets."""

    values: np.ndarray
    kind: str = "ntk"

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class KernelHyperparams:
    """Initialization hyperparameters entering the limit kernels."""

    weight_var: float = WEIGHT_VAR
    bias_var: float = BIAS_VAR
    input_dim: int = 12
    nonlinearity: str = "relu"

    def __post_init__(self):
        if self.weight_var <= 0 or self.bias_var <= 0:
            raise ValueError("variances must be positive")


def _as_matrix(g) -> np.ndarray:
    return np.asarray(g.values if isinstance(g, KernelGram) else g)


def empirical_ntk(p: NetworkParams, xs: np.ndarray, ys: np.ndarray | None = None) -> KernelGram:
    """NTK Gram of a real network by exact jacobian contraction."""
    Jx = jacobian(p, np.atleast_2d(xs))
    Jy = Jx if ys is None else jacobian(p, np.atleast_2d(ys))
    return KernelGram(values=Jx @ Jy.T, kind="ntk")


def _shared_block_jacobians(c: ComplexNNQS, xs: np.ndarray):
    """Jacobians of psi_1 and psi_2 restricted to the shared parameters."""
    n, d = c.re.W1.shape
    n_hidden = n * d + n  # W1 row-major then b1 in the flat order
    J1 = jacobian(c.re, np.atleast_2d(xs))[:, :n_hidden]
    J2 = jacobian(c.im, np.atleast_2d(xs))[:, :n_hidden]
    return J1, J2


def empirical_mixing_kernel(
    c: ComplexNNQS, xs: np.ndarray, ys: np.ndarray | None = None
) -> KernelGram:
    """Theta_12 over the shared parameters; exactly zero for disjoint networks."""
    nx = np.atleast_2d(xs).shape[0]
    ny = nx if ys is None else np.atleast_2d(ys).shape[0]
    if not c.shared_hidden:
        return KernelGram(values=np.zeros((nx, ny)), kind="mixing")
    J1x, _ = _shared_block_jacobians(c, xs)
    _, J2y = _shared_block_jacobians(c, xs if ys is None else ys)
    return KernelGram(values=J1x @ J2y.T, kind="mixing")


def component_grams(c: ComplexNNQS, xs: np.ndarray, ys: np.ndarray | None = None):
    """(Theta_1, Theta_2, Theta_12) Grams of the real/imaginary pair."""
    t1 = empirical_ntk(c.re, xs, ys).values
    t2 = empirical_ntk(c.im, xs, ys).values
    t12 = empirical_mixing_kernel(c, xs, ys).values
    return t1, t2, t12


def complex_jacobian(c: ComplexNNQS, xs: np.ndarray) -> np.ndarray:
    """dpsi/dtheta over the full parameter set, one complex row per input.

    Parameter order: shared hidden block (if any), then psi_1-only, then
    psi_2-only parameters.
    """
    X = np.atleast_2d(xs)
    J1 = jacobian(c.re, X)
    J2 = jacobian(c.im, X)
    if not c.shared_hidden:
        return np.concatenate([J1, 1j * J2], axis=1)
    n, d = c.re.W1.shape
    nh = n * d + n
    shared = J1[:, :nh] + 1j * J2[:, :nh]
    return np.concatenate([shared, J1[:, nh:], 1j * J2[:, nh:]], axis=1)


def empirical_qsntk(c: ComplexNNQS, xs: np.ndarray) -> dict:
    """Theta, Phi, and the block kernels, directly from complex jacobians."""
    J = complex_jacobian(c, xs)
    theta = J @ J.T
    phi = J @ J.conj().T
    n = theta.shape[0]
    omega = np.block([[theta, phi], [phi.conj(), theta.conj()]])
    return {
        "theta": KernelGram(theta, "ntk"),
        "phi": KernelGram(phi, "hntk"),
        "omega": KernelGram(omega, "qsntk"),
    }


def assemble_qsntk(theta1, theta2, theta12) -> dict:
    """Build Theta, Phi, Omega_RI and Omega from the component Grams."""
    t1, t2, t12 = (_as_matrix(g) for g in (theta1, theta2, theta12))
    if not (t1.shape == t2.shape == t12.shape):
        raise ValueError(f"component Grams must be conformable: {t1.shape}, {t2.shape}, {t12.shape}")
    theta = t1 - t2 + 1j * (t12 + t12.T)
    phi = t1 + t2 - 1j * (t12 - t12.T)
    omega_ri = np.block([[t1, t12], [t12.T, t2]])
    # lower-left block is the entrywise conjugate Phi*(x, y)
    omega = np.block([[theta, phi], [phi.conj(), theta.conj()]])
    return {
        "theta": KernelGram(theta, "ntk"),
        "phi": KernelGram(phi, "hntk"),
        "omega_ri": KernelGram(omega_ri, "qsntk_ri"),
        "omega": KernelGram(omega, "qsntk"),
    }


# ---------------------------------------------------------------------------
# Closed-form infinite-width kernels (single hidden ReLU layer)
# ---------------------------------------------------------------------------

ARCCOS_CLAMP_TOL = 1e-9


def _preactivation_cov(xs: np.ndarray, ys: np.ndarray, h: KernelHyperparams):
    xs, ys = np.atleast_2d(xs), np.atleast_2d(ys)
    d = h.input_dim
    if xs.shape[1] != d or ys.shape[1] != d:
        raise ValueError(f"inputs must have dim {d}")
    sxy = h.weight_var * (xs @ ys.T) / d + h.bias_var
    sxx = h.weight_var * np.einsum("ij,ij->i", xs, xs) / d + h.bias_var
    syy = h.weight_var * np.einsum("ij,ij->i", ys, ys) / d + h.bias_var
    return sxy, sxx, syy


def _relu_expectations(sxy, sxx, syy):
    """E[relu(u) relu(v)] and E[relu'(u) relu'(v)] for the given covariance."""
    denom = np.sqrt(np.outer(sxx, syy))
    rho = sxy / denom
    over = np.max(np.abs(rho)) - 1.0
    if over > ARCCOS_CLAMP_TOL:
        raise FloatingPointError(f"correlation exceeds 1 by {over:.2e}")
    rho = np.clip(rho, -1.0, 1.0)
    ang = np.arccos(rho)
    e_act = denom / (2 * np.pi) * (np.sin(ang) + (np.pi - ang) * np.cos(ang))
    e_gate = (np.pi - ang) / (2 * np.pi)
    return e_act, e_gate


def analytic_nngp(xs: np.ndarray, ys: np.ndarray | None = None,
                  h: KernelHyperparams = KernelHyperparams()) -> KernelGram:
    """Infinite-width output covariance E[f(x) f(y)] of the architecture."""
    ys = xs if ys is None else ys
    sxy, sxx, syy = _preactivation_cov(xs, ys, h)
    e_act, _ = _relu_expectations(sxy, sxx, syy)
    return KernelGram(values=h.weight_var * e_act + h.bias_var, kind="nngp")


def analytic_ntk(xs: np.ndarray, ys: np.ndarray | None = None,
                 h: KernelHyperparams = KernelHyperparams()) -> KernelGram:
    """Infinite-width NTK of the single-hidden-layer ReLU architecture.

    Sum of the W2, b2, W1, b1 jacobian contractions in the wide limit:
        Theta = E[relu relu] + sigma_w^2 E[gate gate] (x.y/d + 1) + 1
    """
    if h.nonlinearity != "relu":
        raise ValueError("closed form implemented for ReLU only")
    xs = np.atleast_2d(xs)
    ys = xs if ys is None else np.atleast_2d(ys)
    sxy, sxx, syy = _preactivation_cov(xs, ys, h)
    e_act, e_gate = _relu_expectations(sxy, sxx, syy)
    dot = (xs @ ys.T) / h.input_dim
    values = e_act + h.weight_var * e_gate * (dot + 1.0) + 1.0
    return KernelGram(values=values, kind="ntk")


# ---------------------------------------------------------------------------
# Deterministic limit of the scalar single-layer complex network
# ---------------------------------------------------------------------------


def _gauss_expect(f, order: int):
    """E[f(c)] over c ~ N(0,1) by Gauss-Hermite quadrature."""
    nodes, weights = hermegauss(order)
    w = weights / np.sqrt(2 * np.pi)
    return float(np.sum(w * f(nodes)))


def complex_single_layer_limit_kernels(x: float, y: float, nonlinearity="relu",
                                       order: int = 200) -> tuple[complex, float]:
    """Limit kernels of psi(x) = sum_i (a_i + i b_i) sigma(c_i x) / sqrt(N).

    With a, b, c ~ N(0,1): the NTK vanishes identically since
    E[(a+ib)^2] = 0, and the Hermitian kernel is
        Phi(x, y) = 2 E[sigma(cx) sigma(cy)] + 2 x y E[sigma'(cx) sigma'(cy)],
    with the c-expectations done by quadrature.
    """
    if nonlinearity == "relu":
        act = lambda z: np.maximum(z, 0.0)
        dact = lambda z: (z > 0).astype(float)
    else:
        act, dact = nonlinearity  # (sigma, sigma') pair of callables
    e_act = _gauss_expect(lambda c: act(c * x) * act(c * y), order)
    e_gate = _gauss_expect(lambda c: dact(c * x) * dact(c * y), order)
    theta_inf = 0.0 + 0.0j  # x*y*E[(a+ib)^2]*E[gate gate], and E[(a+ib)^2] = 0
    phi_inf = 2.0 * e_act + 2.0 * x * y * e_gate
    return theta_inf, phi_inf


def complex_single_layer_empirical_kernels(x: float, y: float, width: int, seed: int,
                                           nonlinearity="relu") -> dict:
    """Finite-width kernels of the scalar complex net with per-unit stderr."""
    if nonlinearity == "relu":
        act = lambda z: np.maximum(z, 0.0)
        dact = lambda z: (z > 0).astype(float)
    else:
        act, dact = nonlinearity
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    a = rngs[0].standard_normal(width)
    b = rngs[1].standard_normal(width)
    c = rngs[2].standard_normal(width)
    theta_terms = x * y * (a + 1j * b) ** 2 * dact(c * x) * dact(c * y)
    phi_terms = 2 * act(c * x) * act(c * y) + x * y * (a**2 + b**2) * dact(c * x) * dact(c * y)

    def mean_se(terms):
        m = terms.mean()
        se = terms.std(ddof=1) / np.sqrt(width)
        return m, se

    tm, tse = mean_se(theta_terms.real)
    tmi, tsei = mean_se(theta_terms.imag)
    pm, pse = mean_se(phi_terms)
    return {
        "theta": complex(tm, tmi),
        "theta_stderr": (float(tse), float(tsei)),
        "phi": float(pm),
        "phi_stderr": float(pse),
    }


# ---------------------------------------------------------------------------
# Learning-rate bound and Gram export
# ---------------------------------------------------------------------------


def max_learning_rate(gram, batch_size: int) -> float:
    """Stability threshold 2 / lambda_max(gram / batch_size) of linearized MSE descent.

    `gram` must be the kernel that multiplies the per-step residual update,
    i.e. twice the per-component NTK for the batch-mean squared loss.
    """
    G = _as_matrix(gram)
    lam_max = float(np.linalg.eigvalsh((G + G.T) / 2).max())
    if lam_max <= 0:
        raise ConditioningError(f"Gram has non-positive top eigenvalue {lam_max:.3e}")
    return 2.0 * batch_size / lam_max


def save_gram_csv(gram, path) -> None:
    np.savetxt(path, _as_matrix(gram), delimiter=",")


def save_gram_binary(gram, path) -> None:
    """Binary export: little-endian uint64 dims header, then row-major float64."""
    G = _as_matrix(gram)
    if np.iscomplexobj(G):
        raise ValueError("binary export supports real Grams only")
    G = np.ascontiguousarray(G, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", *G.shape))
        fh.write(G.tobytes())


def load_gram_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(rows, cols)
