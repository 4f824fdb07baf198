"""Closed-form linearized training dynamics for quantum state supervised learning.

For the batch-mean squared loss L = (1/|B|) sum_x |psi_T(x) - psi(x)|^2 with
disjoint real/imaginary networks, the two components decouple and each real
component evolves under gradient flow as

    d psi_a(x)/dt = -(eta/|B|) sum_{x' in B} G_a(x, x') (psi_a(x') - psi_Ta(x'))

where the rate kernel G_a is *twice* the component NTK Theta_a (the factor 2
comes from d/dpsi (psi - psi_T)^2). Time t counts gradient-descent steps; the
discrete update (1 - eta G/|B|)^t is approximated by exp(-eta G t / |B|).

The exact solution splits as Psi_l = mu + gamma with

    mu_x(t)    = G_xB G_BB^{-1} (1 - exp(-eta G_BB t/|B|)) psi_T
    gamma_x(t) = psi_x(0) - G_xB G_BB^{-1} (1 - exp(-eta G_BB t/|B|)) psi_B(0)

and the generic coupled case integrates the block ODE
d Psi/dt = -(eta/|B|) Omega M (Psi - Psi_T) with the swap matrix M.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import ConditioningError, _as_matrix

# Relative eigenvalue cutoff for the pseudo-inverse of near-singular Grams.
PINV_CUTOFF = 1e-10


@dataclass
class SupervisedTask:
    """Train/test split with complex target amplitudes and a learning rate."""

    train_x: np.ndarray  # (|B|, d) encoded inputs
    test_x: np.ndarray
    target_train: np.ndarray  # complex (|B|,)
    target_test: np.ndarray
    eta: float
    train_indices: np.ndarray | None = None
    test_indices: np.ndarray | None = None

    def __post_init__(self):
        self.target_train = np.asarray(self.target_train, dtype=np.complex128)
        self.target_test = np.asarray(self.target_test, dtype=np.complex128)
        if self.train_x.shape[0] != self.target_train.shape[0]:
            raise ValueError("train targets do not match train inputs")
        if self.test_x.shape[0] != self.target_test.shape[0]:
            raise ValueError("test targets do not match test inputs")

    @property
    def batch_size(self) -> int:
        return self.train_x.shape[0]


def swap_matrix(n: int = 1) -> np.ndarray:
    """Block swap M mapping stacked (u, v) -> (v, u); M^2 = identity."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [eye, zero]])


class DecoupledDynamics:
    """Spectral solver for one real component; caches the train-Gram eigensystem.

    `gram_train` is the rate kernel on the batch (2x the component NTK for
    the batch-mean MSE loss). Modes below PINV_CUTOFF * lambda_max are
    dropped (pseudo-inverse) and counted in `n_dropped`.
    """

    def __init__(self, gram_train, eta: float, batch_size: int, cutoff: float = PINV_CUTOFF):
        G = _as_matrix(gram_train)
        G = (G + G.T) / 2
        lam, V = np.linalg.eigh(G)
        lam_max = float(lam.max())
        if lam_max <= 0:
            raise ConditioningError(f"rate kernel has max eigenvalue {lam_max:.3e}")
        keep = lam > cutoff * lam_max
        self.n_dropped = int((~keep).sum())
        self.min_eigenvalue = float(lam.min())
        self.lam = lam[keep]
        self.V = V[:, keep]
        self.eta = eta
        self.batch_size = batch_size

    def _decay(self, t) -> np.ndarray:
        """(1 - exp(-eta lam t / |B|)) per kept mode; supports t = inf."""
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            e = np.exp(-self.eta * np.multiply.outer(t, self.lam) / self.batch_size)
        return 1.0 - e

    def mu(self, cross, target, t) -> np.ndarray:
        """Mean solution mu_x(t); `cross` is G(x, B), target on the batch.

        Returns shape (n_t, n_x) for array t, (n_x,) for scalar t.
        """
        scalar_t = np.ndim(t) == 0
        P = _as_matrix(cross) @ self.V  # (n_x, m)
        c = (self.V.T @ np.asarray(target)) / self.lam  # (m,)
        out = self._decay(np.atleast_1d(t)) * c  # (n_t, m)
        vals = out @ P.T  # (n_t, n_x)
        return vals[0] if scalar_t else vals

    def gamma(self, cross, init_x, init_train, t) -> np.ndarray:
        """Fluctuation gamma_x(t) = psi_x(0) - T_x(t) psi_B(0)."""
        scalar_t = np.ndim(t) == 0
        pulled = self.mu(cross, init_train, np.atleast_1d(t))
        vals = np.asarray(init_x)[None, :] - pulled
        return vals[0] if scalar_t else vals

    def gamma_variance(self, cross, nngp_train, nngp_cross, nngp_diag, t) -> np.ndarray:
        """Ensemble variance of gamma per point: E|gamma_x(t)|^2 for one component.

        `nngp_*` are initialization covariances: on the batch (|B| x |B|),
        between evaluation points and the batch (n_x x |B|), and the diagonal
        at the evaluation points (n_x,).
        """
        scalar_t = np.ndim(t) == 0
        ts = np.atleast_1d(t)
        Q = _as_matrix(cross) @ self.V  # (n_x, m)
        C = _as_matrix(nngp_cross) @ self.V  # (n_x, m)
        W = self.V.T @ _as_matrix(nngp_train) @ self.V  # (m, m)
        decay = self._decay(ts) / self.lam  # (n_t, m), phi factor
        out = np.empty((ts.shape[0], Q.shape[0]))
        for k, phi in enumerate(decay):
            A = Q * phi  # (n_x, m)
            term2 = np.einsum("xi,xi->x", A, C)
            term3 = np.einsum("xi,xi->x", A @ W, A)
            out[k] = np.asarray(nngp_diag) - 2 * term2 + term3
        out = np.maximum(out, 0.0)
        return out[0] if scalar_t else out


def solve_mu(gram_train, cross, target, eta: float, batch_size: int, t):
    """mu_x(t) for one real component (see DecoupledDynamics.mu)."""
    return DecoupledDynamics(gram_train, eta, batch_size).mu(cross, target, t)


def solve_gamma(gram_train, cross, init_x, init_train, eta: float, batch_size: int, t):
    """gamma_x(t) for one real component."""
    return DecoupledDynamics(gram_train, eta, batch_size).gamma(cross, init_x, init_train, t)


def _phi_factor(lam: np.ndarray, t: float) -> np.ndarray:
    """(1 - exp(-lam t)) / lam with the lam -> 0 limit handled by series."""
    lam = np.asarray(lam, dtype=complex)
    small = np.abs(lam * t) < 1e-8
    out = np.empty_like(lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[~small] = (1.0 - np.exp(-lam[~small] * t)) / lam[~small]
    out[small] = t * (1.0 - lam[small] * t / 2.0)
    return out


def solve_block_ode(omega_train, omega_cross, target_train, init_train, init_x,
                    eta: float, batch_size: int, t) -> np.ndarray:
    """Integrate the coupled block ODE d Psi/dt = -(eta/|B|) Omega M (Psi - Psi_T).

    Stacked layout: the first half of each 2n-vector is psi on the points, the
    second half psi* (so Psi_T = [psi_T, psi_T*]). `omega_train` is the
    (2|B|, 2|B|) block Gram on the batch, `omega_cross` the (2 n_x, 2|B|)
    cross blocks. Returns the stacked (psi, psi*) values at the evaluation
    points, shape (n_t, 2 n_x) for array t.

    Solved by eigendecomposition of Omega M; falls back to dense ODE
    integration when the eigenbasis is too ill-conditioned (defective case).
    """
    scalar_t = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    Ob = _as_matrix(omega_train)
    Ox = _as_matrix(omega_cross)
    nb2 = Ob.shape[0]
    M = swap_matrix(nb2 // 2)
    A = (eta / batch_size) * (Ob @ M)
    r0 = np.asarray(init_train, dtype=complex) - np.asarray(target_train, dtype=complex)

    lam, V = np.linalg.eig(A)
    cond = np.linalg.cond(V)
    if cond < 1e10:
        c0 = np.linalg.solve(V, r0)
        OxM = (eta / batch_size) * (Ox @ M) @ V
        out = np.empty((ts.shape[0], Ox.shape[0]), dtype=complex)
        for k, tk in enumerate(ts):
            out[k] = np.asarray(init_x, dtype=complex) - OxM @ (_phi_factor(lam, tk) * c0)
    else:
        from scipy.integrate import solve_ivp

        def rhs(_t, y):
            r = y[:nb2] + 1j * y[nb2:]
            dr = -A @ r
            return np.concatenate([dr.real, dr.imag])

        y0 = np.concatenate([r0.real, r0.imag])
        t_end = float(ts.max()) if ts.size else 0.0
        sol = solve_ivp(rhs, (0.0, max(t_end, 1e-12)), y0, t_eval=ts,
                        rtol=1e-10, atol=1e-12, method="DOP853")
        if not sol.success:
            raise ConditioningError(f"block ODE integration failed: {sol.message}")
        out = np.empty((ts.shape[0], Ox.shape[0]), dtype=complex)
        OxM = (eta / batch_size) * (Ox @ M)
        # Psi_x(t) = Psi_x(0) - int_0^t OxM r(s) ds, via cumulative quadrature
        # on a refined grid for accuracy.
        fine = np.linspace(0.0, max(t_end, 1e-12), 20001)
        sol_f = solve_ivp(rhs, (0.0, max(t_end, 1e-12)), y0, t_eval=fine,
                          rtol=1e-10, atol=1e-12, method="DOP853")
        r_f = sol_f.y[:nb2] + 1j * sol_f.y[nb2:]
        integrand = OxM @ r_f  # (2 n_x, n_fine)
        from scipy.integrate import cumulative_trapezoid

        cum = cumulative_trapezoid(integrand, fine, axis=1, initial=0.0)
        for k, tk in enumerate(ts):
            idx = np.searchsorted(fine, tk)
            idx = min(idx, fine.size - 1)
            out[k] = np.asarray(init_x, dtype=complex) - cum[:, idx]
    return out[0] if scalar_t else out


def mse(values: np.ndarray, targets: np.ndarray) -> float:
    """Batch-mean squared error (1/n) sum |v - t|^2."""
    v = np.asarray(values).reshape(-1)
    t = np.asarray(targets).reshape(-1)
    return float(np.mean(np.abs(v - t) ** 2))


def loss_decomposition(mu_values, targets, gamma_ensemble=None, gamma_variance=None) -> dict:
    """L_mu from the mean solution, L_gamma from an ensemble or analytic variance.

    `gamma_ensemble` is a (K, n_x) complex array of per-network fluctuations;
    alternatively pass the analytic per-point variance E|gamma|^2 directly.
    Returns {"L_mu", "L_gamma", "L_total"}.
    """
    l_mu = mse(mu_values, targets)
    if gamma_ensemble is not None:
        g = np.asarray(gamma_ensemble)
        if g.ndim != 2 or g.shape[0] < 1:
            raise ValueError("gamma ensemble must be a (K, n_x) array with K >= 1")
        l_gamma = float(np.mean(np.abs(g) ** 2))
    elif gamma_variance is not None:
        l_gamma = float(np.mean(gamma_variance))
    else:
        raise ValueError("need either a gamma ensemble or an analytic variance")
    return {"L_mu": l_mu, "L_gamma": l_gamma, "L_total": l_mu + l_gamma}


def log_time_grid(t_min: float = 1.0, t_max: float = 1e4, per_decade: int = 50) -> np.ndarray:
    """Logarithmic time grid, `per_decade` points per decade."""
    n = int(np.ceil(np.log10(t_max / t_min) * per_decade)) + 1
    return np.geomspace(t_min, t_max, n)


@dataclass
class NTKPrediction:
    """Infinite-width prediction of the supervised-learning loss curves.

    Bundles the decoupled analytic solution for both wavefunction components
    (identical architecture, hence identical rate kernel 2*Theta and
    initialization covariance) evaluated on the train and test sets.
    """

    times: np.ndarray
    train_L_mu: np.ndarray
    train_L_gamma: np.ndarray
    test_L_mu: np.ndarray
    test_L_gamma: np.ndarray
    limit_test_L_mu: float
    limit_test_L_gamma: float
    min_eigenvalue: float = 0.0
    n_dropped: int = 0

    @property
    def train_L_total(self) -> np.ndarray:
        return self.train_L_mu + self.train_L_gamma

    @property
    def test_L_total(self) -> np.ndarray:
        return self.test_L_mu + self.test_L_gamma

    @property
    def limit_test_L_total(self) -> float:
        return self.limit_test_L_mu + self.limit_test_L_gamma


def ntk_predict(task: SupervisedTask, times: np.ndarray,
                hyperparams=None) -> NTKPrediction:
    """Analytic mu/gamma loss curves for the reference ReLU architecture on a task.

    The rate kernel is 2x the closed-form NTK; gamma statistics use the
    closed-form initialization covariance (NNGP kernel), identical for the
    two components, so E|gamma_x|^2 = 2 Var_component.
    """
    from .kernel import KernelHyperparams, analytic_nngp, analytic_ntk

    h = hyperparams or KernelHyperparams(input_dim=task.train_x.shape[1])
    theta_bb = analytic_ntk(task.train_x, h=h).values
    theta_xb = analytic_ntk(task.test_x, task.train_x, h=h).values
    dyn = DecoupledDynamics(2.0 * theta_bb, task.eta, task.batch_size)

    k_bb = analytic_nngp(task.train_x, h=h).values
    k_xb = analytic_nngp(task.test_x, task.train_x, h=h).values
    k_xx = np.diag(analytic_nngp(task.test_x, h=h).values).copy()
    k_bb_diag = np.diag(k_bb).copy()

    times = np.asarray(times, dtype=float)

    mu_train = dyn.mu(2.0 * theta_bb, task.target_train, times)
    mu_test = dyn.mu(2.0 * theta_xb, task.target_train, times)
    train_l_mu = np.array([mse(m, task.target_train) for m in mu_train])
    test_l_mu = np.array([mse(m, task.target_test) for m in mu_test])

    var_train = dyn.gamma_variance(2.0 * theta_bb, k_bb, k_bb, k_bb_diag, times)
    var_test = dyn.gamma_variance(2.0 * theta_xb, k_bb, k_xb, k_xx, times)
    train_l_gamma = 2.0 * var_train.mean(axis=1)
    test_l_gamma = 2.0 * var_test.mean(axis=1)

    mu_test_inf = dyn.mu(2.0 * theta_xb, task.target_train, np.inf)
    lim_mu = mse(mu_test_inf, task.target_test)
    lim_gamma = float(2.0 * dyn.gamma_variance(2.0 * theta_xb, k_bb, k_xb, k_xx, np.inf).mean())

    return NTKPrediction(
        times=times,
        train_L_mu=train_l_mu,
        train_L_gamma=train_l_gamma,
        test_L_mu=test_l_mu,
        test_L_gamma=test_l_gamma,
        limit_test_L_mu=lim_mu,
        limit_test_L_gamma=lim_gamma,
        min_eigenvalue=dyn.min_eigenvalue,
        n_dropped=dyn.n_dropped,
    )
