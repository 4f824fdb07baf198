"""Full-batch gradient descent for finite-width network quantum states.

Trains the two real component networks on the decoupled batch-mean MSE loss

    L = (1/|B|) sum_{x in B} [ (psi_1(x) - Re psi_T(x))^2
                             + (psi_2(x) - Im psi_T(x))^2 ]

with vanilla gradient descent (no momentum, no schedules). The large-width
runs are memory-bandwidth bound, so the inner loop works on preallocated
buffers; float32 is available for the big ensemble sweeps where per-step
relative tolerances are in the percent range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import SupervisedTask
from .nnqs import ComplexNNQS, NetworkParams, init_complex


class DivergenceError(Exception):
    """Training loss became non-finite or blew past the divergence guard."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"training diverged at step {step} (loss {loss:.3e})")


# Loss above DIVERGENCE_FACTOR x initial aborts a run.
DIVERGENCE_FACTOR = 1e6


def record_schedule(n_steps: int, dense_until: int = 100, per_decade: int = 30) -> np.ndarray:
    """Recording steps: every step up to `dense_until`, then log-spaced."""
    dense = np.arange(0, min(dense_until, n_steps) + 1)
    if n_steps <= dense_until:
        return dense
    sparse = np.unique(np.geomspace(dense_until, n_steps,
                                    int(np.log10(n_steps / dense_until) * per_decade) + 2).astype(int))
    return np.unique(np.concatenate([dense, sparse, [n_steps]]))


@dataclass
class TrainRun:
    """One training trajectory: recorded losses and the final network."""

    model: ComplexNNQS
    eta: float
    seed: int | None
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    train_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    test_loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_steps: int = 0


class _ComponentState:
    """Mutable training state of one real network on a fixed batch."""

    def __init__(self, p: NetworkParams, X: np.ndarray, y: np.ndarray, dtype):
        self.dtype = dtype
        n, d = p.W1.shape
        self.W1 = p.W1.astype(dtype).copy()
        self.b1 = p.b1.astype(dtype).copy()
        self.W2 = p.W2.astype(dtype).copy()
        self.b2 = dtype(p.b2)
        self.Xs = np.ascontiguousarray(X.astype(dtype) / np.sqrt(d))  # pre-scaled inputs
        self.y = y.astype(dtype)
        self.inv_sqrt_n = dtype(1.0 / np.sqrt(n))

    def forward_batch(self, Xs: np.ndarray) -> np.ndarray:
        z = Xs @ self.W1.T
        z += self.b1
        np.maximum(z, 0, out=z)
        return z @ self.W2 * self.inv_sqrt_n + self.b2

    def loss(self, Xs: np.ndarray, y: np.ndarray) -> float:
        r = self.forward_batch(Xs) - y
        return float(np.mean(r * r))

    def step(self, eta: float) -> float:
        """One GD update on the batch-mean squared loss; returns the pre-step loss."""
        z = self.Xs @ self.W1.T
        z += self.b1
        a = np.maximum(z, 0)
        out = a @ self.W2 * self.inv_sqrt_n + self.b2
        r = out - self.y
        loss = float(np.mean(r * r))
        B = r.shape[0]
        scale = self.dtype(2.0 / B)
        r *= scale
        g_b2 = r.sum()
        g_W2 = (r @ a) * self.inv_sqrt_n
        h = r[:, None] * (self.W2 * self.inv_sqrt_n)[None, :]
        h *= z > 0
        g_b1 = h.sum(axis=0)
        g_W1 = h.T @ self.Xs
        e = self.dtype(eta)
        self.W1 -= e * g_W1
        self.b1 -= e * g_b1
        self.W2 -= e * g_W2
        self.b2 -= e * g_b2
        return loss

    def params(self) -> NetworkParams:
        return NetworkParams(
            W1=self.W1.astype(np.float64),
            b1=self.b1.astype(np.float64),
            W2=self.W2.astype(np.float64),
            b2=float(self.b2),
        )


def gd_step(model: ComplexNNQS, task: SupervisedTask, eta: float | None = None) -> ComplexNNQS:
    """One full-batch gradient-descent update; returns the updated model."""
    eta = task.eta if eta is None else eta
    states = _make_states(model, task, np.float64)
    for st in states:
        st.step(eta)
    return ComplexNNQS(re=states[0].params(), im=states[1].params(),
                       shared_hidden=model.shared_hidden)


def _make_states(model: ComplexNNQS, task: SupervisedTask, dtype):
    if model.shared_hidden:
        raise ValueError("GD training supports disjoint-parameter networks only")
    return (
        _ComponentState(model.re, task.train_x, task.target_train.real, dtype),
        _ComponentState(model.im, task.train_x, task.target_train.imag, dtype),
    )


def train(model: ComplexNNQS, task: SupervisedTask, n_steps: int,
          schedule: np.ndarray | None = None, eta: float | None = None,
          dtype=np.float64, seed: int | None = None) -> TrainRun:
    """Train with full-batch GD, recording train/test MSE on the schedule."""
    eta = task.eta if eta is None else eta
    if eta < 0:
        raise ValueError("learning rate must be non-negative")
    schedule = record_schedule(n_steps) if schedule is None else np.asarray(schedule)
    schedule = schedule[schedule <= n_steps]
    record = set(int(s) for s in schedule)

    re_st, im_st = _make_states(model, task, np.dtype(dtype).type)
    d = task.train_x.shape[1]
    test_Xs = np.ascontiguousarray(task.test_x.astype(dtype) / np.sqrt(d))
    test_re = task.target_test.real.astype(dtype)
    test_im = task.target_test.imag.astype(dtype)
    train_Xs, y_re, y_im = re_st.Xs, re_st.y, im_st.y

    steps_rec, train_rec, test_rec = [], [], []

    def snapshot(step):
        tr = re_st.loss(train_Xs, y_re) + im_st.loss(train_Xs, y_im)
        te = re_st.loss(test_Xs, test_re) + im_st.loss(test_Xs, test_im)
        steps_rec.append(step)
        train_rec.append(tr)
        test_rec.append(te)
        return tr

    loss0 = snapshot(0) if 0 in record else re_st.loss(train_Xs, y_re) + im_st.loss(train_Xs, y_im)
    guard = DIVERGENCE_FACTOR * max(loss0, 1e-30)
    for step in range(1, n_steps + 1):
        l_re = re_st.step(eta)
        l_im = im_st.step(eta)
        cur = l_re + l_im
        if not np.isfinite(cur) or cur > guard:
            raise DivergenceError(step, cur)
        if step in record:
            snapshot(step)

    return TrainRun(
        model=ComplexNNQS(re=re_st.params(), im=im_st.params()),
        eta=eta,
        seed=seed,
        steps=np.array(steps_rec, dtype=int),
        train_loss=np.array(train_rec),
        test_loss=np.array(test_rec),
        n_steps=n_steps,
    )


@dataclass
class EnsembleResult:
    """Aggregated curves over K independently initialized runs."""

    runs: list[TrainRun]
    steps: np.ndarray
    mean_train_loss: np.ndarray
    std_train_loss: np.ndarray
    mean_test_loss: np.ndarray
    std_test_loss: np.ndarray
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def final_train_loss(self) -> float:
        return float(self.mean_train_loss[-1])

    @property
    def final_test_loss(self) -> float:
        return float(self.mean_test_loss[-1])


def train_ensemble(K: int, width: int, task: SupervisedTask, n_steps: int,
                   seed: int = 0, schedule: np.ndarray | None = None,
                   dtype=np.float64, eta: float | None = None) -> EnsembleResult:
    """K independent runs with per-run RNG streams; statistics over completed runs."""
    if K < 1:
        raise ValueError("ensemble size must be >= 1")
    member_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(K)]
    runs, failures = [], []
    for k, s in enumerate(member_seeds):
        model = init_complex(width, task.train_x.shape[1], seed=s)
        try:
            runs.append(train(model, task, n_steps, schedule=schedule, eta=eta,
                              dtype=dtype, seed=s))
        except DivergenceError as exc:
            failures.append((k, str(exc)))
    if not runs:
        raise DivergenceError(0, float("nan"))
    steps = runs[0].steps
    tr = np.stack([r.train_loss for r in runs])
    te = np.stack([r.test_loss for r in runs])
    return EnsembleResult(
        runs=runs,
        steps=steps,
        mean_train_loss=tr.mean(axis=0),
        std_train_loss=tr.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros_like(steps, dtype=float),
        mean_test_loss=te.mean(axis=0),
        std_test_loss=te.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros_like(steps, dtype=float),
        failures=failures,
    )


def batch_loss_gradient(model: ComplexNNQS, task: SupervisedTask) -> np.ndarray:
    """Gradient of the batch-mean MSE w.r.t. all parameters (re then im, flat order)."""
    from .nnqs import forward, jacobian

    g = []
    for p, y in ((model.re, task.target_train.real), (model.im, task.target_train.imag)):
        r = 2.0 * (forward(p, task.train_x) - y) / task.batch_size
        g.append(jacobian(p, task.train_x).T @ r)
    return np.concatenate(g)
