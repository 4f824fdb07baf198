"""Full-batch gradient-descent trainer tests."""

import numpy as np
import pytest
from dataclasses import replace

from qsntk.dynamics import SupervisedTask
from qsntk.hilbert import encode_basis, enumerate_spin_basis
from qsntk.kernel import analytic_ntk, KernelHyperparams, max_learning_rate
from qsntk.nnqs import ComplexNNQS, forward, init_complex, nnqs_value
from qsntk.trainer import (
    DivergenceError,
    batch_loss_gradient,
    gd_step,
    record_schedule,
    train,
    train_ensemble,
)


def make_task(n_sites=4, n_train=10, seed=0, eta=0.5):
    X = encode_basis(enumerate_spin_basis(n_sites))
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(X.shape[0]) + 1j * rng.standard_normal(X.shape[0])
    amps /= np.linalg.norm(amps)
    tr = np.arange(n_train)
    te = np.arange(n_train, X.shape[0])
    return SupervisedTask(train_x=X[tr], test_x=X[te], target_train=amps[tr],
                          target_test=amps[te], eta=eta)


def batch_loss(model, task):
    r = nnqs_value(model, task.train_x) - task.target_train
    return float(np.mean(np.abs(r) ** 2))


class TestRecordSchedule:
    def test_dense_prefix(self):
        s = record_schedule(50)
        np.testing.assert_array_equal(s, np.arange(51))

    def test_endpoints_and_monotonicity(self):
        s = record_schedule(10_000)
        assert s[0] == 0 and s[-1] == 10_000
        assert np.all(np.diff(s) > 0)
        assert s.size < 400  # log-spaced tail keeps recordings cheap


class TestGDStep:
    def test_zero_gradient_fixed_point(self):
        # make the target equal the current outputs: parameters unchanged
        task = make_task()
        model = init_complex(16, 4, seed=1)
        fitted = replace(task, target_train=np.asarray(nnqs_value(model, task.train_x)))
        out = gd_step(model, fitted)
        np.testing.assert_array_equal(out.re.W1, model.re.W1)
        np.testing.assert_array_equal(out.im.W2, model.im.W2)
        assert out.re.b2 == model.re.b2

    def test_matches_explicit_gradient_step(self):
        task = make_task()
        model = init_complex(16, 4, seed=2)
        g = batch_loss_gradient(model, task)
        out = gd_step(model, task)
        flat_before = np.concatenate([model.re.flatten(), model.im.flatten()])
        flat_after = np.concatenate([out.re.flatten(), out.im.flatten()])
        np.testing.assert_allclose(flat_after, flat_before - task.eta * g, atol=1e-12)

    def test_single_step_matches_finite_difference_oracle(self):
        task = make_task()
        model = init_complex(8, 4, seed=3)
        flat0 = np.concatenate([model.re.flatten(), model.im.flatten()])
        n = flat0.size // 2
        eps = 1e-6
        fd = np.empty_like(flat0)
        for i in range(flat0.size):
            up, dn = flat0.copy(), flat0.copy()
            up[i] += eps
            dn[i] -= eps
            m_up = ComplexNNQS(re=model.re.with_flat(up[:n]), im=model.im.with_flat(up[n:]))
            m_dn = ComplexNNQS(re=model.re.with_flat(dn[:n]), im=model.im.with_flat(dn[n:]))
            fd[i] = (batch_loss(m_up, task) - batch_loss(m_dn, task)) / (2 * eps)
        stepped = gd_step(model, task)
        flat1 = np.concatenate([stepped.re.flatten(), stepped.im.flatten()])
        np.testing.assert_allclose(flat1, flat0 - task.eta * fd, atol=1e-8)

    def test_one_dimensional_quadratic_rate(self):
        # only b2 effectively moves when everything else is zeroed: the
        # residual contracts geometrically at the known 1-d rate
        task = make_task(n_train=1, eta=0.3)
        base = init_complex(4, 4, seed=0)
        zeroed = ComplexNNQS(
            re=replace(base.re, W1=np.zeros_like(base.re.W1), b1=np.zeros_like(base.re.b1),
                       W2=np.zeros_like(base.re.W2), b2=0.5),
            im=replace(base.im, W1=np.zeros_like(base.im.W1), b1=np.zeros_like(base.im.b1),
                       W2=np.zeros_like(base.im.W2), b2=0.0),
        )
        # d^2L/db2^2 = 2 for the single-point batch-mean MSE; contraction 1 - 2 eta
        r0 = 0.5 - task.target_train[0].real
        out = gd_step(zeroed, task)
        r1 = out.re.b2 - task.target_train[0].real
        assert r1 == pytest.approx((1 - 2 * task.eta) * r0, abs=1e-12)


class TestTrain:
    def test_zero_learning_rate_constant(self):
        task = make_task(eta=0.0)
        run = train(init_complex(16, 4, seed=0), task, 20)
        assert np.all(run.train_loss == run.train_loss[0])
        assert np.all(run.test_loss == run.test_loss[0])

    def test_deterministic_and_prefix_consistent(self):
        task = make_task()
        a = train(init_complex(16, 4, seed=5), task, 200)
        b = train(init_complex(16, 4, seed=5), task, 400)
        common = np.intersect1d(a.steps, b.steps)
        ia = np.searchsorted(a.steps, common)
        ib = np.searchsorted(b.steps, common)
        np.testing.assert_array_equal(b.train_loss[ib], a.train_loss[ia])
        # monotone regime at a stable learning rate: more steps never hurt
        assert b.train_loss[-1] <= a.train_loss[-1] + 1e-15

    def test_train_loss_decreases(self):
        task = make_task()
        run = train(init_complex(64, 4, seed=1), task, 500)
        assert run.train_loss[-1] < 0.05 * run.train_loss[0]

    def test_divergence_guard(self):
        X = encode_basis(enumerate_spin_basis(4))
        tr = np.arange(10)
        h = KernelHyperparams(input_dim=4)
        eta_max = max_learning_rate(2.0 * analytic_ntk(X[tr], h=h).values, 10)
        task = make_task(eta=2.2 * eta_max)
        with pytest.raises(DivergenceError):
            train(init_complex(2000, 4, seed=0), task, 3000)

    def test_stable_at_point_nine_eta_max(self):
        X = encode_basis(enumerate_spin_basis(4))
        tr = np.arange(10)
        h = KernelHyperparams(input_dim=4)
        eta_max = max_learning_rate(2.0 * analytic_ntk(X[tr], h=h).values, 10)
        task = make_task(eta=0.9 * eta_max)
        run = train(init_complex(2000, 4, seed=0), task, 1000)
        assert run.train_loss[-1] < run.train_loss[0]

    def test_float32_close_to_float64(self):
        task = make_task()
        a = train(init_complex(64, 4, seed=2), task, 100, dtype=np.float64)
        b = train(init_complex(64, 4, seed=2), task, 100, dtype=np.float32)
        np.testing.assert_allclose(b.train_loss, a.train_loss, rtol=1e-3, atol=1e-6)


class TestEnsemble:
    def test_single_member_reduces_to_train(self):
        task = make_task()
        res = train_ensemble(1, 32, task, 50, seed=9)
        member_seed = int(np.random.SeedSequence(9).spawn(1)[0].generate_state(1)[0])
        solo = train(init_complex(32, 4, seed=member_seed), task, 50)
        np.testing.assert_array_equal(res.mean_train_loss, solo.train_loss)

    def test_statistics_shapes(self):
        task = make_task()
        res = train_ensemble(4, 32, task, 50, seed=0)
        assert res.n_runs == 4
        assert res.mean_test_loss.shape == res.steps.shape
        assert np.all(res.std_train_loss >= 0)
        assert res.failures == []

    def test_members_differ(self):
        task = make_task()
        res = train_ensemble(3, 32, task, 10, seed=0)
        finals = [r.train_loss[-1] for r in res.runs]
        assert len(set(finals)) == 3
