"""Acceptance suite: one test per release criterion, one printed verdict each.

Criteria 1 (full scale) and 2 replicate the full experiment sizes and
take minutes to hours on one core; they run only with QSNTK_FULL_ACCEPTANCE=1
(pytest marker `full_scale`). Everything else runs at desk scale by default,
including the reduced criterion-1 smoke variant.
"""

import os
import sys
from dataclasses import replace

import numpy as np
import pytest

from qsntk import dynamics, entropy, hilbert, kernel, nnqs, spectra, trainer
from qsntk.experiments import (
    make_target,
    preset_config,
    run_ntk_predict,
    run_train,
)

FULL = os.environ.get("QSNTK_FULL_ACCEPTANCE") == "1"
full_scale = pytest.mark.skipif(
    not FULL, reason="full-scale run; set QSNTK_FULL_ACCEPTANCE=1")


VERDICTS = []  # one line per criterion, echoed in the terminal summary


def report(num, desc, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {num}: {desc}" + (f" ({detail})" if detail else "")
    VERDICTS.append(line)
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# Criterion 1: spin-chain quench ensemble vs the closed-form loss curves
# ---------------------------------------------------------------------------


def _curves_vs_prediction(cfg):
    """Run the ensemble and the analytic prediction on a shared schedule.

    Returns (max train relative error, max test relative error, final test
    relative error vs the converged value). The train comparison is windowed
    to steps >= 10 while the analytic train loss stays above 3% of its
    initial value: below that the ensemble sits on its finite-width loss
    floor and a relative comparison of two near-zero numbers is meaningless.
    """
    target = make_target(cfg)
    ens = run_train(cfg, target)
    steps = ens.steps.astype(float)
    pos = steps > 0
    pred = run_ntk_predict(cfg, target, times=steps[pos])
    s = steps[pos]
    ana_tr, ana_te = pred.train_L_total, pred.test_L_total
    ens_tr, ens_te = ens.mean_train_loss[pos], ens.mean_test_loss[pos]
    window = (s >= 10) & (ana_tr >= 3e-2 * ana_tr[0])
    rel_train = float((np.abs(ens_tr - ana_tr) / ana_tr)[window].max())
    rel_test = float((np.abs(ens_te - ana_te) / ana_te)[s >= 10].max())
    final_rel = abs(ens_te[-1] - pred.limit_test_L_total) / pred.limit_test_L_total
    return rel_train, rel_test, float(final_rel)


def test_criterion_1_smoke_ensemble_matches_prediction():
    cfg = preset_config("tfim-smoke", ensemble_size=10)
    rel_train, rel_test, final_rel = _curves_vs_prediction(cfg)
    report(1, "spin-chain smoke ensemble within 15%/20% of closed form",
           rel_train <= 0.15 and rel_test <= 0.15 and final_rel <= 0.20,
           f"train {rel_train:.3f}, test {rel_test:.3f}, final {final_rel:.3f}")


@full_scale
def test_criterion_1_full_ensemble_matches_prediction():
    cfg = preset_config("tfim")
    rel_train, rel_test, final_rel = _curves_vs_prediction(cfg)
    report(1, "spin-chain full-size ensemble within 15%/20% of closed form",
           rel_train <= 0.15 and rel_test <= 0.15 and final_rel <= 0.20,
           f"train {rel_train:.3f}, test {rel_test:.3f}, final {final_rel:.3f}")


# ---------------------------------------------------------------------------
# Criterion 2: final-loss trends in width and batch size
# ---------------------------------------------------------------------------


def _monotone_with_one_se_slack(vals, sems, toward=None):
    """Non-increasing sequence (or distance to `toward`), one inversion
    allowed if it stays within one combined standard error."""
    seq = np.abs(np.array(vals) - toward) if toward is not None else np.array(vals)
    inversions = 0
    for i in range(len(seq) - 1):
        if seq[i + 1] > seq[i]:
            if seq[i + 1] - seq[i] > sems[i] + sems[i + 1]:
                return False
            inversions += 1
    return inversions <= 1


def _final_loss_sweep(model):
    base = preset_config(model)
    target = make_target(base)
    width_stats, batch_stats = [], []
    for width, K in ((300, 100), (1000, 10), (5000, 10)):
        res = run_train(replace(base, width=width, ensemble_size=K), target)
        finals = [r.test_loss[-1] + r.train_loss[-1] for r in res.runs]
        width_stats.append((np.mean(finals), np.std(finals, ddof=1) / np.sqrt(len(finals))))
    pred = run_ntk_predict(base, target)
    batches = (2400, 3200, 4000)
    for batch in batches:
        res = run_train(replace(base, batch_size=batch), target)
        finals = [r.test_loss[-1] + r.train_loss[-1] for r in res.runs]
        batch_stats.append((np.mean(finals), np.std(finals, ddof=1) / np.sqrt(len(finals))))
    return width_stats, batch_stats, pred.limit_test_L_total


@full_scale
@pytest.mark.parametrize("model", ["hubbard", "tfim"])
def test_criterion_2_final_loss_trends(model):
    width_stats, batch_stats, ntk_limit = _final_loss_sweep(model)
    width_ok = _monotone_with_one_se_slack(
        [m for m, _ in width_stats], [s for _, s in width_stats], toward=ntk_limit)
    batch_ok = _monotone_with_one_se_slack(
        [m for m, _ in batch_stats], [s for _, s in batch_stats])
    report(2, f"{model} final loss monotone in width (toward limit) and batch",
           width_ok and batch_ok,
           f"width {[round(m, 5) for m, _ in width_stats]} -> {ntk_limit:.5f}, "
           f"batch {[round(m, 5) for m, _ in batch_stats]}")


# ---------------------------------------------------------------------------
# Criterion 3: training on the full basis recovers the target exactly
# ---------------------------------------------------------------------------


def test_criterion_3_exact_recovery_on_full_basis():
    cfg = preset_config("tfim-smoke")
    target = make_target(cfg)
    xs = hilbert.encode_basis(target.basis)
    h = kernel.KernelHyperparams(input_dim=xs.shape[1])
    theta = kernel.analytic_ntk(xs, h=h).values
    dyn = dynamics.DecoupledDynamics(2.0 * theta, eta=1.0, batch_size=64)
    mu_inf = dyn.mu(2.0 * theta, target.amplitudes, np.inf)
    sup = float(np.abs(mu_inf - target.amplitudes).max())
    report(3, "converged mean recovers the target on the full basis",
           sup <= 1e-6, f"sup-norm {sup:.2e}")


# ---------------------------------------------------------------------------
# Criterion 4: empirical tangent kernel converges to the closed form
# ---------------------------------------------------------------------------


def test_criterion_4_kernel_convergence_in_width():
    rng = np.random.default_rng(42)
    xs = np.where(rng.random((32, 12)) < 0.5, -1.0, 1.0)
    exact = kernel.analytic_ntk(xs).values
    scale = np.linalg.norm(exact)
    errs = []
    for width in (300, 1000, 5000):
        seeds = []
        for seed in range(10):
            emp = kernel.empirical_ntk(nnqs.init_params(width, 12, seed), xs).values
            seeds.append(np.linalg.norm(emp - exact) / scale)
        errs.append(float(np.mean(seeds)))
    ok = errs[0] > errs[1] > errs[2] and errs[2] <= 0.05
    report(4, "empirical kernel error shrinks with width, <= 5% at 5000",
           ok, "errors " + ", ".join(f"{e:.4f}" for e in errs))


# ---------------------------------------------------------------------------
# Criterion 5: the linearized model's kernel equals the initialization kernel
# ---------------------------------------------------------------------------


def test_criterion_5_linearized_model_kernel_identity():
    rng = np.random.default_rng(3)
    c0 = nnqs.init_complex(width=8, input_dim=12, seed=5)
    xs = np.where(rng.random((6, 12)) < 0.5, -1.0, 1.0)
    blocks0 = kernel.empirical_qsntk(c0, xs)

    j_re0, j_im0 = nnqs.jacobian(c0.re, xs), nnqs.jacobian(c0.im, xs)
    th0 = np.concatenate([c0.re.flatten(), c0.im.flatten()])
    n_re = c0.re.flatten().size

    def psi_lin(theta):
        # first-order expansion around the initialization
        d_re, d_im = theta[:n_re] - th0[:n_re], theta[n_re:] - th0[n_re:]
        return (nnqs.forward(c0.re, xs) + j_re0 @ d_re
                + 1j * (nnqs.forward(c0.im, xs) + j_im0 @ d_im))

    # move far from the initialization, then recompute the model's jacobian
    # there by central differences (exact for a linear map, any step size)
    th = th0 + rng.standard_normal(th0.size)
    h = 0.5
    jac = np.empty((xs.shape[0], th.size), dtype=complex)
    for i in range(th.size):
        e = np.zeros(th.size)
        e[i] = h
        jac[:, i] = (psi_lin(th + e) - psi_lin(th - e)) / (2 * h)
    j_re, j_im = jac[:, :n_re].real, jac[:, n_re:].imag
    blocks = kernel.assemble_qsntk(j_re @ j_re.T, j_im @ j_im.T,
                                   np.zeros((xs.shape[0], xs.shape[0])))
    err = max(float(np.abs(blocks[k].values - blocks0[k].values).max())
              for k in ("theta", "phi", "omega"))
    report(5, "linearized-model kernel equals initialization kernel",
           err <= 1e-10, f"max entry error {err:.2e}")


# ---------------------------------------------------------------------------
# Criterion 6: scalar complex net matches the quadrature limit kernels
# ---------------------------------------------------------------------------


def test_criterion_6_scalar_complex_net_limit():
    ok, details = True, []
    for (x, y), seed in zip([(0.7, 0.3), (1.2, 0.9), (0.5, 1.5)], (11, 12, 13)):
        _, phi_inf = kernel.complex_single_layer_limit_kernels(x, y)
        emp = kernel.complex_single_layer_empirical_kernels(x, y, width=10_000, seed=seed)
        th_ok = (abs(emp["theta"].real) <= 3 * emp["theta_stderr"][0]
                 and abs(emp["theta"].imag) <= 3 * emp["theta_stderr"][1])
        phi_dev = abs(emp["phi"] - phi_inf) / emp["phi_stderr"]
        ok = ok and th_ok and phi_dev <= 3
        details.append(f"({x},{y}): theta~0 {th_ok}, phi {phi_dev:.2f} se")
    report(6, "scalar complex net kernels match quadrature within 3 se",
           ok, "; ".join(details))


# ---------------------------------------------------------------------------
# Criterion 7: disjoint components decouple the block dynamics
# ---------------------------------------------------------------------------


def test_criterion_7_block_ode_decouples():
    rng = np.random.default_rng(21)
    c = nnqs.init_complex(width=16, input_dim=12, seed=2)
    xs = np.where(rng.random((8, 12)) < 0.5, -1.0, 1.0)
    mix = kernel.empirical_mixing_kernel(c, xs).values
    mixing_zero = float(np.abs(mix).max()) == 0.0

    n = 5
    train_x, test_x = xs[:n], xs[n:]
    t1 = kernel.analytic_ntk(train_x).values
    t1_cross = kernel.analytic_ntk(test_x, train_x).values
    blocks = kernel.assemble_qsntk(t1, t1, np.zeros_like(t1))
    # cross blocks for disjoint equal components: Theta = 0, Phi = 2 * NTK
    theta_xb = np.zeros_like(t1_cross)
    phi_xb = 2.0 * t1_cross
    omega_cross = np.block([[theta_xb, phi_xb], [phi_xb.conj(), theta_xb.conj()]])
    target = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    init_train = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    init_x = rng.standard_normal(3) + 1j * rng.standard_normal(3)

    eta, batch = 0.3, n
    dyn = dynamics.DecoupledDynamics(2.0 * t1, eta, batch)
    worst = 0.0
    for t in rng.uniform(0.0, 50.0, size=20):
        stacked = dynamics.solve_block_ode(
            blocks["omega"].values, omega_cross,
            np.concatenate([target, target.conj()]),
            np.concatenate([init_train, init_train.conj()]),
            np.concatenate([init_x, init_x.conj()]),
            eta, batch, t)
        mu = dyn.mu(2.0 * t1_cross, target, t)
        gam = dyn.gamma(2.0 * t1_cross, init_x, init_train, t)
        worst = max(worst, float(np.abs(stacked[:3] - (mu + gam)).max()))
    report(7, "mixing kernel is exactly zero and block dynamics decouple",
           mixing_zero and worst <= 1e-10, f"max deviation {worst:.2e}")


# ---------------------------------------------------------------------------
# Criterion 8: random-state entanglement entropies
# ---------------------------------------------------------------------------


def test_criterion_8_entropy_page_and_volume_law():
    # equal half-cuts with subregion size m; the m = 9, 10 points cost hours
    # of dense SVDs on one core, so the default run stops at m = 8
    ms = range(2, 11) if FULL else range(2, 9)
    page_ok, ests = True, []
    for m in ms:
        split = entropy.half_cut(2 * m)
        res = entropy.entanglement_entropy_mc(
            entropy.iid_complex_sampler(split.size), split, 10_000,
            seed=m, batch=min(4096, 2**25 // split.size))
        page = entropy.page_value(2**m, 2**m, exact=True)
        page_ok = page_ok and abs(res["estimate"] - page) <= 2 * res["stderr"]
        ests.append(res["estimate"])
    slope = float(np.polyfit(np.array(list(ms)), np.array(ests), 1)[0])
    slope_ok = abs(slope - np.log(2)) <= 0.05 * np.log(2)

    rng = np.random.default_rng(7)
    wick_ok = True
    split = entropy.half_cut(2)
    for k in range(10):
        spec = entropy.GaussianKernelSpec(
            alpha=float(rng.uniform(0.5, 2.0)), sigma=float(rng.uniform(0.3, 1.5)),
            embedding=np.sort(rng.uniform(0.0, 4.0, size=4)))
        exact = entropy.renyi_wick(spec, split, 2)
        mc = entropy.renyi_mc(entropy.gp_sampler(spec), split, 2, 20_000, seed=100 + k)
        wick_ok = wick_ok and abs(mc["estimate"] - exact) <= 3 * mc["stderr"]
    report(8, "entropies match Page values, volume-law slope, and Wick sums",
           page_ok and slope_ok and wick_ok,
           f"slope {slope:.4f} vs ln2 {np.log(2):.4f}")


# ---------------------------------------------------------------------------
# Criterion 9: positive-definiteness suite
# ---------------------------------------------------------------------------


def test_criterion_9_positive_definiteness_suite():
    rng = np.random.default_rng(17)
    pts = rng.standard_normal((100, 12))
    gauss = spectra.gram_pd_check(
        lambda a, b: spectra.gaussnet_kernel(a, b, sigma=1.0, d=12), pts)
    grid = np.linspace(-12.0, 12.0, 513)
    boch = spectra.bochner_check(lambda t: np.exp(-t**2 / 2), grid)

    rff = spectra.default_rff(4, seed=3)
    tik = spectra.rff_compose(rff, lambda g: np.exp(g))
    x, y = rng.standard_normal((50, 4)), rng.standard_normal((50, 4))
    shifts = rng.standard_normal((5, 4))
    shift_err = max(float(np.abs(tik(x + c, y + c) - tik(x, y)).max())
                    for c in shifts)
    report(9, "Gauss-net Gram PD, Gaussian spectrum positive, RFF shift-invariant",
           gauss["is_pd"] and boch["is_pd_consistent"] and shift_err <= 1e-12,
           f"min eig {gauss['min_eigenvalue']:.3e}, shift error {shift_err:.2e}")


# ---------------------------------------------------------------------------
# Criterion 10: gradients match finite differences
# ---------------------------------------------------------------------------


def test_criterion_10_gradients_match_finite_differences():
    rng = np.random.default_rng(33)
    worst = 0.0
    for probe in range(100):
        if probe % 2 == 0:  # network jacobian row at a random input
            p = nnqs.init_params(width=6, input_dim=12, seed=probe)
            x = np.where(rng.random((1, 12)) < 0.5, -1.0, 1.0)
            g = nnqs.jacobian(p, x)[0]
            th = p.flatten()
            fd = np.empty_like(th)
            h = 1e-6
            for i in range(th.size):
                e = np.zeros(th.size)
                e[i] = h
                fd[i] = (nnqs.forward(p.with_flat(th + e), x)[0]
                         - nnqs.forward(p.with_flat(th - e), x)[0]) / (2 * h)
        else:  # batch-loss gradient on a random task
            c = nnqs.init_complex(width=6, input_dim=12, seed=probe)
            xs = np.where(rng.random((5, 12)) < 0.5, -1.0, 1.0)
            task = dynamics.SupervisedTask(
                xs, xs, rng.standard_normal(5) + 1j * rng.standard_normal(5),
                rng.standard_normal(5) + 1j * rng.standard_normal(5), eta=0.1)
            g = trainer.batch_loss_gradient(c, task)
            th = np.concatenate([c.re.flatten(), c.im.flatten()])
            n_re = c.re.flatten().size

            def loss_at(theta):
                from qsntk.nnqs import ComplexNNQS
                m = ComplexNNQS(re=c.re.with_flat(theta[:n_re]),
                                im=c.im.with_flat(theta[n_re:]))
                vals = nnqs.nnqs_value(m, task.train_x)
                return dynamics.mse(vals, task.target_train)

            fd = np.empty_like(th)
            h = 1e-6
            for i in range(th.size):
                e = np.zeros(th.size)
                e[i] = h
                fd[i] = (loss_at(th + e) - loss_at(th - e)) / (2 * h)
        denom = max(float(np.linalg.norm(fd)), 1e-12)
        worst = max(worst, float(np.linalg.norm(g - fd)) / denom)
    report(10, "analytic gradients match central differences over 100 probes",
           worst <= 1e-5, f"worst relative error {worst:.2e}")
