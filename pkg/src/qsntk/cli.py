"""Command-line experiment runner.

Subcommands: make-target, train, ntk-predict, entropy, pd-check,
reproduce-figure. Exit codes: 0 success, 2 configuration error, 3 numerical
divergence, 4 capacity guard. QSNTK_THREADS caps BLAS/worker parallelism.
"""

import os
import sys

if "QSNTK_THREADS" in os.environ:  # must precede the first numpy import
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, os.environ["QSNTK_THREADS"])

from pathlib import Path

import click
import numpy as np

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_CAPACITY = 4


def _load_cfg(preset, config, overrides):
    from .experiments import ConfigError, load_config, preset_config

    try:
        if config is not None:
            return load_config(config, overrides)
        if preset is not None:
            return preset_config(preset, **overrides)
        raise ConfigError("provide --preset or --config")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _guarded(fn, *args, **kwargs):
    from .hilbert import CapacityError
    from .trainer import DivergenceError

    try:
        return fn(*args, **kwargs)
    except DivergenceError as exc:
        click.echo(f"divergence: {exc}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    except CapacityError as exc:
        click.echo(f"capacity guard: {exc}", err=True)
        sys.exit(EXIT_CAPACITY)


@click.group()
def main():
    """Quench-target supervised learning with tangent-kernel predictions."""


_shared = [
    click.option("--preset", type=str, default=None, help="named preset configuration"),
    click.option("--config", type=click.Path(exists=True), default=None, help="TOML config file"),
    click.option("--seed", type=int, default=None, help="override the ensemble seed"),
    click.option("--out", type=click.Path(), default=None, help="output directory"),
]


def shared_options(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


def _resolve(preset, config, seed, out):
    overrides = {} if seed is None else {"seed": seed}
    cfg = _load_cfg(preset, config, overrides)
    out_dir = Path(out) if out is not None else Path(cfg.out_dir) / f"{cfg.model}-{cfg.content_hash()}"
    return cfg, out_dir


@main.command("make-target")
@shared_options
def cmd_make_target(preset, config, seed, out):
    """Prepare the quench target wavefunction and write it to target.json."""
    cfg, out_dir = _resolve(preset, config, seed, out)
    info = _guarded(_make_target_impl, cfg, out_dir)
    click.echo(f"basis size: {info['basis_size']}")
    click.echo(f"norm: {info['norm']:.12f}")
    click.echo(f"wrote {out_dir / 'target.json'}")


def _make_target_impl(cfg, out_dir):
    from .experiments import run_make_target

    info = run_make_target(cfg, out_dir)
    if abs(info["norm"] - 1.0) > 1e-10:
        raise RuntimeError(f"target norm {info['norm']} deviates from 1")
    return info


def _load_target(cfg, out_dir, target_path):
    from .experiments import make_target
    from .hamiltonian import load_wavefunction

    if target_path is not None:
        return load_wavefunction(target_path)
    path = out_dir / "target.json"
    if path.exists():
        return load_wavefunction(path)
    return make_target(cfg)


@main.command("train")
@shared_options
@click.option("--target", "target_path", type=click.Path(exists=True), default=None,
              help="target wavefunction JSON (defaults to <out>/target.json or fresh prep)")
def cmd_train(preset, config, seed, out, target_path):
    """Train a finite-width ensemble with full-batch gradient descent."""
    from .experiments import run_train

    cfg, out_dir = _resolve(preset, config, seed, out)
    target = _guarded(_load_target, cfg, out_dir, target_path)
    result = _guarded(run_train, cfg, target, out_dir)
    click.echo(f"runs completed: {result.n_runs} (failures: {len(result.failures)})")
    click.echo(f"final mean train loss: {result.final_train_loss:.6e}")
    click.echo(f"final mean test loss:  {result.final_test_loss:.6e}")
    click.echo(f"artifacts in {out_dir}")


@main.command("ntk-predict")
@shared_options
@click.option("--target", "target_path", type=click.Path(exists=True), default=None)
def cmd_ntk_predict(preset, config, seed, out, target_path):
    """Closed-form infinite-width loss curves and their infinite-time limits."""
    from .experiments import run_ntk_predict

    cfg, out_dir = _resolve(preset, config, seed, out)
    target = _guarded(_load_target, cfg, out_dir, target_path)
    pred = _guarded(run_ntk_predict, cfg, target, out_dir)
    click.echo(f"final train L_mu: {pred.train_L_mu[-1]:.6e}")
    click.echo(f"limit test L_mu:    {pred.limit_test_L_mu:.6e}")
    click.echo(f"limit test L_gamma: {pred.limit_test_L_gamma:.6e}")
    click.echo(f"limit test total:   {pred.limit_test_L_total:.6e}")
    click.echo(f"artifacts in {out_dir}")


@main.command("entropy")
@click.option("--m-min", type=int, default=2)
@click.option("--m-max", type=int, default=10)
@click.option("--samples", type=int, default=10_000)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default="runs/entropy")
def cmd_entropy(m_min, m_max, samples, seed, out):
    """Half-cut entanglement scan of i.i.d. Gaussian ensembles vs the Page value."""
    from .experiments import run_entropy_scan, volume_law_fit

    if 2**m_max > 4096:
        click.echo(f"capacity guard: domain 2^{m_max} exceeds 4096", err=True)
        sys.exit(EXIT_CAPACITY)
    reports = run_entropy_scan(range(m_min, m_max + 1), samples, seed, Path(out))
    for r in reports:
        click.echo(f"m={r['n_qubits']:2d} S={r['estimate']:.4f}±{r['stderr']:.4f} "
                   f"page={r['page_value_exact']:.4f}")
    fit = volume_law_fit(reports)
    click.echo(f"volume-law slope per subregion site: {fit['slope']:.4f} "
               f"(/ln2 = {fit['slope_over_ln2']:.3f})")


@main.command("pd-check")
@click.argument("kernel_name", type=click.Choice(["gaussnet", "relu-ntk", "rff-gaussian"]))
@click.option("--n-points", type=int, default=100)
@click.option("--dim", type=int, default=12)
@click.option("--sigma", type=float, default=1.0)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
def cmd_pd_check(kernel_name, n_points, dim, sigma, seed, out):
    """Positive-definiteness certification of a kernel Gram on random points."""
    import json

    from . import spectra
    from .kernel import KernelHyperparams, analytic_ntk

    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_points, dim))
    if kernel_name == "gaussnet":
        report = spectra.gram_pd_check(lambda x, y: spectra.gaussnet_kernel(x, y, sigma, dim), pts)
    elif kernel_name == "relu-ntk":
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)  # unit-sphere restriction
        gram = analytic_ntk(pts, h=KernelHyperparams(input_dim=dim)).values
        report = spectra.gram_pd_check(gram, pts)
    else:
        rff = spectra.default_rff(dim, seed=seed)
        kern = spectra.rff_compose(rff, lambda s: np.exp(s))
        report = spectra.gram_pd_check(lambda x, y: kern(x, y), pts)
    payload = {"kernel": kernel_name, "n_points": n_points,
               "min_eig": report["min_eigenvalue"], "verdict": report["is_pd"]}
    click.echo(json.dumps(payload, indent=2))
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            json.dump(payload, fh, indent=2)
    if not report["is_pd"]:
        sys.exit(1)


@main.command("reproduce-figure")
@click.argument("figure", type=click.Choice(["1", "2", "s1", "s2"]))
@click.option("--out", type=click.Path(), default="runs/figures")
@click.option("--seed", type=int, default=0)
@click.option("--scale", type=click.Choice(["full", "smoke"]), default="full",
              help="smoke runs the reduced-size variant of the protocol")
def cmd_reproduce_figure(figure, out, seed, scale):
    """Regenerate the data behind a training-dynamics figure (CSV outputs)."""
    from .figures import reproduce_figure

    out_dir = Path(out) / f"fig{figure}-{scale}"
    _guarded(reproduce_figure, figure, out_dir, seed=seed, scale=scale)
    click.echo(f"artifacts in {out_dir}")


if __name__ == "__main__":
    main()
