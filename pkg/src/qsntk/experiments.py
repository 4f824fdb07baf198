"""Experiment configuration and end-to-end pipelines behind the CLI.

An experiment prepares a quench target state, splits the basis into train and
test sets, and either trains a finite-width ensemble or evaluates the
closed-form infinite-width prediction on the same split. All artifacts embed
the resolved configuration and its content hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import dynamics, hamiltonian, hilbert, kernel, trainer
from .dynamics import SupervisedTask


class ConfigError(Exception):
    """Invalid or unknown experiment configuration."""


@dataclass
class ExperimentConfig:
    model: str = "tfim"  # "tfim" | "hubbard"
    rows: int = 3
    cols: int = 4
    J: float = 0.1
    n_up: int = 2
    n_down: int = 2
    U_init: float = 4.0
    U_quench: float = 8.0
    evolution_time: float = 2.1
    width: int = 5000
    ensemble_size: int = 10
    batch_size: int = 2400
    lr_factor: float = 0.9
    n_steps: int = 10_000
    seed: int = 0
    split_seed: int = 0
    boundary: str = "open"
    train_dtype: str = "float64"
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        if self.model not in ("tfim", "hubbard"):
            raise ConfigError(f"model must be 'tfim' or 'hubbard', got {self.model!r}")
        if self.boundary != "open":
            raise ConfigError("only open boundary conditions are implemented")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("lattice shape must be positive")
        if self.width < 1 or self.ensemble_size < 1 or self.n_steps < 0:
            raise ConfigError("width, ensemble_size must be >= 1, n_steps >= 0")
        if not 0 < self.lr_factor:
            raise ConfigError("lr_factor must be positive")
        if self.train_dtype not in ("float32", "float64"):
            raise ConfigError("train_dtype must be float32 or float64")
        dim = self.basis_size()
        if not 1 <= self.batch_size < dim:
            raise ConfigError(f"batch_size must be in [1, {dim - 1}] for basis size {dim}")
        return self

    def basis_size(self) -> int:
        n = self.rows * self.cols
        if self.model == "tfim":
            return 2**n
        from math import comb

        return comb(n, self.n_up) * comb(n, self.n_down)

    def content_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config_hash"] = self.content_hash()
        return d


PRESETS = {
    "tfim": ExperimentConfig(model="tfim", rows=3, cols=4, J=0.1, evolution_time=2.1,
                             width=5000, ensemble_size=10, batch_size=2400, n_steps=10_000),
    "hubbard": ExperimentConfig(model="hubbard", rows=3, cols=4, n_up=2, n_down=2,
                                U_init=4.0, U_quench=8.0, evolution_time=2.1,
                                width=5000, ensemble_size=10, batch_size=2400, n_steps=10_000),
    # reduced variant sized to run in seconds-to-a-minute
    "tfim-smoke": ExperimentConfig(model="tfim", rows=2, cols=3, J=0.1, evolution_time=2.1,
                                   width=2000, ensemble_size=6, batch_size=40, n_steps=3000,
                                   train_dtype="float32"),
}

FULL_SWEEP_WIDTHS = (300, 1000, 5000)
FULL_SWEEP_BATCHES = (2400, 3200, 4000)

_KNOWN_KEYS = {f.name for f in fields(ExperimentConfig)}


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Load a TOML config, rejecting unknown keys."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw.update(overrides or {})
    try:
        return ExperimentConfig(**raw).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    base = asdict(PRESETS[name])
    unknown = set(overrides) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base.update(overrides)
    return ExperimentConfig(**base).validate()


# ---------------------------------------------------------------------------
# Target preparation and task building
# ---------------------------------------------------------------------------


def make_basis(cfg: ExperimentConfig):
    n = cfg.rows * cfg.cols
    if cfg.model == "tfim":
        return hilbert.enumerate_spin_basis(n)
    return hilbert.enumerate_hubbard_basis(n, cfg.n_up, cfg.n_down)


def make_target(cfg: ExperimentConfig) -> hamiltonian.Wavefunction:
    """Quench target: evolve an initial state under the post-quench Hamiltonian.

    TFIM: |+>^n evolved under H(J). Hubbard: ground state at U_init evolved
    under the Hamiltonian at U_quench.
    """
    lat = hilbert.Lattice(cfg.rows, cfg.cols)
    if cfg.model == "tfim":
        H = hamiltonian.build_tfim(lat, cfg.J)
        psi0 = hamiltonian.polarized_state(lat.sites)
    else:
        basis = make_basis(cfg)
        H_init = hamiltonian.build_hubbard(lat, cfg.U_init, basis)
        _, psi0 = hamiltonian.ground_state(H_init)
        H = hamiltonian.build_hubbard(lat, cfg.U_quench, basis)
    return hamiltonian.evolve(H, psi0, cfg.evolution_time)


def split_indices(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Uniform draw of train basis elements without replacement; the rest is test."""
    dim = cfg.basis_size()
    perm = np.random.default_rng(cfg.split_seed).permutation(dim)
    return np.sort(perm[: cfg.batch_size]), np.sort(perm[cfg.batch_size:])


def build_task(cfg: ExperimentConfig, target: hamiltonian.Wavefunction,
               eta: float | None = None) -> SupervisedTask:
    """Train/test split plus the stability-bounded learning rate.

    eta defaults to lr_factor times the maximum stable learning rate of the
    linearized dynamics, computed from the closed-form train Gram (rate
    kernel = 2x the NTK for the batch-mean MSE loss).
    """
    X = hilbert.encode_basis(target.basis)
    tr, te = split_indices(cfg)
    if eta is None:
        h = kernel.KernelHyperparams(input_dim=X.shape[1])
        theta_bb = kernel.analytic_ntk(X[tr], h=h).values
        eta = cfg.lr_factor * kernel.max_learning_rate(2.0 * theta_bb, cfg.batch_size)
    return SupervisedTask(
        train_x=X[tr], test_x=X[te],
        target_train=target.amplitudes[tr], target_test=target.amplitudes[te],
        eta=eta, train_indices=tr, test_indices=te,
    )


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def _loss_csv(path: Path, steps, rows: dict[str, np.ndarray]) -> None:
    """Loss-curve CSV: step, t, then the given named columns."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t"] + list(rows))
        for i, s in enumerate(steps):
            w.writerow([int(s), float(s)] + [f"{col[i]:.10e}" for col in rows.values()])


def run_make_target(cfg: ExperimentConfig, out: Path) -> dict:
    target = make_target(cfg)
    out.mkdir(parents=True, exist_ok=True)
    hamiltonian.save_wavefunction(target, out / "target.json")
    info = {
        "config": cfg.to_dict(),
        "basis_size": target.basis.size,
        "norm": target.norm,
    }
    _write_json(out / "target_info.json", info)
    return info


def run_ntk_predict(cfg: ExperimentConfig, target: hamiltonian.Wavefunction,
                    out: Path | None = None, times: np.ndarray | None = None) -> dynamics.NTKPrediction:
    task = build_task(cfg, target)
    if times is None:
        times = trainer.record_schedule(cfg.n_steps).astype(float)
        times = times[times > 0]
    pred = dynamics.ntk_predict(task, times)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _loss_csv(out / "ntk_losses.csv", pred.times, {
            "train_L_mu": pred.train_L_mu,
            "train_L_gamma": pred.train_L_gamma,
            "test_L_mu": pred.test_L_mu,
            "test_L_gamma": pred.test_L_gamma,
            "test_L_total": pred.test_L_total,
        })
        _write_json(out / "ntk_summary.json", {
            "config": cfg.to_dict(),
            "eta": task.eta,
            "limit_test_L_mu": pred.limit_test_L_mu,
            "limit_test_L_gamma": pred.limit_test_L_gamma,
            "limit_test_L_total": pred.limit_test_L_total,
            "gram_min_eigenvalue": pred.min_eigenvalue,
            "modes_dropped": pred.n_dropped,
        })
    return pred


def run_train(cfg: ExperimentConfig, target: hamiltonian.Wavefunction,
              out: Path | None = None, schedule: np.ndarray | None = None) -> trainer.EnsembleResult:
    task = build_task(cfg, target)
    dtype = np.float32 if cfg.train_dtype == "float32" else np.float64
    result = trainer.train_ensemble(cfg.ensemble_size, cfg.width, task, cfg.n_steps,
                                    seed=cfg.seed, schedule=schedule, dtype=dtype)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for k, run in enumerate(result.runs):
            _loss_csv(out / "losses" / f"run_{k:03d}.csv", run.steps, {
                "train_loss": run.train_loss,
                "test_loss": run.test_loss,
            })
        from .nnqs import save_checkpoint

        for k, run in enumerate(result.runs):
            save_checkpoint(run.model, out / "checkpoints" / f"run_{k:03d}.npz")
        _write_json(out / "summary.json", {
            "config": cfg.to_dict(),
            "eta": task.eta,
            "width": cfg.width,
            "K": result.n_runs,
            "batch": cfg.batch_size,
            "final_losses": [float(r.test_loss[-1]) for r in result.runs],
            "mean": result.final_test_loss,
            "std": float(np.std([r.test_loss[-1] for r in result.runs], ddof=1))
            if result.n_runs > 1 else 0.0,
            "failures": result.failures,
        })
    return result


def run_entropy_scan(m_range=range(2, 11), n_samples: int = 10_000, seed: int = 0,
                     out: Path | None = None) -> list[dict]:
    """Half-cut entropies of i.i.d. complex Gaussian ensembles vs the Page value."""
    from . import entropy as ent

    reports = []
    for m in m_range:
        split = ent.half_cut(m)
        sampler = ent.iid_complex_sampler(split.size)
        res = ent.entanglement_entropy_mc(sampler, split, n_samples, seed=seed + m)
        reports.append({
            "n_qubits": m,
            "split": [split.d_A, split.d_B],
            "method": "mc_iid",
            "estimate": res["estimate"],
            "stderr": res["stderr"],
            "n_samples": n_samples,
            "page_value": ent.page_value(split.d_A, split.d_B),
            "page_value_exact": ent.page_value(split.d_A, split.d_B, exact=True),
        })
    if out is not None:
        _write_json(out / "entropy_scan.json", {"reports": reports})
    return reports


def volume_law_fit(reports: list[dict]) -> dict:
    """Linear fit of mean half-cut entropy vs subregion qubit count.

    Volume law: entropy grows linearly in the subregion size with slope ln 2
    per site (the total-system slope would be ln 2 / 2 for half cuts).
    """
    m = np.array([np.log2(r["split"][0]) for r in reports])
    s = np.array([r["estimate"] for r in reports])
    slope, intercept = np.polyfit(m, s, 1)
    return {"slope": float(slope), "intercept": float(intercept),
            "slope_over_ln2": float(slope / np.log(2))}
