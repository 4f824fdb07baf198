"""Plot-ready data behind the training-dynamics figures.

Figure 1: TFIM ensemble train/test loss curves vs the closed-form prediction.
Figure 2: Hubbard final losses swept over width and batch size.
Figure S1: Hubbard loss curves (same protocol as Figure 1).
Figure S2: TFIM width/batch sweep (same protocol as Figure 2), with larger
ensembles at small width.

Every figure also has a reduced "smoke" variant on a 2x3 lattice sized to run
in about a minute on one core; the full variants follow the full-scale run
sizes and take minutes to hours.
"""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .experiments import (
    FULL_SWEEP_BATCHES,
    FULL_SWEEP_WIDTHS,
    ExperimentConfig,
    make_target,
    preset_config,
    run_make_target,
    run_ntk_predict,
    run_train,
)

# ensemble sizes per width for the sweep figures (more runs at small width,
# where run-to-run scatter is largest)
SWEEP_ENSEMBLES = {300: 100, 1000: 10, 5000: 10}

SMOKE_WIDTHS = (50, 200, 1000)
SMOKE_BATCHES = {"tfim": (24, 32, 40), "hubbard": (100, 140, 180)}


def _smoke_base(model: str) -> ExperimentConfig:
    if model == "tfim":
        return preset_config("tfim-smoke")
    return preset_config("hubbard", rows=2, cols=3, width=1000, ensemble_size=4,
                         batch_size=140, n_steps=2000, train_dtype="float32")


def _curves_config(model: str, scale: str, seed: int) -> ExperimentConfig:
    if scale == "smoke":
        return replace(_smoke_base(model), seed=seed)
    return preset_config(model, seed=seed)


def _write_sweep_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _loss_curves_figure(model: str, out: Path, seed: int, scale: str) -> None:
    """Ensemble mean/std loss curves plus the analytic prediction and limits."""
    cfg = _curves_config(model, scale, seed)
    run_make_target(cfg, out)
    target = make_target(cfg)
    pred = run_ntk_predict(cfg, target, out)
    result = run_train(cfg, target, out)
    steps = result.steps
    rows = {
        "ens_train_mean": result.mean_train_loss, "ens_train_std": result.std_train_loss,
        "ens_test_mean": result.mean_test_loss, "ens_test_std": result.std_test_loss,
    }
    path = out / "ensemble_curves.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t"] + list(rows))
        for i, s in enumerate(steps):
            w.writerow([int(s), float(s)] + [f"{col[i]:.10e}" for col in rows.values()])
    with open(out / "figure_summary.json", "w") as fh:
        json.dump({
            "config": cfg.to_dict(),
            "limit_test_L_total": pred.limit_test_L_total,
            "final_ensemble_test_loss": result.final_test_loss,
        }, fh, indent=2)


def _sweep_figure(model: str, out: Path, seed: int, scale: str) -> None:
    """Final total MSE at the last step vs width and vs batch size."""
    base = preset_config(model, seed=seed) if scale == "full" else replace(
        _smoke_base(model), seed=seed)
    widths = FULL_SWEEP_WIDTHS if scale == "full" else SMOKE_WIDTHS
    batches = FULL_SWEEP_BATCHES if scale == "full" else SMOKE_BATCHES[model]
    target = make_target(base)

    width_rows = []
    for w in widths:
        k = SWEEP_ENSEMBLES.get(w, base.ensemble_size) if scale == "full" else base.ensemble_size
        cfg = replace(base, width=w, ensemble_size=k)
        pred = run_ntk_predict(cfg, target)
        res = run_train(cfg, target, out / f"width_{w}")
        finals = [float(r.test_loss[-1]) for r in res.runs]
        width_rows.append({
            "width": w, "K": res.n_runs, "batch": cfg.batch_size,
            "final_test_mean": float(np.mean(finals)),
            "final_test_std": float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0,
            "ntk_limit_test": pred.limit_test_L_total,
            "ntk_final_test": float(pred.test_L_total[-1]),
        })
    _write_sweep_csv(out / "final_loss_vs_width.csv", width_rows)

    batch_rows = []
    for b in batches:
        cfg = replace(base, batch_size=b)
        pred = run_ntk_predict(cfg, target)
        res = run_train(cfg, target, out / f"batch_{b}")
        finals = [float(r.test_loss[-1]) for r in res.runs]
        batch_rows.append({
            "batch": b, "K": res.n_runs, "width": cfg.width,
            "final_test_mean": float(np.mean(finals)),
            "final_test_std": float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0,
            "ntk_limit_test": pred.limit_test_L_total,
            "ntk_final_test": float(pred.test_L_total[-1]),
        })
    _write_sweep_csv(out / "final_loss_vs_batch.csv", batch_rows)

    with open(out / "figure_summary.json", "w") as fh:
        json.dump({"config": base.to_dict(), "widths": list(widths),
                   "batches": list(batches)}, fh, indent=2)


FIGURES = {
    "1": ("tfim", _loss_curves_figure),
    "2": ("hubbard", _sweep_figure),
    "s1": ("hubbard", _loss_curves_figure),
    "s2": ("tfim", _sweep_figure),
}


def reproduce_figure(figure: str, out: Path, seed: int = 0, scale: str = "full") -> None:
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}; available: {sorted(FIGURES)}")
    model, fn = FIGURES[figure]
    fn(model, Path(out), seed, scale)
