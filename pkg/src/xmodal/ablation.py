"""Ablation runner: the scenario-by-DiL matrix with shared seed and budget.

Every cell trains from scratch on the same dataset with an identical step
budget, differing from the base configuration only in the conditioning
scenario and the DiL flag, then scores forward translation and cycle
reconstruction on the held-out test set. Failed cells record the reason
instead of aborting the sweep.
"""

from __future__ import annotations

import os
import traceback
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .config import RunConfig, changed_keys, run_config_hash, to_train_config
from .evaluate import evaluate_checkpoint
from .imaging import UnpairedDataset
from .training import init_train_state, train

SCENARIOS = (
    ("unconditional", {"cond_kind": "unconditional"}),
    ("random_target", {"cond_kind": "random_target"}),
    ("average_target_100", {"cond_kind": "average_target"}),
    ("sample_pdf_100", {"cond_kind": "sample_pdf"}),
    ("patch_mosaic_8", {"cond_kind": "patch_mosaic", "cond_patch_size": 8}),
    ("patch_mosaic_16", {"cond_kind": "patch_mosaic", "cond_patch_size": 16}),
    ("patch_mosaic_32", {"cond_kind": "patch_mosaic", "cond_patch_size": 32}),
    ("patch_mosaic_64", {"cond_kind": "patch_mosaic", "cond_patch_size": 64}),
)

METRIC_COLUMNS = ("rmse_fwd", "psnr_fwd", "ssim_fwd",
                  "rmse_cyc", "psnr_cyc", "ssim_cyc")


@dataclass(frozen=True)
class CellResult:
    scenario: str
    with_dil: bool
    config_hash: str
    changed: tuple
    metrics: dict | None  # METRIC_COLUMNS -> float
    failure: str | None = None


@dataclass(frozen=True)
class AblationMatrix:
    cells: tuple

    def cell(self, scenario: str, with_dil: bool) -> CellResult:
        for c in self.cells:
            if c.scenario == scenario and c.with_dil == with_dil:
                return c
        raise KeyError((scenario, with_dil))

    def to_tsv(self) -> str:
        header = ["scenario"]
        for metric in METRIC_COLUMNS:
            header += [f"{metric}_without_dil", f"{metric}_with_dil"]
        lines = ["\t".join(header)]
        for scenario, _ in SCENARIOS:
            row = [scenario]
            for metric in METRIC_COLUMNS:
                for with_dil in (False, True):
                    try:
                        cell = self.cell(scenario, with_dil)
                    except KeyError:
                        row.append("skipped")
                        continue
                    if cell.failure is not None:
                        row.append(f"failed:{cell.failure}")
                    else:
                        row.append(f"{cell.metrics[metric]:.6g}")
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"


def cell_config(base: RunConfig, scenario_overrides: dict,
                with_dil: bool) -> RunConfig:
    cfg = base.override(**scenario_overrides, dil_enabled=with_dil)
    # large mosaic tiles get a complete (rather than 2x overcomplete)
    # dictionary to bound memory; still K >= d
    if cfg["cond_kind"] == "patch_mosaic" and cfg["cond_patch_size"] >= 64 and with_dil:
        cfg = cfg.override(dil_num_atoms=cfg["cond_patch_size"] ** 2)
    return cfg


def run_cell(base: RunConfig, scenario: str, overrides: dict, with_dil: bool,
             train_root: str, test_root: str, budget_epochs: int,
             out_dir: str, log=None) -> CellResult:
    cfg = cell_config(base, overrides, with_dil).override(epochs=budget_epochs)
    tag = f"{scenario}_{'with' if with_dil else 'without'}_dil"
    cell_dir = os.path.join(out_dir, tag)
    try:
        pool_size = min(len(UnpairedDataset(train_root).ct_files),
                        len(UnpairedDataset(train_root).mri_files))
        tc = to_train_config(cfg, pool_size)
        state = init_train_state(tc)
        train(tc, train_root, cell_dir, state=state, log=log)
        report = evaluate_checkpoint(state, test_root)
        mf, mc = report.mean_forward, report.mean_cycle
        metrics = {"rmse_fwd": mf.rmse, "psnr_fwd": mf.psnr, "ssim_fwd": mf.ssim,
                   "rmse_cyc": mc.rmse, "psnr_cyc": mc.psnr, "ssim_cyc": mc.ssim}
        return CellResult(scenario=scenario, with_dil=with_dil,
                          config_hash=run_config_hash(cfg),
                          changed=changed_keys(base, cfg), metrics=metrics)
    except Exception as exc:  # cell failures are findings, not run aborts
        detail = f"{type(exc).__name__}: {exc}"
        with open(os.path.join(out_dir, f"{tag}.error.log"), "w") as fh:
            fh.write(traceback.format_exc())
        return CellResult(scenario=scenario, with_dil=with_dil,
                          config_hash=run_config_hash(cfg),
                          changed=changed_keys(base, cfg),
                          metrics=None, failure=detail)


def run_ablation(base: RunConfig, train_root: str, test_root: str,
                 budget_epochs: int, out_dir: str, scenarios=None,
                 log=None) -> AblationMatrix:
    os.makedirs(out_dir, exist_ok=True)
    chosen = scenarios if scenarios is not None else SCENARIOS
    cells = []
    for scenario, overrides in chosen:
        for with_dil in (False, True):
            if log is not None:
                log(f"[cell] {scenario} dil={with_dil}")
            cells.append(run_cell(base, scenario, overrides, with_dil,
                                  train_root, test_root, budget_epochs, out_dir))
    matrix = AblationMatrix(cells=tuple(cells))
    with open(os.path.join(out_dir, "ablation.tsv"), "w") as fh:
        fh.write(matrix.to_tsv())
    plot_ablation(matrix, out_dir)
    return matrix


def plot_ablation(matrix: AblationMatrix, out_dir: str) -> None:
    """One grouped bar chart per metric column."""
    labels = sorted({c.scenario for c in matrix.cells},
                    key=lambda s: [name for name, _ in SCENARIOS].index(s))
    for metric in METRIC_COLUMNS:
        fig, ax = plt.subplots(figsize=(10, 4))
        xs = range(len(labels))
        for shift, with_dil in ((-0.2, False), (0.2, True)):
            values = []
            for label in labels:
                try:
                    cell = matrix.cell(label, with_dil)
                    values.append(cell.metrics[metric]
                                  if cell.metrics is not None else 0.0)
                except KeyError:
                    values.append(0.0)
            ax.bar([x + shift for x in xs], values, width=0.38,
                   label="with DiL" if with_dil else "without DiL")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(metric)
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"ablation_{metric}.png"), dpi=120)
        plt.close(fig)


def plot_stats(stats_path: str, out_path: str) -> None:
    """Loss curves from a stats.tsv training log."""
    with open(stats_path) as fh:
        header = fh.readline().strip().split("\t")
        rows = [line.strip().split("\t") for line in fh if line.strip()]
    series = {name: [float(r[i]) for r in rows] for i, name in enumerate(header)}
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name in header[1:]:
        ax.plot(series["epoch"], series[name], label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
