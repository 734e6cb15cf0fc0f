"""Checkpoint evaluation against the hidden pairing manifest.

Scores forward translation against the held-back true counterpart and the
cycle reconstruction against the input, per image and as means. The
conditioning pool for each image excludes its own hidden pair, keeping the
scenario genuinely unpaired.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .imaging import (DatasetManifest, Image, MetricReport, load_image,
                      metric_report, save_image)
from .training import CT2MRI, MRI2CT, TrainState, cycle_translate


@dataclass(frozen=True)
class ImageResult:
    name: str
    forward: MetricReport
    cycle: MetricReport


@dataclass(frozen=True)
class EvaluationReport:
    direction: str
    rows: tuple

    def _mean(self, leg: str, attr: str) -> float:
        return float(np.mean([getattr(getattr(r, leg), attr) for r in self.rows]))

    @property
    def mean_forward(self) -> MetricReport:
        return MetricReport(rmse=self._mean("forward", "rmse"),
                            psnr=self._mean("forward", "psnr"),
                            ssim=self._mean("forward", "ssim"))

    @property
    def mean_cycle(self) -> MetricReport:
        return MetricReport(rmse=self._mean("cycle", "rmse"),
                            psnr=self._mean("cycle", "psnr"),
                            ssim=self._mean("cycle", "ssim"))

    def to_tsv(self) -> str:
        lines = ["name\trmse_fwd\tpsnr_fwd\tssim_fwd\trmse_cyc\tpsnr_cyc\tssim_cyc"]
        for r in self.rows:
            lines.append("\t".join([r.name] + [
                f"{v:.6g}" for v in (r.forward.rmse, r.forward.psnr, r.forward.ssim,
                                     r.cycle.rmse, r.cycle.psnr, r.cycle.ssim)]))
        mf, mc = self.mean_forward, self.mean_cycle
        lines.append("\t".join(["mean"] + [
            f"{v:.6g}" for v in (mf.rmse, mf.psnr, mf.ssim,
                                 mc.rmse, mc.psnr, mc.ssim)]))
        return "\n".join(lines) + "\n"


def _difference_image(a: Image, b: Image) -> Image:
    return Image(np.clip(np.abs(a.data - b.data), 0.0, 1.0))


def evaluate_with(translator, dataset_root: str, direction: str = CT2MRI,
                  out_dir: str | None = None, limit: int | None = None,
                  diff_images: int = 0) -> EvaluationReport:
    """Evaluate any callable (input Image, pool) -> (synthesized, cycled).

    Separating the translator lets tests check the aggregation machinery
    with known mappings.
    """
    manifest = DatasetManifest.load(dataset_root)
    pairs = manifest.pairs[:limit] if limit else manifest.pairs
    in_sub, out_sub = ("ct", "mri") if direction == CT2MRI else ("mri", "ct")
    pool_cache = {}

    def _load(sub, name):
        key = (sub, name)
        if key not in pool_cache:
            pool_cache[key] = load_image(os.path.join(dataset_root, sub, name))
        return pool_cache[key]

    rows = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    for idx, (ct_name, mri_name) in enumerate(pairs):
        in_name, truth_name = ((ct_name, mri_name) if direction == CT2MRI
                               else (mri_name, ct_name))
        input_img = _load(in_sub, in_name)
        truth = _load(out_sub, truth_name)
        pool = [_load(out_sub, n)
                for n in sorted(os.listdir(os.path.join(dataset_root, out_sub)))
                if n.endswith(".png") and n != truth_name]
        syn, back = translator(input_img, pool)
        rows.append(ImageResult(name=in_name,
                                forward=metric_report(syn, truth),
                                cycle=metric_report(back, input_img)))
        if out_dir and idx < diff_images:
            stem = os.path.splitext(in_name)[0]
            save_image(syn, os.path.join(out_dir, f"{stem}_syn.png"))
            save_image(back, os.path.join(out_dir, f"{stem}_back.png"))
            save_image(_difference_image(syn, truth),
                       os.path.join(out_dir, f"{stem}_diff_fwd.png"))
            save_image(_difference_image(back, input_img),
                       os.path.join(out_dir, f"{stem}_diff_cyc.png"))
    report = EvaluationReport(direction=direction, rows=tuple(rows))
    if out_dir:
        with open(os.path.join(out_dir, "evaluation.tsv"), "w") as fh:
            fh.write(report.to_tsv())
    return report


def evaluate_checkpoint(state: TrainState, dataset_root: str,
                        direction: str = CT2MRI, out_dir: str | None = None,
                        limit: int | None = None,
                        diff_images: int = 0) -> EvaluationReport:
    def translator(img, pool):
        return cycle_translate(state, img, direction, pool)

    return evaluate_with(translator, dataset_root, direction, out_dir,
                         limit, diff_images)
