"""Train a grid of (position, handler, fake-mask) configurations over several seeds."""
from __future__ import annotations

import dataclasses
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List

import numpy as np

from .model import ModelConfig, build_model
from .optim import OptimizerConfig
from .train import Dataset, train

# desk-scale schedule: a few epochs at a higher rate than the full-size recipe
ABLATION_OPT = OptimizerConfig(learning_rate=2e-3, epochs=10, lr_decay_every_epochs=1000)
ABLATION_MODEL = ModelConfig(foreground_mode="ground_truth")


@dataclass
class RunResult:
    position: str
    handler: str
    fake_masks: bool
    seed: int
    iou_all: float
    iou_fg: float
    log_text: str = ""
    seconds: float = 0.0


@dataclass
class AblationRow:
    position: str
    handler: str
    fake_masks: bool
    seeds: tuple
    iou_all: tuple
    iou_fg: tuple
    seconds: float = 0.0

    @property
    def iou_all_mean(self):
        return float(np.mean(self.iou_all))

    @property
    def iou_fg_mean(self):
        return float(np.mean(self.iou_fg))

    def key(self):
        return (self.position, self.handler, self.fake_masks)

    def to_record(self) -> str:
        def stats(name, vals):
            return (f"{name}_mean={np.mean(vals):.6f} {name}_min={np.min(vals):.6f} "
                    f"{name}_max={np.max(vals):.6f} {name}_range={np.ptp(vals):.6f}")
        return (f"position={self.position} handler={self.handler} "
                f"fake_masks={'on' if self.fake_masks else 'off'} "
                f"seeds={','.join(map(str, self.seeds))} "
                f"{stats('iou_all', self.iou_all)} {stats('iou_fg', self.iou_fg)}")


def worker_threads() -> int:
    try:
        return max(1, int(os.environ.get("MPIKIT_THREADS", "1")))
    except ValueError:
        return 1


def run_one(train_data: Dataset, val_data: Dataset, model_cfg: ModelConfig, opt_cfg: OptimizerConfig):
    start = time.perf_counter()
    model = build_model(model_cfg)
    log = train(model, train_data, opt_cfg, val=val_data)
    iou_all, iou_fg = log.final_iou()
    return RunResult(model_cfg.mpi_position, model_cfg.occlusion_handling, model_cfg.fake_masks,
                     model_cfg.seed, iou_all, iou_fg, log.to_text(), time.perf_counter() - start)


def run_ablation(train_data: Dataset, val_data: Dataset, positions, handlers, seeds,
                 fake_masks=(True,), base_cfg: ModelConfig = ABLATION_MODEL,
                 opt_cfg: OptimizerConfig = ABLATION_OPT, threads=None, on_run=None) -> List[AblationRow]:
    """One row per (position, handler, fake_masks), aggregated over ``seeds``."""
    jobs = [dataclasses.replace(base_cfg, mpi_position=p, occlusion_handling=h, fake_masks=f, seed=s)
            for p in positions for h in handlers for f in fake_masks for s in seeds]
    threads = worker_threads() if threads is None else threads

    def job(cfg):
        res = run_one(train_data, val_data, cfg, opt_cfg)
        if on_run is not None:
            on_run(res)
        return res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(cfg) for cfg in jobs]

    rows = []
    for p in positions:
        for h in handlers:
            for f in fake_masks:
                rs = [r for r in results if (r.position, r.handler, r.fake_masks) == (p, h, f)]
                rows.append(AblationRow(p, h, f, tuple(r.seed for r in rs),
                                        tuple(r.iou_all for r in rs), tuple(r.iou_fg for r in rs),
                                        sum(r.seconds for r in rs)))
    return rows


def format_table(rows: List[AblationRow]) -> str:
    head = f"{'position':<9} {'handler':<9} {'fake':<5} {'IoU(all)':>18} {'IoU(fg)':>18}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.position:<9} {r.handler:<9} {'on' if r.fake_masks else 'off':<5} "
                     f"{100 * r.iou_all_mean:>8.2f} ±{50 * np.ptp(r.iou_all):>6.2f}   "
                     f"{100 * r.iou_fg_mean:>8.2f} ±{50 * np.ptp(r.iou_fg):>6.2f}")
    return "\n".join(lines) + "\n"
