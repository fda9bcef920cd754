"""Side-by-side desk experiment: plain encoder vs the hierarchical,
multi-stage variant on the same corpus and seed."""

from __future__ import annotations

import os

from .config import Config, override_config
from .evaluate import evaluate_manifest
from .train import Trainer


def comparison_report(results: dict[str, float]) -> str:
    lines = [f"{'system':<16}{'eval_eer':>10}"]
    for name, rate in results.items():
        lines.append(f"{name:<16}{100.0 * rate:>9.2f}%")
    return "\n".join(lines)


def run_side_by_side(cfg: Config, run_root: str) -> dict[str, float]:
    """Train and evaluate the baseline and the full model; returns
    {system: eval EER} and writes report.txt under run_root."""
    variants = {
        "baseline": override_config(
            cfg,
            ["pooling.enabled=false", "mca.enabled=false", f"io.run_dir={os.path.join(run_root, 'baseline')}"],
        ),
        "hierarchical": override_config(cfg, [f"io.run_dir={os.path.join(run_root, 'hierarchical')}"]),
    }
    results: dict[str, float] = {}
    for name, vcfg in variants.items():
        trainer = Trainer(vcfg)
        trainer.run()
        rate, _, _ = evaluate_manifest(
            trainer.model, vcfg.data.eval_manifest, vcfg.train.batch_size, vcfg.data.cache_dir
        )
        results[name] = rate
    os.makedirs(run_root, exist_ok=True)
    report = comparison_report(results)
    with open(os.path.join(run_root, "report.txt"), "w") as f:
        f.write(report + "\n")
    print(report)
    return results
