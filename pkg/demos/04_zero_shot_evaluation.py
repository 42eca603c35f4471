"""Every recognition protocol on a planted synthetic dataset.

Generates a dataset whose semantic distances genuinely predict the visual
class structure, then reports conventional and generalised accuracy in
both the per-example (inductive) and whole-collection (transductive)
settings, aggregated over class splits.
"""

import tempfile
from pathlib import Path

from zslkit import EvalConfig, SynthSpec, make_synthetic, run_evaluation
from zslkit import data_io

workdir = Path(tempfile.mkdtemp(prefix="zsl_demo_"))
spec = SynthSpec(n_classes=12, n_seen=6, examples_per_class=40, images_per_class=30,
                 n_splits=5)
manifest = make_synthetic(spec, seed=7, out_dir=workdir)
print(f"dataset written to {workdir}")

dataset = data_io.load_dataset(manifest)
space = data_io.load_semantic_space(workdir / "space.json")
splits = data_io.load_splits(workdir / "splits.json")
print(f"{dataset.features.shape[0]} videos, {dataset.n_classes} classes, "
      f"{len(splits)} seen/unseen splits")

cfg = EvalConfig(d_latent=4, n_neighbors=10, transductive=True, seed=3)
reports = run_evaluation(dataset.name, dataset.features, dataset.labels,
                         space, splits, cfg, method="planted")

for setting, report in reports.items():
    print(f"\n== {setting} ==")
    for metric in ("A_UU", "A_UT", "A_ST", "H"):
        print(f"  {metric:5s} = {report.mean[metric]:.4f} +/- {report.stderr[metric]:.4f}")

print("\nPer-split conventional accuracy (inductive vs transductive):")
for ind, tr in zip(reports["inductive"].splits, reports["transductive"].splits):
    print(f"  split {ind['split_index']}: {ind['A_UU']:.4f} -> {tr['A_UU']:.4f}")
print("\nThe joint (clustering + assignment) prediction consistently matches or "
      "improves on per-example decisions here, because unseen-class test examples "
      "form tight clusters.")
