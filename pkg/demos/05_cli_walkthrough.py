"""The full command-line workflow, end to end.

synth -> encode -> evaluate -> sweep -> report, with every output written
under one scratch directory. Each command prints the files it wrote.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

root = Path(tempfile.mkdtemp(prefix="zsl_cli_demo_"))


def zslkit(*argv):
    cmd = [sys.executable, "-m", "zslkit", *map(str, argv)]
    print("\n$ zslkit " + " ".join(map(str, argv)))
    result = subprocess.run(cmd, capture_output=True, text=True)
    if result.stdout:
        print(result.stdout.rstrip())
    if result.stderr:
        print(result.stderr.rstrip(), file=sys.stderr)
    if result.returncode != 0:
        raise SystemExit(f"command failed with exit code {result.returncode}")


data = root / "data"
zslkit("synth", "--seed", 7, "--out", data)

zslkit("encode", "--manifest", data / "manifest.json", "--method", "ffv", "--k", 1,
       "--seed", 0, "--out", root / "space_ffv")

zslkit("evaluate",
       "--manifest", data / "manifest.json",
       "--space", root / "space_ffv" / "space.json",
       "--splits", data / "splits.json",
       "--d-latent", 4, "--transductive", "--seed", 3,
       "--out", root / "eval_ffv")

zslkit("sweep",
       "--manifest", data / "manifest.json",
       "--splits", data / "splits.json",
       "--axis", "images", "--values", "5,10,20,30",
       "--method", "afv",
       "--d-latent", 4, "--settings", "czsl", "--transductive", "--seed", 3,
       "--out", root / "sweep_images")

zslkit("report",
       "--inputs",
       root / "eval_ffv" / "report_inductive.json",
       root / "eval_ffv" / "report_transductive.json",
       "--out", root / "summary.csv")

print("\n== evaluation summary ==")
print((root / "summary.csv").read_text().rstrip())
print("\n== accuracy vs images per class ==")
for line in (root / "sweep_images" / "sweep.csv").read_text().splitlines():
    if line.startswith("axis_value") or ".A_UU" in line:
        print(line)
print(f"\nall artifacts under {root}")
