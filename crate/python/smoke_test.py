"""Smoke test for the longlens extension module.

Build and install first:
    maturin build -m crates/python/Cargo.toml -o dist && pip install dist/longlens-*.whl
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import longlens as ll


def check(cond, msg):
    if not cond:
        print(f"FAIL  {msg}")
        sys.exit(1)
    print(f"ok    {msg}")


def main():
    w, h = 16, 16
    ramp = ll.Image(w, h, [(x + y) / 30.0 for y in range(h) for x in range(w)])
    check(ramp.width == 16 and ramp.scale == "unit", "image construction")
    check(abs(ll.ssim(ramp, ramp) - 1.0) < 1e-12, "self ssim is 1")

    full = ll.Mask.full(w, h)
    mae, psnr, ssim, dssim = ll.metrics(ramp, ramp, ramp, full)
    check(mae == 0.0 and math.isinf(psnr) and ssim == 1.0, "identity metrics")

    half = ll.Mask(w, h, [x < 8 for y in range(h) for x in range(w)])
    check(ll.dice(half, half) == 1.0 and ll.hd95(half, half) == 0.0, "dice/hd95 identity")

    _, _, p, degenerate = ll.wilcoxon([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    check(abs(p - 0.0625) < 1e-12 and not degenerate, "wilcoxon exact p")

    emb = ll.delta_embedding(0.0)
    check(len(emb) == 256 and emb[0] == 0.0 and emb[1] == 1.0, "delta embedding")

    src = [(float(x), float(y)) for x in range(0, 50, 10) for y in range(0, 50, 10)]
    dst = [(x + 3.0, y - 2.0) for x, y in src]
    m, inliers, _ = ll.fit_transform(src, dst, "similarity", seed=1)
    check(inliers == len(src) and abs(m[2] - 3.0) < 1e-6 and abs(m[5] + 2.0) < 1e-6, "ransac translation")

    lo, hi = ll.reference_cdf(0.0), ll.reference_cdf(255.0)
    check(0.0 <= lo < hi <= 1.0, "reference cdf")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        manifest = json.loads(ll.write_phantom(tmp / "data", n_eyes=2, frames=3, size=64, seed=5))
        check(len(manifest["eyes"]) == 2, "phantom written")
        code = ll.run_cli(["--out", str(tmp / "base"), "baseline", "--manifest",
                           str(tmp / "data" / "manifest.json"), "copy-last"])
        check(code == 0, "cli baseline")
        code = ll.run_cli(["--out", str(tmp / "eval"), "evaluate", "--manifest",
                           str(tmp / "data" / "manifest.json"), "--predictions", str(tmp / "base")])
        check(code == 0 and (tmp / "eval" / "method_metrics.csv").exists(), "cli evaluate")

    print("smoke test passed")


if __name__ == "__main__":
    main()
