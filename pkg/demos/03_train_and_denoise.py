"""Zero-shot denoising on a single image.

The codec trains on overlapping 8x8 patches of the noisy image itself — no
clean data anywhere — balancing reconstruction distortion against the coding
cost of the quantized latents. Random noise is expensive to encode, so the
rate penalty squeezes it out.

Training here is shortened to keep the demo snappy; see the README for
full-length settings.
"""

import time
from pathlib import Path

import numpy as np

from zsncd import (Image, TrainConfig, add_awgn, denoise, psnr, train,
                   write_image)

OUT = Path("demo_out")
OUT.mkdir(exist_ok=True)

rng = np.random.default_rng(0)
yy, xx = np.mgrid[0:96, 0:96] / 95.0
scene = 0.3 + 0.3 * xx
scene[12:40, 12:40] = 0.85
scene[(yy - 0.68) ** 2 + (xx - 0.62) ** 2 < 0.03] = 0.15
clean = Image(scene)

noisy = add_awgn(clean, 25 / 255.0, rng)
print(f"noisy input: {psnr(clean, noisy):.2f} dB")

cfg = TrainConfig(lam=850.0, total_steps=2000, seed=0)
t0 = time.perf_counter()
result = train(noisy, cfg, loss_csv=OUT / "loss.csv")
print(f"trained {cfg.total_steps} steps in {time.perf_counter() - t0:.1f}s "
      f"(loss curve: {OUT / 'loss.csv'})")

out = denoise(noisy, result.params)
print(f"denoised: {psnr(clean, out.estimate):.2f} dB, "
      f"{out.rate_bits:.1f} bits/patch, residual {out.residual:.5f} "
      f"(target sigma^2 = {(25 / 255) ** 2:.5f})")

write_image(noisy, OUT / "noisy.pgm")
write_image(out.estimate, OUT / "denoised.pgm")
print(f"wrote {OUT / 'noisy.pgm'} and {OUT / 'denoised.pgm'}")

# the same model keeps improving with more steps
more = train(noisy, TrainConfig(lam=850.0, total_steps=2000, seed=0),
             params=result.params)
out2 = denoise(noisy, more.params)
print(f"after {more.params.steps_trained} total steps: "
      f"{psnr(clean, out2.estimate):.2f} dB")
