"""Corrupting images and estimating the noise level blindly.

AWGN: additive Gaussian noise at a chosen sigma; the estimator recovers sigma
from the noisy image alone via the median absolute deviation of the finest
diagonal wavelet details. Poisson: photon-count noise at alpha photons per
unit intensity; alpha_hat = 2 * mean(counts) is unbiased when the scene's mean
intensity is 0.5.
"""

import numpy as np

from zsncd import (AwgnNoise, Image, PoissonNoise, add_awgn, add_poisson,
                   estimate_alpha, estimate_sigma, residual_threshold)
from zsncd.noise import threshold_db

rng = np.random.default_rng(7)

# a textured scene with mean 0.5
yy, xx = np.mgrid[0:192, 0:192] / 191.0
scene = 0.5 + 0.3 * np.sin(7 * xx) * np.cos(5 * yy)
scene += 0.5 - scene.mean()
clean = Image(scene)

print("AWGN, sigma on the familiar 0-255 scale:")
print(f"{'sigma':>6} {'sigma_hat':>10} {'rel err':>8}")
for s255 in (15, 25, 50):
    sigma = s255 / 255.0
    noisy = add_awgn(clean, sigma, rng)
    est = estimate_sigma(noisy) * 255.0
    print(f"{s255:6d} {est:10.2f} {abs(est - s255) / s255:8.1%}")

print("\nPoisson, counts ~ Poisson(alpha * x):")
print(f"{'alpha':>6} {'alpha_hat':>10} {'rel err':>8} {'tau=1/(2a)':>11} {'dB':>7}")
for alpha in (25.0, 50.0, 100.0):
    sample = add_poisson(clean, alpha, rng)
    est = estimate_alpha(sample.counts)
    model = PoissonNoise(alpha)
    print(f"{alpha:6.0f} {est:10.2f} {abs(est - alpha) / alpha:8.1%}"
          f" {residual_threshold(model):11.5f} {threshold_db(model):7.2f}")

print("\nthe residual targets drive the lambda search:")
print(f"  AWGN sigma=25/255 -> tau = sigma^2 = "
      f"{residual_threshold(AwgnNoise(25 / 255)):.6f}")
print(f"  Poisson alpha=50  -> tau = 1/(2*alpha) = "
      f"{residual_threshold(PoissonNoise(50.0)):.6f}")
