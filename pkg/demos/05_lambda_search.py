"""Choosing the rate-distortion weight without a clean reference.

A well-fit model should reproduce the noisy input about as faithfully as the
noise allows: the mean squared residual between the denoised estimate and the
noisy input should match tau (sigma^2 for AWGN). The search probes a lambda,
trains briefly, measures the residual r, and nudges lambda multiplicatively
by the relative miss beta = (r - tau)/tau until |beta| <= 0.1.

Probes warm-start from the previous model, so the whole search costs a few
short training runs.
"""

import numpy as np

from zsncd import Image, LambdaSearchConfig, TrainConfig, add_awgn, tune_lambda

rng = np.random.default_rng(3)
yy, xx = np.mgrid[0:80, 0:80] / 79.0
scene = 0.35 + 0.3 * np.cos(6 * xx) * yy
scene[10:30, 44:70] = 0.88
clean = Image(scene)

sigma = 25 / 255.0
noisy = add_awgn(clean, sigma, rng)
tau = sigma**2

# start deliberately high so the walk is visible
search = LambdaSearchConfig(lam0=6000.0, tau=tau, probe_steps=600)
cfg = TrainConfig(lam=6000.0, seed=0)

print(f"target residual tau = sigma^2 = {tau:.6f}\n")
result = tune_lambda(noisy, cfg, search)

print(f"{'probe':>5} {'lambda':>9} {'residual':>10} {'beta':>8}  action")
for p in result.probes:
    print(f"{p.iteration:5d} {p.lam:9.1f} {p.residual:10.6f} {p.beta:+8.3f}  {p.action}")

print(f"\nlambda* = {result.lambda_star:.1f}, converged = {result.converged} "
      f"in {len(result.probes)} probes")
