"""Acceptance suite: one test per numbered criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s`. The whole module is wired to
the session fixtures in conftest.py; the expensive pieces are the 5000-step
desk-scale model (shared) and the two long training runs in criterion 4.
"""

import math
import time

import numpy as np
import pytest

from gradcheck import check_layer
from zsncd.cli import run
from zsncd.codec import build, load_checkpoint, save_checkpoint
from zsncd.denoiser import (LambdaSearchConfig, TrainConfig, batch_objective,
                            denoise, train, tune_lambda)
from zsncd.entropy import FactorizedDensity, quantize
from zsncd.image import Image, psnr, read_image, write_image
from zsncd.nn import GDN, Conv2d, ConvTranspose2d, Dense, ReLU
from zsncd.noise import add_awgn
from zsncd.patches import (PatchIndexSet, aggregate, aggregate_single_offset,
                           extract_batch)
from zsncd.denoiser import reconstruct_patches

SIGMA_25 = 25.0 / 255.0


def report(num: int, passed: bool, detail: str):
    print(f"\n[ACCEPT {num:02d}] {'PASS' if passed else 'FAIL'} — {detail}")
    assert passed, f"criterion {num}: {detail}"


# --- 1. gradient integrity ------------------------------------------------------


def _directional_check(variant: str, seed: int, h: float = 1e-5) -> float:
    """Relative error between the analytic directional derivative of the full
    training objective (fixed relaxation noise) and central differences."""
    params = build(variant, 8, 1, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1000)
    batch = rng.random((3, 8, 8, 1))
    noise = rng.uniform(-0.5, 0.5, size=params.encode(batch).shape)
    cfg = TrainConfig(lam=10.0)
    plist = params.parameters()
    for p in plist:
        p.grad[...] = 0.0
    batch_objective(params, batch, cfg.lam, cfg, noise, compute_grads=True)

    dirs = [rng.standard_normal(p.value.shape) for p in plist]
    norm = math.sqrt(sum(float((d * d).sum()) for d in dirs))
    dirs = [d / norm for d in dirs]
    analytic = sum(float((p.grad * d).sum()) for p, d in zip(plist, dirs))

    saved = [p.value.copy() for p in plist]
    try:
        for p, s, d in zip(plist, saved, dirs):
            p.value = s + h * d
        up, _, _ = batch_objective(params, batch, cfg.lam, cfg, noise,
                                   compute_grads=False)
        for p, s, d in zip(plist, saved, dirs):
            p.value = s - h * d
        down, _, _ = batch_objective(params, batch, cfg.lam, cfg, noise,
                                     compute_grads=False)
    finally:
        for p, s in zip(plist, saved):
            p.value = s
    numeric = (up - down) / (2.0 * h)
    return abs(analytic - numeric) / max(abs(numeric), 1e-12)


def test_criterion_01_gradient_integrity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)

    # every layer kind, per-component finite differences in 64-bit mode
    check_layer(Dense(6, 5, rng, dtype=np.float64), rng.standard_normal((4, 6)), rng)
    x = rng.standard_normal((3, 8))
    check_layer(ReLU(), np.where(np.abs(x) < 0.1, 0.3, x), rng)
    check_layer(Conv2d(2, 3, 3, 2, 1, rng, dtype=np.float64),
                rng.standard_normal((2, 8, 8, 2)), rng)
    check_layer(ConvTranspose2d(3, 2, 3, 2, 1, (8, 8), rng, dtype=np.float64),
                rng.standard_normal((2, 4, 4, 3)), rng)
    for inverse in (False, True):
        layer = GDN(4, inverse=inverse, dtype=np.float64)
        layer.gamma.value += 0.02 * rng.random((4, 4))
        check_layer(layer, rng.standard_normal((2, 3, 3, 4)), rng)

    density = FactorizedDensity(2, rng, dtype=np.float64)
    v = rng.normal(0, 2, size=(2, 6))
    for p in density.params():
        p.grad[...] = 0.0
    _, dv = density.bits_with_grad(v)
    from gradcheck import numeric_grad
    np.testing.assert_allclose(dv, numeric_grad(lambda q: density.bits(q), v),
                               rtol=1e-5, atol=1e-7)

    # full objective, 20 random 64-bit instances, fixed relaxation noise
    worst = 0.0
    for seed in range(10):
        worst = max(worst, _directional_check("conv", seed))
        worst = max(worst, _directional_check("mlp", seed))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-5 and elapsed < 60.0,
           f"per-layer FD checks passed; full-objective worst rel err "
           f"{worst:.2e} (tol 1e-5) over 20 instances in {elapsed:.1f}s")


# --- 2. aggregation identity ------------------------------------------------------


def test_criterion_02_aggregation_identity(cameraman, noisy_crop):
    worst = 0.0
    for img in (cameraman[..., None], noisy_crop.data):
        h, w = img.shape[:2]
        idx = PatchIndexSet(h, w, 8).indices()
        patches = extract_batch(img, idx, 8)
        out = aggregate(idx, patches, h, w)
        worst = max(worst, float(np.abs(out - img).max()))
        # and through the float32 path the trainer actually uses
        out32 = aggregate(idx, patches.astype(np.float32), h, w)
        worst = max(worst, float(np.abs(out32 - img).max()))
    report(2, worst <= 1e-6,
           f"identity-transform aggregation max abs error {worst:.2e} (tol 1e-6)")


# --- 3. single-offset ablation ----------------------------------------------------


def test_criterion_03_offset_ablation(desk_model):
    params = desk_model.result.params
    noisy, clean = desk_model.noisy, desk_model.clean
    idx, outputs, _ = reconstruct_patches(noisy, params)
    agg = aggregate(idx, outputs, noisy.height, noisy.width)
    psnr_agg = psnr(clean, Image(agg))

    k = params.k
    heat = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            single = aggregate_single_offset(idx, outputs, (a, b),
                                             noisy.height, noisy.width)
            heat[a, b] = psnr(clean, Image(single))

    non_inferior = bool((heat <= psnr_agg).all())
    # central 50% of offsets = the k*k/2 cells closest to the grid center
    center = (k - 1) / 2.0
    rr, cc = np.indices((k, k))
    d2 = (rr - center) ** 2 + (cc - center) ** 2
    thresh = np.partition(d2.ravel(), k * k // 2 - 1)[k * k // 2 - 1]
    central = d2 <= thresh
    arg = np.unravel_index(np.argmax(heat), heat.shape)
    centered = bool(central[arg])
    report(3, non_inferior and centered,
           f"aggregate {psnr_agg:.2f} dB >= best offset {heat.max():.2f} dB "
           f"(worst {heat.min():.2f}); argmax {tuple(int(v) for v in arg)} "
           f"{'inside' if centered else 'OUTSIDE'} the central half")


# --- 4. desk-scale denoising gain ---------------------------------------------------


def test_criterion_04_gate_5k_steps(desk_model):
    t0 = time.perf_counter()
    out = denoise(desk_model.noisy, desk_model.result.params)
    denoise_s = time.perf_counter() - t0
    total_s = desk_model.train_seconds + denoise_s
    gain = psnr(desk_model.clean, out.estimate) - desk_model.noisy_psnr
    report(4, gain >= 3.0 and total_s < 600.0,
           f"5K-step gate: gain {gain:.2f} dB (>= 3 required), "
           f"train+denoise {total_s:.0f}s (< 600 required)")


def test_criterion_04_full_20k_steps(clean_crop, noisy_crop):
    cfg = TrainConfig(lam=850.0, total_steps=20000, seed=0)
    result = train(noisy_crop, cfg)
    out = denoise(noisy_crop, result.params)
    gain = psnr(clean_crop, out.estimate) - psnr(clean_crop, noisy_crop)
    report(4, gain >= 4.0,
           f"20K-step run: gain {gain:.2f} dB (>= 4 required), "
           f"final PSNR {psnr(clean_crop, out.estimate):.2f} dB")


@pytest.mark.xfail(strict=False, reason="stretch target, non-gating")
def test_criterion_04_stretch_full_image(cameraman):
    clean = Image(cameraman)
    noisy = add_awgn(clean, SIGMA_25, np.random.default_rng(0))
    cfg = TrainConfig(lam=850.0, total_steps=20000, seed=0)
    result = train(noisy, cfg)
    out = denoise(noisy, result.params)
    got = psnr(clean, out.estimate)
    report(4, got >= 26.5,
           f"stretch 256x256: PSNR {got:.2f} dB (target >= 26.5, non-gating)")


# --- 5. lambda search ----------------------------------------------------------------


def test_criterion_05_lambda_search(noisy_crop):
    tau = SIGMA_25**2
    search = LambdaSearchConfig(lam0=850.0, tau=tau)
    cfg = TrainConfig(lam=850.0, seed=0)
    result = tune_lambda(noisy_crop, cfg, search)

    sign_ok = True
    for i, p in enumerate(result.probes):
        if abs(p.beta) <= search.tol:
            sign_ok &= p.action == "stop" and i == len(result.probes) - 1
        elif p.beta > 0:
            sign_ok &= p.action == "decrease"
            if i + 1 < len(result.probes):
                sign_ok &= result.probes[i + 1].lam < p.lam
        else:
            sign_ok &= p.action == "increase"
            if i + 1 < len(result.probes):
                sign_ok &= result.probes[i + 1].lam > p.lam
    final_beta = result.probes[-1].beta
    report(5, result.converged and len(result.probes) <= 12 and sign_ok,
           f"converged in {len(result.probes)} probes (<= 12), final "
           f"|r-tau|/tau = {abs(final_beta):.3f} (tol 0.1), sign rule held on "
           f"every probe, lambda* = {result.lambda_star:.0f}")


# --- 6. Poisson parameter estimation ----------------------------------------------


def test_criterion_06_alpha_estimation():
    from zsncd.noise import PoissonNoise, estimate_alpha, threshold_db

    worst_rel = 0.0
    for alpha in (25.0, 50.0):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = np.clip(0.5 + 0.18 * rng.standard_normal((64, 64)), 0.02, 0.98)
            x += 0.5 - x.mean()  # synthetic scene with mean exactly 0.5
            counts = rng.poisson(alpha * x)
            rel = abs(estimate_alpha(counts) - alpha) / alpha
            worst_rel = max(worst_rel, rel)

    db25 = threshold_db(PoissonNoise(25.0))
    db50 = threshold_db(PoissonNoise(50.0))
    conversions_ok = (abs(db25 - 10 * math.log10(50.0)) < 1e-12
                      and abs(db25 - 16.98) < 0.01
                      and abs(db50 - 20.0) < 1e-12)
    report(6, worst_rel < 0.05 and conversions_ok,
           f"alpha_hat worst relative error {worst_rel:.4f} (< 0.05) over "
           f"2 levels x 20 seeds; thresholds {db25:.2f} dB / {db50:.2f} dB "
           f"match the closed form")


# --- 7. theorem validation sweep ----------------------------------------------------


def test_criterion_07_bound_sweep():
    from zsncd.theory import SparseLevelCode, validate_bound

    t0 = time.perf_counter()
    trials = 10_000
    cells = []

    awgn_code = SparseLevelCode(n=64, k=4, delta=1 / 64)
    for eta in (0.25, 0.5):
        for sigma in (0.05, 0.1):
            v = validate_bound("awgn", awgn_code, eta=eta, trials=trials,
                               rng=np.random.default_rng(hash((1, eta, sigma)) % 2**32),
                               sigma=sigma)
            cells.append((f"awgn eta={eta} sigma={sigma}", v))

    poisson_code = SparseLevelCode(n=64, k=4, delta=0.0025, amplitude=0.4,
                                   base=0.5)  # values span [0.1, 0.9]
    for kind in ("poisson-ml", "poisson-mse"):
        for eta in (0.25, 0.5):
            for alpha in (25.0, 100.0):
                v = validate_bound(kind, poisson_code, eta=eta, trials=trials,
                                   rng=np.random.default_rng(hash((kind, eta, alpha)) % 2**32),
                                   alpha=alpha)
                cells.append((f"{kind} eta={eta} alpha={alpha}", v))

    bad = [(name, v) for name, v in cells
           if v.empirical_rate > v.prob_ceiling + 3 * v.std_error]
    elapsed = time.perf_counter() - t0
    worst = max(cells, key=lambda c: c[1].empirical_rate - c[1].prob_ceiling)
    report(7, not bad and elapsed < 300.0,
           f"{len(cells)} cells x {trials} trials, all violation rates within "
           f"ceiling+3SE (worst cell: {worst[0]}, rate "
           f"{worst[1].empirical_rate:.4f} vs ceiling {worst[1].prob_ceiling:.4f}) "
           f"in {elapsed:.0f}s")


# --- 8. lemma suite -------------------------------------------------------------------


def test_criterion_08_lemma_suite():
    from zsncd.theory import (poisson_kl, poisson_kl_sandwich,
                              validate_poisson_tail)

    t0 = time.perf_counter()
    grid = np.linspace(0.1, 0.9, 50)
    sandwich_fail = 0
    for a1 in grid:
        for a2 in grid:
            lo, hi = poisson_kl_sandwich(a1, a2, 0.1, 0.9)
            kl = poisson_kl(a1, a2)
            sandwich_fail += not (lo - 1e-12 <= kl <= hi + 1e-12)

    rng = np.random.default_rng(8)
    configs = [
        np.ones(100),
        -np.ones(100),
        np.tile([1.0, -1.0], 50),               # alternating mixed signs
        np.where(rng.random(100) < 0.3, -1.0, 1.0),  # random mixed signs
        np.concatenate([2.0 * np.ones(30), -0.5 * np.ones(70)]),
    ]
    tail_ok, tail_lines = True, []
    for i, w in enumerate(configs):
        means = np.full(len(w), 4.0)
        var = float((w**2 * means).sum())
        t = 0.8 * math.sqrt(var)
        v = validate_poisson_tail(w, means, t, trials=100_000, rng=rng)
        ok = v.upper_empirical <= v.bound and v.lower_empirical <= v.bound
        tail_ok &= ok
        tail_lines.append(f"cfg{i}: up {v.upper_empirical:.4f}/"
                          f"low {v.lower_empirical:.4f} <= {v.bound:.4f}")
    elapsed = time.perf_counter() - t0
    report(8, sandwich_fail == 0 and tail_ok and elapsed < 120.0,
           f"sandwich held on all {len(grid)**2} grid cells; tails at 1e5 "
           f"trials: {'; '.join(tail_lines)}; {elapsed:.0f}s")


# --- 9. entropy model ------------------------------------------------------------------


def _density_checks(density) -> tuple[float, bool, float]:
    grid = np.tile(np.arange(-50, 51, dtype=np.float64), (density.channels, 1))
    mass_err = float(np.abs(density.mass(grid).sum(axis=1) - 1.0).max())
    t = np.tile(np.linspace(-60.0, 60.0, 10_000), (density.channels, 1))
    cdf = density.cdf(t)
    monotone = bool((np.diff(cdf, axis=1) >= -1e-12).all())
    symbols = quantize(np.random.default_rng(0).normal(0, 15, (density.channels, 500)))
    min_bits = float(min(density.bits(symbols), density.bits(grid)))
    return mass_err, monotone, min_bits


def test_criterion_09_entropy_model(desk_model):
    fresh = build("conv", 8, 1, seed=0).density
    init_err, init_mono, init_bits = _density_checks(fresh)
    trained = desk_model.result.params.density
    tr_err, tr_mono, tr_bits = _density_checks(trained)
    ok = (init_err <= 1e-3 and tr_err <= 1e-3 and init_mono and tr_mono
          and init_bits >= 0.0 and tr_bits >= 0.0)
    report(9, ok,
           f"mass sums to 1 within {max(init_err, tr_err):.2e} (tol 1e-3, "
           f"init and trained); CDF monotone on 10^4-point grid; rate >= 0")


# --- 10. determinism and persistence -----------------------------------------------------


def test_criterion_10_determinism(tmp_path):
    base = np.full((48, 48), 0.35)
    base[12:36, 12:36] = 0.95
    clean_p = tmp_path / "clean.pgm"
    write_image(Image(base), clean_p)
    noisy_p = tmp_path / "noisy.pgm"
    write_image(add_awgn(read_image(clean_p), SIGMA_25,
                         np.random.default_rng(5)), noisy_p)

    def run_once(tag: str, threads: str):
        out = tmp_path / f"out_{tag}.pgm"
        ckpt = tmp_path / f"model_{tag}.ckpt"
        rc = run(["denoise", "--in", str(noisy_p), "--out", str(out),
                  "--model", "awgn", "--sigma", "25", "--lambda", "850",
                  "--steps", "200", "--seed", "0", "--threads", threads,
                  "--checkpoint-out", str(ckpt)])
        assert rc == 0
        return out.read_bytes(), ckpt.read_bytes()

    img_a, ck_a = run_once("a", "1")
    img_b, ck_b = run_once("b", "1")
    img_c, ck_c = run_once("c", "8")

    ckpt_path = tmp_path / "model_a.ckpt"
    again = tmp_path / "resaved.ckpt"
    save_checkpoint(load_checkpoint(ckpt_path), again)
    round_trip_ok = again.read_bytes() == ck_a

    ok = (img_a == img_b == img_c) and (ck_a == ck_b == ck_c) and round_trip_ok
    report(10, ok,
           "fixed-seed reruns byte-identical (image and checkpoint); "
           "--threads 1 == --threads 8; checkpoint load/save round trip bit-exact")
