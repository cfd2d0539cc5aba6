"""Command-line interface.

Subcommands: add-noise, estimate-noise, denoise, tune-lambda,
theory-validate, metrics. Noise levels are given on the 0-255 scale
(--sigma 25 means 25/255 internally); --alpha is the expected photon count
per unit intensity and needs no rescaling.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 numerical divergence. Every run emits its fully resolved configuration
(config.<name>=<value> lines) into its report output. --threads falls back
to the ZSNCD_THREADS environment variable; any thread count produces
bit-identical results. An optional --config file of key=value lines supplies
defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .codec import save_checkpoint
from .denoiser import (
    LAMBDA_FALLBACK,
    LambdaSearchConfig,
    TrainConfig,
    default_lambda,
    denoise,
    train,
    tune_lambda,
)
from .errors import CheckpointError, DivergenceError, ImageFormatError
from .image import Image, psnr, read_image, ssim, write_image
from .noise import (
    AwgnNoise,
    PoissonNoise,
    add_awgn,
    add_poisson,
    estimate_alpha,
    estimate_sigma,
    residual_threshold,
)
from .pool import ENV_THREADS
from .theory import (
    SparseLevelCode,
    poisson_kl,
    poisson_kl_sandwich,
    validate_bound,
    validate_poisson_tail,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="zsncd", description=__doc__,
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--version", action="version", version=f"zsncd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0, help="RNG seed")

    sp = sub.add_parser("add-noise", help="corrupt a clean image",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--in", dest="inp", required=True, help="clean PGM/PPM input")
    sp.add_argument("--out", required=True, help="noisy image output path")
    sp.add_argument("--model", choices=["awgn", "poisson"], required=True)
    sp.add_argument("--sigma", type=float, help="AWGN level on the 0-255 scale")
    sp.add_argument("--alpha", type=float, help="Poisson photons per unit intensity")
    sp.add_argument("--counts-out", help="also write the raw Poisson counts (PGM)")
    common(sp)

    sp = sub.add_parser("estimate-noise", help="blind noise-level estimation",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--in", dest="inp", required=True, help="noisy image (or counts)")
    sp.add_argument("--model", choices=["awgn", "poisson-counts"], required=True,
                    help="awgn: Haar-MAD sigma; poisson-counts: alpha from a counts image")

    sp = sub.add_parser("denoise", help="train on the noisy image and denoise it",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--in", dest="inp", required=True, help="noisy PGM/PPM input")
    sp.add_argument("--out", required=True, help="denoised image output path")
    sp.add_argument("--model", choices=["awgn", "poisson"], required=True)
    sp.add_argument("--sigma", type=float, help="AWGN level on the 0-255 scale")
    sp.add_argument("--alpha", type=float, help="Poisson photons per unit intensity")
    sp.add_argument("--lambda", dest="lam", type=float, help="rate weight")
    sp.add_argument("--auto-lambda", action="store_true",
                    help="search lambda to match the noise residual, then retrain")
    sp.add_argument("--variant", choices=["conv", "mlp"], default="conv")
    sp.add_argument("--k", type=int, choices=[8, 16], default=8, help="patch size")
    sp.add_argument("--steps", type=int, default=20000, help="training steps")
    sp.add_argument("--distortion", choices=["mse", "poisson_nll"], default="mse")
    sp.add_argument("--clean", help="clean reference; adds psnr/ssim to the report")
    sp.add_argument("--report", help="report path (default: <out>.report.txt)")
    sp.add_argument("--loss-csv", help="loss curve path (default: <out>.loss.csv)")
    sp.add_argument("--checkpoint-out", help="also save the trained model")
    sp.add_argument("--threads", type=int, default=None,
                    help=f"worker threads (default: ${ENV_THREADS} or 1)")
    common(sp)

    sp = sub.add_parser("tune-lambda", help="residual-matching lambda search",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--model", choices=["awgn", "poisson"], required=True)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--lam0", type=float, help="starting lambda (default: profile table)")
    sp.add_argument("--variant", choices=["conv", "mlp"], default="conv")
    sp.add_argument("--k", type=int, choices=[8, 16], default=8)
    sp.add_argument("--tol", type=float, default=0.1)
    sp.add_argument("--zeta", type=float, default=0.5)
    sp.add_argument("--kmax", type=int, default=12)
    sp.add_argument("--probe-steps", type=int, default=2000)
    sp.add_argument("--threads", type=int, default=None)
    common(sp)

    sp = sub.add_parser(
        "theory-validate", help="Monte-Carlo validation of the error bounds",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        description="--theorem selects what to validate: 1 = AWGN nearest-codeword "
        "error bound, 2 = Poisson maximum-likelihood bound, 4 = Poisson "
        "normalized-MSE bound, lemma1 = Poisson KL sandwich, lemma2 = weighted "
        "Poisson tail bound.")
    sp.add_argument("--theorem", choices=["1", "2", "4", "lemma1", "lemma2"],
                    required=True)
    sp.add_argument("--n", type=int, default=64, help="signal dimension")
    sp.add_argument("--k", type=int, default=4, help="sparsity of the code")
    sp.add_argument("--delta", type=float, help="code distortion (default per theorem)")
    sp.add_argument("--eta", type=float, default=0.5, help="confidence exponent")
    sp.add_argument("--sigma", type=float, default=0.1, help="AWGN level, [0,1] scale")
    sp.add_argument("--alpha", type=float, default=25.0)
    sp.add_argument("--x-min", type=float, default=0.1)
    sp.add_argument("--x-max", type=float, default=0.9)
    sp.add_argument("--trials", type=int, default=10000)
    sp.add_argument("--grid", type=int, default=50, help="lemma1 grid resolution")
    sp.add_argument("--csv-out", help="write per-cell results as CSV")
    common(sp)

    sp = sub.add_parser("metrics", help="PSNR/SSIM between two images",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    return p


def _apply_config_file(argv: list[str]) -> list[str]:
    """Splice `--config FILE` key=value pairs in as defaults (flags override)."""
    argv = list(argv)
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise UsageError("--config needs a file path")
    path = argv[at + 1]
    del argv[at : at + 2]
    injected: list[str] = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        injected.append(f"--{key}")
        if value.lower() != "true":  # bare flags are written as key=true
            injected.append(value)
    # Insert after the subcommand so user-provided flags win (last occurrence).
    return argv[:1] + injected + argv[1:] if argv else injected


def _config_lines(args, skip=("command",)) -> list[str]:
    out = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        out.append(f"config.{key.replace('_', '-')}={getattr(args, key)}")
    return out


def _noise_model(args):
    if args.model == "awgn":
        if args.sigma is None:
            raise UsageError("--model awgn requires --sigma")
        return AwgnNoise(args.sigma / 255.0)
    if args.alpha is None:
        raise UsageError("--model poisson requires --alpha")
    return PoissonNoise(args.alpha)


def _profile_for(img: Image) -> str:
    return "set11-gray" if img.channels == 1 else "kodak-rgb"


def _starting_lambda(img: Image, noise) -> float:
    try:
        return default_lambda(_profile_for(img), noise)
    except ValueError:
        return LAMBDA_FALLBACK


# --- subcommand bodies -----------------------------------------------------------


def _cmd_add_noise(args) -> int:
    img = read_image(args.inp)
    noise = _noise_model(args)
    rng = np.random.default_rng(args.seed)
    for line in _config_lines(args):
        print(line)
    if isinstance(noise, AwgnNoise):
        write_image(add_awgn(img, noise.sigma, rng), args.out)
    else:
        sample = add_poisson(img, noise.alpha, rng)
        write_image(sample.image, args.out)
        if args.counts_out:
            if sample.counts.max() > 255:
                raise ValueError("counts exceed the 8-bit PGM range")
            write_image(Image(sample.counts / 255.0), args.counts_out)
    print(f"wrote={args.out}")
    return 0


def _cmd_estimate_noise(args) -> int:
    img = read_image(args.inp)
    for line in _config_lines(args):
        print(line)
    if args.model == "awgn":
        s = estimate_sigma(img)
        print(f"sigma_hat={s:.6f}")
        print(f"sigma_hat_255={s * 255.0:.4f}")
    else:
        counts = img.data * 255.0  # counts images store count == byte value
        a = estimate_alpha(counts)
        print(f"alpha_hat={a:.4f}")
        print(f"threshold_db={-10.0 * np.log10(1.0 / (2.0 * a)):.4f}")
    return 0


def _cmd_denoise(args) -> int:
    img = read_image(args.inp)
    noise = _noise_model(args)
    if (args.lam is None) == (not args.auto_lambda):
        raise UsageError("exactly one of --lambda or --auto-lambda is required")
    cfg = TrainConfig(lam=args.lam if args.lam is not None else LAMBDA_FALLBACK,
                      variant=args.variant, k=args.k, total_steps=args.steps,
                      seed=args.seed, distortion=args.distortion,
                      alpha=args.alpha)
    searched = None
    if args.auto_lambda:
        search = LambdaSearchConfig(lam0=_starting_lambda(img, noise),
                                    tau=residual_threshold(noise))
        searched = tune_lambda(img, cfg, search, threads=args.threads)
        cfg = replace(cfg, lam=searched.lambda_star)

    loss_csv = args.loss_csv or f"{args.out}.loss.csv"
    result = train(img, cfg, loss_csv=loss_csv)
    out = denoise(img, result.params, threads=args.threads)
    write_image(out.estimate, args.out)
    if args.checkpoint_out:
        save_checkpoint(result.params, args.checkpoint_out)

    report = [*_config_lines(args),
              f"lambda={cfg.lam}",
              f"auto_lambda_converged={searched.converged}" if searched else None,
              f"steps_trained={out.steps_trained}",
              f"residual={out.residual:.8f}",
              f"rate_bits_per_patch={out.rate_bits:.4f}",
              f"loss_csv={loss_csv}"]
    report = [r for r in report if r is not None]
    if args.clean:
        clean = read_image(args.clean)
        report.append(f"psnr_db={psnr(clean, out.estimate):.4f}")
        report.append(f"ssim={ssim(clean, out.estimate):.6f}")
    report_path = args.report or f"{args.out}.report.txt"
    Path(report_path).write_text("\n".join(report) + "\n")
    for line in report:
        print(line)
    print(f"wrote={args.out}")
    return 0


def _cmd_tune_lambda(args) -> int:
    img = read_image(args.inp)
    noise = _noise_model(args)
    cfg = TrainConfig(lam=LAMBDA_FALLBACK, variant=args.variant, k=args.k,
                      seed=args.seed, alpha=args.alpha)
    search = LambdaSearchConfig(
        lam0=args.lam0 if args.lam0 is not None else _starting_lambda(img, noise),
        tau=residual_threshold(noise), tol=args.tol, zeta=args.zeta,
        k_max=args.kmax, probe_steps=args.probe_steps)
    result = tune_lambda(img, cfg, search, threads=args.threads)
    for line in _config_lines(args):
        print(line)
    for probe in result.probes:
        print(f"probe={probe.iteration} lambda={probe.lam:.4f} "
              f"residual={probe.residual:.8f} beta={probe.beta:+.4f} "
              f"action={probe.action}")
    print(f"lambda_star={result.lambda_star:.4f}")
    print(f"converged={result.converged}")
    return 0


def _cmd_theory_validate(args) -> int:
    rng = np.random.default_rng(args.seed)
    lines = _config_lines(args)
    rows: list[dict] = []
    if args.theorem in ("1", "2", "4"):
        if args.theorem == "1":
            delta = args.delta if args.delta is not None else args.k / args.n**2
            code = SparseLevelCode(args.n, args.k, delta)
            v = validate_bound("awgn", code, eta=args.eta, trials=args.trials,
                               rng=rng, sigma=args.sigma)
        else:
            delta = args.delta if args.delta is not None else 0.0025
            base = 0.5 * (args.x_min + args.x_max)
            amp = 0.5 * (args.x_max - args.x_min)
            code = SparseLevelCode(args.n, args.k, delta, amplitude=amp, base=base)
            kind = "poisson-ml" if args.theorem == "2" else "poisson-mse"
            v = validate_bound(kind, code, eta=args.eta, trials=args.trials,
                               rng=rng, alpha=args.alpha)
        rows.append({"eta": args.eta, "R": f"{code.rate:.4f}", "n": args.n,
                     "empirical_rate": f"{v.empirical_rate:.6f}",
                     "bound": f"{v.bound:.6f}",
                     "prob_ceiling": f"{v.prob_ceiling:.6g}",
                     "violations": v.violations, "trials": v.trials,
                     "mean_error": f"{v.mean_error:.6f}",
                     "max_error": f"{v.max_error:.6f}"})
        lines += [f"rate={code.rate:.4f}", f"bound={v.bound:.6f}",
                  f"violations={v.violations}", f"trials={v.trials}",
                  f"empirical_rate={v.empirical_rate:.6f}",
                  f"prob_ceiling={v.prob_ceiling:.6g}",
                  f"ok={v.empirical_rate <= v.prob_ceiling + 3 * v.std_error}"]
    elif args.theorem == "lemma1":
        grid = np.linspace(args.x_min, args.x_max, args.grid)
        bad = 0
        for a1 in grid:
            for a2 in grid:
                kl = poisson_kl(a1, a2)
                lo, hi = poisson_kl_sandwich(a1, a2, args.x_min, args.x_max)
                ok = lo - 1e-12 <= kl <= hi + 1e-12
                bad += not ok
                rows.append({"alpha1": f"{a1:.6f}", "alpha2": f"{a2:.6f}",
                             "kl": f"{kl:.8e}", "lower": f"{lo:.8e}",
                             "upper": f"{hi:.8e}", "ok": ok})
        lines += [f"cells={len(rows)}", f"sandwich_failures={bad}", f"ok={bad == 0}"]
    else:  # lemma2
        weights = np.concatenate([np.ones(args.n // 2), -np.ones(args.n - args.n // 2)])
        means = np.full(args.n, args.alpha)
        var = float((weights**2 * means).sum())
        t = 0.8 * np.sqrt(var)
        v = validate_poisson_tail(weights, means, t, args.trials, rng)
        ok = v.upper_empirical <= v.bound and v.lower_empirical <= v.bound
        rows.append({"n": args.n, "t": f"{t:.6f}", "bound": f"{v.bound:.6f}",
                     "upper_empirical": f"{v.upper_empirical:.6f}",
                     "lower_empirical": f"{v.lower_empirical:.6f}",
                     "trials": v.trials, "ok": ok})
        lines += [f"t={t:.6f}", f"bound={v.bound:.6f}",
                  f"upper_empirical={v.upper_empirical:.6f}",
                  f"lower_empirical={v.lower_empirical:.6f}", f"ok={ok}"]

    if args.csv_out and rows:
        import csv as _csv

        with open(args.csv_out, "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        lines.append(f"csv={args.csv_out}")
    for line in lines:
        print(line)
    return 0


def _cmd_metrics(args) -> int:
    a = read_image(args.a)
    b = read_image(args.b)
    for line in _config_lines(args):
        print(line)
    print(f"psnr={psnr(a, b):.2f}")
    print(f"ssim={ssim(a, b):.4f}")
    return 0


_DISPATCH = {
    "add-noise": _cmd_add_noise,
    "estimate-noise": _cmd_estimate_noise,
    "denoise": _cmd_denoise,
    "tune-lambda": _cmd_tune_lambda,
    "theory-validate": _cmd_theory_validate,
    "metrics": _cmd_metrics,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(argv)
        args = _build_parser().parse_args(argv)
        return _DISPATCH[args.command](args)
    except SystemExit as exc:  # argparse --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"zsncd: usage error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ImageFormatError, CheckpointError) as exc:
        print(f"zsncd: i/o error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"zsncd: divergence: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"zsncd: usage error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
