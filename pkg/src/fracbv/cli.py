"""Command-line front end: ``fracbv <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import FracBVError
from .io import RunConfig, RunManifest, config_digest, field_to_image, image_to_field, load_config, read_pgm, write_pgm

log = logging.getLogger("fracbv")

CSV_HEADER = ["k", "primal", "predual", "gap", "vi_residual", "step"]


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="configuration file")
    p.add_argument("--input", help="input PGM image")
    p.add_argument("--output", type=Path, help="output directory")
    p.add_argument("--variant", choices=("riesz", "gagliardo"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracbv", description="Fractional variation tools.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in [
        ("denoise", "denoise a PGM image through the predual problem"),
        ("variation", "print both fractional variations of an image"),
        ("perimeter", "fractional perimeter of a thresholded image or of [0, 1]"),
        ("verify", "run the invariant suite"),
        ("approx-demo", "recovery sequence and density pipelines on canned inputs"),
    ]:
        _common(sub.add_parser(name, help=text, description=text))
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for key in ("variant", "alpha", "beta", "gamma", "p", "tol", "max_iter", "seed", "input"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def _outdir(args, default: str) -> Path:
    out = args.output or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cmd: str, cfg: RunConfig, grid: str, t0: float, out: Path, files: list[Path], **extra) -> None:
    RunManifest(cmd, config_digest(cfg), cfg.alpha, cfg.beta, cfg.gamma, cfg.p, grid, time.perf_counter() - t0,
                _version(), sorted(f.name for f in files), extra).write(out)


def _load_image(cfg: RunConfig):
    if not cfg.input:
        raise FracBVError("an input image is required (--input or [problem] input)")
    img = read_pgm(cfg.input)
    domain = None
    if cfg.domain:
        from .grid import parse_domain_file

        domain = parse_domain_file(cfg.domain)[0]
    return img, image_to_field(img, domain), domain


def cmd_denoise(args) -> int:
    from .denoise import DenoiseProblem, recover_primal, solve_predual

    t0 = time.perf_counter()
    cfg = _config(args)
    img, u_N, domain = _load_image(cfg)
    prob = DenoiseProblem(u_N, cfg.variant, cfg.alpha, cfg.beta, cfg.gamma, cfg.p, domain, cfg.backend)
    phi, rep = solve_predual(prob, cfg.tol, cfg.max_iter, cfg.accelerate, cfg.log_every)
    u = recover_primal(phi, prob)
    out = _outdir(args, "denoise-out")
    img_path = out / "denoised.pgm"
    write_pgm(img_path, field_to_image(u, img.max_value))
    csv_path = out / "iterations.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for k, *vals in rep.history:
            w.writerow([k] + [repr(float(v)) for v in vals])
    _manifest("denoise", cfg, u_N.grid.describe(), t0, out, [img_path, csv_path],
              iterations=rep.iterations, duality_gap=rep.duality_gap, converged=rep.converged,
              continuum_admissible=prob.continuum_admissible)
    print(f"iterations {rep.iterations}  primal {rep.primal_energy:.10g}  gap {rep.duality_gap:.3e}  "
          f"vi {rep.vi_residual:.3e}")
    if not rep.converged:
        print(f"FAIL: solver did not reach tol {cfg.tol:g} in {cfg.max_iter} iterations", file=sys.stderr)
        return 1
    return 0


def cmd_variation(args) -> int:
    from .grid import Grid, extend_by_zero
    from .variation import theorem_equivalence_check, var_riesz

    cfg = _config(args)
    img, f, _ = _load_image(cfg)
    g = f.grid
    pad = tuple(N // 2 for N in g.shape)
    big = Grid(tuple((a - p * h, b + p * h) for (a, b), p, h in zip(g.box, pad, g.spacing)),
               tuple(N + 2 * p for N, p in zip(g.shape, pad)))
    zero_ext = extend_by_zero(f.zero_extended(), big)
    vr = var_riesz(zero_ext, cfg.alpha, cfg.backend).value
    rep = theorem_equivalence_check(f, f.mask, cfg.alpha)
    print(f"Var_alpha (riesz, zero extension) {vr:.12g}")
    print(f"var_alpha (gagliardo, on domain)  {rep.value:.12g}")
    print(f"equivalence residual              {rep.residual:.3e}")
    return 0


def cmd_perimeter(args) -> int:
    from .gagliardo import frac_perimeter
    from .grid import make_grid

    cfg = _config(args)
    if cfg.input:
        _, f, _ = _load_image(cfg)
        E = f.values > 0.5
        grid = f.grid
    else:
        grid = make_grid([(-cfg.half_width, cfg.half_width)], cfg.points)
        x = grid.coords()[0]
        E = (x >= 0) & (x <= 1)
    res = frac_perimeter(E, grid, cfg.alpha)
    print(f"perimeter {res.value:.12g}")
    print(f"tail      {res.tail:.12g}")
    print(f"total     {res.total:.12g}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks

    cfg = _config(args)

    def show(r):
        print(f"{r.suite:12s} {r.name:20s} {'pass' if r.passed else 'FAIL'}  {r.detail}", flush=True)

    results = run_checks(cfg.seed, show)
    failed = [r for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(f"{r.suite}/{r.name}" for r in failed), file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_approx_demo(args) -> int:
    from .approx import density_pipeline_gagliardo, density_pipeline_riesz, recovery_sequence
    from .gagliardo import NonlocalField
    from .grid import ConvexDomain, ScalarField, make_grid
    from .riesz import RieszVectorField

    t0 = time.perf_counter()
    cfg = _config(args)
    out = _outdir(args, "approx-out")
    rng = np.random.default_rng(cfg.seed)
    files = []

    g = make_grid([(-1.5, 2.5)], 161)
    x = g.coords()[0]
    f = ScalarField(g, ((x >= 0) & (x <= 1)).astype(float))
    Om = np.abs(x - 0.5) < 1.9
    G = np.abs(x - 0.5) < 1.2
    eps = [0.2, 0.1, 0.05]
    trace = recovery_sequence(f, Om, G, eps, cfg.alpha)
    path = out / "recovery.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "seminorm", "bound"])
        for e, v in zip(trace.eps, trace.values):
            w.writerow([repr(e), repr(v), repr(trace.bound)])
    files.append(path)

    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    beta = cfg.beta
    g2 = make_grid([(-2, 2), (-2, 2)], 25)
    X, Y = g2.coords()
    c = rng.uniform(-0.5, 0.5, size=2)
    comp = np.stack([np.exp(-((X - c[0]) ** 2 + Y**2)), np.exp(-(X**2 + (Y - c[1]) ** 2))])
    comp *= beta / np.sqrt((comp**2).sum(0)).max()
    _, rr = density_pipeline_riesz(RieszVectorField(g2, comp), sq, beta, 1e-2, cfg.alpha)

    g3 = make_grid([(-1.5, 1.5), (-1.5, 1.5)], 13)
    m = sq.mask(g3)
    P = g3.points()
    A = np.outer(np.cos(P[:, 0] + c[0]), np.sin(P[:, 1] + c[1]))
    A = (A - A.T) * np.outer(m.ravel(), m.ravel())
    A *= beta / np.abs(A).max()
    _, rg = density_pipeline_gagliardo(NonlocalField(g3, A, m), sq, beta, 1e-2, cfg.alpha)
    for name, rep in (("pipeline_riesz.csv", rr), ("pipeline_gagliardo.csv", rg)):
        path = out / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "distance"])
            for stage, d in rep.rows():
                w.writerow([stage, repr(d)])
        files.append(path)
    _manifest("approx-demo", cfg, f"{g.describe()}; {g2.describe()}; {g3.describe()}", t0, out, files)
    print(f"recovery trace {', '.join(f'{v:.4f}' for v in trace.values)} (bound {trace.bound:.4f})")
    print(f"riesz pipeline total {rr.total:.3e}, gagliardo pipeline total {rg.total:.3e}")
    return 0


COMMANDS = {
    "denoise": cmd_denoise,
    "variation": cmd_variation,
    "perimeter": cmd_perimeter,
    "verify": cmd_verify,
    "approx-demo": cmd_approx_demo,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (FracBVError, OSError, ValueError) as exc:
        print(f"fracbv {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
