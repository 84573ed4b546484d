"""Command-line front end: ``cpalm synth | solve | eval``.

Exit codes: 0 success, 2 parameter error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import mri
from .fileio import read_pgm, write_keyvalue, write_pgm
from .solver import SolverConfig, SolverError, run_multi_cpalm, write_trace_csv

EXIT_OK, EXIT_PARAM, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

logger = logging.getLogger("cpalm")


class ParamError(ValueError):
    pass


def _parse_mask(text):
    kind, _, ratio = text.partition(":")
    if kind not in ("poisson", "radial") or not ratio:
        raise ParamError(f"--mask expects poisson:RATIO or radial:RATIO, got {text!r}")
    try:
        return kind, float(ratio)
    except ValueError:
        raise ParamError(f"bad ratio in --mask {text!r}") from None


def _parse_model(text):
    if text == "logsum":
        return "logsum", None
    kind, _, p = text.partition(":")
    if kind == "lp":
        try:
            return "lp", float(p) if p else 0.5
        except ValueError:
            raise ParamError(f"bad exponent in --model {text!r}") from None
    raise ParamError(f"--model expects logsum or lp[:P], got {text!r}")


def _fmt(v: float) -> str:
    return "inf" if np.isinf(v) else f"{v:.4f}"


def evaluate(recon_path, data_dir) -> dict:
    """Metrics of a reconstruction PGM against a dataset's ground truth."""
    rec, maxval = read_pgm(recon_path)
    gt, gmax = read_pgm(Path(data_dir) / "ground_truth.pgm")
    rec = rec / maxval
    gt = gt / gmax
    if rec.shape != gt.shape:
        raise ParamError(f"recon shape {rec.shape} does not match ground truth {gt.shape}")
    return {"snr_db": _fmt(mri.snr(rec, gt)), "psnr_db": _fmt(mri.psnr(rec, gt)),
            "relerr": _fmt(mri.rel_err(rec, gt))}


def cmd_synth(args) -> int:
    kind, ratio = _parse_mask(args.mask)
    try:
        data = mri.synthesize_dataset(args.size, args.coils, kind, ratio, args.sigma, args.seed)
    except ValueError as e:
        raise ParamError(str(e)) from None
    mri.save_dataset(data, args.out)
    print(f"ratio={data.ratio:.3f}")
    return EXIT_OK


def _resolved_config(args, kind, p) -> dict:
    return {
        "data": args.data, "out": args.out, "model": kind, "lam": args.lam, "mu": args.mu,
        "theta": args.theta, "p": p, "tau": args.tau, "delta": args.delta, "beta": args.beta,
        "gamma1": args.gamma1, "gamma2": args.gamma2, "maxiter": args.maxiter,
        "tol_res": args.tol_res, "tol_inc": args.tol_inc,
        "coupling": "jacobi" if args.jacobi else "gauss-seidel", "threads": args.threads,
    }


def cmd_solve(args) -> int:
    kind, p = _parse_model(args.model)
    if args.threads < 1:
        raise ParamError("--threads must be at least 1")
    try:
        spec = mri.ModelSpec(kind=kind, lam=args.lam, mu=args.mu, theta=args.theta,
                             p=p if p is not None else 0.5, tau=args.tau, delta=args.delta,
                             beta=args.beta, gamma1=args.gamma1)
        cfg = SolverConfig(gamma1=args.gamma1, gamma2=args.gamma2, max_iter=args.maxiter,
                           tol_residual=args.tol_res, tol_increment=args.tol_inc,
                           gauss_seidel=not args.jacobi)
    except ValueError as e:
        raise ParamError(str(e)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dump_config:
        conf = _resolved_config(args, kind, p)
        write_keyvalue(out / "config.txt", conf)
        for k, v in conf.items():
            print(f"{k}={v}")

    data = mri.load_dataset(args.data)
    try:
        problem = mri.build_problem(data, spec, workers=args.threads)
    except ValueError as e:
        raise ParamError(str(e)) from None

    cpu0 = time.process_time()
    code = EXIT_OK
    try:
        z, trace, status = run_multi_cpalm(problem, cfg)
    except SolverError as e:
        logger.error("%s", e)
        z = e.state if e.state is not None else problem.z0
        trace, status, code = e.trace, type(e).__name__, EXIT_NUMERIC
    cpu = time.process_time() - cpu0

    write_trace_csv(trace, out / "trace.csv")
    write_pgm(out / "recon.pgm", mri.to_pgm_scale(z[0]), mri.PGM_MAX)
    metrics = evaluate(out / "recon.pgm", args.data)
    metrics.update(iters=len(trace), cpu_s=f"{cpu:.3f}", status=status)
    write_keyvalue(out / "metrics.txt", metrics)
    print(f"status={status} iters={len(trace)} snr_db={metrics['snr_db']}")
    return code


def cmd_eval(args) -> int:
    for k, v in evaluate(args.recon, args.data).items():
        print(f"{k}={v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpalm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic parallel-MRI dataset")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--mask", default="poisson:0.3", help="poisson:RATIO or radial:RATIO")
    s.add_argument("--sigma", type=float, default=0.005, help="k-space noise std")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("solve", help="reconstruct a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--model", default="logsum", help="logsum or lp[:P]")
    s.add_argument("--lam", type=float, default=1000.0)
    s.add_argument("--mu", type=float, default=1e-4)
    s.add_argument("--theta", type=float, default=1e-4)
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--beta", type=float, default=None, help="fixed w-step size")
    s.add_argument("--gamma1", type=float, default=1.1)
    s.add_argument("--gamma2", type=float, default=1.1)
    s.add_argument("--maxiter", type=int, default=1000)
    s.add_argument("--tol-res", type=float, default=None,
                   help="absolute residual tolerance (default: 1e-6 x first residual)")
    s.add_argument("--tol-inc", type=float, default=0.0)
    s.add_argument("--jacobi", action="store_true",
                   help="take the w-coupling gradient at the old u")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--dump-config", action="store_true")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", help="print quality metrics of a reconstruction")
    s.add_argument("--recon", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParamError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARAM
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
