"""Command line entry point: ``ar2lab <subcommand> [options]``.

Exit codes: 0 on success, 1 on invalid input (including a refused Monte
Carlo run), 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from ..errors import Ar2labError, HypothesisError, ValidationError
from ..linalg_core import norm
from ..problem_gen import (
    NOISE_KINDS,
    GroundTruth,
    NoiseSpec,
    gen_ground_truth,
    gen_noise,
    observe,
    read_matrix,
    sample_mask,
    write_matrix,
)
from ..recovery import RecoveryConfig, ar2_recover, ar_recover_baseline, exact_recovery_verdict
from .config import (
    BoundOptions,
    CoeffOptions,
    ExperimentConfig,
    SemiIsoOptions,
    SeriesOptions,
    load_config,
)
from .runner import json_safe, run_experiment

log = logging.getLogger("ar2lab")

EXPERIMENT_KIND = {
    "sweep": "recovery_sweep",
    "bounds": "bound_campaign",
    "series": "series_check",
    "verify-coeffs": "coeff_verify",
    "semi-iso": "semi_iso_check",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master seed")
    p.add_argument("--config", default=d(None), help="TOML experiment config")
    p.add_argument("--out", default=d(None), help="output directory")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads")
    p.add_argument("--format", choices=("csv", "json"), default=d("csv"), help="row and record output format")


def _problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--b", type=int, help="factor entry bound")
    p.add_argument("--eps0", type=float, help="precision grid")
    p.add_argument("--noise", choices=NOISE_KINDS, dest="noise_dist")
    p.add_argument("--K-Z", type=float, dest="K_Z")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ar2lab", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a ground truth and an observation")
    _problem_flags(g)
    g.add_argument("--p", type=float, default=0.5, help="sampling density")

    rc = sub.add_parser("recover", parents=[common], help="run AR2 or the AR baseline on a saved observation")
    rc.add_argument("--observed", required=True)
    rc.add_argument("--truth", help="ground-truth matrix for an exactness verdict")
    rc.add_argument("--method", choices=("ar2", "ar"), default="ar2")
    rc.add_argument("--r-max", type=int, dest="r_max")
    rc.add_argument("--eps0", type=float)
    rc.add_argument("--K-A", type=float, dest="K_A")
    rc.add_argument("--K-Z", type=float, dest="K_Z")
    rc.add_argument("--gap-constant", type=float, default=20.0, dest="gap_constant")
    rc.add_argument("--p", type=float, help="known density (AR baseline)")
    rc.add_argument("--mu", type=float, help="coherence (AR baseline)")
    rc.add_argument("--r", type=int, help="rank (AR baseline)")

    for name in ("sweep", "bounds"):
        s = sub.add_parser(name, parents=[common], help=f"{EXPERIMENT_KIND[name]} experiment")
        _problem_flags(s)
        s.add_argument("--r-max", type=int, dest="r_max")
        s.add_argument("--densities", type=_floats)
        s.add_argument("--trials", type=int)
        s.add_argument("--gap-constant", type=float, dest="gap_constant")
        if name == "sweep":
            s.add_argument("--no-report", action="store_true", help="skip perturbation scalars")
        else:
            s.add_argument("--s", type=int, help="prefix size (default r)")

    se = sub.add_parser("series", parents=[common], help="resolvent series convergence check")
    se.add_argument("--m", type=int)
    se.add_argument("--n", type=int)
    se.add_argument("--sigma", type=_floats)
    se.add_argument("--S", type=_ints, dest="S")
    se.add_argument("--nu", type=int, choices=(0, 1))
    se.add_argument("--gamma-max", type=int, dest="gamma_max")
    se.add_argument("--target-ratio", type=float, dest="target_ratio")

    vc = sub.add_parser("verify-coeffs", parents=[common], help="residue vs quadrature coefficient campaign")
    vc.add_argument("--samples", type=int)
    vc.add_argument("--gamma-max", type=int, dest="gamma_max")
    vc.add_argument("--beta-max", type=int, dest="beta_max")
    vc.add_argument("--ranks", type=_ints)

    si = sub.add_parser("semi-iso", parents=[common], help="semi-isotropic Monte Carlo")
    si.add_argument("--m", type=int)
    si.add_argument("--n", type=int)
    si.add_argument("--r", type=int)
    si.add_argument("--trials", type=int)
    si.add_argument("--M", type=float, dest="M")
    si.add_argument("--a-max", type=int, dest="a_max")
    si.add_argument("--p-moment", type=int, dest="p_moment")
    si.add_argument("--D-even", type=float, dest="D_even")
    si.add_argument("--D-odd", type=float, dest="D_odd")
    si.add_argument("--k", type=int)
    si.add_argument("--allow-outside-hypothesis", action="store_true")
    return parser


# ---------------------------------------------------------------------------
# output helpers


def _emit(record: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(json_safe(record), indent=2, default=str))
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(record.keys())
    w.writerow(record.values())
    sys.stdout.write(buf.getvalue())


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> dict:
    m, n = args.m or 100, args.n or 100
    r, b, eps0 = args.r or 3, args.b or 2, args.eps0 or 1.0
    seed = args.seed if args.seed is not None else 0
    noise = NoiseSpec(K_Z=args.K_Z if args.K_Z is not None else 0.0, distribution=args.noise_dist or "zero")
    gt = gen_ground_truth(m, n, r, b, eps0, seed)
    mask = sample_mask(m, n, args.p, seed)
    obs = observe(gt, mask, gen_noise(m, n, noise, seed))
    out = _out_dir(args)
    write_matrix(out / "truth.txt", gt.A, r=r, eps0=eps0, K_A=gt.K_A, seed=seed)
    write_matrix(out / "mask.txt", mask.mask.astype(float))
    write_matrix(out / "observed.txt", obs.observed, p=args.p, omega_size=mask.omega_size, eps0=eps0,
                 K_A=gt.K_A, K_Z=noise.K_Z, r=r, seed=seed)
    return {"m": m, "n": n, "r": r, "p": args.p, "omega_size": mask.omega_size, "K_A": gt.K_A,
            "seed": seed, "out": str(out)}


def _header_float(header: dict, key: str, given):
    if given is not None:
        return given
    if key not in header:
        raise ValidationError(f"--{key.replace('_', '-')} is required (not in the matrix header)")
    try:
        return float(header[key])
    except ValueError as exc:
        raise ValidationError(f"bad {key} in matrix header: {header[key]!r}") from exc


def cmd_recover(args) -> dict:
    observed, header = read_matrix(args.observed)
    eps0 = _header_float(header, "eps0", args.eps0)
    out = _out_dir(args)
    record: dict = {"method": args.method}
    if args.method == "ar2":
        r_max = args.r_max if args.r_max is not None else int(_header_float(header, "r", None))
        omega = int(_header_float(header, "omega_size", None))
        cfg = RecoveryConfig(eps0=eps0, r_max=r_max, K_A=_header_float(header, "K_A", args.K_A),
                             K_Z=_header_float(header, "K_Z", args.K_Z), gap_constant=args.gap_constant)
        res = ar2_recover(observed, omega, cfg)
        A_out = res.A_out
        record.update(res.summary())
    else:
        if args.mu is None:
            raise ValidationError("--mu is required for the AR baseline")
        p = _header_float(header, "p", args.p)
        r = args.r if args.r is not None else int(_header_float(header, "r", None))
        A_out = ar_recover_baseline(observed, p, args.mu, r, eps0)
    write_matrix(out / "A_out.txt", A_out, eps0=eps0)
    if args.truth:
        A, th = read_matrix(args.truth)
        gt = GroundTruth.from_matrix(A, int(_header_float(th, "r", None)), eps0=eps0)
        v = exact_recovery_verdict(A_out, gt)
        record.update({"exact": v.exact, "n_errors": v.n_errors, "max_abs_dev": v.max_abs_dev,
                       "out_vs_truth_inf": norm(A_out - gt.A, "infinity")})
    (out / "result.json").write_text(json.dumps(json_safe(record), indent=2) + "\n")
    return record


def _replace(obj, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return dataclasses.replace(obj, **kw) if kw else obj


def _experiment_config(args) -> ExperimentConfig:
    kind = EXPERIMENT_KIND[args.command]
    if args.config:
        cfg = load_config(args.config)
        if cfg.kind != kind:
            raise ValidationError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        return cfg.with_overrides(seed=args.seed, out=args.out)
    g = vars(args).get
    base = ExperimentConfig(kind=kind)
    if args.command in ("sweep", "bounds"):
        noise = None
        if g("noise_dist") is not None or g("K_Z") is not None:
            noise = NoiseSpec(K_Z=g("K_Z") or 0.0, distribution=g("noise_dist") or "uniform_bounded")
        cfg = _replace(base, m=g("m"), n=g("n"), r=g("r"), r_max=g("r_max"), b=g("b"), eps0=g("eps0"),
                       noise=noise, densities=g("densities"), trials=g("trials"),
                       gap_constant=g("gap_constant"))
        if args.command == "sweep" and g("no_report"):
            cfg = dataclasses.replace(cfg, report=False)
        if args.command == "bounds" and g("s") is not None:
            cfg = dataclasses.replace(cfg, bounds=BoundOptions(s=g("s")))
    elif args.command == "series":
        opts = _replace(SeriesOptions(), sigma=g("sigma"), S=g("S"), nu=g("nu"), gamma_max=g("gamma_max"),
                        target_ratio=g("target_ratio"))
        cfg = _replace(base, m=g("m") or 24, n=g("n") or 24, r=len(opts.sigma), series=opts)
    elif args.command == "verify-coeffs":
        opts = _replace(CoeffOptions(), samples=g("samples"), gamma_max=g("gamma_max"),
                        beta_max=g("beta_max"), ranks=g("ranks"))
        cfg = _replace(base, coeffs=opts)
    else:
        opts = _replace(SemiIsoOptions(), M=g("M"), a_max=g("a_max"), p_moment=g("p_moment"),
                        D_even=g("D_even"), D_odd=g("D_odd"), k=g("k"),
                        allow_outside_hypothesis=True if g("allow_outside_hypothesis") else None)
        cfg = _replace(base, m=g("m") or 200, n=g("n") or 200, r=g("r"), trials=g("trials") or 100,
                       semi_iso=opts)
    return cfg.with_overrides(seed=args.seed, out=args.out)


def cmd_experiment(args) -> dict:
    cfg = _experiment_config(args)
    return run_experiment(cfg, threads=args.threads, fmt=args.format)


COMMANDS = {"generate": cmd_generate, "recover": cmd_recover}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        record = COMMANDS.get(args.command, cmd_experiment)(args)
        if args.command in COMMANDS:
            _emit(record, args.format)
        else:
            print(json.dumps(json_safe(record), indent=2, default=str))
        return 0
    except (ValidationError, HypothesisError) as exc:
        log.error("%s", exc)
        return 1
    except (Ar2labError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
