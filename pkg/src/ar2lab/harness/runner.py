"""Seeded experiment execution, row persistence and summaries."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..coherence import coherence
from ..contour_calc import verify_coefficient_bounds
from ..errors import SchemaError, ValidationError
from ..linalg_core import norm, svd
from ..perturbation_lab import (
    deterministic_dk_bounds,
    dk_matcom_bound,
    perturbation_report,
    resolvent_series_check,
    semi_isotropic_check,
    series_fixture,
    subspace_diff,
)
from ..problem_gen import gen_ground_truth, gen_noise, observe, rng_for, sample_mask
from ..recovery import RecoveryConfig, ar2_recover, exact_recovery_verdict
from .config import ExperimentConfig

SCHEMA_VERSION = "ar2lab-rows-1"
#: columns that identify a cell; rows are grouped on whichever are present
CELL_KEYS = ("kind", "m", "n", "p", "rank", "case", "a")
QUANTILES = (0.05, 0.5, 0.95)


def trial_seed(master: int, cell: int, trial: int) -> int:
    """Seed of one trial, independent of scheduling order."""
    return int(rng_for(master, 31, cell, trial).integers(0, 2**63))


# ---------------------------------------------------------------------------
# single trials


def _completion_instance(cfg: ExperimentConfig, p: float, seed: int):
    gt = gen_ground_truth(cfg.m, cfg.n, cfg.r, cfg.b, cfg.eps0, seed)
    mask = sample_mask(cfg.m, cfg.n, p, seed)
    Z = gen_noise(cfg.m, cfg.n, cfg.noise, seed)
    return gt, mask, observe(gt, mask, Z)


def _hypothesis_flags(cfg: ExperimentConfig, gt, obs, p: float, mu0: float) -> dict:
    m, n, r = cfg.m, cfg.n, cfg.r
    N = m + n
    L = math.log(N)
    K = gt.K_A + cfg.noise.K_Z
    r_max = cfg.effective_r_max
    density = (1 / m + 1 / n) * max(L**4, r**3 * K**2 / cfg.eps0**2 * (1 + mu0**2 / L**2)) * L**6
    return {
        "large_signal_ok": bool(gt.sigma[0] >= 100 * r * K * math.sqrt(r_max * N / p)),
        "density_ok": bool(p >= density),
        "E_norm_ok": bool(norm(obs.E, "operator") <= 2 * K * math.sqrt(N / p)),
        "rho_ok": bool(abs(obs.mask.rho - 1) <= L / math.sqrt(p * m * n)),
    }


def recovery_trial(cfg: ExperimentConfig, p: float, cell: int, trial: int) -> dict:
    seed = trial_seed(cfg.seed, cell, trial)
    gt, mask, obs = _completion_instance(cfg, p, seed)
    K = gt.K_A + cfg.noise.K_Z
    rc = RecoveryConfig(eps0=cfg.eps0, r_max=cfg.effective_r_max, K_A=gt.K_A, K_Z=cfg.noise.K_Z,
                        gap_constant=cfg.gap_constant)
    res = ar2_recover(obs.observed, mask.omega_size, rc)
    verdict = exact_recovery_verdict(res.A_out, gt)
    coh = coherence(gt.factors, cfg.r)

    # localization of the rank-r approximation of A + E (true p)
    r = cfg.r
    approx = svd(obs.rescaled_true).reconstruct(r) - gt.A_s(r)
    loc_inf, loc_op = norm(approx, "infinity"), norm(approx, "operator")
    dk = dk_matcom_bound(gt, p, K, coh.mu0, r)

    row = dict(cfg.scalars())
    row.update({
        "p": p,
        "trial": trial,
        "seed": seed,
        "gt_attempts": gt.attempts,
        "mu0": coh.mu0,
        "mu1": coh.mu1,
        "p_hat": mask.p_hat,
        "rho": mask.rho,
        "s": res.s,
        "threshold": res.threshold_used,
        "exact": verdict.exact,
        "n_errors": verdict.n_errors,
        "pre_round_inf": norm(res.A_hat_s - gt.A, "infinity"),
        "approx_inf": loc_inf,
        "approx_op": loc_op,
        "localization_ratio": loc_inf / loc_op if loc_op > 0 else 0.0,
        "dk_bound": dk.value,
        "dk_bound_ratio": loc_inf / dk.value,
        "gap_ok": dk.gap_ok,
        "sample_density_ok": dk.density_ok,
    })
    row.update(_hypothesis_flags(cfg, gt, obs, p, coh.mu0))
    if cfg.report:
        rep = perturbation_report(gt, obs.E, range(1, r + 1))
        row.update({
            "E_op": rep.E_op,
            "UEV_inf": rep.UEV_inf,
            "y": rep.y,
            "tau1_det": rep.tau1_det,
            "tau2_det": rep.tau2_det,
            "R1": rep.R1,
            "R2": rep.R2,
            "R3": rep.R3,
            "hypothesis_ok": rep.hypothesis_ok,
        })
    return row


def bound_trial(cfg: ExperimentConfig, p: float, cell: int, trial: int) -> dict:
    seed = trial_seed(cfg.seed, cell, trial)
    gt, mask, obs = _completion_instance(cfg, p, seed)
    K = gt.K_A + cfg.noise.K_Z
    s = cfg.bounds.s or cfg.r
    S = tuple(range(1, s + 1))
    coh = coherence(gt.factors, cfg.r)
    rep = perturbation_report(gt, obs.E, S, varsigma=K / math.sqrt(p), M=1 / math.sqrt(p))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        diff = subspace_diff(gt, obs.E, S)
    det = deterministic_dk_bounds(rep, gt, S)
    dk = dk_matcom_bound(gt, p, K, coh.mu0, s)

    def ratio(a, b):
        return a / b if b > 0 else float("nan")

    row = dict(cfg.scalars())
    row.update({
        "p": p,
        "trial": trial,
        "seed": seed,
        "s": s,
        "mu0": coh.mu0,
        "E_op": rep.E_op,
        "y": rep.y,
        "tau1_det": rep.tau1_det,
        "tau2_det": rep.tau2_det,
        "tau1_rand": rep.tau1_rand,
        "tau2_rand": rep.tau2_rand,
        "R1": rep.R1,
        "R2": rep.R2,
        "R3": rep.R3,
        "R_S": rep.R_S,
        "hypothesis_ok": rep.hypothesis_ok,
        "weyl_separated": diff.weyl_separated,
        "U_entry": diff.norms_U["infinity"],
        "V_entry": diff.norms_V["infinity"],
        "U_row": diff.norms_U["two_to_infinity"],
        "V_row": diff.norms_V["two_to_infinity"],
        "approx_inf": diff.approx_diff_inf,
        "bound_entry_U": det.entry_tau1,
        "bound_entry_V": det.entry_tau2,
        "bound_approx": det.approx,
        "bound_matcom": dk.value,
        "entry_U_ratio": ratio(diff.norms_U["infinity"], det.entry_tau1),
        "entry_V_ratio": ratio(diff.norms_V["infinity"], det.entry_tau2),
        "row_U_ratio": ratio(diff.norms_U["two_to_infinity"], det.row_tau1),
        "row_V_ratio": ratio(diff.norms_V["two_to_infinity"], det.row_tau2),
        "approx_ratio": ratio(diff.approx_diff_inf, det.approx),
        "matcom_ratio": ratio(diff.approx_diff_inf, dk.value),
    })
    return row


# ---------------------------------------------------------------------------
# experiments


def _map(fn: Callable, jobs: list, threads: int) -> list:
    if threads <= 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


def _trial_rows(cfg: ExperimentConfig, fn: Callable, threads: int) -> list[dict]:
    jobs = [(cfg, p, cell, t) for cell, p in enumerate(cfg.densities) for t in range(cfg.trials)]
    return _map(fn, jobs, threads)


def _series_rows(cfg: ExperimentConfig) -> list[dict]:
    o = cfg.series
    gt, E = series_fixture(cfg.m, cfg.n, o.sigma, o.target_ratio, o.S, cfg.seed)
    check = resolvent_series_check(gt, E, o.S, o.nu, o.gamma_max)
    base = {"kind": cfg.kind, "m": cfg.m, "n": cfg.n, "nu": o.nu, "S": " ".join(map(str, o.S)),
            "nodes_used": check.nodes_used, "hypothesis_ok": check.hypothesis_ok,
            "exact_norm": check.exact_norm, "master_seed": cfg.seed}
    return [{**base, **row} for row in check.rows()]


def _coeff_rows(cfg: ExperimentConfig, threads: int) -> list[dict]:
    o = cfg.coeffs
    jobs = [(o.samples, o.gamma_max, rank, cfg.seed + 1000 * rank, o.beta_max) for rank in o.ranks]
    out = []
    for rank, samples in zip(o.ranks, _map(verify_coefficient_bounds, jobs, threads)):
        for smp in samples:
            row = {"kind": cfg.kind, "rank": rank, "master_seed": cfg.seed}
            row.update(smp.as_row())
            out.append(row)
    return out


def _semi_iso_rows(cfg: ExperimentConfig) -> list[dict]:
    o = cfg.semi_iso
    rows = semi_isotropic_check(cfg.m, cfg.n, o.M, o.a_max, o.p_moment, cfg.trials, cfg.seed,
                                D_even=o.D_even, D_odd=o.D_odd, r=cfg.r, k=o.k,
                                allow_outside_hypothesis=o.allow_outside_hypothesis)
    return [{"kind": cfg.kind, "m": cfg.m, "n": cfg.n, "M": o.M, "p_moment": o.p_moment,
             "master_seed": cfg.seed, **row.as_dict()} for row in rows]


def collect_rows(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """Every row of an experiment, in canonical order."""
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    if cfg.kind == "recovery_sweep":
        return _trial_rows(cfg, recovery_trial, threads)
    if cfg.kind == "bound_campaign":
        return _trial_rows(cfg, bound_trial, threads)
    if cfg.kind == "series_check":
        return _series_rows(cfg)
    if cfg.kind == "coeff_verify":
        return _coeff_rows(cfg, threads)
    return _semi_iso_rows(cfg)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, fmt: str = "csv",
                   out: str | Path | None = None) -> dict:
    """Run ``cfg``; write rows and ``summary.json`` to ``out`` (or ``cfg.out``) if set.

    Returns the summary. Rows are identical for any ``threads`` value.
    """
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown format {fmt!r}")
    start = time.perf_counter()
    rows = collect_rows(cfg, threads)
    summary = summarize(rows)
    summary["wall_time_s"] = time.perf_counter() - start
    summary["threads"] = threads
    out = out if out is not None else cfg.out
    if out is not None:
        out = Path(out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            if fmt == "csv":
                write_csv(out / "rows.csv", rows)
            else:
                (out / "rows.json").write_text(json.dumps(json_safe(rows), indent=1, allow_nan=False) + "\n")
            (out / "summary.json").write_text(json.dumps(json_safe(summary), indent=2, allow_nan=False) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write results to {out}: {exc}") from exc
    return summary


# ---------------------------------------------------------------------------
# persistence and summaries


def json_safe(x):
    """Recursively replace NaN and infinities by None so the output is valid JSON."""
    if isinstance(x, dict):
        return {k: json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _json_default(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _cell(x) -> str:
    if isinstance(x, (tuple, list)):
        return " ".join(str(v) for v in x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _check_schema(rows: list[dict]) -> list[str]:
    if not rows:
        raise SchemaError("no rows")
    keys = list(rows[0])
    first = set(keys)
    for i, row in enumerate(rows):
        if set(row) != first:
            extra, missing = sorted(set(row) - first), sorted(first - set(row))
            raise SchemaError(f"row {i} differs from row 0: extra {extra}, missing {missing}")
    return keys


def write_csv(path, rows: list[dict]) -> None:
    keys = _check_schema(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([_cell(row[k]) for k in keys])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _is_bool(v) -> bool:
    return isinstance(v, (bool, np.bool_))


def _is_num(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not _is_bool(v)


def _quantiles(vals: Iterable[float]) -> dict:
    arr = np.array([v for v in vals if not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return {f"q{int(q * 100):02d}": float("nan") for q in QUANTILES}
    return {f"q{int(q * 100):02d}": float(np.quantile(arr, q)) for q in QUANTILES}


def summarize(rows: list[dict]) -> dict:
    """Per-cell counts, success and flag rates, error and ratio quantiles.

    Cells are the distinct values of the :data:`CELL_KEYS` columns present.
    Every boolean column becomes a rate; ``pre_round_inf`` gets median and
    95th percentile; every ``*_ratio`` column gets 5/50/95% quantiles.
    """
    keys = _check_schema(rows)
    cell_keys = [k for k in CELL_KEYS if k in keys]
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in cell_keys), []).append(row)
    cells = []
    for key, grp in groups.items():
        cell = {k: _json_default(v) if not isinstance(v, (str, int, float)) else v
                for k, v in zip(cell_keys, key)}
        cell["count"] = len(grp)
        for k in keys:
            vals = [row[k] for row in grp]
            if all(_is_bool(v) for v in vals):
                cell[f"{k}_rate"] = float(np.mean(vals))
        if "exact" in keys:
            cell["success_rate"] = cell["exact_rate"]
        if "pre_round_inf" in keys:
            err = [row["pre_round_inf"] for row in grp]
            cell["pre_round_inf_median"] = float(np.median(err))
            cell["pre_round_inf_p95"] = float(np.quantile(err, 0.95))
        for k in keys:
            if k.endswith("_ratio") and all(_is_num(row[k]) for row in grp):
                cell[f"{k}_quantiles"] = _quantiles(float(row[k]) for row in grp)
        cells.append(cell)
    return {"schema_version": SCHEMA_VERSION, "rows": len(rows), "cells": cells}


__all__ = [
    "collect_rows",
    "read_csv",
    "recovery_trial",
    "bound_trial",
    "run_experiment",
    "summarize",
    "trial_seed",
    "write_csv",
]
