"""Batch experiments: GEMM/LU accuracy, refinement, GMRES, bound audit, speed-up.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns a
list of row dicts in a fixed column order.  Every trial draws from its own
stream seeded by ``(seed, trial)`` plus a per-cell offset, so results do
not depend on execution order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import gen
from .gen import GenSpec, gen_matrix, gen_vector, parse_dist, trial_rng
from .kernels import (
    combine_bins,
    dot_f32_reference_batch,
    dot_split_batch,
    gemm_f32_reference,
    gemm_f64_reference,
    gemm_partials,
    get_scheme,
)
from .linalg import SingularMatrixError, getrf, getrs, gmres_preconditioned, iterative_refinement
from .metrics import (
    ErrorStats,
    check_bound_batch,
    elementwise_error_ratio,
    exact_accumulation_guaranteed,
    rel_frobenius_error,
)
from .split import split_matrix

EXPERIMENTS = ("gemm-accuracy", "getrf-accuracy", "refine", "gmres", "speedup", "bound-audit")

# (default trials, full-scale trials)
TRIALS = {
    "gemm-accuracy": (100, 1000),
    "getrf-accuracy": (25, 100),
    "refine": (25, 100),
    "gmres": (25, 100),
    "bound-audit": (224, 224),
    "speedup": (1, 1),
}

DEFAULTS = {
    "gemm-accuracy": dict(dists=("uniform",), sizes=(64, 128, 256), schemes=("b2x3", "sgemm", "b3x6", "b3x6d")),
    "getrf-accuracy": dict(dists=("uniform", "wide"), sizes=(100, 200, 300), schemes=("b3x6",)),
    "refine": dict(dists=("cond:10", "cond:100", "cond:1000", "cond:10000"), sizes=(50,),
                   schemes=("fp32", "bf16", "fp16")),
    "gmres": dict(dists=("diagdom",), sizes=(10, 50, 100), schemes=("fp32", "bf16", "fp16")),
    "bound-audit": dict(dists=("uniform", "wide", "gaussian"),
                        sizes=(0, 1, 2, 3, 5, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096), schemes=("b3x6",)),
    "speedup": dict(dists=(), sizes=(), schemes=("b3x6", "b2x3", "b3x9", "b1x1")),
}

DEFAULT_DENSITIES = (8, 16, 32)

COLUMNS = {
    "gemm-accuracy": ["experiment", "config_hash", "seed", "dist", "size", "scheme",
                      "mean_rel_err", "max_rel_err", "trials"],
    "getrf-accuracy": ["experiment", "config_hash", "seed", "range", "size", "scheme", "error_ratio",
                       "used_elements", "excluded_elements", "resampled", "pivot_mismatches", "trials"],
    "refine": ["experiment", "config_hash", "seed", "precision", "cond", "n", "pct_converged",
               "mean_iters", "trials"],
    "gmres": ["experiment", "config_hash", "seed", "precision", "cond", "n", "pct_converged",
              "mean_iters", "trials"],
    "bound-audit": ["experiment", "config_hash", "seed", "dist", "n", "bound_kind", "violations",
                    "min_slack", "max_error", "trials"],
    "speedup": ["experiment", "config_hash", "seed", "scheme", "products", "density",
                "projected_speedup", "projected_speedup_exact"],
}


class ConfigError(ValueError):
    pass


class BoundViolation(RuntimeError):
    def __init__(self, rows):
        super().__init__(f"{sum(r['violations'] for r in rows)} bound violations")
        self.rows = rows


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dists: tuple = ()
    sizes: tuple = ()
    schemes: tuple = ()
    trials: int | None = None
    seed: int = 0
    paper_scale: bool = False
    densities: tuple = ()
    out: str | None = field(default=None, compare=False)

    def resolved(self) -> "ExperimentConfig":
        """Fill unset fields with the experiment's defaults and validate."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        d = DEFAULTS[self.experiment]
        trials = self.trials
        if trials is None:
            trials = TRIALS[self.experiment][1 if self.paper_scale else 0]
        cfg = replace(
            self,
            dists=tuple(self.dists) or d["dists"],
            sizes=tuple(int(s) for s in self.sizes) or d["sizes"],
            schemes=tuple(s.lower() for s in self.schemes) or d["schemes"],
            trials=int(trials),
            densities=tuple(self.densities) or (DEFAULT_DENSITIES if self.experiment == "speedup" else ()),
        )
        cfg._validate()
        return cfg

    def _validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.experiment not in ("speedup",) and not self.sizes:
            raise ConfigError("sizes must be nonempty")
        if any(s < 0 for s in self.sizes):
            raise ConfigError("sizes must be nonnegative")
        if self.experiment in ("getrf-accuracy", "refine", "gmres") and any(s < 1 for s in self.sizes):
            raise ConfigError("matrix orders must be positive")
        allowed = _allowed_schemes(self.experiment)
        for s in self.schemes:
            if s not in allowed:
                raise ConfigError(f"scheme {s!r} not valid for {self.experiment}")
        for text in self.dists:
            try:
                parse_dist(text)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for d in self.densities:
            try:
                ok = Fraction(str(d)) > 0
            except (ValueError, ZeroDivisionError):
                ok = False
            if not ok:
                raise ConfigError(f"density {d!r} is not a positive number")

    def config_hash(self) -> str:
        d = asdict(self)
        d.pop("out")
        d["densities"] = [str(x) for x in d["densities"]]
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _allowed_schemes(experiment):
    split_names = {"b1x1", "b2x3", "b3x6", "b3x9", "b2x3x5"}
    split_names |= {s + "d" for s in split_names}
    if experiment == "gemm-accuracy":
        return split_names | {"sgemm"}
    if experiment in ("getrf-accuracy", "speedup"):
        return {s for s in split_names if not s.endswith("d")}
    if experiment == "refine":
        return {"fp32", "bf16", "fp16", "fp64"}
    if experiment == "gmres":
        return {"fp32", "bf16", "fp16", "fp64", "none"}
    if experiment == "bound-audit":
        return {"b3x6"}
    return set()


def experiment_spec(text: str, seed: int = 0) -> GenSpec:
    """Parse a distribution, mapping bare ``wide`` to the product-safe range."""
    spec = parse_dist(text, seed)
    if text.strip() == "wide":
        lo, hi = gen.PRODUCT_SAFE_EXPONENTS
        spec = replace(spec, exp_min=lo, exp_max=hi)
    return spec


def _cell_seed(seed, *parts) -> int:
    """Stable sub-seed for one cell of a sweep."""
    h = hashlib.sha256(json.dumps([seed, *map(str, parts)]).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _row(cfg, **values):
    return {"experiment": cfg.experiment, "config_hash": cfg.config_hash(), "seed": cfg.seed, **values}


# -- GEMM accuracy -----------------------------------------------------------


def _split_schemes(names):
    return [get_scheme(s) for s in names if s != "sgemm"]


def run_gemm_accuracy(cfg: ExperimentConfig) -> list:
    cfg = cfg.resolved()
    schemes = _split_schemes(cfg.schemes)
    pairs = sorted({p for s in schemes for p in s.pairs})
    kx = max([s.x_splits for s in schemes], default=1)
    ky = max([s.y_splits for s in schemes], default=1)
    rows = []
    for dist in cfg.dists:
        for n in cfg.sizes:
            errs = {s: [] for s in cfg.schemes}
            cell = _cell_seed(cfg.seed, "gemm", dist, n)
            for t in range(cfg.trials):
                rng = trial_rng(cell, t)
                spec = experiment_spec(dist)
                A = gen_matrix(spec, (n, n), rng)
                B = gen_matrix(spec, (n, n), rng)
                D = gemm_f64_reference(A, B)
                if "sgemm" in errs:
                    errs["sgemm"].append(_relerr(gemm_f32_reference(A, B), D))
                if schemes:
                    Z = gemm_partials(split_matrix(A, kx), split_matrix(B, ky), pairs)
                    for s in schemes:
                        C, _ = combine_bins(Z, s)
                        errs[s.name].append(_relerr(C, D))
            for s in cfg.schemes:
                st = ErrorStats.from_samples(errs[s])
                rows.append(_row(cfg, dist=dist, size=n, scheme=s, mean_rel_err=st.mean_rel,
                                 max_rel_err=st.max_rel, trials=cfg.trials))
    return rows


def _relerr(C, D):
    if np.linalg.norm(D) == 0:
        return 0.0 if not np.any(C) else math.inf
    return rel_frobenius_error(C, D)


# -- LU accuracy ---------------------------------------------------------------


def run_getrf_accuracy(cfg: ExperimentConfig) -> list:
    """Mean elementwise error ratio (FP32 LU error) / (split LU error) vs FP64 LU."""
    cfg = cfg.resolved()
    rows = []
    for dist in cfg.dists:
        for scheme in cfg.schemes:
            for n in cfg.sizes:
                cell = _cell_seed(cfg.seed, "getrf", dist, n)
                ratios, used, excluded, resampled, mismatched = [], 0, 0, 0, 0
                for t in range(cfg.trials):
                    rng = trial_rng(cell, t)
                    while True:
                        A = gen_matrix(experiment_spec(dist), (n, n), rng)
                        try:
                            ref = getrf(A, "fp64")
                            f32 = getrf(A, "fp32")
                            fs = getrf(A, scheme)
                            break
                        except SingularMatrixError:
                            resampled += 1
                    if not (np.array_equal(ref.perm, f32.perm) and np.array_equal(ref.perm, fs.perm)):
                        mismatched += 1
                    e32 = np.abs(f32.lu.astype(np.float64) - ref.lu)
                    es = np.abs(fs.lu.astype(np.float64) - ref.lu)
                    if not np.any(es) and not np.any(e32):
                        ratios.append(1.0)
                        continue
                    r = elementwise_error_ratio(e32, es)
                    ratios.append(r.ratio)
                    used += r.used
                    excluded += r.excluded
                rows.append(_row(cfg, range=dist, size=n, scheme=scheme, error_ratio=float(np.mean(ratios)),
                                 used_elements=used, excluded_elements=excluded, resampled=resampled,
                                 pivot_mismatches=mismatched, trials=cfg.trials))
    return rows


# -- solvers -------------------------------------------------------------------


def _solver_rows(cfg, solve):
    rows = []
    for dist in cfg.dists:
        for n in cfg.sizes:
            for prec in cfg.schemes:
                cell = _cell_seed(cfg.seed, cfg.experiment, dist, n)
                conv, iters = 0, []
                spec = experiment_spec(dist)
                for t in range(cfg.trials):
                    rng = trial_rng(cell, t)
                    A = gen_matrix(spec, n, rng)
                    b = gen_vector(GenSpec("uniform"), n, rng)
                    try:
                        _, rep = solve(A, b, prec, spec.cond)
                    except (SingularMatrixError, ArithmeticError, RuntimeError):
                        continue
                    if rep.converged:
                        conv += 1
                        iters.append(rep.iterations)
                rows.append(_row(cfg, precision=prec, cond=dist.split(":", 1)[1] if spec.cond else dist, n=n,
                                 pct_converged=100.0 * conv / cfg.trials,
                                 mean_iters=float(np.mean(iters)) if iters else float("nan"),
                                 trials=cfg.trials))
    return rows


def run_refine(cfg: ExperimentConfig) -> list:
    cfg = cfg.resolved()

    def solve(A, b, prec, cond):
        return iterative_refinement(A, b, prec, cond=cond)

    return _solver_rows(cfg, solve)


def run_gmres(cfg: ExperimentConfig) -> list:
    """GMRES preconditioned by a low-precision LU, started from that LU's solution."""
    cfg = cfg.resolved()

    def solve(A, b, prec, cond):
        if prec == "none":
            return gmres_preconditioned(A, b, None, cond=cond)
        f = getrf(A, prec)
        return gmres_preconditioned(A, b, f, cond=cond, x0=getrs(f, b))

    return _solver_rows(cfg, solve)


# -- speed-up projection -------------------------------------------------------


def run_speedup(cfg: ExperimentConfig) -> list:
    """Projected speed-up over FP32: BF16 density / number of products."""
    cfg = cfg.resolved()
    rows = []
    for s in cfg.schemes:
        k = get_scheme(s).n_products
        for d in cfg.densities:
            frac = Fraction(str(d)) / k
            rows.append(_row(cfg, scheme=s, products=k, density=d, projected_speedup=float(frac),
                             projected_speedup_exact=str(frac)))
    return rows


def projected_speedup(density, products: int = 6) -> Fraction:
    if density <= 0:
        raise ValueError("density must be positive")
    return Fraction(str(density)) / products


# -- bound audit ---------------------------------------------------------------


def exact_case_vectors(rng, n):
    """FP32 vectors whose level-0 BF16 products accumulate exactly.

    Magnitudes sit in [1, 2) so every product lies in [1, 4); with n <= 64
    the running sum stays within 24 bits of the lowest product bit.
    """
    if not 0 < n <= 64:
        raise ValueError("exact-case vectors need 1 <= n <= 64")
    x = rng.uniform(1.0, 2.0, n) * rng.choice([-1.0, 1.0], n)
    y = rng.uniform(1.0, 2.0, n) * rng.choice([-1.0, 1.0], n)
    return x.astype(np.float32), y.astype(np.float32)


EXACT_CASE_SIZES = (1, 2, 4, 8, 16, 32, 64)


def run_bound_audit(cfg: ExperimentConfig, raise_on_violation: bool = True) -> list:
    """Sweep dot-product sizes and distributions through the error bounds.

    ``min_slack`` is the smallest (bound - |error|) / z~ over the trials
    (zero where z~ = 0).  Any violation raises :class:`BoundViolation`
    after all rows are computed, unless ``raise_on_violation`` is False.
    """
    cfg = cfg.resolved()
    scheme = get_scheme("b3x6")
    rows = []

    def audit(label, n, X, Y, kinds):
        sx, sy = split_matrix(X), split_matrix(Y)
        z2, parts = dot_split_batch(sx, sy, scheme)
        zf = dot_f32_reference_batch(X, Y)
        zt = np.abs(X.astype(np.float64) * Y.astype(np.float64)).sum(axis=-1)
        for kind in kinds:
            computed = zf if kind == "fp32_dot" else z2
            ok, slack = check_bound_batch(kind, X, Y, computed)
            norm = np.where(zt > 0, slack / np.where(zt > 0, zt, 1.0), 0.0)
            err = np.abs(computed.astype(np.float64) - (X.astype(np.float64) * Y).sum(axis=-1))
            rows.append(_row(cfg, dist=label, n=n, bound_kind=kind, violations=int((~ok).sum()),
                             min_slack=float(norm.min()) if norm.size else 0.0,
                             max_error=float(err.max()) if err.size else 0.0, trials=X.shape[0]))
        return parts

    for dist in cfg.dists:
        spec = experiment_spec(dist)
        for n in cfg.sizes:
            rng = trial_rng(_cell_seed(cfg.seed, "audit", dist, n), 0)
            X = gen_matrix(spec, (cfg.trials, n), rng)
            Y = gen_matrix(spec, (cfg.trials, n), rng)
            audit(dist, n, X, Y, ("fp32_dot", "bf16_z2"))

    for n in EXACT_CASE_SIZES:
        rng = trial_rng(_cell_seed(cfg.seed, "audit", "exact", n), 0)
        pairs = [exact_case_vectors(rng, n) for _ in range(cfg.trials)]
        X = np.stack([p[0] for p in pairs])
        Y = np.stack([p[1] for p in pairs])
        parts = audit("exact", n, X, Y, ("fp32_dot", "bf16_z2", "bf16_z2_exact_case"))
        x0, y0 = split_matrix(X).components[0], split_matrix(Y).components[0]
        exact0 = np.array([math.fsum(r) for r in x0.astype(np.float64) * y0])
        assert all(exact_accumulation_guaranteed(a, b) for a, b in zip(x0, y0))
        mism = int(np.count_nonzero(parts.Z[(0, 0)].astype(np.float64) != exact0))
        rows.append(_row(cfg, dist="exact", n=n, bound_kind="z00_exact", violations=mism,
                         min_slack=0.0, max_error=float(np.max(np.abs(parts.Z[(0, 0)] - exact0))),
                         trials=cfg.trials))

    if raise_on_violation and any(r["violations"] for r in rows):
        raise BoundViolation(rows)
    return rows


RUNNERS = {
    "gemm-accuracy": run_gemm_accuracy,
    "getrf-accuracy": run_getrf_accuracy,
    "refine": run_refine,
    "gmres": run_gmres,
    "speedup": run_speedup,
    "bound-audit": run_bound_audit,
}


def run(cfg: ExperimentConfig) -> list:
    return RUNNERS[cfg.experiment](cfg)


# -- CSV -----------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def to_csv(experiment: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = COLUMNS[experiment]
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def write_csv(path: str, experiment: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(experiment, rows))
