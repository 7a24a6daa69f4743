"""End-to-end studies: the decay equation and a Michaelis-Menten enzyme reaction."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import OrthoBasis, build_basis, hermite_basis, orthogonality_residual
from .errors import StiffnessError
from .galerkin import (
    ExpandedSolution,
    GalerkinModel,
    Term,
    evaluate_model_rhs,
    solve_galerkin,
    substitute_affine_parameters,
)
from .moments import (
    AffineReparam,
    CopulaUniformSampler,
    CorrelatedUniform,
    Gaussian,
    MomentTable,
    gaussian_moment_table,
    moment_table,
    monte_carlo_moment_table,
    reduce_comonotone_uniform,
    reduce_singular_gaussian,
)
from .ode import dopri5
from .polyalg import enumerate_basis_indices
from .stats import (
    SobolReport,
    mean_series,
    mean_std_to_csv,
    sobol_report,
    sobol_to_csv,
    sobol_total_to_csv,
    std_series,
    subset_label,
)

log = logging.getLogger(__name__)

DECAY_MEAN = (1.0, 1.0)
DECAY_STD = (0.25, 0.25)
DECAY_RHOS = (0.0, 0.5, -0.5, 0.9, -0.9)

ENZYME_MEAN = (0.683, 0.312, 0.212)
ENZYME_STD = (0.206, 0.175, 0.031)
C_FIM = ((1.0, 0.9, -0.37), (0.9, 1.0, -0.45), (-0.37, -0.45, 1.0))
C_FULL = ((1.0, 1.0, -1.0), (1.0, 1.0, -1.0), (-1.0, -1.0, 1.0))
C_NONE = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
ENZYME_CORRELATIONS = {"paper": C_FIM, "full": C_FULL, "none": C_NONE}

DEFAULT_ORDER = {"decay": 8, "converge": 8, "enzyme": 4, "mc": 8}
DEFAULT_SPAN = {"decay": (0.0, 1.0), "converge": (0.0, 1.0), "enzyme": (0.0, 20.0)}
# truncation errors past p=5 sit far below a 1e-6 integration error
CONVERGENCE_TOL = 1e-12
MC_SKIP_LIMIT = 1e-3


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "decay"
    rho: float = 0.0
    rhos: tuple = DECAY_RHOS
    correlation: object = "paper"
    order: int | None = None
    moment_source: str = "analytic"
    samples: int = 1_000_000
    mc_samples: int = 100_000
    mc_target: str = "decay"
    seed: int = 0
    t_span: tuple | None = None
    n_times: int = 200
    abs_tol: float | None = None
    rel_tol: float | None = None
    checkpoints: int = 10
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.scenario not in ("decay", "enzyme", "converge", "mc"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.order is not None and self.order < 0:
            raise ValueError("expansion order must be non-negative")
        if self.moment_source not in ("analytic", "mc"):
            raise ValueError("moment_source is 'analytic' or 'mc'")
        if self.t_span is not None:
            object.__setattr__(self, "t_span", tuple(float(t) for t in self.t_span))
            if self.t_span[1] == self.t_span[0]:
                raise ValueError("degenerate time span")
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))
        if isinstance(self.correlation, (list, np.ndarray)):
            object.__setattr__(self, "correlation", tuple(tuple(float(v) for v in row) for row in self.correlation))
        if self.n_times < 2:
            raise ValueError("need at least two output times")

    @property
    def target(self) -> str:
        return self.mc_target if self.scenario == "mc" else self.scenario

    @property
    def p(self) -> int:
        return self.order if self.order is not None else DEFAULT_ORDER[self.target]

    @property
    def span(self) -> tuple:
        return self.t_span or DEFAULT_SPAN["decay" if self.target == "converge" else self.target]

    @property
    def tolerances(self) -> tuple[float, float]:
        default = CONVERGENCE_TOL if self.scenario == "converge" else 1e-6
        return (self.abs_tol if self.abs_tol is not None else default,
                self.rel_tol if self.rel_tol is not None else default)

    def correlation_matrix(self) -> np.ndarray:
        c = self.correlation
        if isinstance(c, str):
            if c not in ENZYME_CORRELATIONS:
                raise ValueError(f"unknown correlation setting {c!r}")
            c = ENZYME_CORRELATIONS[c]
        return np.array(c, dtype=float)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rhos"] = list(self.rhos)
        if d["t_span"] is not None:
            d["t_span"] = list(d["t_span"])
        if not isinstance(self.correlation, str):
            d["correlation"] = [list(r) for r in self.correlation]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        for k in ("rhos", "t_span"):
            if doc.get(k) is not None:
                doc[k] = tuple(doc[k])
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def identity(self) -> dict:
        """Config fields that affect results (not where or how parallel they run)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("jobs")
        return d

    def config_hash(self) -> str:
        d = self.identity()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# models


def decay_model() -> GalerkinModel:
    """y' = -alpha (y - beta), y(0) = 0."""
    return GalerkinModel(
        ("y",),
        (Term(0, -1.0, (1, 0), (0,)), Term(0, 1.0, (1, 1))),
        [0.0], 2, ("alpha", "beta"),
    )


def decay_degenerate_model(sign: int) -> GalerkinModel:
    """Univariate decay model for beta = alpha (sign=+1) or beta = 2 - alpha (sign=-1)."""
    if sign == 1:
        terms = (Term(0, -1.0, (1,), (0,)), Term(0, 1.0, (2,)))
    elif sign == -1:
        terms = (Term(0, -1.0, (1,), (0,)), Term(0, -1.0, (2,)), Term(0, 2.0, (1,)))
    else:
        raise ValueError("sign must be +1 or -1")
    return GalerkinModel(("y",), terms, [0.0], 1, ("alpha",))


def enzyme_model() -> GalerkinModel:
    """Mass-action kinetics E + S <-> C -> E + P with rates (k1, k2, k3)."""
    S, C, E, P = range(4)
    k1, k2, k3 = (1, 0, 0), (0, 1, 0), (0, 0, 1)
    terms = (
        Term(S, -1.0, k1, (E, S)), Term(S, 1.0, k2, (C,)),
        Term(C, 1.0, k1, (E, S)), Term(C, -1.0, k2, (C,)), Term(C, -1.0, k3, (C,)),
        Term(E, -1.0, k1, (E, S)), Term(E, 1.0, k2, (C,)), Term(E, 1.0, k3, (C,)),
        Term(P, 1.0, k3, (C,)),
    )
    return GalerkinModel(("S", "C", "E", "P"), terms, [1.0, 0.0, 1.0, 0.0], 3, ("k1", "k2", "k3"))


def decay_distribution(rho: float) -> Gaussian:
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation {rho} outside [-1, 1]")
    s = np.array(DECAY_STD)
    return Gaussian(DECAY_MEAN, np.outer(s, s) * np.array([[1.0, rho], [rho, 1.0]]))


def enzyme_distribution(correlation) -> CorrelatedUniform:
    return CorrelatedUniform(ENZYME_MEAN, ENZYME_STD, correlation)


def _is_full_rank_one(c: np.ndarray) -> bool:
    s = np.sign(c[0])
    return bool(np.all(s != 0) and np.array_equal(c, np.outer(s, s)))


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    model: GalerkinModel
    table: MomentTable
    basis: OrthoBasis
    solution: ExpandedSolution
    report: SobolReport
    reparam: AffineReparam | None = None
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _header(config: ScenarioConfig, table: MomentTable | None, p) -> dict:
    return {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "p": p,
        "moments": json.dumps(table.provenance, sort_keys=True) if table is not None else "n/a",
    }


def _time_grid(config: ScenarioConfig) -> np.ndarray:
    t0, t1 = config.span
    return np.linspace(t0, t1, config.n_times)


def _pipeline(config: ScenarioConfig, model: GalerkinModel, table: MomentTable, reparam=None) -> ScenarioResult:
    basis = build_basis(table, config.p)
    atol, rtol = config.tolerances
    sol = solve_galerkin(model, basis, table, config.span, abs_tol=atol, rel_tol=rtol, t_eval=_time_grid(config))
    report = sobol_report(sol, basis, table)
    res = ScenarioResult(config, model, table, basis, sol, report, reparam)
    res.summary = _summary(res)
    if config.out:
        _write_outputs(res)
    return res


def _summary(res: ScenarioResult) -> dict:
    sol, rep = res.solution, res.report
    mu, sd = mean_series(sol), std_series(sol)
    final = {}
    for s, name in enumerate(sol.state_names):
        entry = {"mean": float(mu[s, -1]), "std": float(sd[s, -1])}
        if rep.defined[s, -1]:
            entry["sobol"] = {
                subset_label(sub): {"S": float(rep.S[s, -1, k]), "S_u": float(rep.S_u[s, -1, k]), "S_c": float(rep.S_c[s, -1, k])}
                for k, sub in enumerate(rep.subsets)
            }
        final[name] = entry
    return {
        "scenario": res.config.scenario,
        "config": res.config.identity(),
        "config_hash": res.config.config_hash(),
        "p": res.basis.order,
        "basis_size": res.basis.size,
        "parameters": list(res.model.param_names),
        "moments": res.table.provenance,
        "orthogonality_residual": orthogonality_residual(res.basis, res.table),
        "integrator": {"steps": sol.n_steps, "rejected": sol.n_rejected},
        "final_time": float(sol.times[-1]),
        "final": final,
    }


def _write_outputs(res: ScenarioResult):
    out = res.config.out
    os.makedirs(out, exist_ok=True)
    hdr = _header(res.config, res.table, res.basis.order)
    files = {
        "mean_std.csv": mean_std_to_csv(res.solution, header=hdr),
        "sobol.csv": sobol_to_csv(res.report, header=hdr),
        "sobol_total.csv": sobol_total_to_csv(res.report, header=hdr),
        "summary.json": json.dumps(res.summary, indent=2, sort_keys=True) + "\n",
    }
    for name, text in files.items():
        path = os.path.join(out, name)
        with open(path, "w") as fh:
            fh.write(text)
        res.files[name] = path


def decay_setup(rho: float, p: int, moment_source="analytic", samples=1_000_000, seed=0):
    """Model, moment table and optional reduction for one decay run."""
    spec = decay_distribution(rho)
    model = decay_model()
    reparam = None
    if abs(rho) == 1.0:
        reparam = reduce_singular_gaussian(spec.mean, spec.covariance)
        model = substitute_affine_parameters(model, reparam)
        spec = reparam.reduced_spec
    order = max(model.required_order(p), 2 * p)
    if moment_source == "mc":
        table = monte_carlo_moment_table(spec.sample, samples, order, seed)
    else:
        table = gaussian_moment_table(spec.mean, spec.covariance, order)
    return model, table, reparam


def run_decay(config: ScenarioConfig) -> ScenarioResult:
    model, table, reparam = decay_setup(config.rho, config.p, config.moment_source, config.samples, config.seed)
    return _pipeline(config, model, table, reparam)


def enzyme_setup(correlation, p: int, moment_source="analytic", samples=1_000_000, seed=0):
    c = np.asarray(correlation, dtype=float)
    model = enzyme_model()
    reparam = None
    if _is_full_rank_one(c):
        reparam = reduce_comonotone_uniform(ENZYME_MEAN, ENZYME_STD, c)
        model = substitute_affine_parameters(model, reparam)
        spec = reparam.reduced_spec
    else:
        spec = enzyme_distribution(c)
    order = max(model.required_order(p), 2 * p)
    if moment_source == "mc":
        sampler = spec.sample if isinstance(spec, Gaussian) else CopulaUniformSampler(spec.mean, spec.std, spec.correlation)
        table = monte_carlo_moment_table(sampler, samples, order, seed)
    else:
        table = moment_table(spec, order, samples=samples, seed=seed)
    return model, table, reparam


def run_enzyme(config: ScenarioConfig) -> ScenarioResult:
    model, table, reparam = enzyme_setup(
        config.correlation_matrix(), config.p, config.moment_source, config.samples, config.seed
    )
    return _pipeline(config, model, table, reparam)


# ---------------------------------------------------------------------------
# convergence study


def _convergence_one(rho: float, p_ref: int, tol: tuple, hermite: bool):
    model, table, _ = decay_setup(rho, p_ref)
    stats = {}
    for p in range(1, p_ref + 1):
        idx = enumerate_basis_indices(model.n_params, p)
        basis = hermite_basis(idx, table) if hermite else build_basis(table, p)
        sol = solve_galerkin(model, basis, table, (0.0, 1.0), abs_tol=tol[0], rel_tol=tol[1], t_eval=[0.0, 1.0])
        stats[p] = (float(mean_series(sol)[0, -1]), float(std_series(sol)[0, -1]))
    ref = stats[p_ref]
    return [(rho, p, abs(stats[p][0] - ref[0]), abs(stats[p][1] - ref[1])) for p in range(1, p_ref)]


@dataclass
class ConvergenceResult:
    rows: list  # (rho, p, eps_mu, eps_sigma)
    hermite_rows: list
    files: dict = field(default_factory=dict)

    def column(self, rho: float, which: str = "sigma", hermite: bool = False) -> np.ndarray:
        k = 3 if which == "sigma" else 2
        rows = self.hermite_rows if hermite else self.rows
        return np.array([r[k] for r in rows if r[0] == rho])


def run_convergence(config: ScenarioConfig, hermite_check: bool = True) -> ConvergenceResult:
    """Errors of mean and std at t=1 for p = 1..p_ref-1 against the p_ref run."""
    p_ref = config.p
    tol = config.tolerances
    jobs = [(rho, p_ref, tol, False) for rho in config.rhos]
    if hermite_check and 0.0 in config.rhos:
        jobs.append((0.0, p_ref, tol, True))
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as ex:
            parts = list(ex.map(_convergence_one, *zip(*jobs)))
    else:
        parts = [_convergence_one(*j) for j in jobs]
    rows = [r for part, j in zip(parts, jobs) if not j[3] for r in part]
    herm = [r for part, j in zip(parts, jobs) if j[3] for r in part]
    res = ConvergenceResult(rows, herm)
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        hdr = _header(config, None, p_ref)
        hdr["moments"] = json.dumps({"kind": "analytic", "distribution": "gaussian"})
        lines = [f"# {k}: {v}" for k, v in hdr.items()] + ["rho,p,eps_mu,eps_sigma"]
        lines += [f"{r!r},{p},{em!r},{es!r}" for r, p, em, es in rows]
        path = os.path.join(config.out, "convergence.csv")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        res.files["convergence.csv"] = path
        summary = {
            "scenario": "converge",
            "config": config.identity(),
            "config_hash": config.config_hash(),
            "p_reference": p_ref,
            "tolerances": list(tol),
            "rows": [list(r) for r in rows],
            "hermite_rows": [list(r) for r in herm],
        }
        spath = os.path.join(config.out, "summary.json")
        with open(spath, "w") as fh:
            fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        res.files["summary.json"] = spath
    return res


# ---------------------------------------------------------------------------
# Monte Carlo reference


@dataclass
class McReference:
    times: np.ndarray
    state_names: tuple
    mean: np.ndarray  # (n_states, n_times)
    std: np.ndarray
    se_mean: np.ndarray
    se_std: np.ndarray
    n_used: int
    n_skipped: int
    files: dict = field(default_factory=dict)


def _solve_batch(model: GalerkinModel, params: np.ndarray, times, span, tol) -> np.ndarray:
    """Solve every parameter row; rows that fail come back as NaN."""
    m, S = params.shape[0], model.n_states

    def rhs(t, y):
        return evaluate_model_rhs(model, params, y.reshape(m, S)).ravel()

    y0 = np.tile(model.initial_conditions, m)
    try:
        with np.errstate(all="ignore"):
            res = dopri5(rhs, span, y0, times, rtol=tol[1], atol=tol[0], norm="max")
        return res.y.reshape(len(times), m, S)
    except (StiffnessError, RuntimeError, FloatingPointError):
        if m == 1:
            return np.full((len(times), 1, S), np.nan)
        h = m // 2
        return np.concatenate(
            [_solve_batch(model, params[:h], times, span, tol), _solve_batch(model, params[h:], times, span, tol)],
            axis=1,
        )


def mc_checkpoints(span, n: int) -> np.ndarray:
    """``n`` equally spaced checkpoints after the (deterministic) initial time."""
    return np.linspace(span[0], span[1], n + 1)[1:]


def run_mc_reference(
    config: ScenarioConfig,
    times: Sequence[float] | None = None,
    chunk: int = 20_000,
    draw=None,
) -> McReference:
    """Empirical mean/std by direct ODE solves at sampled parameters.

    ``draw(m, rng)`` overrides the scenario's input distribution.
    """
    if config.mc_samples < 1000:
        raise ValueError("the Monte Carlo reference needs at least 1000 samples")
    target = config.target
    if target == "enzyme":
        model = enzyme_model()
        spec = enzyme_distribution(config.correlation_matrix())
        draw = draw or CopulaUniformSampler(spec.mean, spec.std, spec.correlation)
    elif target == "decay":
        model = decay_model()
        draw = draw or decay_distribution(config.rho).sample
    else:
        raise ValueError(f"no Monte Carlo reference for {target!r}")
    span = config.span
    times = mc_checkpoints(span, config.checkpoints) if times is None else np.asarray(times, dtype=float)
    rng = np.random.default_rng(config.seed)
    params = draw(config.mc_samples, rng)
    atol, rtol = config.tolerances
    tol = (min(atol, 1e-8), min(rtol, 1e-8))
    parts = [_solve_batch(model, params[i:i + chunk], times, span, tol) for i in range(0, len(params), chunk)]
    Y = np.concatenate(parts, axis=1)  # (T, m, S)
    ok = np.all(np.isfinite(Y), axis=(0, 2))
    skipped = int((~ok).sum())
    if skipped > MC_SKIP_LIMIT * len(ok):
        raise RuntimeError(f"{skipped} of {len(ok)} Monte Carlo samples failed (limit {MC_SKIP_LIMIT:.1%})")
    if skipped:
        log.warning("skipped %d failed Monte Carlo samples", skipped)
    Y = Y[:, ok, :]
    N = Y.shape[1]
    # shift by the first sample so identical draws give exactly zero spread
    shift = Y[:, :1, :]
    d = Y - shift
    dm = d.mean(axis=1)
    mean = shift[:, 0, :] + dm
    dev = d - dm[:, None, :]
    var = (dev ** 2).mean(axis=1)
    m4 = (dev ** 4).mean(axis=1)
    std = np.sqrt(var)
    se_mean = np.sqrt(var / N)
    # delta method: Var[s] ~ (m4 - s^4) / (4 s^2 N)
    se_std = np.sqrt(np.divide(np.maximum(m4 - var ** 2, 0.0), 4.0 * var * N, out=np.zeros_like(var), where=var > 0))
    ref = McReference(times, model.state_names, mean.T, std.T, se_mean.T, se_std.T, N, skipped)
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        hdr = _header(config, None, "n/a")
        hdr["moments"] = json.dumps({"kind": "direct_sampling", "samples": config.mc_samples, "seed": config.seed})
        lines = [f"# {k}: {v}" for k, v in hdr.items()] + ["t,state,mean,std,se_mean,se_std"]
        for it, t in enumerate(times):
            for s, name in enumerate(model.state_names):
                lines.append(",".join([repr(float(t)), name] + [repr(float(a[s, it])) for a in (ref.mean, ref.std, ref.se_mean, ref.se_std)]))
        path = os.path.join(config.out, "mean_std.csv")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        ref.files["mean_std.csv"] = path
        spath = os.path.join(config.out, "summary.json")
        summary = {
            "scenario": "mc",
            "config": config.identity(),
            "config_hash": config.config_hash(),
            "samples_used": N,
            "samples_skipped": skipped,
            "times": [float(t) for t in times],
        }
        with open(spath, "w") as fh:
            fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        ref.files["summary.json"] = spath
    return ref


def compare_with_mc(result: ScenarioResult, ref: McReference, sigmas: float = 4.0) -> dict:
    """Largest mean/std discrepancy in units of the MC standard error."""
    sol = result.solution
    z_mean = z_std = 0.0
    for it, t in enumerate(ref.times):
        u = sol.coefficients_at(float(t))
        mu = u[:, 0]
        sd = np.sqrt(np.maximum(u[:, 1:] ** 2 @ result.basis.sq_norms[1:], 0.0))
        for s in range(len(ref.state_names)):
            for val, mc, se, key in ((mu[s], ref.mean[s, it], ref.se_mean[s, it], "m"), (sd[s], ref.std[s, it], ref.se_std[s, it], "s")):
                diff = abs(val - mc)
                z = diff / se if se > 0 else (0.0 if diff <= 1e-12 else math.inf)
                if key == "m":
                    z_mean = max(z_mean, z)
                else:
                    z_std = max(z_std, z)
    return {"max_z_mean": z_mean, "max_z_std": z_std, "passed": max(z_mean, z_std) <= sigmas}


def run(config: ScenarioConfig):
    """Dispatch on ``config.scenario``."""
    if config.scenario == "decay":
        return run_decay(config)
    if config.scenario == "enzyme":
        return run_enzyme(config)
    if config.scenario == "converge":
        return run_convergence(config)
    return run_mc_reference(config)
