"""SMC drivers: within-model (SMC2 / AIS), all-in-one (SMC1) and
between-model (SMC3) samplers sharing one adaptive loop."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import (EvidenceAccumulator, EvidenceEstimate, PathSampleTrace,
                         QuadratureRule, accumulate_direct, integrate_path)
from .kernels import KernelConfig, KernelStats, adapt_scales, block_moments, mh_block_sweep
from .models.base import evaluate, sample_family
from .particles import (DegenerateWeightsError, ParticleSystem, log_cess, log_ess,
                        make_rng, normalize_log_weights, resample)
from .tempering import (ForcedMicroStepWarning, GeometricPath, ModelMixturePath,
                        Schedule, find_next_alpha, next_alpha_fixed)

ALGORITHMS = ("smc1", "smc2", "smc3", "ais")


class MicroStepCapError(RuntimeError):
    """Raised when a run needs more forced micro-steps than allowed."""


@dataclass
class RunConfig:
    """Sampler settings.

    ``path_rules`` lists the quadrature rules used for path-sampling
    estimates; an empty list disables them.  ``ais`` forces the resampling
    threshold to zero.
    """

    algorithm: str = "smc2"
    n_particles: int = 1000
    schedule: Schedule = field(default_factory=Schedule)
    resample_threshold: float = 0.5
    resample_scheme: str = "multinomial"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    direct: bool = True
    path_rules: tuple = (QuadratureRule("trapezoid", 1),)
    seed: int = 0
    max_micro_steps: int = 10000

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.algorithm == "ais":
            self.resample_threshold = 0.0
        if not 0.0 <= self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in [0, 1]")
        self.path_rules = tuple(self.path_rules)


@dataclass
class RunResult:
    estimates: list
    trace: list
    system: ParticleSystem
    path_trace: PathSampleTrace | None = None
    summary: dict = field(default_factory=dict)
    model_probs: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def estimate(self, name: str) -> float:
        for e in self.estimates:
            if e.estimator == name:
                return e.log_evidence
        raise KeyError(name)

    @property
    def realized_T(self) -> int:
        return len(self.trace) - 1

    @property
    def alphas(self) -> np.ndarray:
        return np.array([row["alpha"] for row in self.trace])


def path_label(rule: QuadratureRule) -> str:
    return f"path_{rule.kind}_x{rule.refinement}"


def initial_system(model, n: int, rng, probs=None) -> ParticleSystem:
    x, labels = sample_family(model, rng, n, probs)
    ll, lp = evaluate(model, x, labels)
    return ParticleSystem(x=x, model=labels, log_weights=np.full(n, -math.log(n)),
                          loglik=ll, logprior=lp)


def run_adaptive(model, path, cfg: RunConfig, system: ParticleSystem | None = None,
                 replicate: int = 0, rj: bool = False, allowed=None,
                 record_path: bool = True) -> RunResult:
    """The generic loop.

    Every iteration: incremental weights at the current states, direct
    estimator increment, normalization, path-sampling record, resampling if
    ``ess < tau * N``, proposal adaptation, then mutation.
    """
    seed = cfg.seed
    if system is None:
        system = initial_system(model, cfg.n_particles, make_rng(seed, replicate, 0))
    sys = system.copy()
    n = sys.size
    kernel = cfg.kernel
    sched = cfg.schedule
    acc = EvidenceAccumulator()
    ptrace = PathSampleTrace(path=path) if record_path else None
    forced = 0
    resamples = 0
    min_ess = float(n)
    alpha = 0.0
    trace = [_row(0, 0.0, log_ess(sys.log_weights, np.zeros(n)), float(n), False,
                  KernelStats(), 0.0, math.nan)]
    t = 0
    while alpha < 1.0:
        t += 1
        value = path.value(sys.loglik, sys.model)
        if sched.adaptive:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ForcedMicroStepWarning)
                new_alpha, was_forced = find_next_alpha(sys.log_weights, value, path, alpha,
                                                        sched.bisection)
            if was_forced:
                forced += 1
                if forced > cfg.max_micro_steps:
                    raise MicroStepCapError(
                        f"more than {cfg.max_micro_steps} forced micro-steps")
        else:
            new_alpha = next_alpha_fixed(sched, t, sched.T)
        log_inc = path.log_inc_from_value(value, alpha, new_alpha)
        inc = accumulate_direct(acc, sys.log_weights, log_inc)
        e = log_ess(sys.log_weights, log_inc)
        c = log_cess(sys.log_weights, log_inc)
        u = ptrace.record(alpha, new_alpha, sys.log_weights, value) if ptrace else math.nan
        sys.log_weights, _ = normalize_log_weights(sys.log_weights + log_inc)
        sys.last_log_inc = log_inc
        alpha = new_alpha
        min_ess = min(min_ess, e)
        rng = make_rng(seed, replicate, t)
        did = e < cfg.resample_threshold * n
        if did:
            sys = resample(sys, rng, cfg.resample_scheme)
            resamples += 1
        kernel = adapt_scales(sys, model, kernel)
        stats = KernelStats()
        for _ in range(kernel.n_sweeps):
            if rj:
                counts = model.rj_move(sys, path, alpha, rng, allowed=allowed)
                for name, (a, b) in counts.items():
                    stats.add(name, a, b)
            stats.merge(mh_block_sweep(sys, model, path, alpha, kernel, rng))
        if kernel.clamp:
            kernel = replace(kernel, last_rates={k: stats.rate(k) for k in stats.attempts})
        trace.append(_row(t, alpha, e, c, did, stats, inc, u))
    if ptrace is not None and ptrace.U:
        trace[0]["U"] = float(ptrace.U[0])
    diag = {"min_ess": min_ess, "resample_count": resamples, "forced_micro_steps": forced}
    T = len(trace) - 1
    estimates = []
    if cfg.direct:
        estimates.append(EvidenceEstimate("direct", acc.log_ratio, T, dict(diag)))
    if ptrace is not None:
        for rule in cfg.path_rules:
            d = dict(diag)
            val = integrate_path(ptrace, rule, d)
            estimates.append(EvidenceEstimate(path_label(rule), val, T, d))
    summary = summarize(sys, model)
    return RunResult(estimates, trace, sys, ptrace, summary, diagnostics=diag)


def _row(t, alpha, e, c, resampled, stats: KernelStats, inc, u):
    return {"iteration": t, "alpha": float(alpha), "ess": float(e), "cess": float(c),
            "resampled": int(bool(resampled)),
            "acceptance": {k: stats.rate(k) for k in stats.attempts},
            "log_increment": float(inc), "U": float(u)}


def summarize(sys: ParticleSystem, model) -> dict:
    """Weighted mean and variance of every block's free coordinates per model."""
    out = {}
    for k in np.unique(sys.model):
        for block in model.blocks(int(k)):
            if block.free_dim == 0:
                continue
            mom = block_moments(sys, model, int(k), block)
            if mom is not None:
                out[(int(k), block.name)] = (mom[0], mom[1])
    return out


def run_smc2(model, cfg: RunConfig, replicate: int = 0) -> RunResult:
    """Within-model sampler on the geometric path from prior to posterior."""
    if len(model.model_ids) != 1:
        raise ValueError("run_smc2 needs a single model; use model.restrict([k])")
    return run_adaptive(model, GeometricPath(), cfg, replicate=replicate)


def run_ais(model, cfg: RunConfig, replicate: int = 0) -> RunResult:
    """Annealed importance sampling: the within-model sampler without resampling."""
    return run_smc2(model, replace(cfg, algorithm="ais", resample_threshold=0.0), replicate)


def run_smc1(model, cfg: RunConfig, replicate: int = 0) -> RunResult:
    """All-in-one sampler over the joint space of models and parameters.

    Reports the direct estimate of the overall evidence and posterior model
    probabilities as weighted label frequencies; path sampling is not offered.
    """
    path = GeometricPath(model.log_model_prior())
    res = run_adaptive(model, path, replace(cfg, path_rules=()), replicate=replicate,
                       rj=True, record_path=False)
    res.model_probs = label_frequencies(res.system, model.model_ids)
    return res


def label_frequencies(sys: ParticleSystem, ids) -> dict:
    w = sys.weights
    return {int(k): float(w[sys.model == k].sum()) for k in ids}


def log_bayes_from_frequencies(probs: dict, log_prior: dict, a: int, b: int) -> float:
    """Log Bayes factor of ``a`` over ``b`` implied by posterior model probabilities."""
    return math.log(probs[a]) - math.log(probs[b]) - (log_prior[a] - log_prior[b])


def run_smc3(model, pair, start: ParticleSystem | None, cfg: RunConfig,
             replicate: int = 0, fresh: bool = False) -> RunResult:
    """Between-model sampler from ``pair[0]`` to ``pair[1]`` along the model
    mixture path; estimates are of ``log Z[pair[1]] - log Z[pair[0]]``.

    ``start`` is a weighted sample of the first model's posterior (for example
    the final system of :func:`run_smc2`); it is resampled to uniform weights
    before the path begins.  With ``fresh=True`` or no ``start`` a new
    within-model run provides it.  Needs a fixed schedule because the
    incremental weights do not depend on the parameters.

    The first step starts from particles that all carry the lower label, so
    its reweighting cannot see the upper model's mass at ``alpha_1``.  In
    expectation the estimate is ``log(1-a1) + log r - log(1-a1 + a1 r)``
    rather than ``log r``.  The offset is of order ``alpha_1``, so schedules
    that start slowly (``power`` with ``p >= 2``) make it negligible.
    """
    lower, upper = int(pair[0]), int(pair[1])
    if cfg.schedule.adaptive:
        raise ValueError("the model mixture path needs a fixed schedule")
    sub = model.restrict([lower, upper])
    if start is None or fresh:
        first = replace(cfg, algorithm="smc2", path_rules=(), schedule=Schedule())
        start = run_smc2(model.restrict([lower]), first, replicate=replicate).system
    n = cfg.n_particles
    rng = make_rng(cfg.seed, replicate, 0, 1)
    idx = np.sort(rng.choice(start.size, size=n, p=start.weights))
    x = np.zeros((n, model.max_dim))
    d = model.dim(lower)
    states = start.x[idx, :d]
    if hasattr(model, "sort_components"):
        states = model.sort_components(states, lower)
    x[:, :d] = states
    labels = np.full(n, lower, dtype=int)
    ll, lp = evaluate(model, x, labels)
    sys = ParticleSystem(x=x, model=labels, log_weights=np.full(n, -math.log(n)),
                         loglik=ll, logprior=lp)
    path = ModelMixturePath(lower, upper)
    res = run_adaptive(sub, path, cfg, system=sys, replicate=replicate, rj=True,
                       allowed=(lower, upper))
    res.model_probs = label_frequencies(res.system, (lower, upper))
    return res


def run_algorithm(model, cfg: RunConfig, replicate: int = 0, **kw) -> RunResult:
    if cfg.algorithm == "smc2":
        return run_smc2(model, cfg, replicate)
    if cfg.algorithm == "ais":
        return run_ais(model, cfg, replicate)
    if cfg.algorithm == "smc1":
        return run_smc1(model, cfg, replicate)
    return run_smc3(model, kw["pair"], kw.get("start"), cfg, replicate, kw.get("fresh", True))


def _replicate_job(args):
    fn, model, cfg, r, kw = args
    return fn(model, cfg, r, **kw)


def run_replicates(model, cfg: RunConfig, R: int, threads: int = 1, runner=None,
                   **kw) -> tuple[list, dict]:
    """``R`` independent runs (replicate ``r`` uses streams keyed by ``r``).

    Returns the results and a summary ``{estimator: (mean, sd, R)}``.  Results
    do not depend on ``threads``.
    """
    if R < 2:
        raise ValueError("need at least two replicates")
    runner = runner or run_algorithm
    jobs = [(runner, model, cfg, r, kw) for r in range(R)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    return results, summarize_replicates(results)


def summarize_replicates(results) -> dict:
    names = [e.estimator for e in results[0].estimates]
    out = {}
    for name in names:
        v = np.array([r.estimate(name) for r in results])
        out[name] = (float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0, int(v.size))
    return out


__all__ = [
    "RunConfig", "RunResult", "MicroStepCapError", "DegenerateWeightsError",
    "run_smc1", "run_smc2", "run_smc3", "run_ais", "run_adaptive", "run_replicates",
    "run_algorithm", "summarize_replicates", "label_frequencies",
    "log_bayes_from_frequencies", "initial_system", "path_label",
]
