"""End-to-end acceptance checks; each test records one PASS/FAIL line."""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import smcevidence
from smcevidence import config, datasets
from smcevidence.cli import flow_from_config, main
from smcevidence.clt import (FiniteStateFlow, empirical_clt_check, expected_direct_estimate,
                             log_normalizer)
from smcevidence.estimators import QuadratureRule, integrate_function, integrate_path
from smcevidence.kernels import KernelConfig, adapt_scales, mh_block_sweep
from smcevidence.models.conjugate import ConjugateGaussian
from smcevidence.models.gmm import GaussianMixture
from smcevidence.particles import ParticleSystem, make_rng
from smcevidence.samplers import RunConfig, label_frequencies, run_replicates
from smcevidence.tempering import BisectionConfig, GeometricPath, Schedule

CONFIGS = Path(smcevidence.__file__).parent / "configs"
R_GMM = 20


def shipped(name):
    cfg = config.load(CONFIGS / name)
    return config.build_model(cfg), config.build_run_config(cfg), cfg


def column(results, label):
    return np.array([r.estimate(label) for r in results])


def test_criterion_01_analytic_oracle(verdict):
    model, run, cfg = shipped("conjugate.toml")
    exact = model.log_evidence()
    start = time.perf_counter()
    results, _ = run_replicates(model, run, cfg["replicates"])
    elapsed = time.perf_counter() - start
    hits = {lab: int(np.sum(np.abs(column(results, lab) - exact) < 0.05))
            for lab in ("direct", "path_trapezoid_x1")}
    ok = all(h >= 95 for h in hits.values()) and elapsed < 10
    assert verdict(1, ok, f"within 0.05 of {exact:.4f}: {hits} of 100; {elapsed:.1f}s")


def test_criterion_02_unbiased_by_enumeration(verdict):
    rng = make_rng(2024)
    flow = FiniteStateFlow(rng.dirichlet([1, 1]), [rng.dirichlet([1, 1], 2) for _ in range(2)],
                           [rng.uniform(0.2, 3, 2) for _ in range(2)],
                           [np.zeros(2)] * 3, np.ones(3))
    exact = np.exp(log_normalizer(flow))
    expect = expected_direct_estimate(flow, 2)
    err = abs(expect - exact)
    assert verdict(2, err < 1e-12, f"E[Z_hat]={expect:.15f} Z={exact:.15f} |diff|={err:.1e}")


@pytest.fixture(scope="module")
def gmm_runs():
    out = {}
    for name in ("gmm_r4.toml", "gmm_r5.toml", "gmm_r4_ais.toml", "gmm_smc3.toml",
                 "gmm_smc1.toml"):
        model, run, cfg = shipped(name)
        kw = {}
        if run.algorithm == "smc3":
            kw = {"pair": tuple(cfg["sampler"]["pair"]), "start": None, "fresh": True}
        start = time.perf_counter()
        out[name] = run_replicates(model, run, R_GMM, **kw)[0]
        out[name + ":time"] = time.perf_counter() - start
    return out


def test_criterion_03_gmm_benchmark(gmm_runs, verdict):
    r4, r5 = gmm_runs["gmm_r4.toml"], gmm_runs["gmm_r5.toml"]
    est = {
        "SMC2-DS": column(r4, "direct") - column(r5, "direct"),
        "SMC2-PS": column(r4, "path_trapezoid_x1") - column(r5, "path_trapezoid_x1"),
        "SMC3-DS": -column(gmm_runs["gmm_smc3.toml"], "direct"),
    }
    names = list(est)
    consistent = True
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            gap = abs(est[a].mean() - est[b].mean())
            consistent &= gap <= 3 * np.hypot(est[a].std(ddof=1), est[b].std(ddof=1))
    sd_smc = np.std(column(r4, "path_trapezoid_x1"), ddof=1)
    sd_ais = np.std(column(gmm_runs["gmm_r4_ais.toml"], "path_trapezoid_x1"), ddof=1)
    freqs = {}
    for r in gmm_runs["gmm_smc1.toml"]:
        for k, p in label_frequencies(r.system, range(1, 11)).items():
            freqs[k] = freqs.get(k, 0.0) + p / R_GMM
    top = max(freqs, key=freqs.get)
    ok = consistent and sd_smc < sd_ais and top == 4
    summary = ", ".join(f"{k} {v.mean():.3f}+-{v.std(ddof=1):.3f}" for k, v in est.items())
    secs = sum(v for k, v in gmm_runs.items() if k.endswith(":time"))
    assert verdict(3, ok, f"log B45: {summary}; (a) {bool(consistent)}; "
                          f"(b) SD PS {sd_smc:.3f} vs AIS {sd_ais:.3f}; "
                          f"(c) top r={top} p={freqs[top]:.3f} next r=5 p={freqs[5]:.3f}; "
                          f"{secs:.0f}s")


def _mean_trajectory(model, criterion, tau, R):
    run = RunConfig("smc2", n_particles=4096, resample_threshold=tau,
                    schedule=Schedule(bisection=BisectionConfig(cess_target=0.9,
                                                                criterion=criterion)),
                    kernel=KernelConfig(clamp=True), path_rules=(), seed=5)
    results, _ = run_replicates(model, run, R)
    trajs = [r.alphas for r in results]
    L = max(len(a) for a in trajs)
    return np.mean([np.pad(a, (0, L - len(a)), constant_values=1.0) for a in trajs], axis=0)


def _sup_gap(a, b):
    L = max(a.size, b.size)
    a = np.pad(a, (0, L - a.size), constant_values=1.0)
    b = np.pad(b, (0, L - b.size), constant_values=1.0)
    return float(np.max(np.abs(a - b)))


def test_criterion_04_cess_schedule_invariance(verdict):
    model = GaussianMixture(datasets.load("builtin:gmm")[:, 0], r_values=[4], ordered=True)
    gaps = {c: _sup_gap(_mean_trajectory(model, c, 1.0, R_GMM),
                        _mean_trajectory(model, c, 0.5, R_GMM))
            for c in ("cess", "ess")}
    ok = gaps["cess"] <= 0.05 and gaps["ess"] > 0.05
    assert verdict(4, ok, f"sup gap CESS {gaps['cess']:.4f} (<= 0.05), "
                          f"ESS {gaps['ess']:.4f} (> 0.05)")


def test_criterion_05_bias_reduction(tmp_path, verdict):
    out = tmp_path / "bias"
    assert main(["bias-table", "--config", str(CONFIGS / "conjugate_bias.toml"),
                 "--out", str(out), "--threads", "1"]) == 0
    rows = np.genfromtxt(out / "bias_table.csv", delimiter=",", names=True, dtype=None,
                         encoding="utf-8")
    bias = {(str(r["rule"]), int(r["refinement"])): abs(float(r["mean_bias"])) for r in rows}
    refs = (1, 2, 4, 8)
    along_rules = bias[("trapezoid", 1)] > bias[("simpson", 1)] > bias[("boole", 1)]
    along_refs = all(bias[(k, 1)] > bias[(k, 8)] for k in ("trapezoid", "simpson", "simpson38",
                                                          "boole"))
    monotone = all(bias[(k, a)] >= bias[(k, b)] for k in ("trapezoid", "simpson",
                                                            "simpson38", "boole")
                   for a, b in zip(refs, refs[1:]))
    ok = along_rules and along_refs and bias[("boole", 8)] < 0.1
    cells = " ".join(f"{k[0]}x{k[1]}={v:.3f}" for k, v in bias.items())
    assert verdict(5, ok, f"|mean bias| {cells}; monotone in refinement: {monotone}")


def test_criterion_06_clt(verdict):
    cfg = config.load(CONFIGS / "clt.toml")
    flow = flow_from_config(cfg)
    assert flow.S == 3 and flow.T == 3
    c512 = empirical_clt_check(flow, 512, 2000, make_rng(cfg["seed"], 512))
    c1024 = empirical_clt_check(flow, 1024, 2000, make_rng(cfg["seed"], 1024))
    halving = (c1024.empirical / 1024) / (c512.empirical / 512)
    ok = 0.85 <= c512.ratio <= 1.15 and 0.4 <= halving <= 0.6
    assert verdict(6, ok, f"ratio at N=512 {c512.ratio:.3f}; raw variance 1024/512 "
                          f"{halving:.3f} (0.5 +- 20%)")


def test_criterion_07_quadrature(verdict):
    rng = make_rng(7)
    worst = 0.0
    for _ in range(50):
        knots = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, rng.integers(1, 30))), [1.0]])
        poly = np.polynomial.Polynomial(rng.normal(size=6))
        exact = poly.integ()(1.0) - poly.integ()(0.0)
        got = integrate_function(poly, knots, QuadratureRule("boole", 1))
        worst = max(worst, abs(got - exact) / max(1.0, abs(exact)))
    model, run, _ = shipped("conjugate.toml")
    res = smcevidence.samplers.run_smc2(model, run)
    a, U = res.path_trace.alphas, res.path_trace.U
    formula = sum(0.5 * (a[t] - a[t - 1]) * (U[t] + U[t - 1]) for t in range(1, len(a)))
    bit = integrate_path(res.path_trace, QuadratureRule("trapezoid", 1)) == formula
    bit &= res.estimate("path_trapezoid_x1") == formula
    ok = worst < 1e-13 and bit
    assert verdict(7, ok, f"boole quintic worst rel error {worst:.1e}; trapezoid bit-match {bit}")


def _smoke(name, verdict_label):
    model, run, cfg = shipped(name)
    R = cfg["replicates"]
    start = time.perf_counter()
    smc, _ = run_replicates(model, run, R)
    ais, _ = run_replicates(model, replace(run, algorithm="ais", resample_threshold=0.0), R)
    elapsed = time.perf_counter() - start
    ds, ps = column(smc, "direct"), column(smc, "path_trapezoid_x1")
    ps8 = column(smc, "path_boole_x8")
    ais_ds = column(ais, "direct")
    finite = all(np.all(np.isfinite(column(res, e.estimator)))
                 for res in (smc, ais) for e in res[0].estimates)
    agree = abs(ds.mean() - ps.mean()) <= 3 * np.hypot(ds.std(ddof=1), ps.std(ddof=1))
    sd_ok = ds.std(ddof=1) <= ais_ds.std(ddof=1)
    ok = finite and agree and sd_ok and elapsed < 300
    detail = (f"{verdict_label}: DS {ds.mean():.2f}+-{ds.std(ddof=1):.2f}, "
              f"PS {ps.mean():.2f}+-{ps.std(ddof=1):.2f}, "
              f"Boole x8 {ps8.mean():.2f}+-{ps8.std(ddof=1):.2f}, "
              f"AIS DS {ais_ds.mean():.2f}+-{ais_ds.std(ddof=1):.2f}; {elapsed:.0f}s")
    return ok, detail


def test_criterion_08_goodwin_and_pet(verdict):
    ok_g, d_g = _smoke("goodwin.toml", "Goodwin")
    ok_p, d_p = _smoke("pet.toml", "PET")
    assert verdict(8, ok_g and ok_p, f"{d_g} | {d_p}")


def test_criterion_09_mh_invariance(verdict):
    # 100 independent chains of 1000 sweeps each, started at exact posterior draws
    y = datasets.load("builtin:conjugate")[:, 0]
    model = ConjugateGaussian(y)
    mean, var = model.posterior(1.0)
    chains, sweeps = 100, 1000
    x = model.sample_posterior(make_rng(9), chains)
    sys = ParticleSystem(x=x, model=np.zeros(chains, dtype=int),
                         log_weights=np.full(chains, -np.log(chains)),
                         loglik=model.log_likelihood(x), logprior=model.log_prior(x))
    cfg = adapt_scales(sys, model, KernelConfig())
    first, second = np.zeros(chains), np.zeros(chains)
    for t in range(sweeps):
        mh_block_sweep(sys, model, GeometricPath(), 1.0, cfg, make_rng(10, t))
        d = sys.x[:, 0] - mean[0]
        first += d / sweeps
        second += d ** 2 / sweeps
    z_mean = first.mean() / (first.std(ddof=1) / np.sqrt(chains))
    z_var = (second.mean() - var) / (second.std(ddof=1) / np.sqrt(chains))
    ok = abs(z_mean) < 3 and abs(z_var) < 3
    assert verdict(9, ok, f"{chains * sweeps} sweeps: mean z={z_mean:.2f}, variance z={z_var:.2f}")


def test_criterion_10_reproducibility(tmp_path, verdict):
    small = tmp_path / "small.toml"
    small.write_text('seed = 4\nreplicates = 3\n[model]\nkind = "conjugate"\n'
                     'data = "builtin:conjugate"\n[sampler]\nn_particles = 200\n'
                     '[estimators]\npath = ["trapezoid", "boole:4"]\n'
                     '[bias_table]\nreplicates = 3\nrefinements = [1, 8]\n')
    smc1 = tmp_path / "smc1.toml"
    smc1.write_text('seed = 5\n[model]\nkind = "gmm"\ndata = "builtin:gmm"\nr = [1, 2, 3]\n'
                    '[sampler]\nalgorithm = "smc1"\nn_particles = 200\n')
    commands = [["run", "--config", str(small)], ["replicate", "--config", str(small)],
                ["bias-table", "--config", str(small)], ["run", "--config", str(smc1)],
                ["clt-check", "--config", str(CONFIGS / "clt.toml"), "--replicates", "100"]]
    same, files = True, 0
    for i, cmd in enumerate(commands):
        dirs = [tmp_path / f"{i}{tag}" for tag in "ab"]
        for d in dirs:
            assert main(cmd + ["--out", str(d), "--threads", "1"]) == 0
        for f in sorted(dirs[0].iterdir()):
            files += 1
            same &= f.read_bytes() == (dirs[1] / f.name).read_bytes()
    assert verdict(10, same, f"{files} output files byte-identical across reruns: {same}")
