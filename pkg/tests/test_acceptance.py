"""Acceptance criteria 1-9; each test records one PASS/FAIL line (see conftest)."""

import hashlib
import time

import numpy as np
import pytest

from fpquality.cli import main
from fpquality.evaluate import det_curve, fmr_fnmr, select_best_imprints
from fpquality.fusion import NFIQ_LIKE5, UNIFORM5, UNIFORM10, bin_classes, fuse_ranks
from fpquality.neuralnet import MSE, OPT_MSE, NetworkModel, Objective, TrainConfig, predict_class, train_scg
from fpquality.neuralnet import optim
from fpquality.pipeline import rank_all, run_experiment
from fpquality.robust_stats import hd_quantile, hd_weights, incomplete_beta
from fpquality.scores import default_window, preliminary_rank, select_significant
from fpquality.synth import SynthConfig, generate, make_rng

from oracles import (
    brute_bins,
    brute_fuse,
    brute_preliminary,
    brute_quality_rank,
    brute_rates,
    brute_select,
    brute_significant,
    quad_incomplete_beta,
    sweep_eer,
)

# pinned tolerances
HD_SUM_TOL = 1e-12
BETA_TOL = 1e-10
GRAD_TOL = 1e-5
FD_STEP = 1e-6
QUAD_TOL = 1e-6
EER_TOL = 1e-9
NAIVE_GAIN = 0.10
DEV0_TOL = 0.02
CHANCE_BAR = 0.35
SEEDS = (1, 2, 3)


# 1 ---------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_criterion_1_robust_stats(criterion):
    t0 = time.perf_counter()
    alphas = [0.01, 0.05, 0.15, 0.25, 0.5, 0.75, 0.85, 0.95, 0.99]
    sum_err = max(abs(hd_weights(n, a).weights.sum() - 1.0) for n in range(1, 65) for a in alphas)
    median = hd_quantile(np.arange(1.0, 9.0), 0.5)
    rng = make_rng(2024)
    beta_err = 0.0
    for _ in range(50):
        z = float(rng.uniform(0, 1))
        a, b = (float(v) for v in rng.uniform(0.1, 12, 2))
        beta_err = max(beta_err, abs(incomplete_beta(z, a, b) - quad_incomplete_beta(z, a, b)))
    dt = time.perf_counter() - t0
    ok = sum_err <= HD_SUM_TOL and median == 4.5 and beta_err <= BETA_TOL and dt < 5
    criterion(ok, f"max |sum w - 1| = {sum_err:.1e} (tol {HD_SUM_TOL:g}), hd median [1..8] = {float(median)!r}, "
                  f"max beta error vs quadrature {beta_err:.1e} over 50 (tol {BETA_TOL:g}), {dt:.1f} s (< 5 s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def fd_gradient(fun, theta, h=FD_STEP):
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (fun(theta + e)[0] - fun(theta - e)[0]) / (2 * h)
    return g


@pytest.mark.criterion(2)
def test_criterion_2_gradient(criterion):
    t0 = time.perf_counter()
    rng = make_rng(77)
    worst = 0.0
    checks = 0
    for _ in range(10):
        m = NetworkModel.random(rng=rng)
        x = rng.standard_normal((12, 11))
        y = rng.integers(1, 6, 12)
        for error_fn in (MSE, OPT_MSE):
            for reg in (0.0, 1e-4):
                for w in (0.0, 0.5, 1.0):
                    # every other pattern carries weight w, the rest weight 1
                    pw = np.where(np.arange(12) % 2 == 0, w, 1.0)
                    obj = Objective(m, x, y, pw, error_fn, reg)
                    theta = m.params()
                    ga, gn = obj(theta)[1], fd_gradient(obj, theta)
                    worst = max(worst, float(np.abs(ga - gn).max() / max(np.abs(ga).max(), np.abs(gn).max())))
                    checks += 1
    dt = time.perf_counter() - t0
    ok = worst < GRAD_TOL and dt < 10
    criterion(ok, f"max relative gradient error {worst:.1e} over {checks} checks (tol {GRAD_TOL:g}, "
                  f"h = {FD_STEP:g}), {dt:.1f} s (< 10 s)")
    assert ok


# 3 ---------------------------------------------------------------------------

def iterations_to(gen, target, limit):
    for step in gen:
        if np.abs(step.x - target).max() <= QUAD_TOL:
            return step.iteration
        if step.iteration >= limit or step.converged:
            return None
    return None


@pytest.mark.criterion(3)
def test_criterion_3_optimizers(criterion):
    rng = make_rng(10)
    a = rng.standard_normal((10, 10))
    q = a @ a.T + np.eye(10)
    b = rng.standard_normal(10)
    xs = np.linalg.solve(q, b)

    def fun(x):
        return 0.5 * x @ q @ x - b @ x, q @ x - b

    k_scg = iterations_to(optim.scg(fun, np.zeros(10)), xs, 50)
    k_bfgs = iterations_to(optim.bfgs(fun, np.zeros(10)), xs, 12)

    rng = make_rng(0)
    x = rng.uniform(-1, 1, (20, 2))
    y = np.where(x[:, 0] + 0.5 * x[:, 1] > 0, 1, 2)
    cfg = TrainConfig(max_runs=200, early_stop_patience=200, regularization=0.0, n_hidden=4, seed=3)
    res = train_scg(x, y, x, y, cfg, n_out=2)
    acc = float((predict_class(res.model, res.model.transform.apply(x)) == y).mean())
    ok = k_scg is not None and k_bfgs is not None and acc >= 0.95
    criterion(ok, f"10-dim quadratic within {QUAD_TOL:g}: SCG {k_scg} iterations (<= 50), BFGS {k_bfgs} (<= 12); "
                  f"SCG toy training accuracy {acc:.2f} after {len(res.history)} runs (>= 0.95 within 200)")
    assert ok


# 4 ---------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_criterion_4_pipeline_oracles(criterion):
    t0 = time.perf_counter()
    ds = generate(SynthConfig(subjects=25, seed=4))
    tables = ds.score_tables()
    fingers = sorted({s.finger for s in ds.samples})
    problems = []
    rank_maps = {}
    for name, t in tables.items():
        pr = preliminary_rank(t)
        oracle, degenerate = brute_preliminary(t)
        got = {s: float(r) for s, r in zip(t.samples, pr.rank) if not np.isnan(r)}
        if got != oracle or {s for s, d in zip(t.samples, pr.degenerate) if d} != degenerate:
            problems.append(f"{name} preliminary")
        w = default_window(pr.n_ranked)
        sig_oracle = brute_significant(oracle, t, w)
        for rows in t.members:
            for i, peers in zip(rows, select_significant(pr.rank[rows], w)):
                if t.samples[i] in sig_oracle and sig_oracle[t.samples[i]] != peers:
                    problems.append(f"{name} significant {t.samples[i]}")
        mq = rank_all({name: t})[name]
        final, _ = brute_quality_rank(t)
        if mq.rank_map() != final:
            problems.append(f"{name} final ranks")
        rank_maps[name] = final
    maps = [rank_maps[m] for m in ("m1", "m2")]
    fused = fuse_ranks(maps).fused
    if fused != brute_fuse(maps):
        problems.append("fused ranks")
    for scheme in (NFIQ_LIKE5, UNIFORM5, UNIFORM10):
        labels = {l.sample: l.class_label for l in bin_classes(fused, scheme)}
        if labels != brute_bins(fused, scheme.fractions):
            problems.append(f"{scheme.name} bins")

    # DET of the perfect-predictor selection under the evaluation matcher
    labels = {l.sample: l.class_label for l in bin_classes(fused, NFIQ_LIKE5)}
    sel = select_best_imprints(labels, fingers)
    if sel != brute_select(labels):
        problems.append("selection")
    t = tables["m0"]
    row = {s: i for i, s in enumerate(t.samples)}
    g = [float(v) for s in sel.values() for v in t.genuine[row[s]] if not np.isnan(v)]
    imp = [float(v) for s in sel.values() for v in t.impostor[row[s]]]
    for thr in np.quantile(imp + g, np.linspace(0, 1, 25)):
        if fmr_fnmr(g, imp, thr) != brute_rates(g, imp, thr):
            problems.append(f"rates at {thr}")
    eer = det_curve(g, imp).eer
    eer_err = abs(eer - sweep_eer(g, imp))
    if eer_err > EER_TOL:
        problems.append("eer")
    dt = time.perf_counter() - t0
    ok = not problems and dt < 60
    criterion(ok, f"{len(fingers)} fingers: preliminary/significant/final/fused/bins/selection/rates "
                  f"{'all exact' if not problems else 'mismatch: ' + ', '.join(problems[:3])}, "
                  f"EER error {eer_err:.1e} (tol {EER_TOL:g}), {dt:.1f} s (< 60 s)")
    assert ok


# 5-8: seeded end-to-end experiments -----------------------------------------------

def dev3(hist):
    return hist.counts["3+"] / hist.total


@pytest.fixture(scope="module")
def experiments():
    t0 = time.perf_counter()
    out = {}
    for seed in SEEDS:
        ds = generate(SynthConfig(subjects=250, seed=seed))
        tables = ds.score_tables()
        q = rank_all(tables)
        run = {}
        for key, scheme, cfg in (
            ("nfiq5", NFIQ_LIKE5, TrainConfig(seed=seed)),
            ("u5_mse", UNIFORM5, TrainConfig(seed=seed)),
            ("u5_opt", UNIFORM5, TrainConfig(seed=seed, error_fn=OPT_MSE)),
            ("u10", UNIFORM10, None),
        ):
            run[key] = run_experiment(ds.samples, ds.features, tables, scheme, cfg, split_seed=seed, qualities=q)
        out[seed] = run
    out["elapsed"] = time.perf_counter() - t0
    out["fingers"] = 250 * 8
    return out


@pytest.mark.criterion(5)
def test_criterion_5_ordering(experiments, criterion):
    e = {k: float(np.mean([experiments[s]["nfiq5"].eer[k] for s in SEEDS])) for k in ("perfect", "trained", "naive")}
    gain = (e["naive"] - e["perfect"]) / e["naive"]
    dt = experiments["elapsed"]
    ok = e["perfect"] <= e["trained"] <= e["naive"] and gain >= NAIVE_GAIN and dt < 600
    per_seed = "; ".join(
        "seed {}: {:.4f}/{:.4f}/{:.4f}".format(s, *(experiments[s]["nfiq5"].eer[k] for k in ("perfect", "trained", "naive")))
        for s in SEEDS)
    criterion(ok, f"{experiments['fingers']} fingers, 3 matchers, mean EER perfect {e['perfect']:.4f} <= trained "
                  f"{e['trained']:.4f} <= naive {e['naive']:.4f}, perfect below naive by {gain:.1%} (>= 10%) "
                  f"[{per_seed}], experiments {dt:.0f} s (< 600 s)")
    assert ok


@pytest.mark.criterion(6)
def test_criterion_6_class_count(experiments, criterion):
    pairs = [(experiments[s]["u10"].eer["perfect"], experiments[s]["u5_mse"].eer["perfect"]) for s in SEEDS]
    wins = sum(u10 <= u5 for u10, u5 in pairs)
    ok = wins >= 2
    detail = ", ".join(f"seed {s}: {a:.4f} vs {b:.4f}" for s, (a, b) in zip(SEEDS, pairs))
    criterion(ok, f"perfect-predictor EER uniform10 <= uniform5 in {wins}/3 seeds (need >= 2) [{detail}]")
    assert ok


@pytest.mark.criterion(7)
def test_criterion_7_error_function(experiments, criterion):
    rows = []
    for s in SEEDS:
        mse, opt = experiments[s]["u5_mse"], experiments[s]["u5_opt"]
        rows.append((dev3(mse.histogram), dev3(opt.histogram), mse.accuracy, opt.accuracy))
    wins = sum(o < m and abs(ao - am) <= DEV0_TOL for m, o, am, ao in rows)
    ok = wins >= 2
    detail = "; ".join(f"seed {s}: |dev|>=3 {m:.3f} -> {o:.3f}, dev0 {am:.3f} -> {ao:.3f}"
                       for s, (m, o, am, ao) in zip(SEEDS, rows))
    criterion(ok, f"opt-mse fewer |dev|>=3 with dev0 within {DEV0_TOL:.0%} of mse in {wins}/3 seeds "
                  f"(need >= 2) [{detail}]")
    assert ok


@pytest.mark.criterion(8)
def test_criterion_8_beats_chance(experiments, criterion):
    accs = {(s, k): experiments[s][k].accuracy for s in SEEDS for k in ("u5_mse", "u5_opt")}
    worst = min(accs.values())
    ok = worst >= CHANCE_BAR
    detail = ", ".join(f"seed {s} {k[3:]} {v:.3f}" for (s, k), v in accs.items())
    criterion(ok, f"uniform5 test accuracy min {worst:.3f} (>= {CHANCE_BAR}, chance 0.20) [{detail}]")
    assert ok


# 9 ----------------------------------------------------------------------------

@pytest.mark.criterion(9)
def test_criterion_9_determinism(tmp_path, criterion):
    digests = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        assert main(["run", "--seed", "42", "--out-dir", str(d)]) == 0
        digests.append({p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())})
    differ = sorted(k for k in digests[0] if digests[0][k] != digests[1].get(k))
    ok = not differ and digests[0].keys() == digests[1].keys()
    criterion(ok, f"seed-42 run twice: {len(digests[0])} files, "
                  f"{'all byte-identical' if ok else 'differ: ' + ', '.join(differ)}")
    assert ok
