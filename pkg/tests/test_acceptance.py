"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 3 and 4 train full-size models and take several minutes each.
Criterion 6 runs on a real ACTG-175 analysis file when CAUSALNN_ACTG175_CSV
points at one; the same structural path always runs on a synthetic file with
that schema.
"""
import math
import os
import time

import numpy as np
import pytest

from causalnn import causal_models as cm
from causalnn import io
from causalnn.cli import run_cli
from causalnn.evaluation import pehe, run_benchmark
from causalnn.synth_dgp import DgpConfig, build_theta, copula_sample, normal_quantile, simulate
from causalnn.uncertainty import credible_band, posterior_arms, posterior_cate, score_bands

from conftest import record_acceptance
from test_synth_dgp import EXPECTED_TREATED_FRACTION

# reference test root-PEHE of the targeted models, and S-/T-learner level
REFERENCE_TEST_PEHE = {"tcnn": 0.362, "icnn": 0.331, "snn": 1.07, "tnn": 1.07}
TARGETED_BAND = (0.2, 0.6)
BASELINE_BAND = (0.8, 1.5)


# ---------------------------------------------------------------- 1

def test_acceptance_1_gradients():
    t0 = time.perf_counter()
    ds = simulate(DgpConfig(n=64, seed=99))
    rng = np.random.default_rng(0)
    worst, per_entry = {}, {}
    for kind in cm.KINDS:
        cfg = cm.default_config(kind, mu_layers=[12, 8], tau_layers=[10], l2_mu=1e-3, l2_tau=3e-3)
        model = cm.init_model(kind, ds.P, cfg, rng)
        # nonzero biases keep units of inactive additive blocks off the relu kink
        for net in model.nets.values():
            for layer in net.layers:
                layer.biases[:] = rng.normal(scale=0.1, size=layer.biases.shape)
        Xs = (ds.X - ds.X.mean(0)) / ds.X.std(0)
        ys = (ds.Y - ds.Y.mean()) / ds.Y.std()
        worst[kind] = cm.check_gradients(model, Xs, ds.A.astype(float), ys, norm="tensor")
        # per-entry error, reported only: round-off dominates it for tiny entries
        per_entry[kind] = cm.check_gradients(model, Xs, ds.A.astype(float), ys, norm="entry")
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-5 and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e} (entry {per_entry[k]:.0e})" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    record_acceptance("1 gradient correctness (per-array rel err < 1e-5, < 30 s)", ok, detail)
    assert ok


# ---------------------------------------------------------------- 2

def test_acceptance_2_dgp_fidelity():
    t0 = time.perf_counter()
    n = 50_000
    theta = build_theta(10)
    U = copula_sample(theta, n, np.random.default_rng(7))
    latent = np.corrcoef(normal_quantile(U), rowvar=False)
    err_a = float(np.max(np.abs(latent - theta.theta)))

    ds = simulate(DgpConfig(n=n, seed=7))
    cont, binary = ds.X[:, :5], ds.X[:, 5:]
    err_mean = float(np.max(np.abs(cont.mean(0))))
    err_sd = float(np.max(np.abs(cont.std(0) - 1)))
    err_bin = float(np.max(np.abs(binary.mean(0) - 0.5)))
    resid = ds.Y - ds.mu_true - ds.tau_true * ds.A
    rel_var = abs(resid.var() / 0.5 - 1)
    err_pi = abs(ds.A.mean() - EXPECTED_TREATED_FRACTION)
    elapsed = time.perf_counter() - t0

    checks = {
        "a latent corr": err_a <= 0.02,
        "b marginals": err_mean <= 0.02 and err_sd <= 0.02 and err_bin <= 0.01,
        "c noise var": rel_var <= 0.05,
        "d treated frac": err_pi <= 0.01,
        "runtime": elapsed < 10,
    }
    detail = (f"corr {err_a:.4f}, mean {err_mean:.4f}, sd {err_sd:.4f}, bin {err_bin:.4f}, "
              f"var {rel_var:.3%}, treated {ds.A.mean():.4f} vs {EXPECTED_TREATED_FRACTION:.4f}, {elapsed:.1f}s")
    ok = all(checks.values())
    record_acceptance("2 DGP fidelity (n = 50,000)", ok, detail)
    assert ok, checks


# ---------------------------------------------------------------- 3

@pytest.fixture(scope="module")
def table1():
    t0 = time.perf_counter()
    report = run_benchmark(cm.KINDS, B=20, dgp=DgpConfig(n=2000), base_seed=0, n_jobs=-1)
    return report, time.perf_counter() - t0


@pytest.mark.slow
def test_acceptance_3_table1_soft_bands(table1):
    report, _ = table1
    means = report.test_means()
    for kind, band in (("tcnn", TARGETED_BAND), ("icnn", TARGETED_BAND),
                       ("snn", BASELINE_BAND), ("tnn", BASELINE_BAND)):
        inside = band[0] <= means[kind] <= band[1]
        record_acceptance(f"3 soft band {kind} test root-PEHE in {list(band)}", inside,
                          f"{means[kind]:.3f} (reference {REFERENCE_TEST_PEHE[kind]})")
    # soft bands are reported, not enforced
    print(report.to_table())


@pytest.mark.slow
def test_acceptance_3_table1_ordering(table1):
    report, elapsed = table1
    m = report.test_means()
    top = max(m["tcnn"], m["icnn"])
    middle = (min(m["rnn"], m["rnam"]), max(m["rnn"], m["rnam"]))
    bottom = min(m["snn"], m["tnn"])
    ok = top < middle[0] and middle[1] < bottom
    detail = ", ".join(f"{k} {v:.3f}+/-{report.models[k].test_pehe_mcerr:.3f}" for k, v in m.items())
    record_acceptance("3 ordering {TCNN, ICNN} < {R-NN, R-NAM} < {S-NN, T-NN} (B = 20)", ok,
                      f"{detail}; {elapsed / 60:.1f} min")
    assert ok, report.to_table()


# ---------------------------------------------------------------- 4

@pytest.mark.slow
def test_acceptance_4_score_recovery():
    t0 = time.perf_counter()
    ds = simulate(DgpConfig(n=2000, seed=0))
    model = cm.fit("icnn", ds, cm.default_config("icnn", seed=0))
    x1 = ds.X[:, 0]
    lo, hi = np.quantile(x1, [0.025, 0.975])
    grid = np.linspace(lo, hi, 100)
    band = score_bands(model, 0, grid, S=200, level=0.95, rng=0, kind="tau")
    # score curves are centred over the training marginal, so the truth is too
    truth = 0.8 * grid ** 2 - np.mean(0.8 * x1 ** 2)
    r = float(np.corrcoef(band.mean, truth)[0, 1])
    inside = float(np.mean((truth >= band.lower) & (truth <= band.upper)))
    elapsed = time.perf_counter() - t0
    ok = r > 0.95 and inside >= 0.8 and elapsed < 300
    record_acceptance("4 tau_1 score recovery (corr > 0.95, truth in 95% band >= 80%)", ok,
                      f"corr {r:.4f}, inside {inside:.0%}, {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 5

@pytest.fixture(scope="module")
def fitted(small_data):
    return {k: cm.fit(k, small_data, cm.default_config(k, epochs=5, seed=3)) for k in cm.KINDS}


def test_acceptance_5_properties(tmp_path, fitted, small_data, monkeypatch):
    rng = np.random.default_rng(5)
    X = small_data.X
    results = {}

    a, b = rng.normal(size=1000), rng.normal(size=1000)
    brute = math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b)) / a.size)
    results["pehe oracle"] = abs(pehe(a, b) - brute) < 1e-12

    robinson = True
    for kind in cm.ROBINSON_KINDS:
        _, _, y1 = cm.robinson_predict(fitted[kind], X, np.ones(len(X)))
        _, _, y0 = cm.robinson_predict(fitted[kind], X, np.zeros(len(X)))
        robinson &= np.max(np.abs((y1 - y0) - cm.predict_cate(fitted[kind], X))) < 1e-12
    results["robinson consistency"] = bool(robinson)

    out = cm.icnn_forward(fitted["icnn"], X, small_data.A)
    results["icnn additivity"] = bool(
        np.max(np.abs(out.tau_bias + out.tau_parts.sum(1) - out.tau_hat)) < 1e-12
        and np.max(np.abs(out.mu_bias + out.mu_parts.sum(1) - out.mu_hat)) < 1e-12)

    quiet = cm.fit("icnn", small_data, cm.default_config("icnn", epochs=2, mu_dropout=0, tau_dropout=0))
    collapsed = score_bands(quiet, 0, np.linspace(-2, 2, 20), S=5, rng=0)
    cate_band = credible_band(posterior_cate(quiet, X, S=5, rng=0))
    results["zero-dropout collapse"] = bool(np.all(collapsed.lower == collapsed.upper)
                                            and np.all(cate_band.lower == cate_band.upper))

    draws = posterior_cate(fitted["tcnn"], X[:50], S=100, rng=1)
    nested = True
    for l1, l2 in ((0.5, 0.8), (0.8, 0.95), (0.1, 0.99)):
        s, w = credible_band(draws, l1), credible_band(draws, l2)
        nested &= np.all(w.lower <= s.lower) and np.all(s.upper <= w.upper)
    results["quantile nesting"] = bool(nested)

    y0, y1 = posterior_arms(fitted["tnn"], X[:50], S=400, rng=2)
    v = (y1 - y0).var(0, ddof=1)
    cov = np.array([np.cov(y1[:, i], y0[:, i])[0, 1] for i in range(50)])
    ident = y1.var(0, ddof=1) + y0.var(0, ddof=1) - 2 * cov
    results["t-learner variance identity"] = bool(np.allclose(v, ident, rtol=1e-9, atol=1e-12))

    f = tmp_path / "d.csv"
    io.save_dataset_csv(small_data, f)
    back = io.load_csv(f)
    results["csv round trip"] = all(np.array_equal(getattr(small_data, n), getattr(back, n))
                                    for n in ("X", "A", "Y", "mu_true", "tau_true", "pi_true"))

    def pipeline(sub):
        d = tmp_path / sub
        d.mkdir()
        monkeypatch.chdir(d)
        run_cli(["simulate", "--n", "150", "--seed", "4", "--out", "d.csv"])
        run_cli(["benchmark", "--data", "d.csv", "--reps", "2", "--epochs", "2", "--models", "tcnn", "icnn",
                 "--out-report", "r.csv"])
        return (d / "d.csv").read_bytes(), (d / "r.csv").read_bytes()

    results["simulate -> benchmark determinism"] = pipeline("a") == pipeline("b")

    ok = all(results.values())
    record_acceptance("5 property suites", ok, ", ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in results.items()))
    assert ok, results


# ---------------------------------------------------------------- 6

def _synthetic_actg(path, n=200, seed=0):
    rng = np.random.default_rng(seed)
    cols = list(io.ACTG175_COVARIATES)
    lines = [",".join(cols + ["treat", "cd4_diff"])]
    for i in range(n):
        row = []
        for c in cols:
            if c in io.ACTG175_CONTINUOUS:
                row.append(repr(float(rng.normal(35, 9))))
            else:
                row.append(str(int(rng.random() < 0.4)))
        row += [str(int(rng.random() < 0.5)), repr(float(rng.normal(15, 70)))]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _actg_smoke(path, tmp_path, epochs):
    ds = io.load_csv(path, io.actg175_schema())
    n0, n1 = ds.arm_counts()
    model_file, scores_file = tmp_path / "actg.npz", tmp_path / "actg_scores.csv"
    code_train = run_cli(["train", "--model", "icnn", "--data", str(path), "--schema", "actg175",
                          "--epochs", str(epochs), "--out-model", str(model_file)])
    code_scores = run_cli(["scores", "--model-file", str(model_file), "--draws", "50",
                           "--out", str(scores_file)])
    tau = [sf for sf in io.load_scores_csv(scores_file) if sf.kind == "tau"] if code_scores == 0 else []
    finite = all(np.all(np.isfinite(np.r_[sf.mean, sf.lower, sf.upper])) for sf in tau)
    ok = (ds.P == 12 and n0 > 0 and n1 > 0 and code_train == 0 and code_scores == 0
          and len(tau) == 12 and finite)
    return ok, f"N={ds.N}, P={ds.P}, arms {n0}/{n1}, tau curves {len(tau)}, finite bands {finite}"


def test_acceptance_6_actg_structure_synthetic(tmp_path):
    ok, detail = _actg_smoke(_synthetic_actg(tmp_path / "actg_synth.csv"), tmp_path, epochs=5)
    record_acceptance("6 ACTG-175 schema smoke path (synthetic file)", ok, detail)
    assert ok


@pytest.mark.skipif(not os.environ.get("CAUSALNN_ACTG175_CSV"), reason="set CAUSALNN_ACTG175_CSV to run on real data")
def test_acceptance_6_actg_real(tmp_path):
    ok, detail = _actg_smoke(os.environ["CAUSALNN_ACTG175_CSV"], tmp_path, epochs=500)
    record_acceptance("6 ACTG-175 smoke path (user-supplied file)", ok, detail)
    assert ok
