"""Acceptance criteria, one test each, at their stated tolerances.

A pass/fail line per criterion is printed in the terminal summary.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from oracles import svt_grid_oracle
from problems import lasso_problem, network_gradcheck
from unrollkit import datagen, nets, prox, solvers, training
from unrollkit.dense import eye, power_iteration
from unrollkit.harness.cli import main as cli_main
from unrollkit.harness.config import load_config
from unrollkit.harness.metrics import nmse, write_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@pytest.mark.criterion(1, "analytic LISTA-15 equals 15 ISTA steps")
def test_lista_keystone(verdict):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        w, y, _, mu = lasso_problem(seed, noise=0.01)
        out = nets.lista_forward(nets.lista_init_analytic(w, mu, 0.1, 15), y)
        ref = solvers.ista_solve(w, y, 0.1, mu, max_iters=15, tol=0.0).x
        worst = max(worst, float(np.max(np.abs(out - ref))))
    secs = time.perf_counter() - start
    verdict(worst <= 1e-10 and secs < 5.0,
            f"max abs diff {worst:.3g} (<= 1e-10) over 20 problems in {secs:.2f} s (< 5 s)")


@pytest.mark.criterion(2, "learned IHT equals IHT; frozen unrolled ADMM equals ADMM")
def test_liht_and_admm_keystones(verdict):
    iht_diff, iht_sparse, admm_diff = 0.0, True, 0.0
    for seed in range(20):
        w, y, _, mu = lasso_problem(seed, noise=0.01)
        out = nets.liht_forward(nets.liht_init_analytic(w, mu, 3, 15), y)
        iht = solvers.iht_solve(w, y, 3, mu, max_iters=15, keep_iterates=True)
        iht_diff = max(iht_diff, float(np.max(np.abs(out - iht.x))))
        iht_sparse &= all(np.count_nonzero(it) <= 3 for it in iht.iterates)
        iht_sparse &= np.count_nonzero(out) <= 3
        ua = nets.unrolled_admm_forward(nets.uadmm_init([eye(40)], 0.1, 1.0, 1.0, 15), w, y)
        ad = solvers.admm_cs_solve(w, y, [eye(40)], 0.1, 1.0, 1.0, max_iters=15).x
        admm_diff = max(admm_diff, float(np.max(np.abs(ua - ad))))
    verdict(iht_diff == 0.0 and iht_sparse and admm_diff <= 1e-10,
            f"IHT max diff {iht_diff:.3g} (exact), k-sparse iterates {iht_sparse}; "
            f"ADMM max diff {admm_diff:.3g} (<= 1e-10)")


@pytest.mark.criterion(3, "network gradients match central differences")
def test_gradient_suite(verdict):
    start = time.perf_counter()
    worst = {kind: max(network_gradcheck(kind, seed) for seed in range(5))
             for kind in ("lista", "lsparcom", "uadmm")}
    secs = time.perf_counter() - start
    ok = worst["lista"] <= 1e-5 and worst["lsparcom"] <= 1e-5 and worst["uadmm"] <= 1e-4
    verdict(ok and secs < 30.0,
            "max rel err " + ", ".join(f"{k} {v:.2g}" for k, v in worst.items())
            + f" (1e-5; ADMM 1e-4) over 5 seeds in {secs:.1f} s (< 30 s)")


@pytest.mark.criterion(4, "ISTA objective nonincreasing")
def test_ista_descent(verdict):
    worst_rise = -np.inf
    for seed in range(20):
        w, y, _, mu = lasso_problem(seed, noise=0.01)
        assert mu == 1.01 * power_iteration(w)
        obj = solvers.ista_solve(w, y, 0.1, mu, max_iters=200, tol=0.0).objective
        worst_rise = max(worst_rise, float(np.max(np.diff(obj))))
    verdict(worst_rise <= 1e-12,
            f"largest per-step increase {worst_rise:.3g} (<= 1e-12) over 20 problems x 200 its")


@pytest.mark.criterion(5, "prox operators match brute-force minimization")
def test_prox_oracles(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    z = rng.standard_normal((4, 4))
    soft = np.max(np.abs(prox.soft_threshold(z, 0.3) - prox.prox_bruteforce_oracle("l1", z, 0.3)))
    z = rng.standard_normal((3, 4))
    group = np.max(np.abs(prox.row_group_soft_threshold(z, 0.5)
                          - prox.prox_bruteforce_oracle("l12", z, 0.5)))
    svt = 0.0
    for z in (np.random.default_rng(1).standard_normal((2, 2)), np.array([[2.0, 0.5], [-0.3, 1.5]])):
        svt = max(svt, np.max(np.abs(prox.singular_value_threshold(z, 0.7)
                                     - svt_grid_oracle(z, 0.7))))
    alpha = 0.8
    x = np.linspace(0.0, 3.0, 3001)
    x = x[np.abs(x - alpha) >= 0.1]
    limit = np.max(np.abs(prox.sigmoid_plus_threshold(x, alpha, 100.0).ravel() - x * (x > alpha)))
    secs = time.perf_counter() - start
    ok = max(soft, group, svt) <= 1e-4 and limit <= 1e-3 and secs < 60.0
    verdict(ok, f"soft {soft:.2g}, row-group {group:.2g}, SVT 2x2 {svt:.2g} (<= 1e-4); "
                f"S+ limit gap {limit:.2g} (<= 1e-3); {secs:.1f} s (< 60 s)")


@pytest.mark.criterion(6, "ADMM and ISTA reach the same lasso solution")
def test_admm_ista_equivalence(verdict):
    worst = 0.0
    for seed in range(10):
        w, y, _, mu = lasso_problem(seed, noise=0.01)
        ista = solvers.ista_solve(w, y, 0.1, mu, max_iters=100000, tol=1e-13).x
        admm = solvers.admm_cs_solve(w, y, [eye(40)], 0.1, 1.0, 1.0, max_iters=3000).x
        worst = max(worst, rel(admm, ista))
    verdict(worst <= 1e-4, f"max rel diff {worst:.3g} (<= 1e-4) over 10 instances")


@pytest.fixture(scope="module")
def trained_lista(standard_dataset):
    cfg = load_config(CONFIGS / "standard.cfg")
    ds = standard_dataset
    init = training.init_model("lista", ds["W"], cfg["depth"], tied=cfg["tied"],
                               lam=cfg["lambda_sup"], mu=datagen.scalar(ds, "mu"))
    tc = training.TrainConfig(model="lista", depth=cfg["depth"], tied=cfg["tied"],
                              epochs=cfg["epochs"], batch=cfg["batch"], lr=cfg["lr"],
                              optimizer=cfg["optimizer"], seed=cfg["seed"])
    start = time.perf_counter()
    report = training.train("lista", init, ds, tc)
    return init, report, time.perf_counter() - start


@pytest.mark.criterion(7, "trained LISTA-10 beats its init and nears ISTA-100")
def test_training_efficacy(verdict, standard_dataset, trained_lista):
    ds = standard_dataset
    init, report, secs = trained_lista
    y, target = ds["Y_test"], ds["X_test"]
    trained = nmse(nets.lista_forward(report.params, y), target)
    analytic = nmse(nets.lista_forward(init, y), target)
    ista100 = nmse(solvers.ista_solve(ds["W"], y, 0.1, datagen.scalar(ds, "mu"),
                                      max_iters=100, tol=0.0).x, target)
    ok = trained <= 0.5 * analytic and trained <= 1.5 * ista100 and secs < 180.0
    verdict(ok, f"held-out NMSE {trained:.4g}; analytic init {analytic:.4g} "
                f"(need <= {0.5 * analytic:.4g}); ISTA-100 {ista100:.4g} "
                f"(need <= {1.5 * ista100:.4g}); training {secs:.0f} s (< 180 s)")


@pytest.mark.criterion(8, "RPCA separates low-rank and sparse parts")
def test_rpca_separation(verdict):
    cfg = load_config(CONFIGS / "rpca.cfg")
    ds = datagen.gen_rpca_dataset(cfg["rows"], cfg["cols"], cfg["rank"], cfg["density"],
                                  cfg["amplitude"], cfg["seed"])
    mu = 1.01 * power_iteration(np.hstack([ds["H1"], ds["H2"]]))
    low, sparse, tr = solvers.rpca_ista_solve(ds["Y"], ds["H1"], ds["H2"], cfg["lambda1"],
                                              cfg["lambda2"], mu, max_iters=cfg["max_iters"])
    err_l, err_s = rel(low, ds["Lmat"]), rel(sparse, ds["Smat"])
    verdict(err_l <= 1e-2 and err_s <= 1e-2 and tr.iterations <= 500,
            f"rel err L {err_l:.3g}, S {err_s:.3g} (both <= 1e-2) after {tr.iterations} its "
            f"at lambda1={cfg['lambda1']}, lambda2={cfg['lambda2']}")


@pytest.mark.criterion(9, "MoDL CG step matches dense solve")
def test_modl_data_consistency(verdict):
    worst = 0.0
    for seed in range(5):
        w, y, _, _ = lasso_problem(seed, cols=2, noise=0.05)
        lam = 0.5
        a = w.T @ w + lam * np.eye(40)
        for name, den in sorted(solvers.DENOISERS.items()):
            _, steps = solvers.modl_alternation(w, y, lam, den, 4, history=True)
            for _, rhs, x in steps:
                worst = max(worst, rel(x, np.linalg.solve(a, rhs)))
    verdict(worst <= 1e-8, f"max per-stage rel diff {worst:.3g} (<= 1e-8)")


@pytest.mark.criterion(10, "identical seed and config give bit-identical artifacts")
def test_determinism(verdict, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n=20\nm=40\nk=3\nt_train=200\nt_test=50\nnoise_sigma=0.01\n"
                   "lambda_sup=0.1\nseed=1\ndepth=10\nepochs=3\nlr=0.001\n")
    blobs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        assert cli_main(["gen-data", str(cfg), "-o", str(d / "data.urk")]) == 0
        assert cli_main(["train", str(cfg), "-d", str(d / "data.urk"), "-o", str(d / "ckpt.urk"),
                         "--metrics", str(d / "metrics.csv"), "--no-clock"]) == 0
        blobs.append([(d / f).read_bytes() for f in ("data.urk", "ckpt.urk", "metrics.csv")])
    same = [x == y for x, y in zip(*blobs)]
    verdict(all(same), f"dataset/checkpoint/metrics identical: {same}")


@pytest.mark.criterion(11, "weight-coupling diagnostic")
def test_weight_coupling(verdict, standard_dataset, trained_lista, tmp_path):
    ds = standard_dataset
    w, mu = ds["W"], datagen.scalar(ds, "mu")
    analytic = (nets.weight_coupling_residual(nets.lista_init_analytic(w, mu, 0.1, 10), w)
                + nets.weight_coupling_residual(nets.liht_init_analytic(w, mu, 3, 10), w)
                + nets.weight_coupling_residual(
                    nets.lsparcom_init_analytic(w, mu, 0.1 / mu, 50.0, 10), w))
    init, report, _ = trained_lista
    before = nets.weight_coupling_residual(init, w)
    after = nets.weight_coupling_residual(report.params, w)
    path = tmp_path / "coupling.csv"
    write_csv(path, ["layer", "residual_init", "residual_trained"],
              [[l, b, a] for l, (b, a) in enumerate(zip(before, after))])
    emitted = len(path.read_text().splitlines()) == 11
    profile = " ".join(f"{r:.3g}" for r in after)
    verdict(max(analytic) <= 1e-12 and emitted,
            f"analytic max residual {max(analytic):.3g} (<= 1e-12); trained profile [{profile}]")
