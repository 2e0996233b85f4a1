"""Command-line entry point.

Exit codes: 0 success, 1 usage error (bad flags or config), 2 numeric or
data error.
"""

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import datagen, nets, solvers, training
from ..autodiff import finite_diff_grad
from ..dense import eye, power_iteration
from ..errors import ConfigError, UnrollError
from .checkpoint import checkpoint_arrays, params_from_checkpoint
from .config import load_config
from .container import load_container, save_container
from .metrics import nmse, psnr, write_csv

METRICS_HEADER = ["epoch", "train_loss", "val_nmse_vs_ista_target", "val_nmse_vs_planted",
                  "seconds"]
REPORT_HEADER = ["model", "depth", "nmse", "psnr", "params_count", "wallclock_ms"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def worker_count():
    """Maximum worker threads from ``URK_THREADS`` (default 1)."""
    raw = os.environ.get("URK_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise UsageError(f"URK_THREADS must be an integer, got {raw!r}") from None


def _column_chunks(fn, y, workers):
    """Apply a column-independent solver to chunks of ``y``; results rejoin in order."""
    if workers <= 1 or y.shape[1] < 2:
        return fn(y)
    bounds = np.linspace(0, y.shape[1], min(workers, y.shape[1]) + 1).astype(int)
    chunks = [y[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, chunks))
    return np.hstack(parts)


def _mu(cfg, ds):
    if "mu" in ds:
        return datagen.scalar(ds, "mu")
    return cfg["mu_scale"] * power_iteration(ds["W"], seed=cfg["seed"])


def _train_config(cfg):
    return training.TrainConfig(
        model=cfg["model"], depth=cfg["depth"], tied=cfg["tied"], epochs=cfg["epochs"],
        batch=cfg["batch"], lr=cfg["lr"], optimizer=cfg["optimizer"],
        momentum=cfg["momentum"], seed=cfg["seed"], loss=cfg["loss"],
        loss_lambda=cfg["loss_lambda"],
    )


def _initial_model(cfg, ds):
    kind = cfg["model"]
    k = int(datagen.scalar(ds, "k")) if "k" in ds else cfg["k"]
    lam = datagen.scalar(ds, "lambda_sup") if "lambda_sup" in ds else cfg["lambda_sup"]
    return kind, training.init_model(kind, ds["W"], cfg["depth"], tied=cfg["tied"], lam=lam,
                                     k=k, mu=_mu(cfg, ds), rho=cfg["rho"], eta=cfg["eta"])


def cmd_gen_data(args):
    cfg = load_config(args.config)
    family = cfg["family"]
    if family == "sparse":
        cfg.require("n", "m", "t_train")
        ds = datagen.gen_sparse_coding_dataset(
            cfg["n"], cfg["m"], cfg["k"], cfg["t_train"], cfg["t_test"], cfg["noise_sigma"],
            cfg["lambda_sup"], cfg["seed"])
    elif family == "rpca":
        cfg.require("rows", "cols", "rank", "density", "amplitude")
        ds = datagen.gen_rpca_dataset(cfg["rows"], cfg["cols"], cfg["rank"], cfg["density"],
                                      cfg["amplitude"], cfg["seed"])
    else:
        cfg.require("grid_n", "grid_m", "emitters", "t_train")
        ds = datagen.gen_lsparcom_dataset(cfg["grid_n"], cfg["grid_m"], cfg["emitters"],
                                          cfg["t_train"], cfg["seed"], t_test=cfg["t_test"],
                                          noise_sigma=cfg["noise_sigma"])
    save_container(args.output, ds)
    print(f"wrote {len(ds)} arrays to {args.output}")


def cmd_train(args):
    cfg = load_config(args.config)
    ds = load_container(args.data)
    kind, params = _initial_model(cfg, ds)
    tc = _train_config(cfg)
    clock = (lambda: 0.0) if args.no_clock else time.perf_counter
    report = training.train(kind, params, ds, tc, clock=clock)
    extra = {"seed": tc.seed, "config_hash": int(report.config_hash[:12], 16)}
    save_container(args.output, checkpoint_arrays(kind, report.params, extra))
    rows = [[e + 1, report.train_loss[e], report.val_nmse[e], report.val_nmse_planted[e],
             report.seconds[e]] for e in range(len(report.train_loss))]
    write_csv(args.metrics, METRICS_HEADER, rows)
    if args.coupling:
        if kind == "uadmm":
            raise UsageError("weight coupling is defined for lista, liht and lsparcom only")
        before = nets.weight_coupling_residual(params, ds["W"])
        after = nets.weight_coupling_residual(report.params, ds["W"])
        write_csv(args.coupling, ["layer", "residual_init", "residual_trained"],
                  [[l, b, a] for l, (b, a) in enumerate(zip(before, after))])
    print(f"final val NMSE {report.val_nmse[-1]:.6g} (init {report.initial_val_nmse:.6g})")


def cmd_eval(args):
    ds = load_container(args.data)
    kind, params = params_from_checkpoint(load_container(args.checkpoint))
    y, target = ds["Y_test"], ds["X_test"]
    start = time.perf_counter()
    pred = nets.forward(kind, params, y, w=ds.get("W"))
    elapsed = 0.0 if args.no_clock else 1000.0 * (time.perf_counter() - start)
    peak = float(np.max(np.abs(target))) if target.size else 1.0
    row = [kind, params.layers, nmse(pred, target), psnr(pred, target, peak or 1.0),
           params.count(), elapsed]
    write_csv(args.report, REPORT_HEADER, [row])
    print(",".join(REPORT_HEADER))
    print(",".join(str(v) for v in row))


def cmd_solve(args):
    cfg = load_config(args.config)
    ds = load_container(args.data)
    iters = cfg["max_iters"]
    solver = args.solver
    workers = worker_count()
    if solver == "rpca":
        cfg.require("lambda1", "lambda2")
        h1, h2 = ds["H1"], ds["H2"]
        mu = cfg["mu_scale"] * power_iteration(np.hstack([h1, h2]), seed=cfg["seed"])
        low, sparse, trace = solvers.rpca_ista_solve(ds["Y"], h1, h2, cfg["lambda1"],
                                                     cfg["lambda2"], mu, max_iters=iters)
        err_l = nmse(low, ds["Lmat"]) ** 0.5
        err_s = nmse(sparse, ds["Smat"]) ** 0.5 if np.any(ds["Smat"]) else float("nan")
        print("solver,iterations,rel_err_low_rank,rel_err_sparse")
        print(f"rpca,{trace.iterations},{err_l!r},{err_s!r}")
        if args.output:
            save_container(args.output, {"Lmat": low, "Smat": sparse})
        return
    w, y, target = ds["W"], ds["Y_test"], ds["X_test"]
    lam = datagen.scalar(ds, "lambda_sup") if "lambda_sup" in ds else cfg["lambda_sup"]
    mu = _mu(cfg, ds)
    if solver == "ista":
        x = _column_chunks(lambda c: solvers.ista_solve(w, c, lam, mu, iters, tol=0.0).x,
                           y, workers)
    elif solver == "iht":
        k = int(datagen.scalar(ds, "k")) if "k" in ds else cfg["k"]
        x = _column_chunks(lambda c: solvers.iht_solve(w, c, k, mu, iters).x, y, workers)
    elif solver == "admm":
        x = _column_chunks(lambda c: solvers.admm_cs_solve(
            w, c, [eye(w.shape[1])], lam, cfg["rho"], cfg["eta"], iters).x, y, workers)
    else:
        den = solvers.DENOISERS[cfg["denoiser"]]
        x = solvers.modl_alternation(w, y, cfg["modl_lambda"], den, iters, cg_tol=cfg["cg_tol"])
    print("solver,iterations,nmse")
    print(f"{solver},{iters},{nmse(x, target)!r}")
    if args.output:
        save_container(args.output, {"X": x})


def _gradcheck_problem(cfg):
    kind = cfg["model"]
    rng_seed = cfg["seed"]
    if kind == "lsparcom":
        ds = datagen.gen_lsparcom_dataset(cfg["grid_n"] if "grid_n" in cfg else 2,
                                          cfg["grid_m"] if "grid_m" in cfg else 4,
                                          2, 3, rng_seed)
    else:
        ds = datagen.gen_sparse_coding_dataset(cfg["n"] if "n" in cfg else 5,
                                               cfg["m"] if "m" in cfg else 8,
                                               min(cfg["k"], 2), 3, 0, 0.01, 0.1, rng_seed,
                                               ista_max_iters=2000)
    return kind, ds


def cmd_gradcheck(args):
    cfg = load_config(args.config)
    kind, ds = _gradcheck_problem(cfg)
    depth = cfg["depth"] if "depth" in cfg else 3
    lam = 0.1
    params = training.init_model(kind, ds["W"], depth, tied=cfg["tied"], lam=lam,
                                 k=int(datagen.scalar(ds, "k")))
    tc = training.TrainConfig(model=kind, depth=depth, loss=cfg["loss"])
    y, x = ds["Y_train"], ds["X_train"]
    w = ds["W"]
    _, grads = training.model_loss_and_grads(kind, params, y, x, tc, w=w)
    base = params.arrays()
    worst = 0.0
    for name, value in base.items():
        def f(v, name=name):
            trial = dict(base)
            trial[name] = v
            return training.model_loss_and_grads(kind, params.with_arrays(trial), y, x, tc,
                                                 w=w)[0]
        fd = finite_diff_grad(f, value, 1e-6)
        scale = max(float(np.max(np.abs(fd))), float(np.max(np.abs(grads[name]))), 1e-8)
        worst = max(worst, float(np.max(np.abs(fd - grads[name]))) / scale)
    tol = 1e-4 if kind == "uadmm" else 1e-5
    print(f"model,max_rel_err,tolerance\n{kind},{worst!r},{tol!r}")
    return 0 if worst <= tol else 2


def cmd_bench(args):
    cfg = load_config(args.config)
    cfg.require("n", "m")
    ds = datagen.gen_sparse_coding_dataset(cfg["n"], cfg["m"], cfg["k"], 0,
                                           cfg["t_test"] or 100, cfg["noise_sigma"],
                                           cfg["lambda_sup"], cfg["seed"])
    w, y, target = ds["W"], ds["Y_test"], ds["X_test"]
    mu, lam, depth = datagen.scalar(ds, "mu"), cfg["lambda_sup"], cfg["depth"]
    print("method,layers_or_iterations,nmse,ms")
    for iters in sorted({depth, 10 * depth, 100}):
        start = time.perf_counter()
        x = solvers.ista_solve(w, y, lam, mu, max_iters=iters, tol=0.0).x
        ms = 1000.0 * (time.perf_counter() - start)
        print(f"ista,{iters},{nmse(x, target)!r},{ms:.3f}")
    params = nets.lista_init_analytic(w, mu, lam, depth)
    start = time.perf_counter()
    x = nets.lista_forward(params, y)
    ms = 1000.0 * (time.perf_counter() - start)
    print(f"lista_analytic,{depth},{nmse(x, target)!r},{ms:.3f}")


def build_parser():
    p = _Parser(prog="unrollkit", description="Unrolled sparse-recovery experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("config")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train an unrolled network")
    t.add_argument("config")
    t.add_argument("-d", "--data", required=True)
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--metrics", required=True)
    t.add_argument("--coupling", help="write per-layer weight-coupling residuals here")
    t.add_argument("--no-clock", action="store_true",
                   help="write 0 in timing columns so outputs are byte-reproducible")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    e.add_argument("-d", "--data", required=True)
    e.add_argument("-c", "--checkpoint", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--no-clock", action="store_true")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("solve", help="run a classic solver")
    s.add_argument("--solver", required=True, choices=["ista", "iht", "admm", "rpca", "modl"])
    s.add_argument("config")
    s.add_argument("-d", "--data", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("gradcheck", help="compare tape gradients with finite differences")
    c.add_argument("config")
    c.set_defaults(func=cmd_gradcheck)

    b = sub.add_parser("bench", help="time ISTA against analytic LISTA")
    b.add_argument("config")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        code = args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (UnrollError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
