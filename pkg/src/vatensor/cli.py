"""Command-line interface: simulate | fit | summarize | evaluate | resample.

Exit codes: 0 success, 2 validation/configuration failure, 3 runtime or
numeric failure.  ``VA_TENSOR_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from vatensor import io, metrics, summaries
from vatensor.chain import run
from vatensor.core import (
    TARGET,
    TRAIN,
    ConfigError,
    DimensionError,
    VADataset,
    ValidationError,
    expand_profiles,
    validate,
)
from vatensor.rng import master_key, substream
from vatensor.synth import generate

logger = logging.getLogger("vatensor")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


class _Timer:
    def __init__(self):
        self.timings = {}

    @contextlib.contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - t0, 6)


def _threads(n):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    flat = io.read_config(args.config) if args.config else {}
    if args.seed is not None:
        flat["sim.seed"] = args.seed
    for key in ("k", "r", "h"):
        if getattr(args, key) is not None:
            flat[f"sim.{key.upper() if key == 'k' else key}"] = getattr(args, key)
    sim = io.sim_config(flat)
    problems = sim.violations()
    if problems:
        raise ConfigError("; ".join(problems))
    out = _outdir(args.output)
    timer = _Timer()
    with timer.phase("generate"):
        ds, truth = generate(sim)
    with timer.phase("write"):
        io.write_dataset(out / "dataset.csv", ds)
        target = ds.target_rows
        io.write_table(out / "truth_target.csv", ["id", "cause"],
                       [[ds.ids[i], int(truth.y[i]) + 1] for i in target])
        io.write_json(out / "truth.json", {
            "pi_target": truth.pi[TARGET].tolist(), "pi_train": truth.pi[TRAIN].tolist(),
            "csmf_target_empirical": truth.target_csmf(ds.domain).tolist(),
            "nu": truth.nu.tolist(), "psi_target": truth.psi[TARGET].tolist(),
            "psi_train": truth.psi[TRAIN].tolist(), "beta_target": truth.beta[TARGET].tolist(),
            "beta_train": truth.beta[TRAIN].tolist(), "phi": truth.phi.tolist(),
            "s": (truth.s + 1).tolist(),
        })
    cfg = {k: v for k, v in vars(sim).items()}
    io.write_manifest(out, "simulate", config=cfg, dataset=ds, seed=sim.seed, timings=timer.timings,
                      files=["dataset.csv", "truth_target.csv", "truth.json"])
    print(f"wrote {ds.n} deaths ({sim.n_train} train, {sim.n_target} target) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit

def _fit_config(args):
    flat = io.read_config(args.config) if args.config else {}
    overrides = {"model.family": args.family, "model.K": args.k, "model.r": args.r, "model.h": args.h,
                 "mcmc.iterations": args.iterations, "mcmc.burn_in": args.burnin,
                 "mcmc.thinning": args.thin, "mcmc.seed": args.seed}
    for k, v in overrides.items():
        if v is not None:
            flat[k] = v
    if args.store_phi:
        flat["mcmc.store_phi"] = True
    if args.store_assignments:
        flat["mcmc.store_assignments"] = True
    fixed = io.read_fixed_groups(args.group_fixed) if args.group_fixed else None
    return flat, fixed


def cmd_fit(args) -> int:
    timer = _Timer()
    flat, fixed = _fit_config(args)
    with timer.phase("read"):
        ds = io.read_dataset(args.data, C=flat.get("model.C"))
    config = io.model_config(flat, ds.C, group_fixed=fixed)
    problems = validate(ds, config)
    if problems:
        raise ValidationError(problems)
    out = _outdir(args.output)
    with timer.phase("sample"), _threads(args.threads):
        draws = run(ds, config)
    with timer.phase("write"):
        files = [f"draws/{f}" for f in io.save_draws(draws, out / "draws")]
        est = summaries.csmf_estimate(draws)
        io.write_table(out / "csmf.csv", ["cause", "mean", "lower", "upper"],
                       [[c + 1, repr(float(m)), repr(float(lo)), repr(float(hi))]
                        for c, (m, lo, hi) in enumerate(zip(est.mean, est.lower, est.upper))])
        probs = summaries.individual_cause_probs(draws)
        io.write_table(out / "cause_probs.csv",
                       ["id", "top_cause", *(f"cause_{c + 1}" for c in range(ds.C))],
                       [[ds.ids[i], int(t) + 1, *(repr(float(v)) for v in p)]
                        for i, t, p in zip(probs.rows, probs.top, probs.probs)])
        files += ["csmf.csv", "cause_probs.csv"]
    cfg = config.to_dict()
    cfg["data"] = str(Path(args.data).resolve())
    io.write_manifest(out, "fit", config=cfg, dataset=ds, seed=config.mcmc.seed, threads=args.threads,
                      timings=timer.timings, files=files)
    print(f"{config.family}: kept {draws.n_draws} draws, wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# summarize

def _locate_draws(path: Path) -> tuple[Path, dict]:
    if (path / "draws" / "index.json").exists():
        manifest = json.loads((path / "manifest.json").read_text()) if (path / "manifest.json").exists() else {}
        return path / "draws", manifest
    if (path / "index.json").exists():
        mpath = path.parent / "manifest.json"
        return path, json.loads(mpath.read_text()) if mpath.exists() else {}
    raise ConfigError(f"{path}: no draws found (expected index.json)")


def cmd_summarize(args) -> int:
    timer = _Timer()
    draws_dir, manifest = _locate_draws(Path(args.draws))
    with timer.phase("read"):
        draws = io.load_draws(draws_dir)
        data = args.data or (manifest.get("config") or {}).get("data")
        if not data:
            raise ConfigError("dataset path unknown; pass --data")
        ds = io.read_dataset(data, C=draws.config.C)
    if draws.meta.get("dataset_checksum") and draws.meta["dataset_checksum"] != ds.checksum():
        raise ValidationError([f"{data} is not the dataset these draws were fitted on"])
    out = _outdir(args.output)
    cfg = draws.config
    C, r, K = cfg.C, cfg.r, cfg.K
    files = []
    with timer.phase("summaries"):
        trace = [[int(it), repr(float(ll))] for it, ll in zip(draws.iterations, draws.loglik)]
        io.write_table(out / "trace.csv", ["iteration", "loglik"], trace)
        files.append("trace.csv")

        cu = summaries.class_utilization(draws)
        io.write_table(out / "class_utilization.csv", ["cause", "group", "class", "rank", "fraction"],
                       [[c + 1, g + 1, k + 1, rank + 1, repr(float(cu.fractions[c, g, k]))]
                        for c in range(C) for g in range(r)
                        for rank, k in enumerate(np.argsort(-cu.fractions[c, g], kind="stable"))])
        sel = {"K": vars(summaries.select_k(cu, args.threshold, args.k_coverage))}
        files.append("class_utilization.csv")

        if draws.s is not None and draws.n_draws:
            gu = summaries.group_utilization(draws)
            io.write_table(out / "group_utilization.csv", ["cause", "rank", "group", "fraction"],
                           [[c + 1, rank + 1, int(gu.order[c, rank]) + 1, repr(float(gu.sorted[c, rank]))]
                            for c in range(C) for rank in range(r)])
            io.write_table(out / "group_utilization_average.csv", ["rank", "fraction"],
                           [[rank + 1, repr(float(v))] for rank, v in enumerate(gu.average)])
            sel["r"] = vars(summaries.select_r(gu, args.threshold, args.r_coverage))
            files += ["group_utilization.csv", "group_utilization_average.csv"]

            rows = []
            for c in range(C):
                for grank, topic in enumerate(summaries.symptom_topics(draws, ds, c, args.top)):
                    for srank, ((j, prob, rate), name) in enumerate(zip(topic.members, topic.names)):
                        rows.append([c + 1, grank + 1, topic.group + 1, srank + 1, name, repr(prob),
                                     repr(rate), int(srank < topic.top_m)])
            io.write_table(out / "topics.csv", ["cause", "group_rank", "group", "symptom_rank", "symptom",
                                                "mode_probability", "empirical_rate", "anchor"], rows)
            mode, _ = summaries.s_mode(draws)
            tree = metrics.cause_dendrogram(mode, ds.cause_names, method=args.linkage)
            io.write_json(out / "dendrogram.json", tree.to_json())
            io.atomic_write(out / "dendrogram.nwk", tree.newick() + "\n")
            io.write_table(out / "cause_dissimilarity.csv", ["cause", *ds.cause_names],
                           [[ds.cause_names[c], *(repr(float(v)) for v in tree.dissimilarity[c])]
                            for c in range(C)])
            files += ["topics.csv", "dendrogram.json", "dendrogram.nwk", "cause_dissimilarity.csv"]
        io.write_json(out / "selection.json", sel)
        files.append("selection.json")

        if draws.best_params is not None:
            bp, bs = draws.best_params, draws.best_state
            weights = bp.class_weights()
            io.write_table(out / "class_weights.csv", ["cause", "group", "class", "weight"],
                           [[c + 1, g + 1, k + 1, repr(float(weights[c, g, k]))]
                            for c in range(C) for g in range(r) for k in range(K)])
            groups = [g - 1 for g in args.groups if g <= r] or [0]
            wrows, prows = [], []
            for c in range(C):
                ex = expand_profiles(bp, c, groups, bs.s[c], cap=args.cap)
                for row, combo in enumerate(ex.combos):
                    label = "-".join(str(k + 1) for k in combo)
                    wrows.append([c + 1, label, repr(float(ex.weights[tuple(combo)]))])
                    for col, j in enumerate(ex.symptoms):
                        prows.append([c + 1, label, ds.symptom_names[j], repr(float(ex.profiles[row, col]))])
            io.write_table(out / "expanded_weights.csv", ["cause", "classes", "weight"], wrows)
            io.write_table(out / "expanded_profiles.csv", ["cause", "classes", "symptom", "probability"], prows)
            files += ["class_weights.csv", "expanded_weights.csv", "expanded_profiles.csv"]
    io.write_manifest(out, "summarize", config={"draws": str(draws_dir.resolve()), "data": str(data),
                                                "best_iteration": draws.best_iteration},
                      dataset=ds, seed=draws.meta.get("seed"), timings=timer.timings, files=files)
    print(f"wrote {len(files)} summary files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def _read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def evaluate_fit(fit_dir, truth_path) -> dict:
    fit_dir = Path(fit_dir)
    preds = _read_rows(fit_dir / "cause_probs.csv")
    csmf = _read_rows(fit_dir / "csmf.csv")
    truth = {r["id"]: int(r["cause"]) for r in _read_rows(truth_path)}
    C = len(csmf)
    if set(truth) != {r["id"] for r in preds}:
        raise ValidationError(["prediction ids and truth ids differ"])
    if any(not 1 <= c <= C for c in truth.values()):
        raise ValidationError([f"truth contains causes outside the fitted cause set 1..{C}"])
    pred = np.array([int(r["top_cause"]) for r in preds])
    true = np.array([truth[r["id"]] for r in preds])
    pi_true = np.bincount(true - 1, minlength=C) / len(true)
    pi_hat = np.array([float(r["mean"]) for r in csmf])
    return {"n_target": len(true), "top_cause_accuracy": metrics.top_cause_accuracy(pred, true),
            "csmf_accuracy": metrics.csmf_accuracy(pi_hat, pi_true)}


def cmd_evaluate(args) -> int:
    report = evaluate_fit(args.predictions, args.truth)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        out = Path(args.output)
        if out.suffix != ".json":
            out = _outdir(out) / "metrics.json"
        io.atomic_write(out, text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# resample

def _prevalence(spec: str, C: int, rng) -> np.ndarray:
    if spec.lower() == "dirichlet":
        return rng.dirichlet(np.ones(C))
    if os.path.exists(spec):
        values = [float(v) for v in Path(spec).read_text().replace("\n", ",").split(",") if v.strip()]
    else:
        values = [float(v) for v in spec.split(",") if v.strip()]
    prev = np.asarray(values)
    if prev.size != C or np.any(prev < 0) or prev.sum() <= 0:
        raise ConfigError(f"prevalence needs {C} non-negative values")
    return prev / prev.sum()


def resample(pool: VADataset, prevalence: np.ndarray, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Stratified resampling with replacement: multinomial cause counts, then
    rows drawn uniformly within each cause.  Returns (row indices, causes)."""
    labeled = np.flatnonzero(pool.y >= 0)
    counts = rng.multinomial(n, prevalence)
    rows, causes = [], []
    for c in range(len(prevalence)):
        if counts[c] == 0:
            continue
        members = labeled[pool.y[labeled] == c]
        if len(members) == 0:
            raise ValidationError([f"cause {c + 1} has positive prevalence but no labeled deaths in the pool"])
        rows.append(rng.choice(members, size=counts[c], replace=True))
        causes.append(np.full(counts[c], c))
    order = rng.permutation(n)
    return np.concatenate(rows)[order], np.concatenate(causes)[order]


def cmd_resample(args) -> int:
    pool = io.read_dataset(args.data, C=args.causes)
    seed = args.seed if args.seed is not None else 0
    rng = substream(master_key(seed), 0, 0)
    prev = _prevalence(args.prevalence, pool.C, rng)
    n = args.n if args.n is not None else int(np.sum(pool.y >= 0))
    rows, causes = resample(pool, prev, n, rng)
    out = _outdir(args.output)
    ids = tuple(f"r{k + 1}" for k in range(n))
    target = VADataset(X=pool.X[rows], y=np.full(n, -1), domain=np.full(n, TARGET),
                       cause_names=pool.cause_names, symptom_names=pool.symptom_names, ids=ids)
    if args.train:
        train = io.read_dataset(args.train, C=pool.C)
        if train.symptom_names != pool.symptom_names:
            raise ValidationError(["training and pool files have different symptom columns"])
        keep = train.train_rows
        target = VADataset(X=np.vstack([train.X[keep], target.X]), y=np.r_[train.y[keep], target.y],
                           domain=np.r_[train.domain[keep], target.domain], cause_names=pool.cause_names,
                           symptom_names=pool.symptom_names, ids=tuple(train.ids[i] for i in keep) + ids)
    io.write_dataset(out / "dataset.csv", target)
    io.write_table(out / "target_truth.csv", ["id", "cause"], [[i, int(c) + 1] for i, c in zip(ids, causes)])
    io.write_json(out / "prevalence.json", {"prevalence": prev.tolist(), "source_rows": (rows + 1).tolist()})
    io.write_manifest(out, "resample", config={"prevalence": args.prevalence, "n": n, "data": args.data,
                                               "train": args.train},
                      dataset=target, seed=seed, files=["dataset.csv", "target_truth.csv", "prevalence.json"])
    print(f"wrote {n} resampled target deaths to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vatensor", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    common.add_argument("--output", "-o", required=True, help="output directory")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--k", type=int)
    model.add_argument("--r", type=int)
    model.add_argument("--h", type=int)

    p = sub.add_parser("simulate", parents=[common, model], help="generate a synthetic dataset")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common, model], help="run the Gibbs sampler")
    p.add_argument("--data", required=True)
    p.add_argument("--family", help="PARAFAC, GroupIndepPARAFAC or CTucker")
    p.add_argument("--iterations", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--store-phi", action="store_true")
    p.add_argument("--store-assignments", action="store_true")
    p.add_argument("--group-fixed", help="CSV of 1-based groups, one row per cause")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", parents=[common], help="posterior summaries of a fit")
    p.add_argument("--draws", required=True, help="fit output directory")
    p.add_argument("--data", help="dataset CSV (defaults to the one recorded by fit)")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--r-coverage", type=float, default=0.95)
    p.add_argument("--k-coverage", type=float, default=0.80)
    p.add_argument("--top", type=int, default=5, help="anchor symptoms per group")
    p.add_argument("--linkage", default="average", choices=["average", "single", "complete"])
    p.add_argument("--groups", type=lambda t: [int(v) for v in t.split(",")], default=[1, 2],
                   help="1-based groups to expand, e.g. 1,2")
    p.add_argument("--cap", type=int, default=4096)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="accuracy metrics against known causes")
    p.add_argument("--predictions", required=True, help="fit output directory")
    p.add_argument("--truth", required=True, help="CSV with id,cause for target deaths")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("resample", parents=[common], help="resample labeled deaths to a target prevalence")
    p.add_argument("--data", required=True, help="pool of labeled deaths")
    p.add_argument("--prevalence", default="dirichlet", help="'dirichlet', comma list, or file")
    p.add_argument("--n", type=int, help="number of target deaths (default: pool size)")
    p.add_argument("--causes", type=int, help="number of causes C")
    p.add_argument("--train", help="training CSV to prepend to the output")
    p.set_defaults(func=cmd_resample)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("VA_TENSOR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError, DimensionError) as exc:
        problems = getattr(exc, "violations", None) or [str(exc)]
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, ArithmeticError, RuntimeError, MemoryError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
