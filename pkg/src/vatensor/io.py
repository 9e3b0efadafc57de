"""File formats: dataset CSV, key-value config files, draw shards and manifests.

Dataset CSV: header ``id,domain,cause,<symptom columns...>``; ``domain`` is
``train`` or ``target``; ``cause`` is a 1-based integer (empty for target
rows); symptom cells are ``0``, ``1`` or ``NA``.

Config files hold one ``section.key = value`` pair per line; ``#`` starts a
comment.  Values are parsed as int, float, bool or comma-separated list.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from vatensor import __version__
from vatensor.chain import PosteriorDraws
from vatensor.core import (
    MISSING,
    TARGET,
    TRAIN,
    ChainControl,
    ConfigError,
    LatentState,
    ModelConfig,
    ModelParams,
    VADataset,
)
from vatensor.synth import SimConfig

SCHEMA_VERSION = 1
_NA = {"", "na", "nan", "null", "."}
_DOMAINS = {"train": TRAIN, "1": TRAIN, "target": TARGET, "0": TARGET}


# ---------------------------------------------------------------------------
# datasets

def read_dataset(path, C: int | None = None) -> VADataset:
    """Read a dataset CSV.  ``C`` defaults to the largest cause label seen."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        if [h.lower() for h in header[:3]] != ["id", "domain", "cause"]:
            raise ConfigError(f"{path}: header must start with id,domain,cause")
        ids, dom, cause, rows = [], [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            if len(rec) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            ids.append(rec[0].strip())
            d = rec[1].strip().lower()
            if d not in _DOMAINS:
                raise ConfigError(f"{path}:{lineno}: domain must be train or target, got {rec[1]!r}")
            dom.append(_DOMAINS[d])
            cv = rec[2].strip()
            if cv.lower() in _NA:
                cause.append(-1)
            else:
                try:
                    cause.append(int(cv) - 1)
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: cause must be an integer label, got {cv!r}") from None
            row = []
            for v in rec[3:]:
                v = v.strip()
                if v.lower() in _NA:
                    row.append(MISSING)
                else:
                    try:
                        row.append(int(float(v)) if float(v).is_integer() else 99)
                    except ValueError:
                        row.append(99)  # reported by validate()
            rows.append(row)
    p = len(header) - 3
    X = np.array(rows, dtype=np.int64).reshape(len(rows), p)
    y = np.array(cause, dtype=np.int64)
    n_causes = C if C is not None else max(2, int(y.max(initial=-1)) + 1)
    return VADataset(X=X, y=y, domain=np.array(dom, dtype=np.int64),
                     cause_names=tuple(f"cause_{c + 1}" for c in range(n_causes)),
                     symptom_names=tuple(header[3:]), ids=tuple(ids))


def write_dataset(path, ds: VADataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "domain", "cause", *ds.symptom_names])
        for i in range(ds.n):
            d = "train" if ds.domain[i] == TRAIN else "target"
            c = "" if ds.y[i] < 0 else str(ds.y[i] + 1)
            w.writerow([ds.ids[i], d, c, *("NA" if v == MISSING else str(v) for v in ds.X[i])])


def read_fixed_groups(path) -> np.ndarray:
    """C x p matrix of 1-based group labels (CSV, no header); returned 0-based."""
    return np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2) - 1


# ---------------------------------------------------------------------------
# config files

def _parse_value(text: str):
    t = text.strip()
    if "," in t:
        return [_parse_value(v) for v in t.split(",") if v.strip()]
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t.strip("\"'")


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip()] = _parse_value(v)
    return out


def _vector(v, n: int, name: str):
    if v is None:
        return None
    if isinstance(v, (int, float)):
        return (float(v),) * n
    v = tuple(float(x) for x in v)
    if len(v) != n:
        raise ConfigError(f"{name} needs {n} values, got {len(v)}")
    return v


def model_config(flat: dict, C: int, group_fixed=None) -> ModelConfig:
    """Build a ModelConfig from ``model.*`` and ``mcmc.*`` keys."""
    m = {k[6:]: v for k, v in flat.items() if k.startswith("model.")}
    c = {k[5:]: v for k, v in flat.items() if k.startswith("mcmc.")}
    unknown = set(m) - {"family", "C", "K", "r", "h", "alpha", "dir_psi", "beta_phi_a", "beta_phi_b"}
    unknown |= {"mcmc." + k for k in set(c) - {"iterations", "burn_in", "thinning", "seed",
                                                 "store_phi", "store_s", "store_assignments"}}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    C = int(m.get("C", C))
    K = int(m.get("K", 3))
    control = ChainControl(**{k: (bool(v) if k.startswith("store") else int(v)) for k, v in c.items()})
    return ModelConfig(
        family=str(m.get("family", "CTucker")), C=C, K=K, r=int(m.get("r", 5)), h=int(m.get("h", 3)),
        alpha=_vector(m.get("alpha"), C, "model.alpha"), dir_psi=_vector(m.get("dir_psi"), K, "model.dir_psi"),
        beta_phi_a=float(m.get("beta_phi_a", 1.0)), beta_phi_b=float(m.get("beta_phi_b", 1.0)),
        group_fixed=group_fixed, mcmc=control,
    )


def sim_config(flat: dict) -> SimConfig:
    s = {k[4:]: v for k, v in flat.items() if k.startswith("sim.")}
    allowed = {"C", "p", "n_train", "n_target", "K", "r", "h", "scenario", "beta_low", "beta_high", "seed"}
    if set(s) - allowed:
        raise ConfigError(f"unknown config keys: {sorted('sim.' + k for k in set(s) - allowed)}")
    lo, hi = int(s.pop("beta_low", 1)), int(s.pop("beta_high", 10))
    kw = {k: (str(v) if k == "scenario" else int(v)) for k, v in s.items()}
    return SimConfig(beta_range=(lo, hi), **kw)


# ---------------------------------------------------------------------------
# output helpers

def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_manifest(outdir, command: str, *, config=None, dataset: VADataset | None = None,
                   seed=None, threads=None, timings=None, files=()) -> dict:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "software": "vatensor",
        "version": __version__,
        "command": command,
        "config": config,
        "dataset_checksum": None if dataset is None else dataset.checksum(),
        "seed": seed,
        "threads": threads,
        "timings_seconds": timings or {},
        "files": sorted(files),
    }
    write_json(Path(outdir) / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# posterior draws

_INDEX_ARRAYS = {"s", "y", "Z", "H"}  # stored 1-based


def _labels(name: str, shape) -> list[str]:
    if not shape:
        return [name]
    return [f"{name}[{','.join(str(i + 1) for i in idx)}]" for idx in np.ndindex(*shape)]


def _write_array(path, name: str, iterations, arr) -> None:
    arr = np.asarray(arr)
    flat = arr.reshape(len(arr), -1)
    if name in _INDEX_ARRAYS:
        flat = flat + 1
    is_int = flat.dtype.kind in "iu"
    with open(path, "w") as fh:
        fh.write(",".join(["iteration", *_labels(name, arr.shape[1:])]) + "\n")
        for it, row in zip(iterations, flat):
            vals = (str(int(v)) for v in row) if is_int else (repr(float(v)) for v in row)
            fh.write(f"{int(it)}," + ",".join(vals) + "\n")


def _read_array(path, name: str, shape, dtype):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    arr = data[:, 1:].astype(dtype).reshape((len(data), *shape))
    if name in _INDEX_ARRAYS:
        arr = arr - 1
    return arr


def save_draws(draws: PosteriorDraws, outdir) -> list[str]:
    """Write one CSV per stored array (rows = retained iterations) plus
    ``index.json`` and ``best.json``.  Output is byte-identical for identical
    draws."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    arrays = {
        "pi_target": draws.pi[:, TARGET], "pi_train": draws.pi[:, TRAIN], "xi": draws.xi,
        "nu": draws.nu, "psi": draws.psi, "lam": draws.lam, "phi": draws.phi, "s": draws.s,
        "class_counts": draws.class_counts, "loglik": draws.loglik, "y": draws.y, "Z": draws.Z, "H": draws.H,
    }
    index = {"schema_version": SCHEMA_VERSION, "family": draws.family, "config": draws.config.to_dict(),
             "n_draws": draws.n_draws, "target_rows": draws.target_rows.tolist(),
             "seed": draws.meta.get("seed"), "config_hash": draws.meta.get("config_hash"),
             "dataset_checksum": draws.meta.get("dataset_checksum"), "arrays": {}}
    files = []
    for name, arr in arrays.items():
        if arr is None:
            continue
        fname = f"{name}.csv"
        _write_array(outdir / fname, name, draws.iterations, arr)
        index["arrays"][name] = {"file": fname, "shape": list(np.shape(arr)[1:]),
                                 "dtype": "int" if np.asarray(arr).dtype.kind in "iu" else "float",
                                 "one_based": name in _INDEX_ARRAYS}
        files.append(fname)
    write_table(outdir / "y_prob.csv", ["row", *(f"cause_{c + 1}" for c in range(draws.config.C))],
                [[int(i) + 1, *(repr(float(v)) for v in p)] for i, p in zip(draws.target_rows, draws.y_prob)])
    files.append("y_prob.csv")
    best = {"iteration": int(draws.best_iteration)}
    if draws.best_params is not None:
        best["params"] = {k: v.tolist() for k, v in vars(draws.best_params).items() if v is not None}
        st = draws.best_state
        best["state"] = {"y": (st.y + 1).tolist(), "Z": (st.Z + 1).tolist(),
                         "H": (st.H + 1).tolist(), "s": (st.s + 1).tolist()}
    write_json(outdir / "best.json", best)
    write_json(outdir / "index.json", index)
    return files + ["best.json", "index.json"]


def load_draws(indir) -> PosteriorDraws:
    indir = Path(indir)
    index = json.loads((indir / "index.json").read_text())
    cfg = dict(index["config"])
    control = ChainControl(**cfg.pop("mcmc"))
    gf = cfg.pop("group_fixed")
    config = ModelConfig(**cfg, mcmc=control, group_fixed=None if gf is None else np.asarray(gf) - 1)
    arrays = {}
    T = index["n_draws"]
    iterations = np.zeros(0, dtype=np.int64)
    for name, info in index["arrays"].items():
        dtype = np.int64 if info["dtype"] == "int" else float
        if T:
            arrays[name] = _read_array(indir / info["file"], name, info["shape"], dtype)
            iterations = np.loadtxt(indir / info["file"], delimiter=",", skiprows=1, usecols=0,
                                    ndmin=1).astype(np.int64)
        else:
            arrays[name] = np.zeros((0, *info["shape"]), dtype=dtype)
    prob = np.loadtxt(indir / "y_prob.csv", delimiter=",", skiprows=1, ndmin=2)
    C = config.C
    y_prob = prob[:, 1:] if prob.size else np.zeros((0, C))
    pi = np.stack([arrays.pop("pi_target"), arrays.pop("pi_train")], axis=1)
    best = json.loads((indir / "best.json").read_text())
    best_params = best_state = None
    if "params" in best:
        best_params = ModelParams(**{k: np.asarray(v, dtype=float) for k, v in best["params"].items()})
        st = best["state"]
        best_state = LatentState(*(np.asarray(st[k], dtype=np.int64) - 1 for k in ("y", "Z", "H", "s")))
    meta = {k: index.get(k) for k in ("seed", "config_hash", "dataset_checksum")}
    return PosteriorDraws(config=config, iterations=iterations, pi=pi,
                          target_rows=np.asarray(index["target_rows"], dtype=np.int64), y_prob=y_prob,
                          best_iteration=best["iteration"], best_params=best_params, best_state=best_state,
                          meta=meta, **arrays)
