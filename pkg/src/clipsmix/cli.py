"""Command-line workflow: simulate -> fit -> clips -> report.

Configuration is an INI file with sections ``[simulate]``, ``[data]``,
``[model]``, ``[mcmc]`` and ``[clips]``. Table-valued fields (weights,
matrices, BNB parameters) are written as JSON. Command-line flags override
the file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .clips import FunctionalSpec, compare_partition, confusion_matrix, run_clips
from .datasets import load_diabetes, simulate_example1, simulate_figure1, simulate_lca, simulate_markov
from .distributions import make_rng
from .errors import ClipsError, ConfigError, DataError
from .sampler import MixtureConfig, run_chain
from .store import dumps, read_store, write_store

GENERATORS = ("example1", "figure1", "lca", "markov", "diabetes")
GENERATOR_KERNEL = {"example1": "gaussian", "figure1": "gaussian", "lca": "categorical",
                    "markov": "markov", "diabetes": "gaussian"}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path):
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} does not exist")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for sec in ("simulate", "data", "model", "mcmc", "clips"):
        if not cp.has_section(sec):
            cp.add_section(sec)
    return cp


def _get(cp, sec, key, conv=str, default=None):
    if not cp.has_option(sec, key):
        return default
    raw = cp.get(sec, key).strip()
    try:
        if conv is bool:
            return cp.getboolean(sec, key)
        if conv == "json":
            return json.loads(raw)
        return conv(raw)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None


def mixture_config(cp, seed=None) -> MixtureConfig:
    kernel = _get(cp, "model", "kernel", str, "gaussian")
    hyper = {}
    if kernel == "gaussian":
        hyper["b0_scale"] = _get(cp, "model", "b0_scale", str, "range_sq")
    elif kernel == "categorical":
        nc = _get(cp, "model", "n_categories", "json")
        if nc is not None:
            hyper["n_categories"] = nc
    elif kernel == "markov":
        L = _get(cp, "model", "L", int)
        if L is not None:
            hyper["L"] = L
        hyper["persistence_prior"] = _get(cp, "model", "persistence_prior", float, 0.0)
    try:
        return MixtureConfig(
            kernel=kernel,
            k_mode=_get(cp, "model", "k_mode", str, "bnb"),
            K=_get(cp, "model", "K", int, 4),
            bnb=tuple(_get(cp, "model", "bnb", "json", [1.0, 4.0, 3.0])),
            gamma_rule=_get(cp, "model", "gamma_rule", str, "dynamic"),
            gamma=_get(cp, "model", "gamma", float, 0.5),
            init=_get(cp, "model", "init", str, "kmeans"),
            init_K=_get(cp, "model", "init_K", int),
            M0=_get(cp, "mcmc", "M0", int, 1000),
            M=_get(cp, "mcmc", "M", int, 1000),
            thin=_get(cp, "mcmc", "thin", int, 1),
            seed=seed if seed is not None else _get(cp, "mcmc", "seed", int, 0),
            random_permutation=_get(cp, "mcmc", "random_permutation", bool, False),
            hyper=hyper,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# data files
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_data(path, data, kernel):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        data = np.asarray(data)
        if kernel == "markov":
            w.writerow([f"t{t + 1}" for t in range(data.shape[1])])
        elif kernel == "categorical":
            w.writerow([f"x{j + 1}" for j in range(data.shape[1])])
        else:
            w.writerow([f"y{j + 1}" for j in range(data.shape[1])])
        for row in data:
            w.writerow([_fmt(v) for v in row])


def read_data(path, kernel):
    """Gaussian: float matrix; categorical: int matrix; markov: list of int sequences."""
    if not os.path.exists(path):
        raise DataError(f"data file {path} does not exist")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: no observations after the header row")
    body = [[v.strip() for v in r if v.strip() != ""] for r in rows[1:]]
    body = [r for r in body if r]
    try:
        if kernel == "markov":
            return [np.array([int(v) for v in r], dtype=np.int64) for r in body]
        width = {len(r) for r in body}
        if len(width) != 1:
            raise DataError(f"{path}: rows have differing numbers of fields {sorted(width)}")
        if kernel == "categorical":
            return np.array([[int(v) for v in r] for r in body], dtype=np.int64)
        return np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _as_labels(truth):
    labels = truth.get("labels")
    if labels is None:
        raise DataError("truth file has no 'labels' field")
    return np.asarray(labels)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(cp, seed, out):
    gen = _get(cp, "simulate", "generator", str)
    if gen not in GENERATORS:
        raise ConfigError(f"[simulate] generator must be one of {GENERATORS}, got {gen!r}")
    seed = seed if seed is not None else _get(cp, "simulate", "seed", int, 0)
    rng = make_rng(seed)
    n = _get(cp, "simulate", "N", int, 1000)
    if gen == "example1":
        data, z, truth = simulate_example1(n, rng)
    elif gen == "figure1":
        data, z, truth = simulate_figure1(n, rng)
    elif gen == "lca":
        data, z, truth = simulate_lca(n, rng, table=_get(cp, "simulate", "probabilities", "json"),
                                      weights=_get(cp, "simulate", "weights", "json"))
    elif gen == "markov":
        data, z, truth = simulate_markov(n, rng, matrices=_get(cp, "simulate", "matrices", "json"),
                                         weights=_get(cp, "simulate", "weights", "json"),
                                         length=_get(cp, "simulate", "length", int, 30))
    else:
        data, classes = load_diabetes()
        z, truth = classes, {"source": "bundled diabetes fixture", "classes": sorted(set(classes))}
    out.mkdir(parents=True, exist_ok=True)
    write_data(out / "data.csv", data, GENERATOR_KERNEL[gen])
    truth = {"generator": gen, "seed": seed, "N": int(len(z)), **truth,
             "labels": [v if isinstance(v, str) else int(v) for v in np.asarray(z).tolist()]}
    (out / "truth.json").write_text(dumps(truth) + "\n", encoding="utf-8")
    print(f"wrote {len(z)} observations to {out / 'data.csv'}")
    return 0


def _fit_one(args):
    data, cfg_dict, path = args
    cfg = MixtureConfig.from_dict(cfg_dict)
    t0 = time.perf_counter()
    store = run_chain(data, cfg)
    write_store(path, store)
    kp = [r.K_plus for r in store.records]
    return {"file": Path(path).name, "seed": cfg.seed, "seconds": round(time.perf_counter() - t0, 3),
            "K_plus_mode": int(np.bincount(kp).argmax())}


def cmd_fit(cp, seed, out, chains=1, data_path=None):
    cfg = mixture_config(cp, seed)
    data_path = data_path or _get(cp, "data", "path", str)
    if data_path is None:
        raise ConfigError("no data file: set [data] path or pass --data")
    data = read_data(data_path, cfg.kernel)
    out.mkdir(parents=True, exist_ok=True)
    if chains < 1:
        raise ConfigError("--chains must be at least 1")
    jobs = []
    for c in range(chains):
        d = cfg.to_dict()
        d["seed"] = cfg.seed + c
        name = "store.jsonl" if chains == 1 else f"store_chain{c + 1}.jsonl"
        jobs.append((data, d, str(out / name)))
    t0 = time.perf_counter()
    if chains == 1:
        runs = [_fit_one(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(chains, os.cpu_count() or 1)) as pool:
            runs = list(pool.map(_fit_one, jobs))
    cfg_text = json.dumps(cfg.to_dict(), sort_keys=True)
    manifest = {"version": __version__, "data": str(data_path), "seed": cfg.seed, "chains": chains,
                "config": cfg.to_dict(),
                "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
                "runs": runs, "seconds": round(time.perf_counter() - t0, 3)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for r in runs:
        print(f"{r['file']}: seed {r['seed']}, K+ mode {r['K_plus_mode']}, {r['seconds']} s")
    return 0


def cmd_clips(cp, store_path, out, kplus=None, min_fill=None, functional=None, restarts=None, seed=None):
    store = read_store(store_path)
    min_fill = min_fill if min_fill is not None else _get(cp, "clips", "min_fill", float, 0.0)
    functional = functional or _get(cp, "clips", "functional", str, "default")
    restarts = restarts or _get(cp, "clips", "restarts", int, 10)
    kplus = kplus if kplus is not None else _get(cp, "clips", "kplus", int)
    seed = seed if seed is not None else _get(cp, "clips", "seed", int, 0)
    spec = FunctionalSpec.parse(functional, clr=_get(cp, "clips", "clr", bool, False))
    res = run_clips(store, k_hat=kplus, min_fill_fraction=min_fill, functional=spec,
                    restarts=restarts, seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    body = {"store": Path(store_path).name, "kernel": store.kernel, "min_fill": min_fill,
            "restarts": restarts, "seed": seed, **res.to_json()}
    (out / "clips.json").write_text(dumps(body) + "\n", encoding="utf-8")
    with open(out / "ppr.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "component", "group_label"] + [f"phi_{j + 1}" for j in range(res.points.shape[1])])
        for (m, k), g, row in zip(res.ppr_rows, res.group_labels, res.points):
            w.writerow([int(m), int(k), int(g)] + [format(float(v), ".17g") for v in row])
    if res.modal_partition is not None:
        with open(out / "partition.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["observation", "cluster"])
            for i, c in enumerate(res.modal_partition):
                w.writerow([i + 1, int(c)])
    print(f"K+ estimate: {res.K_hat_plus}")
    print(f"retained draws: {res.M_strat} of {len(store.records)}")
    print(f"non-permutation rate: {res.nu:.4f} ({res.M_nu} of {res.M_strat})")
    if res.modal_partition is None:
        print("no identified draws: every retained iteration was a non-permutation", file=sys.stderr)
    return 0


def _cluster_table(result):
    kernel = result["kernel"]
    lines = []
    sums = result["summaries"]
    if not sums:
        return ["(no identified draws)"]
    names = list(sums[0]["mean"])
    if kernel == "categorical":
        groups = {}
        for n in names:
            _, j, l = n.split("_")
            groups.setdefault(int(j), []).append(n)
        head = "cluster  weight  | " + " | ".join(
            " ".join(f"{j}.{n.split('_')[2]:<3}" for n in g) for j, g in groups.items())
        lines.append(head)
        for s in sums:
            cells = " | ".join(" ".join(f"{s['mean'][n]:5.2f}" for n in g) for g in groups.values())
            lines.append(f"{s['cluster']:>7}  {s['eta_mean']:6.3f}  | {cells}")
    elif kernel == "markov":
        L = int(round(np.sqrt(len(names))))
        for s in sums:
            lines.append(f"cluster {s['cluster']} (weight {s['eta_mean']:.3f})")
            for j in range(L):
                row = [s["mean"][names[j * L + l]] for l in range(L)]
                lines.append("  " + " ".join(f"{v:6.3f}" for v in row))
    else:
        mus = [n for n in names if n.startswith("mu_")]
        lines.append("cluster  weight  " + " ".join(f"{n:>10}" for n in mus))
        for s in sums:
            lines.append(f"{s['cluster']:>7}  {s['eta_mean']:6.3f}  "
                         + " ".join(f"{s['mean'][n]:10.3f}" for n in mus))
    return lines


def cmd_report(result_dir, truth_path=None, out=None):
    result_dir = Path(result_dir)
    path = result_dir / "clips.json"
    if not path.exists():
        raise DataError(f"{path} does not exist; run the clips command first")
    result = json.loads(path.read_text(encoding="utf-8"))
    lines = [f"store: {result['store']} ({result['kernel']} kernel)", "", "K+ posterior:"]
    for k, v in result["kplus_posterior"].items():
        lines.append(f"  K+={k}: {v:.3f}")
    lines += ["", f"K+ estimate: {result['K_hat_plus']}",
              f"retained draws: {result['M_strat']}",
              f"non-permutation rate: {result['nu']:.4f}", "", "identified clusters (posterior means):"]
    lines += _cluster_table(result)
    if truth_path is not None:
        truth = json.loads(Path(truth_path).read_text(encoding="utf-8"))
        ref = _as_labels(truth)
        part_path = result_dir / "partition.csv"
        if not part_path.exists():
            raise DataError("no modal partition available for scoring")
        with open(part_path, newline="", encoding="utf-8") as fh:
            part = np.array([int(r["cluster"]) for r in csv.DictReader(fh)])
        if part.size != ref.size:
            raise DataError(f"partition has {part.size} entries, truth has {ref.size}")
        acc, ari = compare_partition(part, ref)
        cm = confusion_matrix(part, ref)
        ref_names = [str(v) for v in np.unique(ref)]
        lines += ["", "confusion matrix (rows: clusters, columns: reference):",
                  "         " + " ".join(f"{n:>9}" for n in ref_names)]
        for i, row in enumerate(cm):
            lines.append(f"{np.unique(part)[i]:>8} " + " ".join(f"{v:>9d}" for v in row))
        lines += [f"accuracy: {acc:.3f}", f"adjusted Rand index: {ari:.3f}"]
    text = "\n".join(lines) + "\n"
    (Path(out) if out else result_dir).mkdir(parents=True, exist_ok=True)
    ((Path(out) if out else result_dir) / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _uint(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="clipsmix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a data set and its truth file")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=_uint)
    s.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="run the MCMC sampler and write draw stores")
    f.add_argument("--config", required=True)
    f.add_argument("--data", help="data CSV (overrides [data] path)")
    f.add_argument("--seed", type=_uint)
    f.add_argument("--out", required=True)
    f.add_argument("--chains", type=_uint, default=1)

    c = sub.add_parser("clips", help="identify the mixture from a draw store")
    c.add_argument("store")
    c.add_argument("--config")
    c.add_argument("--out", required=True)
    c.add_argument("--kplus", type=_uint)
    c.add_argument("--min-fill", type=float)
    c.add_argument("--functional")
    c.add_argument("--restarts", type=_uint)
    c.add_argument("--seed", type=_uint)

    r = sub.add_parser("report", help="human-readable summary of a clips result")
    r.add_argument("result", help="directory holding clips.json")
    r.add_argument("--truth", help="truth.json with reference labels")
    r.add_argument("--out")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(load_config(args.config), args.seed, Path(args.out))
        if args.command == "fit":
            return cmd_fit(load_config(args.config), args.seed, Path(args.out),
                           chains=args.chains, data_path=args.data)
        if args.command == "clips":
            return cmd_clips(load_config(args.config), args.store, Path(args.out),
                             kplus=args.kplus, min_fill=args.min_fill, functional=args.functional,
                             restarts=args.restarts, seed=args.seed)
        return cmd_report(args.result, args.truth, args.out)
    except ClipsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
