"""Command-line entry point: ``rfgsvi simulate | analyze | gsa-check``.

Every run writes ``run_config.json`` next to its outputs. Passing that file back
with ``--config`` reproduces the outputs bit for bit; the thread count and the
output directory are not part of the config because they cannot change results.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .cart import cart_vi, grow_tree, prune_cost_complexity
from .dataset import Dataset, load_csv, make_folds
from .forest import ForestParams
from .gsa import DegenerateVarianceError, jansen_total, uniform_sampler
from .report import METHODS
from .rng import RngSeed
from .sim import DgpSpec, MethodParams, run_monte_carlo, score_methods

log = logging.getLogger("rfgsvi")

METHOD_ALIASES = {"cart": "CART", "rf": "RF_MDA", "cf": "CF", "smda": "SOBOL_MDA", "rfgs": "RF_GS"}

# names of the arguments that belong to the run config, per command
CONFIG_KEYS = {
    "simulate": ("seed", "scenario", "n", "reps", "methods", "full", "cf_threshold", "cf_bins", "cf_all",
                 "gsa_L", "gsa_H", "H"),
    "analyze": ("seed", "data", "response", "folds", "mc_reps", "methods", "cf_threshold", "cf_bins", "cf_all",
                "gsa_L", "gsa_H", "H"),
    "gsa-check": ("seed", "fn", "N"),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, "params": dict(self.params)}

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        keys = CONFIG_KEYS[args.command]
        params = {k: getattr(args, k) for k in keys if k != "seed"}
        return cls(args.command, int(args.seed), params)


def parse_methods(text: str) -> list[str]:
    if text == "all":
        return list(METHODS)
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok not in METHOD_ALIASES:
            raise ValueError(f"unknown method {tok!r}; choose from all or {','.join(METHOD_ALIASES)}")
        out.append(METHOD_ALIASES[tok])
    return [m for m in METHODS if m in out]


def _method_params(p: dict) -> MethodParams:
    forest = ForestParams(n_trees=p["H"])
    return MethodParams(forest=forest, cf_threshold=p["cf_threshold"], cf_bins=p["cf_bins"], cf_all=p["cf_all"],
                        gsa_L=p["gsa_L"], gsa_forest=ForestParams(n_trees=p["gsa_H"]))


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_simulate(cfg: RunConfig, out: Path, threads: int) -> dict:
    p = cfg.params
    n, reps = (1000, 1000) if p["full"] else (p["n"], p["reps"])
    spec = DgpSpec(p["scenario"], n=n)
    methods = parse_methods(p["methods"])
    summaries = run_monte_carlo(spec, methods, reps, _method_params(p), RngSeed(cfg.seed), n_jobs=threads)
    names = [f"X{j + 1}" for j in range(spec.p)]
    for s in summaries:
        rows = ([r, names[j], _fmt(s.scores[r, j])] for r in range(s.replications) for j in range(spec.p))
        _write_rows(out / f"scenario{spec.scenario}_{s.method}.csv", ["replication", "feature", "score"], rows)
    doc = {"config": cfg.to_dict(), "scenario": spec.scenario, "n": n, "replications": reps,
           "features": names, "correct_set": [names[j] for j in sorted(spec.correct_set)],
           "summaries": [s.to_dict() for s in summaries]}
    _write_json(out / f"scenario{spec.scenario}_summary.json", doc)
    return doc


def _fold_rep(train: Dataset, methods, params: MethodParams, rng: RngSeed) -> dict[str, np.ndarray]:
    return {m: r.scores for m, r in score_methods(train, methods, params, rng).items()}


def cmd_analyze(cfg: RunConfig, out: Path, threads: int) -> dict:
    p = cfg.params
    data = load_csv(p["data"], p["response"])
    methods = parse_methods(p["methods"])
    params = _method_params(p)
    root = RngSeed(cfg.seed)
    folds = make_folds(data.n, p["folds"], root.child("folds"))
    k, R = folds.k, p["mc_reps"]
    names = list(data.feature_names)
    doc = {"config": cfg.to_dict(), "features": names, "n": data.n, "folds": k, "methods": {}}

    if "CART" in methods:
        per_fold = np.empty((k, data.p))
        for f in range(k):
            tree = grow_tree(data.take(folds.train_rows(f)), min_node=params.cart_min_node)
            tree = prune_cost_complexity(tree, data.take(folds.test_rows(f)))
            per_fold[f] = cart_vi(tree, names).scores
        used = (per_fold > 0).sum(axis=0)
        absent = used * 2 <= k
        mean = per_fold.mean(axis=0)
        rows = [[names[j], _fmt(mean[j]), int(used[j]), int(absent[j])] for j in range(data.p)]
        _write_rows(out / "cart_vi.csv", ["feature", "mean_score", "folds_used", "absent"], rows)
        _write_rows(out / "analyze_CART.csv", ["fold", "feature", "score"],
                    ([f, names[j], _fmt(per_fold[f, j])] for f in range(k) for j in range(data.p)))
        reported = [j for j in np.argsort(-mean, kind="stable") if not absent[j]]
        doc["methods"]["CART"] = {"per_feature_mean": mean.tolist(), "folds_used": used.tolist(),
                                  "absent": [names[j] for j in range(data.p) if absent[j]],
                                  "ranking": [names[j] for j in reported]}

    others = [m for m in methods if m != "CART"]
    if others:
        tasks = [(f, r) for f in range(k) for r in range(R)]
        work = (delayed(_fold_rep)(data.take(folds.train_rows(f)), others, params, root.child("fold", f, "rep", r))
                for f, r in tasks)
        results = Parallel(n_jobs=threads)(work) if threads != 1 else [fn(*a, **kw) for fn, a, kw in work]
        for m in others:
            S = np.array([res[m] for res in results]).reshape(k, R, data.p)
            _write_rows(out / f"analyze_{m}.csv", ["fold", "replication", "feature", "score"],
                        ([f, r, names[j], _fmt(S[f, r, j])] for f in range(k) for r in range(R)
                         for j in range(data.p)))
            dist = S.mean(axis=0)
            _write_rows(out / f"analyze_{m}_distribution.csv", ["replication", "feature", "score"],
                        ([r, names[j], _fmt(dist[r, j])] for r in range(R) for j in range(data.p)))
            mean = dist.mean(axis=0)
            doc["methods"][m] = {"per_feature_mean": mean.tolist(),
                                 "per_feature_sd": (dist.std(axis=0, ddof=1) if R > 1 else np.zeros(data.p)).tolist(),
                                 "ranking": [names[j] for j in np.argsort(-mean, kind="stable")]}
    _write_json(out / "analyze_summary.json", doc)
    return doc


def _additive(X):
    return X[:, 0] + 2.0 * X[:, 1]


def _product(X):
    return X[:, 0] * X[:, 1]


def _constant(X):
    return np.full(X.shape[0], 3.0)


def _ishigami(X, a=7.0, b=0.1):
    return np.sin(X[:, 0]) + a * np.sin(X[:, 1]) ** 2 + b * X[:, 2] ** 4 * np.sin(X[:, 0])


def _ishigami_exact(a=7.0, b=0.1):
    V1 = 0.5 * (1 + b * np.pi**4 / 5) ** 2
    V2 = a**2 / 8
    V13 = b**2 * np.pi**8 * (1 / 18 - 1 / 50)
    V = V1 + V2 + V13
    return [V1 / V, V2 / V, 0.0], [(V1 + V13) / V, V2 / V, V13 / V]


# name -> (function, sampler, exact first-order, exact total)
TEST_FUNCTIONS = {
    "additive": (_additive, uniform_sampler(2), [0.2, 0.8], [0.2, 0.8]),
    "product": (_product, uniform_sampler(2, -1.0, 1.0), [0.0, 0.0], [1.0, 1.0]),
    "constant": (_constant, uniform_sampler(2), None, None),
    "ishigami": (_ishigami, uniform_sampler(3, -np.pi, np.pi), *_ishigami_exact()),
}


def cmd_gsa_check(cfg: RunConfig, out: Path, threads: int) -> dict:
    p = cfg.params
    if p["fn"] not in TEST_FUNCTIONS:
        raise ValueError(f"unknown test function {p['fn']!r}")
    f, sampler, S_true, T_true = TEST_FUNCTIONS[p["fn"]]
    est = jansen_total(f, sampler, p["N"], RngSeed(cfg.seed).child("gsa-check"))
    S, T = est.first_order, est.total
    doc = {"config": cfg.to_dict(), "fn": p["fn"], "N": p["N"], "output_variance": est.output_variance,
           "first_order": S.tolist(), "total": T.tolist(), "first_order_exact": S_true, "total_exact": T_true,
           "first_order_abs_error": np.abs(S - S_true).tolist(), "total_abs_error": np.abs(T - T_true).tolist()}
    _write_json(out / f"gsa_check_{p['fn']}.json", doc)
    return doc


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "gsa-check": cmd_gsa_check}


def _print_report(doc: dict, command: str) -> None:
    if command == "simulate":
        print(f"scenario {doc['scenario']}  n={doc['n']}  replications={doc['replications']}")
        print(f"{'method':<10} {'correct-first':>13}  " + "  ".join(f"{x:>12}" for x in doc["features"]))
        for s in doc["summaries"]:
            means = "  ".join(f"{v:12.5g}" for v in s["per_feature_mean"])
            print(f"{s['method']:<10} {s['correct_first_proportion']:13.3f}  {means}")
    elif command == "analyze":
        for m, d in doc["methods"].items():
            means = "  ".join(f"{n}={v:.5g}" for n, v in zip(doc["features"], d["per_feature_mean"]))
            print(f"{m:<10} {means}")
            if m == "CART" and d["absent"]:
                print(f"{'':<10} absent in most folds: {', '.join(d['absent'])}")
    else:
        print(f"{doc['fn']}  N={doc['N']}  V={doc['output_variance']:.6g}")
        for i, (s, t) in enumerate(zip(doc["first_order"], doc["total"])):
            se, te = doc["first_order_exact"][i], doc["total_exact"][i]
            print(f"x{i + 1}: S={s:.4f} (exact {se:.4f}, err {abs(s - se):.4f})  "
                  f"T={t:.4f} (exact {te:.4f}, err {abs(t - te):.4f})")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--threads", type=int, default=-1, help="worker processes; -1 uses all cores")
    shared.add_argument("--out", type=Path, default=Path("rfgsvi_out"))
    shared.add_argument("--json", action="store_true", help="print the JSON summary instead of a table")
    shared.add_argument("--config", type=Path, help="re-run from a run_config.json")

    def vi_flags(sp):
        sp.add_argument("--methods", default="all", help="all or a comma list of rfgs,rf,cart,cf,smda")
        sp.add_argument("--cf-threshold", dest="cf_threshold", type=float, default=0.2)
        sp.add_argument("--cf-bins", dest="cf_bins", type=int, default=4)
        sp.add_argument("--cf-all", dest="cf_all", action="store_true")
        sp.add_argument("--gsa-L", dest="gsa_L", type=int, default=30)
        sp.add_argument("--gsa-H", dest="gsa_H", type=int, default=100)
        sp.add_argument("--H", type=int, default=100, help="trees in the RF, CF and Sobol-MDA forest")

    ap = argparse.ArgumentParser(prog="rfgsvi", description="Generative variable importance via random forests and GSA")
    sub = ap.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[shared], help="Monte Carlo comparison on the structural scenarios")
    sim.add_argument("--scenario", type=int, default=1)
    sim.add_argument("--n", type=int, default=500)
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--full", action="store_true", help="n = 1000 rows and 1000 replications")
    vi_flags(sim)
    an = sub.add_parser("analyze", parents=[shared], help="k-fold importance analysis of a CSV dataset")
    an.add_argument("--data", type=str)
    an.add_argument("--response", type=str)
    an.add_argument("--folds", type=int, default=5)
    an.add_argument("--mc-reps", dest="mc_reps", type=int, default=100)
    vi_flags(an)
    gc = sub.add_parser("gsa-check", parents=[shared], help="Jansen estimators on analytic test functions")
    gc.add_argument("--fn", default="additive")
    gc.add_argument("--N", type=int, default=10000)
    return ap


def _load_config(path: Path, args: argparse.Namespace) -> RunConfig:
    doc = json.loads(Path(path).read_text())
    if doc.get("command") != args.command:
        raise ValueError(f"config is for {doc.get('command')!r}, not {args.command!r}")
    missing = set(CONFIG_KEYS[args.command]) - {"seed"} - set(doc.get("params", {}))
    if missing:
        raise ValueError(f"config lacks {sorted(missing)}")
    return RunConfig(doc["command"], int(doc["seed"]), doc["params"])


def _validate(cfg: RunConfig) -> None:
    p = cfg.params
    if cfg.command == "analyze" and (not p.get("data") or not p.get("response")):
        raise ValueError("analyze needs --data and --response")
    for key in ("n", "reps", "folds", "mc_reps", "gsa_L", "gsa_H", "H", "N", "cf_bins"):
        if key in p and p[key] is not None and p[key] < 1:
            raise ValueError(f"--{key.replace('_', '-')} must be positive, got {p[key]}")
    if "methods" in p:
        parse_methods(p["methods"])
    if cfg.command == "simulate":
        DgpSpec(p["scenario"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args.config, args) if args.config else RunConfig.from_args(args)
        _validate(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "run_config.json", cfg.to_dict())
        marker = out / "INCOMPLETE"
        marker.write_text("run did not finish; outputs in this directory may be partial\n")
        doc = COMMANDS[cfg.command](cfg, out, args.threads)
        marker.unlink()
    except DegenerateVarianceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        _print_report(doc, cfg.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
