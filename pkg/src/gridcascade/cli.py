"""Command-line pipeline: generate | train | search | explain | eval.

Every command is deterministic for a fixed configuration and seed, and
writes plain JSON/JSONL/CSV files meant for tests and external plotting.
Exit codes: 0 success, 2 validation error, 3 infeasibility, 4 I/O error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cascade import initial_state, propagate, write_paths_jsonl
from .dispatch import DispatchInfeasibleError
from .gcn import (
    GcnHyper,
    load_model,
    metrics,
    predict,
    read_dataset,
    save_model,
    train,
    write_dataset,
)
from .linegraph import build_line_graph, extract_features
from .lrp import explain, write_report_csv, write_report_json
from .network import CaseFormatError, CaseValidationError, parse_case, scale_loads
from .search import (
    STRATEGY_KINDS,
    SearchStrategy,
    exhaustive_reference,
    generate_dataset,
    online_search,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _add_common(p):
    p.add_argument("--case", required=True, help="path to a JSON case file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=1.1, help="relay threshold ratio")


def _add_hyper(p):
    p.add_argument("--k-hops", type=int, default=3)
    p.add_argument("--f1", type=int, default=16)
    p.add_argument("--f2", type=int, default=4)
    p.add_argument("--w-ratio", type=float, default=20.0,
                   help="loss weight of the shedding class over the normal class")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.005)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gridcascade",
        description="Cascading-failure search with a graph-convolutional guide",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate scenarios into a labeled dataset")
    _add_common(p)
    p.add_argument("-n", "--n-scenarios", type=int, required=True)
    p.add_argument("--R", type=int, default=2, help="maximum random failures")
    p.add_argument("--band", default="0.9,1.1", help="per-bus load factor band lo,hi")
    p.add_argument("--scale", type=float, default=1.1, help="global load factor")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("train", help="fit the classifier on a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="dataset JSONL path")
    _add_hyper(p)

    p = sub.add_parser("search", help="run the guided online search")
    _add_common(p)
    p.add_argument("--strategies", default="RAND,PFW,LODF,GCN")
    p.add_argument("--model", help="model JSON (required for the GCN strategy)")
    p.add_argument("--budget", type=int, help="max attempts; default exhaustive")
    p.add_argument("--R", type=int, default=2)
    p.add_argument("--load-scale", type=float, default=1.1)
    p.add_argument("--load-seed", type=int,
                   help="draw per-bus load factors from --band with this seed")
    p.add_argument("--band", default="0.9,1.1")

    p = sub.add_parser("explain", help="relevance report for one prediction")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--branch", type=int, required=True, help="branch to explain")
    p.add_argument("--outages", default="", help="branches already out, comma separated")
    p.add_argument("--load-scale", type=float, default=1.1)
    p.add_argument("--load-seed", type=int)
    p.add_argument("--band", default="0.9,1.1")

    p = sub.add_parser("eval", help="classification metrics on a labeled dataset")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    return parser


def _read_case(path):
    return parse_case(Path(path).read_text())


def _parse_band(text):
    lo, hi = (float(v) for v in text.split(","))
    return (lo, hi)


def _scenario_loads(net, scale, band, load_seed):
    factors = None
    if load_seed is not None:
        rng = np.random.default_rng(load_seed)
        factors = rng.uniform(band[0], band[1], size=net.n_buses)
    return scale_loads(net, scale, factors).base_load


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_generate(args):
    net = _read_case(args.case)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples, meta = generate_dataset(
        net, args.n_scenarios, R=args.R, load_band=_parse_band(args.band),
        global_scale=args.scale, seed=args.seed, beta=args.beta, jobs=args.jobs,
    )
    with open(out / "dataset.jsonl", "w") as fh:
        write_dataset(samples, fh)
    _write_json(out / "dataset.meta.json", meta)
    print(f"wrote {len(samples)} scenarios "
          f"(positive rate {meta['positive_rate']:.4f}) to {out}")
    return EXIT_OK


def cmd_train(args):
    net = _read_case(args.case)
    lg = build_line_graph(net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.dataset) as fh:
        samples = read_dataset(fh)
    meta_path = Path(args.dataset).with_suffix("").with_suffix(".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        if meta.get("graph_hash") not in (None, lg.graph_hash):
            raise CaseValidationError(
                "graph-hash mismatch: dataset was generated from a different case"
            )
    hyper = GcnHyper(k_hops=args.k_hops, f1=args.f1, f2=args.f2,
                     w1=args.w_ratio, w2=1.0, lr=args.lr, epochs=args.epochs,
                     batch=args.batch, seed=args.seed)
    model = train(samples, lg, hyper)
    with open(out / "model.json", "w") as fh:
        save_model(model, fh)
    with open(out / "loss_trace.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(model.loss_trace, 1):
            fh.write(f"{i},{v:.10g}\n")
    final = model.loss_trace[-1] if model.loss_trace else float("nan")
    print(f"trained {model.n_parameters()}-parameter model "
          f"({hyper.epochs} epochs, final loss {final:.4f}) to {out}")
    return EXIT_OK


def cmd_search(args):
    net = _read_case(args.case)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = [s.strip().upper() for s in args.strategies.split(",") if s.strip()]
    for kind in kinds:
        if kind not in STRATEGY_KINDS:
            raise CaseValidationError(f"unknown strategy {kind!r}")
    if args.budget is not None and args.budget < 1:
        raise CaseValidationError("budget must be >= 1")
    model = None
    if "GCN" in kinds:
        if not args.model:
            raise CaseValidationError("the GCN strategy requires --model")
        with open(args.model) as fh:
            model = load_model(fh)

    loads = _scenario_loads(net, args.load_scale, _parse_band(args.band), args.load_seed)
    reference = exhaustive_reference(net, loads, args.R, beta=args.beta,
                                     cache_path=out / "exhaustive.json")
    summary = {"total_shedding_paths": len(reference), "strategies": {}}
    for kind in kinds:
        strategy = SearchStrategy(kind, seed=args.seed, model=model)
        paths, curve = online_search(net, loads, strategy, args.R,
                                     budget=args.budget, beta=args.beta)
        curve.total_paths = len(reference)
        with open(out / f"paths_{kind.lower()}.jsonl", "w") as fh:
            write_paths_jsonl([p for p in paths if p.sheds], fh)
        with open(out / f"curve_{kind.lower()}.csv", "w") as fh:
            curve.to_csv(fh)
        summary["strategies"][kind] = {
            "attempts_total": len(curve.attempts),
            "paths_found": curve.found[-1] if curve.found else 0,
            "attempts_to_completion": curve.attempts_to_complete(),
        }
    _write_json(out / "summary.json", summary)
    print(f"{len(reference)} shedding paths in the exhaustive reference")
    for kind in kinds:
        row = summary["strategies"][kind]
        print(f"  {kind:<4} found {row['paths_found']:>4} "
              f"complete at attempt {row['attempts_to_completion']}")
    return EXIT_OK


def cmd_explain(args):
    net = _read_case(args.case)
    lg = build_line_graph(net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.model) as fh:
        model = load_model(fh)
    if lg.graph_hash != model.graph_hash:
        raise CaseValidationError("model was trained on a different case")
    loads = _scenario_loads(net, args.load_scale, _parse_band(args.band), args.load_seed)
    state = initial_state(net, loads)
    for token in args.outages.split(","):
        if not token.strip():
            continue
        k = int(token)
        if not state.in_service[k]:
            raise CaseValidationError(f"outage branch {k} is already out of service")
        state, _ = propagate(net, state, k, beta=args.beta)
    branch = args.branch
    if not 0 <= branch < net.n_branches:
        raise CaseValidationError(f"branch {branch} does not exist")
    if not state.in_service[branch]:
        raise CaseValidationError(f"branch {branch} is out of service in this state")
    features = extract_features(net, state, args.beta)
    report = explain(model, lg, features, branch)
    with open(out / "explanation.json", "w") as fh:
        write_report_json(report, fh)
    with open(out / "relevance.csv", "w") as fh:
        write_report_csv(report, fh)
    flag = " (NEGATIVE_TARGET)" if report.negative_target else ""
    print(f"branch {branch}: target {report.target_value:.4f}{flag}; "
          f"groups {json.dumps(report.to_dict()['groups'], sort_keys=True)}")
    return EXIT_OK


def cmd_eval(args):
    net = _read_case(args.case)
    lg = build_line_graph(net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.model) as fh:
        model = load_model(fh)
    if lg.graph_hash != model.graph_hash:
        raise CaseValidationError("model was trained on a different case")
    with open(args.dataset) as fh:
        samples = read_dataset(fh)
    preds, labels = [], []
    for s in samples:
        y, _ = predict(model, lg, s.features)
        preds.extend(y[s.mask])
        labels.extend(s.labels[s.mask])
    scores = metrics(np.array(preds), np.array(labels))
    scores["base_rate"] = float(np.mean(labels)) if labels else None
    _write_json(out / "metrics.json", scores)
    print(json.dumps(scores, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "search": cmd_search,
    "explain": cmd_explain,
    "eval": cmd_eval,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CaseFormatError, CaseValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DispatchInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
