"""fcbench command line.

Experiment subcommands build a typed ExperimentRequest and either execute it
in-process (default) or POST it to a running service (--server).  `serve`
starts the API.

Value ranges accept either comma lists ("5,7,9") or spans ("5..11";
"0.02..0.10" steps by 0.02 for adversarial proportions).
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench.report import load_document, render_csv, render_json
from .service.models import ExperimentRequest
from .service.runner import run_experiment_request


def parse_int_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def parse_float_range(text: str, step: float = 0.02) -> list[float]:
    if ".." in text:
        lo, hi = (float(x) for x in text.split("..", 1))
        out = []
        v = lo
        while v <= hi + 1e-9:
            out.append(round(v, 10))
            v += step
        return out
    return [float(x) for x in text.split(",") if x]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", default="synthetic:", help="CSV path or synthetic:SPEC")
    p.add_argument("--featurize", choices=["url"], default=None)
    p.add_argument("--workload", default="uniform",
                   choices=["one_pass", "uniform", "zipfian", "adversarial"])
    p.add_argument("--queries", type=int, default=1_000_000)
    p.add_argument("--z", type=float, default=1.5)
    p.add_argument("--d", default="0.02..0.10",
                   help="adversarial proportion(s), e.g. 0.02..0.10 or 0.04")
    p.add_argument("--r", default="5..11", help="remainder bits, e.g. 5..11 or 5,8")
    p.add_argument("--filters", default="bloom,aqf,lbf,adabf,plbf,stacked")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--retrain", action="store_true")
    p.add_argument("--neg-fraction", type=float, default=0.3)
    p.add_argument("--max-leaf-nodes", type=int, default=128)
    p.add_argument("--probe-size", type=int, default=10_000)
    p.add_argument("--shares", default="0.1,0.3,0.5,0.7,0.9",
                   help="model-size shares for modelprop")
    p.add_argument("--neg-fractions", default="0.1,0.3,0.5,0.9",
                   help="training negative fractions for trainprop")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--server", default=None,
                   help="base URL of a running service; default runs in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcbench",
        description="approximate-membership-filter benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ("fpr", "dynamic", "timing", "modelprop", "trainprop"):
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        _add_common(p)
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8337)
    return parser


def request_from_args(args) -> ExperimentRequest:
    return ExperimentRequest(
        kind=args.command,
        dataset=args.dataset,
        featurize=args.featurize,
        workload=args.workload,
        queries=args.queries,
        z=args.z,
        d_values=parse_float_range(args.d),
        r_values=parse_int_range(args.r),
        filters=[f for f in args.filters.split(",") if f],
        trials=args.trials,
        seed=args.seed,
        retrain=args.retrain,
        neg_fraction=args.neg_fraction,
        max_leaf_nodes=args.max_leaf_nodes,
        probe_size=args.probe_size,
        model_shares=[float(x) for x in args.shares.split(",") if x],
        neg_fractions=[float(x) for x in args.neg_fractions.split(",") if x],
    )


def execute(req: ExperimentRequest, server: str | None) -> dict:
    if server is None:
        return run_experiment_request(req)
    import httpx

    resp = httpx.post(
        f"{server.rstrip('/')}/experiments/{req.kind}",
        json=req.model_dump(),
        timeout=None,
    )
    resp.raise_for_status()
    return resp.json()


def write_output(doc: dict, fmt: str, out: str) -> None:
    if fmt == "json":
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    else:
        text = render_csv(load_document(json.dumps(doc)))
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    req = request_from_args(args)
    doc = execute(req, args.server)
    write_output(doc, args.format, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
