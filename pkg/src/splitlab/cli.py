"""``splitlab`` command line: model, simulate, experiment, wireproxy, chain-client.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import asyncio
import contextlib
import hashlib
import json
import logging
import os
import sys
import time

from . import experiments, model
from .model import ModelParams, ms
from .wireproxy import DEFAULT_IDLE_TIMEOUT, dial_chain, parse_addr, serve


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _pos_int(text: str) -> int:
    value = _nonneg_int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _pos_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _ms_list(text: str) -> list[float]:
    return [_pos_float(x) for x in text.split(",") if x.strip()]


def _addr(text: str):
    try:
        return parse_addr(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitlab", description="Split-TCP latency model, simulator and chain proxy.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="evaluate the closed-form TTFB/TTC model")
    p.add_argument("--rtt-ms", type=_pos_float, default=100.0, help="direct client-server RTT (default 100)")
    p.add_argument("--proxies", type=_nonneg_int, default=0, help="proxies evenly splitting the path")
    p.add_argument("--hops-ms", type=_ms_list, help="explicit one-way hop delays, comma separated (overrides --proxies)")
    size = p.add_mutually_exclusive_group()
    size.add_argument("--flow-kb", type=_pos_float, help="flow size in KB (1 KB = 1000 B)")
    size.add_argument("--flow-bytes", type=_pos_int)
    p.add_argument("--iw", type=_pos_int, default=model.DEFAULT_IW)
    p.add_argument("--mss", type=_pos_int, default=model.DEFAULT_MSS)
    p.add_argument("--esf", action="store_true", help="proxies use early SYN forwarding")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("simulate", help="run a scenario file through the simulator")
    p.add_argument("scenario")
    p.add_argument("--trace", metavar="PATH", help="write the event trace (- for stdout, after the CSV)")
    p.add_argument("--bandwidth", type=_pos_float, metavar="MBPS", help="override link bandwidth")
    p.add_argument("--compare", action="store_true", help="print the model comparison report instead of CSV")

    p = sub.add_parser("experiment", help="reproduce a figure or verify model == simulation")
    p.add_argument("name", choices=["fig-tt", "fig-offpath", "jit-boot", "verify"])

    p = sub.add_parser("wireproxy", help="run an explicit chain proxy")
    p.add_argument("--listen", type=_addr, required=True, metavar="ADDR:PORT")
    p.add_argument("--idle-timeout", type=_pos_float, default=DEFAULT_IDLE_TIMEOUT, metavar="S")
    p.add_argument("--metrics", default="-", metavar="PATH|-")

    p = sub.add_parser("chain-client", help="send a payload through a proxy chain and report checksums")
    p.add_argument("--via", type=_addr, action="append", default=[], metavar="ADDR:PORT")
    p.add_argument("--dest", type=_addr, required=True, metavar="ADDR:PORT")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--bytes", type=_nonneg_int, default=0, help="send this many random bytes")
    src.add_argument("--file", help="send the contents of this file")
    return parser


def cmd_model(args) -> int:
    one_way = ms(args.rtt_ms) / 2
    if args.hops_ms:
        params = ModelParams(one_way, [ms(x) for x in args.hops_ms], iw=args.iw, mss=args.mss)
    else:
        params = ModelParams.even_split(one_way, args.proxies, iw=args.iw, mss=args.mss)
    if args.flow_bytes:
        flow = args.flow_bytes
    elif args.flow_kb:
        flow = round(args.flow_kb * 1000)
    else:
        flow = 10_000
    esf = args.esf
    if params.n_proxies == 0:
        ttfb = model.ttfb_no_proxy(params)
    else:
        ttfb = model.ttfb_esf(params) if esf else model.ttfb_sequential_proxies(params)
    ttc = model.ttc(params, flow, esf=esf)
    base_params = ModelParams(one_way, iw=args.iw, mss=args.mss)
    base_ttfb, base_ttc = model.ttfb_no_proxy(base_params), model.baseline_ttc(base_params, flow)
    out = {
        "n_proxies": params.n_proxies,
        "hop_delays_us": [float(x) for x in params.hop_delays],
        "flow_bytes": flow,
        "esf": esf,
        "slots_k": model.slots_needed(flow, params),
        "ttfb_us": ttfb,
        "ttc_us": ttc,
        "baseline_ttfb_us": base_ttfb,
        "baseline_ttc_us": base_ttc,
        "ttfb_reduction_pct": round(100 * (base_ttfb - ttfb) / base_ttfb, 3),
        "ttc_reduction_pct": round(100 * (base_ttc - ttc) / base_ttc, 3),
    }
    if args.json:
        print(json.dumps(out, sort_keys=True))
        return 0
    hops = ", ".join(f"{float(x) / 1000:g}" for x in params.hop_delays)
    print(f"proxies     {params.n_proxies} (hops ms: {hops}){' ESF' if esf else ''}")
    print(f"flow        {flow} B, last slot k={out['slots_k']}")
    print(f"TTFB        {ttfb / 1000:.3f} ms (baseline {base_ttfb / 1000:.3f} ms, "
          f"reduction {out['ttfb_reduction_pct']:.1f}%)")
    print(f"TTC         {ttc / 1000:.3f} ms (baseline {base_ttc / 1000:.3f} ms, "
          f"reduction {out['ttc_reduction_pct']:.1f}%)")
    return 0


@contextlib.contextmanager
def _sink(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def cmd_simulate(args) -> int:
    if not os.path.exists(args.scenario):
        print(f"error: scenario file not found: {args.scenario}", file=sys.stderr)
        return 1
    try:
        scenario = experiments.load_scenario(args.scenario)
    except experiments.ScenarioError as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return 1
    if args.bandwidth is not None:
        scenario.bandwidth_mbps = args.bandwidth
    if args.compare:
        report = experiments.compare_model_sim(scenario)
        sys.stdout.write(report.to_text())
        return 0 if report.passed else 1
    traces: list = []
    rows = experiments.run_scenario(scenario, traces if args.trace else None)
    sys.stdout.write(experiments.to_csv(rows))
    if args.trace:
        with _sink(args.trace) as fh:
            for row, trace in zip(rows, traces):
                fh.write(f"# {row.flow_id}\n")
                fh.write(trace.to_text())
    return 0


def cmd_experiment(args) -> int:
    if args.name == "fig-tt":
        sys.stdout.write(experiments.to_csv(experiments.run_fig_tt()))
    elif args.name == "fig-offpath":
        sys.stdout.write(experiments.to_csv(experiments.run_fig_offpath()))
    elif args.name == "jit-boot":
        sys.stdout.write(experiments.run_jit_boot().to_text())
    else:
        ok = True
        for scenario in (experiments.FIG_TT, experiments.FIG_OFFPATH):
            report = experiments.compare_model_sim(scenario)
            sys.stdout.write(report.to_text())
            ok = ok and report.passed
        return 0 if ok else 1
    return 0


def cmd_wireproxy(args) -> int:
    with _sink(args.metrics) as fh:
        try:
            asyncio.run(serve(args.listen, idle_timeout=args.idle_timeout, metrics=fh))
        except KeyboardInterrupt:
            pass
    return 0


async def _chain_client(args) -> dict:
    if args.file:
        with open(args.file, "rb") as fh:
            payload = fh.read()
    else:
        payload = os.urandom(args.bytes)
    t0 = time.monotonic_ns()
    reader, writer = await dial_chain(args.via, args.dest)
    writer.write(payload)
    await writer.drain()
    if writer.can_write_eof():
        writer.write_eof()
    digest = hashlib.sha256()
    received = 0
    first = None
    while chunk := await reader.read(65536):
        if first is None:
            first = time.monotonic_ns()
        received += len(chunk)
        digest.update(chunk)
    writer.close()
    t1 = time.monotonic_ns()
    return {
        "sent_bytes": len(payload),
        "sent_sha256": hashlib.sha256(payload).hexdigest(),
        "received_bytes": received,
        "received_sha256": digest.hexdigest(),
        "ttfb_us": None if first is None else (first - t0) // 1000,
        "ttc_us": (t1 - t0) // 1000,
    }


def cmd_chain_client(args) -> int:
    try:
        result = asyncio.run(_chain_client(args))
    except ConnectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


COMMANDS = {
    "model": cmd_model,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "wireproxy": cmd_wireproxy,
    "chain-client": cmd_chain_client,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
