"""Scenario files, figure reproductions and model-vs-simulation comparison."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Sequence

from . import model
from .model import Duration, ModelParams, ms, round_half_up
from .netsim import TraceLog
from .proxy import Mode
from .topology import ChainSpec, FlowSpec, run

CSV_COLUMNS = [
    "scenario", "n_proxies", "hop_delays_ms", "flow_bytes", "esf", "boot_delay_ms",
    "ttfb_us", "ttc_us", "model_ttfb_us", "model_ttc_us", "reduction_pct",
]

FIG_FLOW_SIZES = [10_000, 25_000, 50_000, 100_000, 250_000, 500_000]


class ScenarioError(ValueError):
    """Schema violation; ``fields`` names every offending field."""

    def __init__(self, problems: dict[str, str]):
        self.fields = sorted(problems)
        self.problems = problems
        super().__init__("invalid scenario: " + "; ".join(f"{k}: {v}" for k, v in sorted(problems.items())))


@dataclass
class Scenario:
    name: str
    flow_sizes_bytes: list[int]
    rtt_ms: float = 100.0
    n_proxies_sweep: list[int] = field(default_factory=list)
    hop_delays_ms: list[list[float]] = field(default_factory=list)
    esf: bool = True
    mode: str = "implicit"
    client_option: bool = False
    boot_delays_ms: list[float] = field(default_factory=list)
    bandwidth_mbps: Optional[float] = None
    iw: int = model.DEFAULT_IW
    mss: int = model.DEFAULT_MSS
    processing_delay_us: Any = 0

    @property
    def one_way_delay(self) -> Fraction:
        return ms(self.rtt_ms) / 2

    @property
    def ideal(self) -> bool:
        """Infinite bandwidth and zero processing: the model must match exactly."""
        proc = self.processing_delay_us
        no_proc = not any(proc.values()) if isinstance(proc, dict) else not proc
        return self.bandwidth_mbps is None and no_proc

    def chains(self) -> list[list[Fraction]]:
        out = [[self.one_way_delay / (n + 1)] * (n + 1) for n in self.n_proxies_sweep]
        out += [[ms(x) for x in hops] for hops in self.hop_delays_ms]
        return out

    def boots_for(self, n_proxies: int) -> list[Fraction]:
        boots = [ms(b) for b in self.boot_delays_ms[:n_proxies]]
        return boots + [Fraction(0)] * (n_proxies - len(boots))

    def processing_map(self, n_proxies: int) -> dict:
        proc = self.processing_delay_us
        if not isinstance(proc, dict):
            return {name: proc for name in ["client", "server"] + [f"p{i + 1}" for i in range(n_proxies)]}
        out = {"client": proc.get("client", 0), "server": proc.get("server", 0)}
        out.update({f"p{i + 1}": proc.get("proxy", 0) for i in range(n_proxies)})
        return out

    def chain_spec(self, hops: Sequence[Duration], flow_bytes: int) -> ChainSpec:
        n = len(hops) - 1
        bw = None if self.bandwidth_mbps is None else int(Fraction(str(self.bandwidth_mbps)) * 1_000_000)
        return ChainSpec(hops, [FlowSpec("f0", flow_bytes, client_option=self.client_option)],
                         esf=self.esf, mode=Mode(self.mode), boot_delays=self.boots_for(n), bandwidth_bps=bw,
                         processing_delay=self.processing_map(n), iw=self.iw, mss=self.mss)


_FIELD_TYPES = {
    "name": str, "flow_sizes_bytes": list, "rtt_ms": (int, float), "n_proxies_sweep": list,
    "hop_delays_ms": list, "esf": bool, "mode": str, "client_option": bool, "boot_delays_ms": list,
    "bandwidth_mbps": (int, float, type(None)), "iw": int, "mss": int, "processing_delay_us": (int, dict),
}


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def scenario_from_dict(data: Any) -> Scenario:
    """Validate a decoded scenario document, collecting every problem before raising."""
    if not isinstance(data, dict):
        raise ScenarioError({"<document>": "expected a JSON object"})
    problems: dict[str, str] = {}
    for key in data:
        if key not in _FIELD_TYPES:
            problems[key] = "unknown field"
    for key, typ in _FIELD_TYPES.items():
        if key in data and (not isinstance(data[key], typ) or (typ is not bool and isinstance(data[key], bool))):
            problems[key] = f"wrong type {type(data[key]).__name__}"
    for required in ("name", "flow_sizes_bytes"):
        if required not in data:
            problems[required] = "required"
    if any(v != "unknown field" for v in problems.values()):
        raise ScenarioError(problems)  # value checks below assume the types are right
    data = {k: v for k, v in data.items() if k in _FIELD_TYPES}

    flows = data["flow_sizes_bytes"]
    if not flows:
        problems["flow_sizes_bytes"] = "must be non-empty"
    elif not all(isinstance(f, int) and not isinstance(f, bool) and f >= 1 for f in flows):
        problems["flow_sizes_bytes"] = "entries must be integers >= 1"
    sweep = data.get("n_proxies_sweep", [])
    hops = data.get("hop_delays_ms", [])
    if not sweep and not hops:
        problems["n_proxies_sweep"] = "n_proxies_sweep or hop_delays_ms must be non-empty"
    if not all(isinstance(n, int) and not isinstance(n, bool) and n >= 0 for n in sweep):
        problems["n_proxies_sweep"] = "entries must be integers >= 0"
    if hops and all(_is_number(x) for x in hops):
        hops = data["hop_delays_ms"] = [hops]  # a flat list is one chain
    if not all(isinstance(h, list) and h and all(_is_number(x) and x > 0 for x in h) for h in hops):
        problems["hop_delays_ms"] = "each chain must be a non-empty list of delays > 0"
    if "rtt_ms" in data and not data["rtt_ms"] > 0:
        problems["rtt_ms"] = "must be > 0"
    if not all(_is_number(b) and b >= 0 for b in data.get("boot_delays_ms", [])):
        problems["boot_delays_ms"] = "entries must be >= 0"
    if data.get("mode", "implicit") not in ("implicit", "explicit"):
        problems["mode"] = "must be implicit or explicit"
    bw = data.get("bandwidth_mbps")
    if bw is not None and not bw > 0:
        problems["bandwidth_mbps"] = "must be > 0"
    for key in ("iw", "mss"):
        if key in data and data[key] < 1:
            problems[key] = "must be >= 1"
    proc = data.get("processing_delay_us", 0)
    values = proc.values() if isinstance(proc, dict) else [proc]
    if isinstance(proc, dict) and set(proc) - {"client", "server", "proxy"}:
        problems["processing_delay_us"] = "keys must be client, server, proxy"
    elif not all(_is_number(v) and v >= 0 for v in values):
        problems["processing_delay_us"] = "must be >= 0"
    if problems:
        raise ScenarioError(problems)
    return Scenario(**data)


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text()
    if not text.strip():
        raise ScenarioError({"<document>": "empty file"})
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError({"<document>": f"not valid JSON: {exc}"}) from None
    return scenario_from_dict(data)


@dataclass
class TransferMetrics:
    scenario: str
    flow_id: str
    hop_delays: list[Fraction]
    flow_bytes: int
    esf: bool
    boot_delays: list[Fraction]
    ttfb: int
    ttc: int
    model_ttfb: int
    model_ttc: int
    baseline_ttc: int
    baseline_ttfb: int

    @property
    def n_proxies(self) -> int:
        return len(self.hop_delays) - 1

    @property
    def reduction_vs_baseline_pct(self) -> float:
        return 100 * (self.baseline_ttc - self.ttc) / self.baseline_ttc

    @property
    def ttfb_reduction_pct(self) -> float:
        return 100 * (self.baseline_ttfb - self.ttfb) / self.baseline_ttfb

    def csv_row(self) -> list[str]:
        return [
            self.scenario, str(self.n_proxies), _join_ms(self.hop_delays), str(self.flow_bytes),
            "1" if self.esf else "0", _join_ms(self.boot_delays), str(self.ttfb), str(self.ttc),
            str(self.model_ttfb), str(self.model_ttc), f"{self.reduction_vs_baseline_pct:.3f}",
        ]


def _fmt_ms(us: Duration) -> str:
    value = Fraction(us) / 1000
    if value.denominator == 1:
        return str(value.numerator)
    return f"{float(value):.3f}".rstrip("0").rstrip(".")


def _join_ms(values: Sequence[Duration]) -> str:
    return ";".join(_fmt_ms(v) for v in values)


def model_prediction(scenario: Scenario, hops: Sequence[Duration], flow_bytes: int) -> tuple[int, int]:
    """(TTFB, TTC) from the closed forms, or from the chain recurrence when
    boot delays or a mixed explicit chain put the closed forms out of reach."""
    n = len(hops) - 1
    params = ModelParams(sum(Fraction(h) for h in hops), hops, iw=scenario.iw, mss=scenario.mss)
    if n == 0:
        return model.ttfb_no_proxy(params), model.ttc(params, flow_bytes, esf=scenario.esf)
    boots = scenario.boots_for(n)
    esf_flags = [scenario.esf] * n
    if scenario.mode == "explicit" and scenario.esf and not scenario.client_option:
        esf_flags[0] = False  # first hop learns the target from data, later hops get the option
    if any(boots) or len(set(esf_flags)) > 1:
        handshake = model.chain_handshake_time(hops, esf_flags, boots)
        path = Fraction(params.path_delay)
        k = model.slots_needed(flow_bytes, params)
        return (round_half_up(handshake + path),
                round_half_up(handshake + path + k * 2 * Fraction(params.max_hop)))
    esf = esf_flags[0]
    ttfb = model.ttfb_esf(params) if esf else model.ttfb_sequential_proxies(params)
    return ttfb, model.ttc(params, flow_bytes, esf=esf)


def simulate_one(scenario: Scenario, hops: Sequence[Duration], flow_bytes: int) -> TraceLog:
    return run(scenario.chain_spec(hops, flow_bytes))


def run_scenario(scenario: Scenario, traces: list | None = None) -> list[TransferMetrics]:
    """One simulation per (chain, flow size); ``traces`` collects the trace logs if given."""
    baselines = {}
    rows = []
    base_params = ModelParams(scenario.one_way_delay, iw=scenario.iw, mss=scenario.mss)
    for hops in scenario.chains():
        for size in scenario.flow_sizes_bytes:
            trace = simulate_one(scenario, hops, size)
            if traces is not None:
                traces.append(trace)
            result = trace.flows["f0"]
            if size not in baselines:
                direct = simulate_one(scenario, [scenario.one_way_delay], size).flows["f0"]
                baselines[size] = (direct.ttfb_us, direct.ttc_us)
            model_ttfb, model_ttc = model_prediction(scenario, hops, size)
            rows.append(TransferMetrics(
                scenario=scenario.name, flow_id=f"n{len(hops) - 1}-{_join_ms(hops)}-{size}", hop_delays=list(hops),
                flow_bytes=size, esf=scenario.esf, boot_delays=scenario.boots_for(len(hops) - 1),
                ttfb=result.ttfb_us, ttc=result.ttc_us, model_ttfb=model_ttfb, model_ttc=model_ttc,
                baseline_ttfb=baselines[size][0], baseline_ttc=baselines[size][1]))
    # baseline model check doubles as a sanity guard on the direct simulation
    for size, (ttfb, _) in baselines.items():
        if scenario.ideal and ttfb != model.ttfb_no_proxy(base_params):
            raise AssertionError(f"direct-path simulation disagrees with the model for {size} B")
    return rows


def to_csv(rows: Sequence[TransferMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_row())
    return buf.getvalue()


FIG_TT = Scenario(name="fig-tt", flow_sizes_bytes=FIG_FLOW_SIZES, rtt_ms=100, n_proxies_sweep=[0, 1, 2, 3])

FIG_OFFPATH = Scenario(
    name="fig-offpath", flow_sizes_bytes=FIG_FLOW_SIZES, rtt_ms=100, n_proxies_sweep=[0],
    hop_delays_ms=[[x, x] for x in (25, 27.5, 30, 32.5, 35, 37.5)])


def run_fig_tt() -> list[TransferMetrics]:
    """TTC for 0-3 evenly splitting ESF proxies over a 100 ms RTT path."""
    return run_scenario(FIG_TT)


def run_fig_offpath() -> list[TransferMetrics]:
    """One proxy whose two links each grow from 25 to 37.5 ms, plus the direct baseline."""
    return run_scenario(FIG_OFFPATH)


@dataclass
class Comparison:
    row: TransferMetrics

    @property
    def ttfb_delta(self) -> int:
        return self.row.ttfb - self.row.model_ttfb

    @property
    def ttc_delta(self) -> int:
        return self.row.ttc - self.row.model_ttc

    @property
    def ttc_delta_rel(self) -> float:
        return self.ttc_delta / self.row.model_ttc


@dataclass
class CompareReport:
    scenario: str
    comparisons: list[Comparison]
    tolerance_us: Optional[int]

    @property
    def passed(self) -> bool:
        if self.tolerance_us is None:
            return True
        return all(abs(c.ttfb_delta) <= self.tolerance_us and abs(c.ttc_delta) <= self.tolerance_us
                   for c in self.comparisons)

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario}: tolerance "
                 f"{'none (report only)' if self.tolerance_us is None else f'{self.tolerance_us}us'}"]
        for c in self.comparisons:
            r = c.row
            lines.append(
                f"n={r.n_proxies} hops={_join_ms(r.hop_delays)}ms flow={r.flow_bytes} "
                f"ttfb sim={r.ttfb} model={r.model_ttfb} d={c.ttfb_delta:+d}us "
                f"ttc sim={r.ttc} model={r.model_ttc} d={c.ttc_delta:+d}us ({100 * c.ttc_delta_rel:+.3f}%)")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"


def compare_model_sim(scenario: Scenario, tolerance_us: Optional[int] = None) -> CompareReport:
    """Per-flow deltas between simulation and model.

    Ideal scenarios (infinite bandwidth, no processing delay) are gated at 0 µs
    unless a tolerance is given; others are report-only by default.
    """
    if tolerance_us is None and scenario.ideal:
        tolerance_us = 0
    rows = run_scenario(scenario)
    return CompareReport(scenario.name, [Comparison(r) for r in rows], tolerance_us)


@dataclass
class JitReport:
    rows: list[tuple[Fraction, int]]  # (boot delay, simulated TTFB), µs
    baseline_ttfb: int
    crossover: Fraction

    def to_text(self) -> str:
        lines = ["boot_delay_ms,ttfb_ms,baseline_ttfb_ms,beats_baseline"]
        for boot, ttfb in self.rows:
            lines.append(f"{_fmt_ms(boot)},{_fmt_ms(ttfb)},{_fmt_ms(self.baseline_ttfb)},"
                         f"{'yes' if ttfb < self.baseline_ttfb else 'no'}")
        lines.append(f"crossover_boot_delay_ms,{_fmt_ms(self.crossover)}")
        return "\n".join(lines) + "\n"


def _jit_ttfb(one_way: Fraction, boot: Duration, flow_bytes: int) -> Duration:
    chain = ChainSpec([one_way / 2] * 2, [FlowSpec("f0", flow_bytes)], esf=True, boot_delays=boot)
    return run(chain).flows["f0"].ttfb


def run_jit_boot(boot_delays_ms: Sequence[float] = (0, 12, 30, 60, 230), rtt_ms: float = 100,
                 flow_bytes: int = 10_000) -> JitReport:
    """TTFB through one just-in-time proxy per boot delay, and the break-even delay.

    The simulated TTFB grows one-for-one with the boot delay, so the
    break-even point is the direct-path TTFB minus the pre-booted TTFB; it is
    then confirmed by simulating exactly at that delay.
    """
    one_way = ms(rtt_ms) / 2
    baseline = run(ChainSpec([one_way], [FlowSpec("f0", flow_bytes)])).flows["f0"].ttfb
    rows = [(ms(b), round_half_up(_jit_ttfb(one_way, ms(b), flow_bytes))) for b in boot_delays_ms]
    crossover = Fraction(baseline - _jit_ttfb(one_way, 0, flow_bytes))
    if _jit_ttfb(one_way, crossover, flow_bytes) != baseline:
        raise AssertionError("TTFB at the computed crossover does not equal the baseline")
    return JitReport(rows, round_half_up(baseline), crossover)
