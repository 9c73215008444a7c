"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line (visible under
``pytest -v``) before asserting, so a run doubles as a checklist.
"""

import asyncio
import os
import random
import time
from fractions import Fraction

import pytest

from _wire import Sink, exchange, start_chain
from splitlab import model
from splitlab.experiments import run_jit_boot
from splitlab.model import ModelParams, ms
from splitlab.option import EsfOption, decode_option, encode_option
from splitlab.topology import ChainSpec, FlowSpec, run

D = 50_000
BASE_TTFB = 200_000
BASE_TTC_25K = 300_000


@pytest.fixture
def verdict(capsys):
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} :: {detail}")
        assert ok, detail

    return report


def simulate(hops, size):
    return run(ChainSpec(hops, [FlowSpec("f", size)])).flows["f"]


def even(n):
    return ModelParams.even_split(D, n)


def test_criterion_1_ttfb_reductions(verdict):
    t0 = time.perf_counter()
    expected = {1: (150_000, 25.0), 2: (133_333, 33.3), 3: (125_000, 37.5)}
    ok, parts = True, []
    for n, (ttfb_us, pct) in expected.items():
        p = even(n)
        sim = simulate(p.hop_delays, 10_000).ttfb_us
        mod = model.ttfb_esf(p)
        reduction = 100 * (BASE_TTFB - sim) / BASE_TTFB
        good = sim == mod == ttfb_us and abs(reduction - pct) <= 0.1
        ok &= good
        parts.append(f"N={n} sim={sim} model={mod} red={reduction:.2f}%")
    base = simulate([D], 10_000).ttfb_us
    elapsed = time.perf_counter() - t0
    ok &= base == BASE_TTFB == model.ttfb_no_proxy(ModelParams(D)) and elapsed < 1
    verdict(1, "ESF TTFB reductions", ok, "; ".join(parts) + f"; baseline={base}; {elapsed:.3f}s")


def test_criterion_2_ttc_reductions_25kb(verdict):
    t0 = time.perf_counter()
    expected = {1: (200_000, 33), 2: (166_667, 44), 3: (150_000, 49)}
    ok, parts = True, []
    for n, (ttc_us, measured_pct) in expected.items():
        p = even(n)
        sim = simulate(p.hop_delays, 25_000).ttc_us
        mod = model.ttc(p, 25_000)
        reduction = 100 * (BASE_TTC_25K - sim) / BASE_TTC_25K
        good = sim == mod == ttc_us and abs(reduction - measured_pct) <= 2
        ok &= good
        parts.append(f"N={n} sim={sim} model={mod} red={reduction:.1f}% (measured {measured_pct}%)")
    base = simulate([D], 25_000).ttc_us
    elapsed = time.perf_counter() - t0
    ok &= base == BASE_TTC_25K == model.baseline_ttc(ModelParams(D), 25_000) and elapsed < 1
    verdict(2, "TTC reductions for 25 KB", ok, "; ".join(parts) + f"; baseline={base}; {elapsed:.3f}s")


def test_criterion_3_offpath_robustness(verdict):
    hops = [ms(37.5), ms(37.5)]
    p = ModelParams(sum(hops), hops)
    sim25, mod25 = simulate(hops, 25_000).ttc_us, model.ttc(p, 25_000)
    sim10, mod10 = simulate(hops, 10_000).ttc_us, model.ttc(p, 10_000)
    base10 = simulate([D], 10_000).ttc_us
    ok25 = sim25 == mod25 == 250_000 and sim25 < BASE_TTC_25K
    ok10 = sim10 == mod10 == 225_000 and sim10 > base10 == 200_000
    verdict(3, "off-path X1=X2=37.5 ms", ok25 and ok10,
            f"25KB sim={sim25} model={mod25} (criterion 250000, baseline {BASE_TTC_25K}); "
            f"10KB sim={sim10} model={mod10} (criterion 225000, baseline {base10})")


def test_criterion_4_model_simulator_equivalence(verdict):
    rng = random.Random(20240501)
    t0 = time.perf_counter()
    mismatches = []
    for i in range(500):
        hops = [rng.randint(1_000, 100_000) for _ in range(rng.randint(1, 4))]
        size = rng.randint(1, 500_000)
        p = ModelParams(sum(hops), hops)
        r = simulate(hops, size)
        want_ttfb = model.ttfb_no_proxy(p) if len(hops) == 1 else model.ttfb_esf(p)
        want_ttc = model.ttc(p, size)
        if (r.ttfb_us, r.ttc_us) != (want_ttfb, want_ttc):
            mismatches.append((hops, size, r.ttfb_us, want_ttfb, r.ttc_us, want_ttc))
    elapsed = time.perf_counter() - t0
    verdict(4, "model == simulator on 500 random scenarios", not mismatches and elapsed < 30,
            f"{len(mismatches)} mismatches, {elapsed:.2f}s" + (f", first {mismatches[0]}" if mismatches else ""))


def test_criterion_5_slow_start_closed_forms(verdict):
    p, rtt = ModelParams(D), 2 * D
    ok, worst = True, 0.0
    btot, rate_sum = 0, Fraction(0)
    for k in range(21):
        slot = model.slow_start_metrics(p, k, rtt)
        btot += slot.bytes
        rate_sum += Fraction(slot.bytes * 8 * 1_000_000, rtt)
        ok &= btot == (2 ** (k + 1) - 1) * p.iw * p.mss == slot.cumulative_bytes
        iterated_avg = rate_sum / (k + 1)
        rel = abs(Fraction(slot.avg_rate_bps) - iterated_avg) / iterated_avg
        worst = max(worst, float(rel))
    ok &= worst <= 1e-9
    verdict(5, "slow-start Btot_k and Ra_k, k=0..20", ok, f"Btot exact, worst Ra_k relative error {worst:.2e}")


def _hand_encode(src_ip, dst_ip, sport, dport):
    out = [253, 16, 0x4D, 0x50]
    for ip in (src_ip, dst_ip):
        out += [int(x) for x in ip.split(".")]
    return bytes(out + [sport >> 8, sport & 0xFF, dport >> 8, dport & 0xFF])


def test_criterion_6_option_codec(verdict):
    rng = random.Random(6)
    failures = 0
    for _ in range(1000):
        ips = [".".join(str(rng.randrange(256)) for _ in range(4)) for _ in range(2)]
        opt = EsfOption(ips[0], ips[1], rng.randrange(65536), rng.randrange(65536))
        wire = encode_option(opt)
        failures += decode_option(wire) != opt or wire != _hand_encode(ips[0], ips[1], opt.src_port, opt.dst_port)
    example = encode_option(EsfOption("10.0.0.1", "93.184.216.34", 34567, 80))
    expected = bytes.fromhex("FD 10 4D 50 0A 00 00 01 5D B8 D8 22 87 07 00 50")
    ok = failures == 0 and example == expected == _hand_encode("10.0.0.1", "93.184.216.34", 34567, 80)
    verdict(6, "option codec round trip and example bytes", ok,
            f"{failures} round-trip failures of 1000; example={example.hex(' ').upper()}")


def test_criterion_7_jit_boot(verdict):
    report = run_jit_boot(boot_delays_ms=(0, 12, 230))
    values = dict(report.rows)
    ok = (values[ms(12)] == 162_000 < report.baseline_ttfb == 200_000
          and values[ms(230)] == 380_000 > report.baseline_ttfb
          and report.crossover == 50_000)
    verdict(7, "just-in-time boot", ok,
            f"boot 12ms -> {values[ms(12)]}us, boot 230ms -> {values[ms(230)]}us, "
            f"baseline {report.baseline_ttfb}us, crossover {float(report.crossover) / 1000:g}ms")


def test_criterion_8_wireproxy_fidelity(verdict):
    async def go():
        sink = Sink(reply_bytes=1_000_000)
        dest = await sink.start()
        proxies, addrs = await start_chain(2)
        big = await exchange(addrs, dest, os.urandom(1_000_000))
        big_ok = sink.received == [big[0]] and sink.sent == [big[1]]
        sink.received.clear()
        sink.sent.clear()
        sink.reply_bytes = 16_384
        results = await asyncio.gather(*(exchange(addrs, dest, os.urandom(16_384)) for _ in range(200)))
        conc_ok = (sorted(s for s, _ in results) == sorted(sink.received)
                   and sorted(g for _, g in results) == sorted(sink.sent) and len(results) == 200)
        for p in proxies:
            await p.close()
        await sink.close()
        return big_ok, conc_ok

    t0 = time.perf_counter()
    big_ok, conc_ok = asyncio.run(go())
    elapsed = time.perf_counter() - t0
    verdict(8, "wire proxy chain of 2", big_ok and conc_ok and elapsed < 60,
            f"1 MB both ways sha256 {'match' if big_ok else 'MISMATCH'}; "
            f"200 concurrent sessions {'verified' if conc_ok else 'FAILED'}; {elapsed:.2f}s")
