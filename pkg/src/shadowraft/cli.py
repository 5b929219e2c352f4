"""Command-line interface: run experiments, collect stats, verify outputs.

Subcommands:
  run           one full simulation; writes CSV metrics and a text summary
  beacon-stats  Monte Carlo of the randomness beacon vs. the closed forms
  scale         throughput at several chain counts, fixed per-chain load
  verify-order  recheck total-order consistency from a prior run's snapshots

Exit codes are a stable contract: 0 success, 1 property violation,
2 usage or configuration error.

Configuration files are flat `key = value` text; `#` starts a comment.
Unknown keys are rejected, and every defaulted key is echoed so a run's
full parameterization is always visible in its output.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import fields
from pathlib import Path

from . import beacon as beacon_mod
from .beacon import invoke_beacon, make_beacon_nodes
from .ledger import BlockHeader, hash_header
from .ordering import (
    GlobalView,
    OrderingError,
    reference_total_order,
    total_order,
    validate_view,
)
from .sim import ConfigError, SimConfig, SimTrace, measure_scaling, run_simulation

_BOOL_WORDS = {
    "true": True,
    "yes": True,
    "on": True,
    "1": True,
    "false": False,
    "no": False,
    "off": False,
    "0": False,
}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}") from None


def _parse_crash_schedule(text: str) -> tuple[tuple[int, int], ...]:
    """Parse 'time:node' pairs separated by commas, semicolons, or spaces."""
    pairs = []
    for item in re.split(r"[\s,;]+", text.strip()):
        if not item:
            continue
        when, _, nid = item.partition(":")
        if not _:
            raise ValueError(f"crash entry {item!r} is not time:node")
        pairs.append((int(when), int(nid)))
    return tuple(pairs)


_PARSERS = {
    "seed": int,
    "num_nodes": int,
    "num_chains": int,
    "lottery_bits": int,
    "delta": int,
    "raft_delay_min": int,
    "raft_delay_max": int,
    "election_timeout": int,
    "heartbeat_interval": int,
    "block_interval": int,
    "tx_rate": float,
    "sensitive_fraction": float,
    "crash_schedule": _parse_crash_schedule,
    "run_duration": int,
    "drain_window": int,
    "max_batch": int,
    "snapshot_interval": int,
    "empty_blocks": _parse_bool,
    "num_seal_keys": int,
    "max_beacon_epochs": int,
    "trace_events": _parse_bool,
}


def read_config_file(path: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        raw[key.strip()] = value.strip()
    return raw


def build_config(
    raw: dict[str, str], seed_override: int | None = None, trace: bool = False
) -> tuple[SimConfig, list[str]]:
    """Materialize a SimConfig and the echo lines showing every key."""
    unknown = sorted(set(raw) - set(_PARSERS))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        try:
            kwargs[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if seed_override is not None:
        kwargs["seed"] = seed_override
    if trace:
        kwargs["trace_events"] = True
    config = SimConfig(**kwargs)
    config.validate()
    echo = []
    for f in fields(SimConfig):
        marker = "" if f.name in kwargs else "  (default)"
        echo.append(f"{f.name} = {getattr(config, f.name)}{marker}")
    return config, echo


def write_outputs(trace: SimTrace, out_dir: str) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, data in trace.csv_outputs().items():
        (out / name).write_bytes(data)
        written.append(name)
    (out / "summary.txt").write_text(trace.summary_text())
    written.append("summary.txt")
    return written


# -- run ------------------------------------------------------------------


def cmd_run(args) -> int:
    raw = read_config_file(args.config) if args.config else {}
    config, echo = build_config(raw, args.seed, args.trace)
    print("configuration:")
    for line in echo:
        print(f"  {line}")
    trace = run_simulation(config)
    written = write_outputs(trace, args.out)
    print(trace.summary_text(), end="")
    print(f"wrote {', '.join(written)} to {args.out}")
    return 1 if trace.safety_flags else 0


# -- beacon-stats ------------------------------------------------------------


def cmd_beacon_stats(args) -> int:
    n, bits, epochs = args.nodes, args.bits, args.epochs
    if n < 1 or not 1 <= bits <= 32 or epochs < 1:
        print("beacon-stats: need nodes >= 1, 1 <= bits <= 32, epochs >= 1", file=sys.stderr)
        return 2
    enclaves = make_beacon_nodes(n, bits, args.seed)
    rows = []
    succeeded = 0
    total_certs = 0
    total_msgs = 0
    for epoch in range(epochs):
        certs = [c for c in (invoke_beacon(e, epoch) for e in enclaves) if c]
        msgs = len(certs) * (n - 1)
        total_certs += len(certs)
        total_msgs += msgs
        if certs:
            succeeded += 1
            seed = min((c.rnd, c.node_id) for c in certs)[0]
            rows.append((epoch, 1, len(certs), seed, msgs))
        else:
            rows.append((epoch, 0, 0, "", 0))
    repeat_rate = 1 - succeeded / epochs
    closed = beacon_mod.repeat_probability(n, bits)
    mean_certs = total_certs / epochs
    mean_msgs = total_msgs / epochs
    expect_certs = n * 2.0**-bits
    expect_msgs = beacon_mod.expected_messages(n, bits)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "beacon.csv", "w") as fh:
        fh.write("epoch,succeeded,num_certificates,seed,messages_sent\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    summary = (
        f"beacon stats: N={n} l={bits} epochs={epochs} seed={args.seed}\n"
        f"  empirical repeat rate: {repeat_rate:.6f}\n"
        f"  closed form (1-2^-l)^N: {closed:.6f}\n"
        f"  |difference|: {abs(repeat_rate - closed):.6f}\n"
        f"  mean certificates/epoch: {mean_certs:.4f} (expected {expect_certs:.4f})\n"
        f"  mean messages/epoch: {mean_msgs:.4f} (expected {expect_msgs:.4f})\n"
    )
    (out / "beacon_summary.txt").write_text(summary)
    print(summary, end="")
    return 0


# -- scale -----------------------------------------------------------------


def cmd_scale(args) -> int:
    raw = read_config_file(args.config) if args.config else {}
    base, echo = build_config(raw, args.seed)
    try:
        counts = [int(c) for c in args.chains.split(",") if c]
    except ValueError:
        print(f"scale: chain counts must be integers: {args.chains!r}", file=sys.stderr)
        return 2
    if not counts or any(c < 1 for c in counts):
        print(f"scale: invalid chain counts {args.chains!r}", file=sys.stderr)
        return 2
    print("base configuration:")
    for line in echo:
        print(f"  {line}")
    points = measure_scaling(base, counts, committee_size=args.committee)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scaling.csv", "w") as fh:
        fh.write("chains,nodes,committed_txs,window,txs_per_tick\n")
        for p in points:
            fh.write(
                f"{p.chains},{p.nodes},{p.committed_txs},{p.window},"
                f"{p.throughput:.6f}\n"
            )
    baseline = next((p for p in points if p.chains == 1), points[0])
    per_unit = baseline.throughput / baseline.chains
    lines = [f"scaling (committee size {args.committee}, per-chain load fixed):"]
    for p in points:
        ideal = per_unit * p.chains
        dev = (p.throughput - ideal) / ideal if ideal else 0.0
        lines.append(
            f"  C={p.chains}: {p.throughput:.4f} tx/tick "
            f"(ideal {ideal:.4f}, deviation {dev:+.1%})"
        )
    summary = "\n".join(lines) + "\n"
    (out / "scaling_summary.txt").write_text(summary)
    print(summary, end="")
    return 0


# -- verify-order --------------------------------------------------------


def _load_snapshots(trace_dir: Path):
    """snapshots.csv -> {(time, node): {chain: [(height, header, stored_hash)]}}"""
    path = trace_dir / "snapshots.csv"
    if not path.is_file():
        return None
    views: dict[tuple[int, int], dict[int, list]] = {}
    with open(path) as fh:
        header_line = fh.readline()
        if not header_line:
            return None
        for line in fh:
            (
                time,
                node_id,
                chain_id,
                height,
                rank,
                next_rank,
                term,
                parent_hex,
                root_hex,
                hash_hex,
            ) = line.rstrip("\n").split(",")
            header = BlockHeader(
                chain_id=int(chain_id),
                height=int(height),
                parent_hash=bytes.fromhex(parent_hex),
                rank=int(rank),
                next_rank=int(next_rank),
                tx_root=bytes.fromhex(root_hex),
                proposer_term=int(term),
            )
            views.setdefault((int(time), int(node_id)), {}).setdefault(
                int(chain_id), []
            ).append((int(height), header, bytes.fromhex(hash_hex)))
    return views


def _print_divergence(label_a, order_a, label_b, order_b):
    limit = min(len(order_a), len(order_b))
    at = next(
        (i for i in range(limit) if order_a[i] != order_b[i]),
        limit,
    )
    print(f"verify-order: orders diverge at position {at}:", file=sys.stderr)
    for label, order in ((label_a, order_a), (label_b, order_b)):
        window = order[max(0, at - 1) : at + 2]
        shown = [
            f"(rank={r.rank},chain={r.chain_id},height={r.height})" for r in window
        ]
        print(f"  {label}: ... {' '.join(shown)} ...", file=sys.stderr)


def cmd_verify_order(args) -> int:
    trace_dir = Path(args.trace_dir)
    if not trace_dir.is_dir():
        print(f"verify-order: {trace_dir} is not a directory", file=sys.stderr)
        return 2
    views = _load_snapshots(trace_dir)
    if not views:
        print(f"verify-order: no snapshots found in {trace_dir}", file=sys.stderr)
        return 2

    tx_counts: dict[str, int] = {}
    order_csv = trace_dir / "order.csv"
    if order_csv.is_file():
        with open(order_csv) as fh:
            fh.readline()
            for line in fh:
                _, _, _, _, block_hash, tx_count = line.rstrip("\n").split(",")
                tx_counts[block_hash] = int(tx_count)

    orders: dict[tuple[int, int], list] = {}
    last_per_node: dict[int, tuple[int, list]] = {}
    for (time, node_id), chains in sorted(views.items()):
        rebuilt = {}
        for chain_id, rows in chains.items():
            rows.sort()
            for height, header, stored in rows:
                if hash_header(header) != stored:
                    print(
                        f"verify-order: snapshot t={time} node={node_id} "
                        f"chain={chain_id} height={height}: stored hash does not "
                        f"match the header fields",
                        file=sys.stderr,
                    )
                    return 1
            rebuilt[chain_id] = tuple(h for _, h, _ in rows)
        view = GlobalView(num_chains=len(rebuilt), chains=rebuilt)
        try:
            validate_view(view)
            order = total_order(view)
        except OrderingError as exc:
            print(f"verify-order: t={time} node={node_id}: {exc}", file=sys.stderr)
            return 1
        if order != reference_total_order(view):
            print(
                f"verify-order: t={time} node={node_id}: total_order disagrees "
                f"with the brute-force reference",
                file=sys.stderr,
            )
            return 1
        orders[(time, node_id)] = order
        prev = last_per_node.get(node_id)
        if prev is not None and order[: len(prev[1])] != prev[1]:
            _print_divergence(
                f"node {node_id} t={prev[0]}", prev[1], f"node {node_id} t={time}", order
            )
            return 1
        last_per_node[node_id] = (time, order)

    times = sorted({t for t, _ in orders})
    for time in times:
        at_time = sorted((n, o) for (t, n), o in orders.items() if t == time)
        for i in range(len(at_time) - 1):
            (na, oa), (nb, ob) = at_time[i], at_time[i + 1]
            short, long_ = (oa, ob) if len(oa) <= len(ob) else (ob, oa)
            if long_[: len(short)] != short:
                _print_divergence(f"node {na} t={time}", oa, f"node {nb} t={time}", ob)
                return 1

    final = max(orders.items(), key=lambda kv: (kv[0][0], len(kv[1])))[1]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "order.csv", "w") as fh:
        fh.write("position,rank,chain_id,height,block_hash,tx_count\n")
        for pos, ref in enumerate(final):
            hex_hash = ref.block_hash.hex()
            fh.write(
                f"{pos},{ref.rank},{ref.chain_id},{ref.height},{hex_hash},"
                f"{tx_counts.get(hex_hash, 0)}\n"
            )
    print(
        f"verify-order: {len(orders)} snapshot orders consistent; "
        f"final order has {len(final)} blocks"
    )
    return 0


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowraft",
        description="Sharded Raft ledger simulator with a randomness beacon "
        "and cross-chain total ordering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one simulation and export metrics")
    run.add_argument("--config", help="key = value configuration file")
    run.add_argument("--out", default="shadowraft-out", help="output directory")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--trace", action="store_true", help="also write events.csv")
    run.set_defaults(func=cmd_run)

    stats = sub.add_parser("beacon-stats", help="Monte Carlo beacon statistics")
    stats.add_argument("--nodes", type=int, default=64)
    stats.add_argument("--bits", type=int, default=6, help="lottery bit length l")
    stats.add_argument("--epochs", type=int, default=20000)
    stats.add_argument("--seed", type=int, default=42)
    stats.add_argument("--out", default="shadowraft-out")
    stats.set_defaults(func=cmd_beacon_stats)

    scale = sub.add_parser("scale", help="throughput scaling across chain counts")
    scale.add_argument("--config", help="base configuration file")
    scale.add_argument("--chains", default="1,2,4,8", help="comma-separated counts")
    scale.add_argument("--committee", type=int, default=5, help="verifiers per chain")
    scale.add_argument("--seed", type=int, help="override the config seed")
    scale.add_argument("--out", default="shadowraft-out")
    scale.set_defaults(func=cmd_scale)

    verify = sub.add_parser(
        "verify-order", help="recheck ordering from a prior run's snapshots"
    )
    verify.add_argument("trace_dir", help="output directory of a previous run")
    verify.add_argument("--out", default="shadowraft-out")
    verify.set_defaults(func=cmd_verify_order)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
