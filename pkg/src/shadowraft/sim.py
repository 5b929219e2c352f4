"""Deterministic discrete-event simulation of the whole protocol stack.

One run executes: (1) beacon epochs until a seed locks, each costing one
synchronous round of `delta` ticks; (2) committee assignment from the locked
seed; (3) per-chain Raft with leaders batching client transactions into
blocks on a timer, rank fields taken from the proposer's current view;
(4) committed-header gossip to every node, which drives each node's
ConfirmBar and total order; (5) metric and safety collection.

Time is an integer tick counter. Events execute in (time, insertion
sequence) order off a single heap, so a run is a pure function of its
SimConfig: identical configs give byte-identical CSV outputs.

Two delay regimes: the beacon phase is synchronous with bound delta, the
Raft/gossip phase draws per-message delays uniformly from
[raft_delay_min, raft_delay_max]. Crashes are crash-stop: from the
scheduled tick onward the node receives nothing, fires nothing, sends
nothing, and never recovers.

The simulator is also the property-test vehicle: election safety, log
matching, state-machine safety, commit quorum, rank discipline, ConfirmBar
monotonicity, pairwise prefix consistency of total orders, and sealed
round-trip integrity are all checked during the run and recorded as safety
flags, which must stay empty.
"""

from __future__ import annotations

import hashlib
import heapq
import io
import statistics
from dataclasses import dataclass, replace

from . import beacon as beacon_mod
from .beacon import Repeat, assign_chains, invoke_beacon, make_beacon_nodes, select_seed
from .ledger import (
    Block,
    BlockHeader,
    ChainLedger,
    ChainMismatch,
    DecodeError,
    LinkageError,
    RankError,
    Transaction,
    append_block,
    decode_block,
    encode_block,
    hash_header,
    make_genesis,
    new_block,
)
from .ordering import GlobalView, propose_rank_fields, validate_view
from .raft import RaftNode, Role, quorum_threshold
from .rng import Stream
from .sealing import KeyDirectory, SealedPayload, SealingError, seal


class SimError(Exception):
    pass


class ConfigError(SimError):
    pass


class AlreadyCrashed(SimError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Full description of one experiment; every field has a sane default."""

    seed: int = 42
    num_nodes: int = 5
    num_chains: int = 1
    lottery_bits: int = 6
    delta: int = 10
    raft_delay_min: int = 1
    raft_delay_max: int = 5
    election_timeout: int = 100
    heartbeat_interval: int = 20
    block_interval: int = 50
    tx_rate: float = 0.4
    sensitive_fraction: float = 0.1
    crash_schedule: tuple[tuple[int, int], ...] = ()
    run_duration: int = 2000
    drain_window: int = 400
    max_batch: int = 64
    snapshot_interval: int = 250
    empty_blocks: bool = True
    num_seal_keys: int = 4
    max_beacon_epochs: int = 10000
    trace_events: bool = False

    def validate(self) -> None:
        def bad(key, why):
            raise ConfigError(f"{key}: {why}")

        if not 0 <= self.seed < 2**64:
            bad("seed", "must be a 64-bit unsigned integer")
        if self.num_nodes < 1:
            bad("num_nodes", "must be >= 1")
        if not 1 <= self.num_chains <= self.num_nodes:
            bad("num_chains", f"must be in [1, num_nodes={self.num_nodes}]")
        if not 1 <= self.lottery_bits <= 32:
            bad("lottery_bits", "must be in [1, 32]")
        if self.delta < 1:
            bad("delta", "must be >= 1")
        if not 1 <= self.raft_delay_min <= self.raft_delay_max:
            bad("raft_delay_min", "need 1 <= raft_delay_min <= raft_delay_max")
        if self.election_timeout < 1:
            bad("election_timeout", "must be >= 1")
        if not 1 <= self.heartbeat_interval <= self.election_timeout:
            bad("heartbeat_interval", "must be in [1, election_timeout]")
        if self.block_interval < 1:
            bad("block_interval", "must be >= 1")
        if self.tx_rate < 0:
            bad("tx_rate", "must be >= 0")
        if not 0 <= self.sensitive_fraction <= 1:
            bad("sensitive_fraction", "must be in [0, 1]")
        if self.run_duration < 1:
            bad("run_duration", "must be >= 1")
        if self.drain_window < 0:
            bad("drain_window", "must be >= 0")
        if self.max_batch < 1:
            bad("max_batch", "must be >= 1")
        if self.snapshot_interval < 1:
            bad("snapshot_interval", "must be >= 1")
        if self.num_seal_keys < 1:
            bad("num_seal_keys", "must be >= 1")
        if self.max_beacon_epochs < 1:
            bad("max_beacon_epochs", "must be >= 1")
        for when, nid in self.crash_schedule:
            if when < 0:
                bad("crash_schedule", f"negative time {when}")
            if not 0 <= nid < self.num_nodes:
                bad("crash_schedule", f"unknown node {nid}")


@dataclass
class SimTrace:
    """Everything one run produced: metrics, safety flags, and snapshots."""

    config: SimConfig
    workload_start: int
    end_time: int
    beacon_rows: list[tuple[int, int, int, int | None, int]]
    assignment: list[list[int]]
    committed_txs: dict[int, int]
    committed_blocks: dict[int, int]
    skipped_blocks: int
    submitted_txs: int
    latency_rows: list[tuple[int, int, int, int]]
    bar_rows: list[tuple[int, int, int]]
    message_counts: dict[str, int]
    safety_flags: list[str]
    expected_stall: bool
    snapshot_rows: list[tuple]
    final_order: list[tuple[int, int, int, str, int]]
    sealed_verified: int
    rank_checked: int
    events_processed: int
    event_rows: list[tuple] | None = None

    def total_committed_txs(self) -> int:
        return sum(self.committed_txs.values())

    def throughput(self) -> float:
        window = self.config.run_duration - self.workload_start
        if window <= 0:
            return 0.0
        return self.total_committed_txs() / window

    def latency_stats(self) -> tuple[float, float]:
        """(mean, 95th percentile) of confirmation latency, 0 if no samples."""
        samples = [row[3] for row in self.latency_rows]
        if not samples:
            return 0.0, 0.0
        ordered = sorted(samples)
        p95 = ordered[int(0.95 * (len(ordered) - 1))]
        return statistics.fmean(samples), float(p95)

    def beacon_repeat_rate(self) -> float:
        if not self.beacon_rows:
            return 0.0
        repeats = sum(1 for row in self.beacon_rows if not row[1])
        return repeats / len(self.beacon_rows)

    # -- serialization ----------------------------------------------------

    def csv_outputs(self) -> dict[str, bytes]:
        """All output files as name -> bytes; the determinism unit."""
        out: dict[str, bytes] = {}

        def csv(name, header, rows):
            buf = io.StringIO()
            buf.write(header + "\n")
            for row in rows:
                buf.write(",".join(str(v) for v in row) + "\n")
            out[name] = buf.getvalue().encode()

        window = max(1, self.config.run_duration - self.workload_start)
        csv(
            "throughput.csv",
            "chain_id,committed_blocks,committed_txs,window,txs_per_tick",
            [
                (
                    c,
                    self.committed_blocks.get(c, 0),
                    self.committed_txs.get(c, 0),
                    window,
                    f"{self.committed_txs.get(c, 0) / window:.6f}",
                )
                for c in range(self.config.num_chains)
            ],
        )
        csv("latency.csv", "nonce,submit_time,confirm_time,latency", self.latency_rows)
        csv("confirmbar.csv", "time,node_id,confirm_bar", self.bar_rows)
        csv(
            "beacon.csv",
            "epoch,succeeded,num_certificates,seed,messages_sent",
            [
                (e, s, c, "" if seed is None else seed, m)
                for e, s, c, seed, m in self.beacon_rows
            ],
        )
        csv("safety.csv", "flag", [(f,) for f in self.safety_flags])
        csv(
            "snapshots.csv",
            "time,node_id,chain_id,height,rank,next_rank,proposer_term,"
            "parent_hash,tx_root,block_hash",
            self.snapshot_rows,
        )
        csv(
            "order.csv",
            "position,rank,chain_id,height,block_hash,tx_count",
            [
                (i, r, c, h, bh, txs)
                for i, (r, c, h, bh, txs) in enumerate(self.final_order)
            ],
        )
        if self.event_rows is not None:
            csv("events.csv", "time,seq,kind,node_id,detail", self.event_rows)
        return out

    def summary_text(self) -> str:
        mean_lat, p95_lat = self.latency_stats()
        lines = [
            "run summary",
            f"  nodes={self.config.num_nodes} chains={self.config.num_chains} "
            f"seed={self.config.seed}",
            f"  beacon: {len(self.beacon_rows)} epoch(s), "
            f"empirical repeat rate {self.beacon_repeat_rate():.4f}, "
            f"closed form {beacon_mod.repeat_probability(self.config.num_nodes, self.config.lottery_bits):.4f}",
            f"  workload start t={self.workload_start}, horizon t={self.end_time}",
            f"  submitted txs: {self.submitted_txs}",
            f"  committed txs: {self.total_committed_txs()} "
            f"({self.throughput():.4f}/tick over the proposal window)",
            f"  committed blocks: {sum(self.committed_blocks.values())} "
            f"(+{self.skipped_blocks} stale proposals skipped)",
            f"  latency: mean {mean_lat:.2f}, p95 {p95_lat:.2f} "
            f"({len(self.latency_rows)} samples)",
            f"  sealed round-trips verified: {self.sealed_verified}",
            "  messages: "
            + " ".join(f"{k}={v}" for k, v in sorted(self.message_counts.items())),
            f"  safety flags: {len(self.safety_flags)}",
        ]
        if self.expected_stall:
            lines.append(
                "  note: expected-stall (a committee lost quorum to crashes; "
                "liveness waived, safety still enforced)"
            )
        for flag in self.safety_flags:
            lines.append(f"  FLAG {flag}")
        return "\n".join(lines) + "\n"


# event kinds, dispatched by integer for heap-compare speed
_MSG, _GOSSIP, _TIMER, _PROPOSE, _CLIENT, _CRASH, _SNAPSHOT = range(7)

_KIND_NAMES = {
    _MSG: "msg",
    _GOSSIP: "gossip",
    _TIMER: "timer",
    _PROPOSE: "propose",
    _CLIENT: "client",
    _CRASH: "crash",
    _SNAPSHOT: "snapshot",
}


class _Node:
    """Simulator-side wrapper: raft instance plus ledger, view, and buffers."""

    __slots__ = (
        "node_id",
        "chain_id",
        "raft",
        "ledger",
        "applied",
        "seen_commit",
        "led_term",
        "view",
        "view_hash",
        "buffer",
        "bar",
        "confirmed_ptr",
        "last_order",
    )

    def __init__(self, node_id: int, chain_id: int, raft: RaftNode, genesis_by_chain):
        self.node_id = node_id
        self.chain_id = chain_id
        self.raft = raft
        self.ledger = ChainLedger(chain_id, (genesis_by_chain[chain_id][0],))
        self.applied = 0
        self.seen_commit = 0
        self.led_term = 0
        self.view: dict[int, list[BlockHeader]] = {
            c: [b.header] for c, (b, _) in genesis_by_chain.items()
        }
        self.view_hash: dict[int, list[bytes]] = {
            c: [h] for c, (_, h) in genesis_by_chain.items()
        }
        self.buffer: dict[int, dict[int, BlockHeader]] = {c: {} for c in self.view}
        self.bar = 1
        self.confirmed_ptr = 1  # genesis is already below the initial bar
        self.last_order: list[tuple] = []


class Simulation:
    def __init__(self, config: SimConfig):
        config.validate()
        self.cfg = config
        self.now = 0
        self._seq = 0
        self.queue: list[tuple] = []
        self.crashed: set[int] = set()
        self.flags: list[str] = []
        self.counts: dict[str, int] = {}
        self.events_processed = 0
        self.event_rows: list[tuple] | None = [] if config.trace_events else None

        self._delay = Stream.from_labels("delays", config.seed)
        self._workload = Stream.from_labels("workload", config.seed)
        self.directory = KeyDirectory.generate(
            config.num_seal_keys, Stream.from_labels("seal", config.seed)
        )
        self.plaintexts: dict[int, bytes] = {}
        self.submit_times: dict[int, int] = {}
        self.sampled: set[int] = set()
        self.latency_rows: list[tuple[int, int, int, int]] = []
        self.bar_rows: list[tuple[int, int, int]] = []
        self.snapshot_rows: list[tuple] = []
        self.beacon_rows: list[tuple[int, int, int, int | None, int]] = []
        self.pending: dict[int, list[Transaction]] = {
            c: [] for c in range(config.num_chains)
        }
        self.submitted = 0
        # committed-state cross checks
        self.committed_cmds: dict[tuple[int, int], bytes] = {}
        self.canonical: dict[int, list[Block]] = {}
        self.canonical_hash: dict[int, list[bytes]] = {}
        self.skipped: set[tuple[int, int]] = set()
        self.election_winners: dict[tuple[int, int], int] = {}
        self._tick_at: dict[int, int] = {}

    # -- plumbing ---------------------------------------------------------

    def _push(self, time: int, kind: int, nid: int, payload) -> None:
        self._seq += 1
        heapq.heappush(self.queue, (time, self._seq, kind, nid, payload))

    def _count(self, name: str, n: int = 1) -> None:
        self.counts[name] = self.counts.get(name, 0) + n

    def _flag(self, text: str) -> None:
        self.flags.append(text)

    def _send(self, src: int, dst: int, msg, now: int) -> None:
        delay = self._delay.uniform_int(self.cfg.raft_delay_min, self.cfg.raft_delay_max)
        self._count(type(msg).__name__)
        self._push(now + delay, _MSG, dst, (src, msg))

    def _arm_timer(self, node: _Node, now: int) -> None:
        deadline = max(node.raft.next_deadline(), now)
        if deadline > self.end_time:
            return
        if self._tick_at.get(node.node_id) != deadline:
            self._tick_at[node.node_id] = deadline
            self._push(deadline, _TIMER, node.node_id, deadline)

    # -- beacon phase ------------------------------------------------------

    def _run_beacon_phase(self) -> int:
        cfg = self.cfg
        enclaves = make_beacon_nodes(cfg.num_nodes, cfg.lottery_bits, cfg.seed)
        crash_at = {}
        for when, nid in cfg.crash_schedule:
            crash_at[nid] = min(when, crash_at.get(nid, when))
        for epoch in range(cfg.max_beacon_epochs):
            t0 = epoch * cfg.delta
            certs = []
            for enclave in enclaves:
                if crash_at.get(enclave.node_id, -1) >= 0 and crash_at[enclave.node_id] <= t0:
                    continue
                cert = invoke_beacon(enclave, epoch)
                if cert is not None:
                    certs.append(cert)
            messages = len(certs) * (cfg.num_nodes - 1)
            self._count("BeaconCertificate", messages)
            try:
                seed = select_seed(certs, epoch)
            except Repeat:
                self.beacon_rows.append((epoch, 0, 0, None, 0))
                continue
            self.beacon_rows.append((epoch, 1, len(certs), seed, messages))
            self.locked_seed = seed
            return (epoch + 1) * cfg.delta
        raise SimError(
            f"beacon failed to lock a seed in {cfg.max_beacon_epochs} epochs"
        )

    # -- workload ----------------------------------------------------------

    def _generate_workload(self, start: int) -> None:
        cfg = self.cfg
        wl = self._workload
        whole = int(cfg.tx_rate)
        frac = cfg.tx_rate - whole
        nonce = 0
        keys = [self.directory.get(k) for k in range(cfg.num_seal_keys)]
        for t in range(start, cfg.run_duration):
            k = whole + (1 if wl.chance(frac) else 0)
            for _ in range(k):
                chain = wl.next_below(cfg.num_chains)
                sensitive = wl.chance(cfg.sensitive_fraction)
                fee = wl.next_below(1000)
                payload = wl.next_bytes(24)
                if sensitive:
                    key = keys[wl.next_below(len(keys))]
                    ad = nonce.to_bytes(8, "big") + fee.to_bytes(8, "big")
                    payload_bytes = seal(key, payload, ad).encode()
                    self.plaintexts[nonce] = payload
                else:
                    payload_bytes = payload
                tx = Transaction(payload_bytes, sensitive, fee, nonce)
                self._push(t, _CLIENT, chain, tx)
                nonce += 1

    # -- raft interaction --------------------------------------------------

    def _after_raft(self, node: _Node, now: int, outgoing) -> None:
        pending = list(outgoing)
        r = node.raft
        if r.role is Role.LEADER and r.current_term != node.led_term:
            node.led_term = r.current_term
            key = (node.chain_id, r.current_term)
            holder = self.election_winners.setdefault(key, node.node_id)
            if holder != node.node_id:
                self._flag(
                    f"election-safety chain={node.chain_id} term={r.current_term} "
                    f"leaders={holder},{node.node_id}"
                )
            # a no-op entry lets the new leader commit inherited entries
            pending.extend(r.client_submit(b"", now))
        for dst, msg in pending:
            self._send(node.node_id, dst, msg, now)
        if r.commit_index > node.seen_commit:
            if r.role is Role.LEADER:
                acks = 1 + sum(
                    1 for p in r.peers if r.match_index[p] >= r.commit_index
                )
                if acks < r.quorum:
                    self._flag(
                        f"commit-quorum chain={node.chain_id} "
                        f"index={r.commit_index} acks={acks} quorum={r.quorum}"
                    )
            node.seen_commit = r.commit_index
        self._apply_committed(node, now)
        self._arm_timer(node, now)

    def _apply_committed(self, node: _Node, now: int) -> None:
        r = node.raft
        while node.applied < r.commit_index:
            entry = r.log[node.applied]
            node.applied += 1
            if not entry.command:
                continue
            key = (node.chain_id, entry.index)
            digest = hashlib.sha256(entry.command).digest()
            seen = self.committed_cmds.setdefault(key, digest)
            if seen != digest:
                self._flag(
                    f"state-machine-safety chain={node.chain_id} index={entry.index}"
                )
                continue
            try:
                block = decode_block(entry.command)
            except DecodeError as exc:
                self._flag(f"command-decode chain={node.chain_id}: {exc}")
                continue
            try:
                node.ledger = append_block(node.ledger, block)
            except (LinkageError, RankError, ChainMismatch):
                # a stale proposal from a superseded leader; every replica
                # skips it identically
                self.skipped.add(key)
                continue
            self._record_canonical(node.chain_id, block)
            self._ingest_header(node, block.header, now)
            self._gossip_block(node, block.header, now)

    def _record_canonical(self, chain: int, block: Block) -> None:
        chain_blocks = self.canonical[chain]
        chain_hashes = self.canonical_hash[chain]
        height = block.header.height
        bh = hash_header(block.header)
        if height == len(chain_blocks):
            chain_blocks.append(block)
            chain_hashes.append(bh)
        elif height < len(chain_blocks):
            if chain_hashes[height] != bh:
                self._flag(f"ledger-divergence chain={chain} height={height}")
        else:
            self._flag(f"ledger-gap chain={chain} height={height}")

    # -- views and gossip ----------------------------------------------------

    def _ingest_header(self, node: _Node, header: BlockHeader, now: int) -> None:
        chain = header.chain_id
        headers = node.view[chain]
        hashes = node.view_hash[chain]
        tail_height = headers[-1].height
        if header.height <= tail_height:
            if hash_header(header) != hashes[header.height]:
                self._flag(
                    f"view-divergence node={node.node_id} chain={chain} "
                    f"height={header.height}"
                )
            return
        buf = node.buffer[chain]
        buf.setdefault(header.height, header)
        grew = False
        while headers[-1].height + 1 in buf:
            nxt = buf.pop(headers[-1].height + 1)
            prev = headers[-1]
            if (
                nxt.parent_hash != hashes[-1]
                or nxt.rank != prev.next_rank
                or nxt.next_rank <= nxt.rank
            ):
                self._flag(
                    f"header-linkage node={node.node_id} chain={chain} "
                    f"height={nxt.height}"
                )
                return
            headers.append(nxt)
            hashes.append(hash_header(nxt))
            grew = True
        if grew:
            self._bar_advance(node, now)

    def _gossip_block(self, node: _Node, header: BlockHeader, now: int) -> None:
        for dst in range(self.cfg.num_nodes):
            if dst == node.node_id or dst in self.crashed:
                continue
            delay = self._delay.uniform_int(
                self.cfg.raft_delay_min, self.cfg.raft_delay_max
            )
            self._count("Gossip")
            self._push(now + delay, _GOSSIP, dst, header)

    def _bar_advance(self, node: _Node, now: int) -> None:
        bar = min(headers[-1].next_rank for headers in node.view.values())
        if bar < node.bar:
            self._flag(f"confirmbar-regression node={node.node_id} t={now}")
            return
        if bar > node.bar:
            node.bar = bar
            self.bar_rows.append((now, node.node_id, bar))
        self._sample_latency(node, now)

    def _sample_latency(self, node: _Node, now: int) -> None:
        headers = node.view[node.chain_id]
        while node.confirmed_ptr < len(headers):
            header = headers[node.confirmed_ptr]
            if header.rank >= node.bar:
                break
            if header.height >= len(node.ledger.blocks):
                break  # body not applied locally yet; a peer will sample it
            block = node.ledger.blocks[header.height]
            for tx in block.transactions:
                if tx.nonce not in self.sampled:
                    self.sampled.add(tx.nonce)
                    submit = self.submit_times[tx.nonce]
                    self.latency_rows.append((tx.nonce, submit, now, now - submit))
            node.confirmed_ptr += 1

    def _node_order(self, node: _Node) -> list[tuple]:
        refs = []
        for chain, headers in node.view.items():
            hashes = node.view_hash[chain]
            for i, h in enumerate(headers):
                if h.rank < node.bar:
                    refs.append((h.rank, chain, h.height, hashes[i]))
        refs.sort()
        return refs

    # -- event handlers --------------------------------------------------------

    def _on_propose(self, chain: int, now: int) -> None:
        committee = self.assignment[chain]
        leaders = [
            self.nodes[n]
            for n in committee
            if n not in self.crashed and self.nodes[n].raft.role is Role.LEADER
        ]
        if not leaders:
            return
        node = max(leaders, key=lambda nd: (nd.raft.current_term, nd.node_id))
        r = node.raft
        # propose only from a fully settled log: everything committed and
        # applied, so the new block extends the real tip
        if r.commit_index != len(r.log) or node.applied != r.commit_index:
            return
        queue = self.pending[chain]
        txs = queue[: self.cfg.max_batch]
        if not txs and not self.cfg.empty_blocks:
            return
        del queue[: len(txs)]
        view = GlobalView(
            num_chains=self.cfg.num_chains,
            chains={c: tuple(hs) for c, hs in node.view.items()},
        )
        rank, next_rank = propose_rank_fields(view, chain)
        parent = node.ledger.tip
        block = new_block(
            chain_id=chain,
            height=parent.header.height + 1,
            parent_hash=hash_header(parent.header),
            rank=rank,
            next_rank=next_rank,
            transactions=txs,
            proposer_term=r.current_term,
        )
        out = r.client_submit(encode_block(block), now)
        self._after_raft(node, now, out)

    def _on_snapshot(self, now: int) -> None:
        orders = {}
        for node in self.nodes:
            if node.node_id in self.crashed:
                continue
            order = self._node_order(node)
            orders[node.node_id] = order
            if node.last_order != order[: len(node.last_order)]:
                self._flag(
                    f"prefix-stability node={node.node_id} t={now} "
                    f"(earlier order is not a prefix)"
                )
            node.last_order = order
            for chain, headers in node.view.items():
                hashes = node.view_hash[chain]
                for i, h in enumerate(headers):
                    self.snapshot_rows.append(
                        (
                            now,
                            node.node_id,
                            chain,
                            h.height,
                            h.rank,
                            h.next_rank,
                            h.proposer_term,
                            h.parent_hash.hex(),
                            h.tx_root.hex(),
                            hashes[i].hex(),
                        )
                    )
        ids = sorted(orders)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                oa, ob = orders[a], orders[b]
                short, long_ = (oa, ob) if len(oa) <= len(ob) else (ob, oa)
                if short != long_[: len(short)]:
                    self._flag(f"prefix-consistency nodes={a},{b} t={now}")

    # -- main loop ----------------------------------------------------------

    def run(self) -> SimTrace:
        cfg = self.cfg
        t_start = self._run_beacon_phase()
        self.assignment = assign_chains(self.locked_seed, cfg.num_nodes, cfg.num_chains)
        chain_of = {}
        for chain, members in enumerate(self.assignment):
            for nid in members:
                chain_of[nid] = chain

        genesis_by_chain = {}
        for chain in range(cfg.num_chains):
            g = make_genesis(chain)
            genesis_by_chain[chain] = (g, hash_header(g.header))
            self.canonical[chain] = [g]
            self.canonical_hash[chain] = [hash_header(g.header)]

        self.nodes = [
            _Node(
                nid,
                chain_of[nid],
                RaftNode(
                    nid,
                    self.assignment[chain_of[nid]],
                    cfg.election_timeout,
                    cfg.heartbeat_interval,
                    Stream.from_labels("timeout", cfg.seed, nid),
                    now=t_start,
                ),
                genesis_by_chain,
            )
            for nid in range(cfg.num_nodes)
        ]
        self.workload_start = t_start
        self.end_time = cfg.run_duration + cfg.drain_window

        crashed_per_chain = {c: 0 for c in range(cfg.num_chains)}
        crash_nodes = set()
        for when, nid in cfg.crash_schedule:
            self._push(when, _CRASH, nid, None)
            if nid not in crash_nodes:
                crash_nodes.add(nid)
                crashed_per_chain[chain_of[nid]] += 1
        expected_stall = any(
            crashed_per_chain[c] >= quorum_threshold(len(self.assignment[c]))
            for c in range(cfg.num_chains)
        )

        for node in self.nodes:
            self._arm_timer(node, t_start)
        t = t_start + cfg.block_interval
        while t <= cfg.run_duration:
            for chain in range(cfg.num_chains):
                self._push(t, _PROPOSE, chain, None)
            t += cfg.block_interval
        t = t_start + cfg.snapshot_interval
        while t <= cfg.run_duration:
            self._push(t, _SNAPSHOT, -1, None)
            t += cfg.snapshot_interval
        self._generate_workload(t_start)

        flush = False
        while self.queue:
            time, seq, kind, nid, payload = heapq.heappop(self.queue)
            if not flush and time > self.end_time:
                # horizon reached: stop timers and workload, but keep
                # delivering in-flight traffic so views converge
                flush = True
            if flush and kind not in (_MSG, _GOSSIP):
                continue
            self.now = time
            self.events_processed += 1
            if self.event_rows is not None:
                detail = _KIND_NAMES[kind]
                if kind == _MSG:
                    detail = f"{type(payload[1]).__name__}<-{payload[0]}"
                elif kind == _GOSSIP:
                    detail = f"header c{payload.chain_id}h{payload.height}"
                self.event_rows.append((time, seq, _KIND_NAMES[kind], nid, detail))

            if kind == _MSG:
                if nid in self.crashed:
                    continue
                src, msg = payload
                node = self.nodes[nid]
                out = node.raft.handle_message(src, msg, time)
                self._after_raft(node, time, out)
            elif kind == _GOSSIP:
                if nid in self.crashed:
                    continue
                self._ingest_header(self.nodes[nid], payload, time)
            elif kind == _TIMER:
                if nid in self.crashed:
                    continue
                if self._tick_at.get(nid) != payload:
                    continue  # superseded deadline
                node = self.nodes[nid]
                self._tick_at.pop(nid, None)
                out = node.raft.tick(time)
                self._after_raft(node, time, out)
            elif kind == _PROPOSE:
                self._on_propose(nid, time)
            elif kind == _CLIENT:
                self.pending[nid].append(payload)
                self.submit_times[payload.nonce] = time
                self.submitted += 1
            elif kind == _CRASH:
                if nid in self.crashed:
                    raise AlreadyCrashed(f"node {nid} crashed twice")
                self.crashed.add(nid)
            elif kind == _SNAPSHOT:
                self._on_snapshot(time)

        self._final_checks()
        committed_txs = {
            c: sum(len(b.transactions) for b in blocks)
            for c, blocks in self.canonical.items()
        }
        committed_blocks = {c: len(blocks) - 1 for c, blocks in self.canonical.items()}
        return SimTrace(
            config=cfg,
            workload_start=self.workload_start,
            end_time=self.end_time,
            beacon_rows=self.beacon_rows,
            assignment=[list(m) for m in self.assignment],
            committed_txs=committed_txs,
            committed_blocks=committed_blocks,
            skipped_blocks=len(self.skipped),
            submitted_txs=self.submitted,
            latency_rows=self.latency_rows,
            bar_rows=self.bar_rows,
            message_counts=self.counts,
            safety_flags=self.flags,
            expected_stall=expected_stall,
            snapshot_rows=self.snapshot_rows,
            final_order=self.final_order,
            sealed_verified=self.sealed_verified,
            rank_checked=self.rank_checked,
            events_processed=self.events_processed,
            event_rows=self.event_rows,
        )

    # -- end-of-run verification ------------------------------------------

    def _final_checks(self) -> None:
        honest = [n for n in self.nodes if n.node_id not in self.crashed]
        for node in honest:
            self._sample_latency(node, self.now)
            try:
                validate_view(
                    GlobalView(
                        num_chains=self.cfg.num_chains,
                        chains={c: tuple(h) for c, h in node.view.items()},
                    )
                )
            except Exception as exc:
                self._flag(f"final-view node={node.node_id}: {exc}")

        orders = {n.node_id: self._node_order(n) for n in honest}
        if orders:
            ids = sorted(orders)
            first = orders[ids[0]]
            for other in ids[1:]:
                if orders[other] != first:
                    self._flag(f"final-order-divergence nodes={ids[0]},{other}")
                    break
            for node in honest:
                if node.last_order != orders[node.node_id][: len(node.last_order)]:
                    self._flag(f"prefix-stability node={node.node_id} t=final")

        # log matching: deepest shared (index, term) implies identical prefixes
        for chain, members in enumerate(self.assignment):
            alive = [self.nodes[n] for n in members if n not in self.crashed]
            for i, a in enumerate(alive):
                for b in alive[i + 1 :]:
                    la, lb = a.raft.log, b.raft.log
                    top = min(len(la), len(lb))
                    while top > 0 and la[top - 1].term != lb[top - 1].term:
                        top -= 1
                    if top > 0 and la[:top] != lb[:top]:
                        self._flag(
                            f"log-matching chain={chain} nodes={a.node_id},{b.node_id}"
                        )

        self.rank_checked = 0
        for chain, blocks in self.canonical.items():
            prev = None
            for block in blocks:
                h = block.header
                self.rank_checked += 1
                if h.next_rank <= h.rank:
                    self._flag(f"rank-field chain={chain} height={h.height}")
                if prev is not None and h.rank != prev.next_rank:
                    self._flag(f"rank-linkage chain={chain} height={h.height}")
                prev = h

        self.sealed_verified = 0
        for chain, blocks in self.canonical.items():
            for block in blocks:
                for tx in block.transactions:
                    if not tx.sensitive:
                        continue
                    ad = tx.nonce.to_bytes(8, "big") + tx.fee.to_bytes(8, "big")
                    try:
                        sealed = SealedPayload.decode(tx.payload)
                        plain = self.directory.unseal(sealed, ad)
                    except SealingError as exc:
                        self._flag(f"sealed-roundtrip nonce={tx.nonce}: {exc}")
                        continue
                    if plain != self.plaintexts.get(tx.nonce):
                        self._flag(f"sealed-roundtrip nonce={tx.nonce}: wrong plaintext")
                    else:
                        self.sealed_verified += 1

        self.final_order = []
        if honest:
            node = honest[0]
            hash_to_block = {}
            for chain, blocks in self.canonical.items():
                for block, bh in zip(blocks, self.canonical_hash[chain]):
                    hash_to_block[bh] = block
            for rank, chain, height, bh in self._node_order(node):
                body = hash_to_block.get(bh)
                tx_count = len(body.transactions) if body is not None else 0
                self.final_order.append((rank, chain, height, bh.hex(), tx_count))


def run_simulation(config: SimConfig) -> SimTrace:
    """Execute one deterministic run; pure function of the config."""
    return Simulation(config).run()


@dataclass(frozen=True)
class ScalingPoint:
    chains: int
    nodes: int
    committed_txs: int
    window: int
    throughput: float


def measure_scaling(
    base: SimConfig, chain_counts: list[int], committee_size: int = 5
) -> list[ScalingPoint]:
    """Throughput at several chain counts with per-chain load held fixed.

    Each point runs committee_size verifiers per chain and scales the
    offered load with the chain count, so per-chain conditions are identical
    and only the degree of parallelism varies.
    """
    per_chain_rate = base.tx_rate / base.num_chains
    points = []
    for c in chain_counts:
        if c < 1:
            raise ConfigError(f"chain_counts: invalid count {c}")
        cfg = replace(
            base,
            num_chains=c,
            num_nodes=committee_size * c,
            tx_rate=per_chain_rate * c,
        )
        trace = run_simulation(cfg)
        window = max(1, cfg.run_duration - trace.workload_start)
        points.append(
            ScalingPoint(
                chains=c,
                nodes=cfg.num_nodes,
                committed_txs=trace.total_committed_txs(),
                window=window,
                throughput=trace.total_committed_txs() / window,
            )
        )
    return points
