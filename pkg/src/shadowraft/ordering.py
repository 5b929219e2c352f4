"""Total ordering of blocks across parallel shadow chains.

Every block carries two rank fields. Its rank is fixed by its parent: the
parent's next_rank. Its next_rank is chosen at proposal time as
max(rank + 1, x), where x is the highest expected next rank over all chains
in the proposer's view, so a lagging chain catches up to the longest one in
a single block. A node's ConfirmBar is the minimum expected next rank over
all chains; every block with rank below the bar is fully confirmed, because
no chain can ever again produce a block ranked under it. Fully confirmed
blocks sort by (rank, chain_id), which yields the same total order at every
node and only ever grows by appending.

All functions here are pure over an immutable view snapshot; the simulator
feeds them each node's committed-header view as gossip arrives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ledger import Block, BlockHeader, Transaction, hash_header


class OrderingError(Exception):
    pass


class UnknownChain(OrderingError):
    pass


class IncompleteView(OrderingError):
    pass


class DanglingRef(OrderingError):
    pass


@dataclass(frozen=True)
class GlobalView:
    """One node's snapshot of the committed prefix of every chain.

    chains maps chain_id to the ordered list of committed block headers,
    genesis first. bodies resolves header hashes to full blocks when
    transaction flattening is needed; header-only views leave it empty.
    """

    num_chains: int
    chains: dict[int, tuple[BlockHeader, ...]]
    bodies: dict[bytes, Block] = field(default_factory=dict)
    observed_at: int = 0


@dataclass(frozen=True, order=True)
class OrderedBlockRef:
    rank: int
    chain_id: int
    height: int
    block_hash: bytes


def expected_next_rank(view: GlobalView, chain_id: int) -> int:
    """Rank the chain's next block will take: tail next_rank (y_i)."""
    if chain_id not in view.chains or not view.chains[chain_id]:
        raise UnknownChain(f"chain {chain_id} not in view")
    return view.chains[chain_id][-1].next_rank


def propose_rank_fields(view: GlobalView, chain_id: int) -> tuple[int, int]:
    """Rank fields for the next block on chain_id given this view.

    rank is inherited from the parent's next_rank. next_rank is
    max(rank + 1, x) with x the maximum expected next rank across the view,
    the smallest value satisfying both next_rank > rank and next_rank >= x.
    """
    rank = expected_next_rank(view, chain_id)
    x = max(expected_next_rank(view, c) for c in view.chains)
    return rank, max(rank + 1, x)


def confirm_bar(view: GlobalView) -> int:
    """Minimum expected next rank over all chains; all chains must appear."""
    if len(view.chains) != view.num_chains or any(
        c not in view.chains for c in range(view.num_chains)
    ):
        raise IncompleteView(
            f"view covers {sorted(view.chains)} of {view.num_chains} chains"
        )
    return min(expected_next_rank(view, c) for c in range(view.num_chains))


def total_order(view: GlobalView) -> list[OrderedBlockRef]:
    """Fully confirmed blocks: rank < confirm_bar, sorted by (rank, chain_id).

    As the view grows the result only gains a suffix (prefix stability):
    the bar is monotone in the view, and every future block on any chain
    ranks at or above that chain's current tail next_rank, hence at or
    above the old bar.
    """
    bar = confirm_bar(view)
    refs = [
        OrderedBlockRef(h.rank, h.chain_id, h.height, hash_header(h))
        for headers in view.chains.values()
        for h in headers
        if h.rank < bar
    ]
    refs.sort()
    return refs


def flatten_transactions(
    order: list[OrderedBlockRef], view: GlobalView
) -> list[Transaction]:
    """Concatenate block transactions in total-order sequence."""
    txs: list[Transaction] = []
    for ref in order:
        block = view.bodies.get(ref.block_hash)
        if block is None:
            raise DanglingRef(
                f"no body for block {ref.block_hash.hex()[:12]} "
                f"(chain {ref.chain_id} height {ref.height})"
            )
        txs.extend(block.transactions)
    return txs


def reference_total_order(view: GlobalView) -> list[OrderedBlockRef]:
    """Brute-force oracle for total_order, kept deliberately independent.

    Computes the bar by direct field reads and sorts with an explicit
    comparison key instead of reusing the production helpers.
    """
    tails = []
    for c in range(view.num_chains):
        headers = view.chains.get(c)
        if not headers:
            raise IncompleteView(f"chain {c} missing")
        tails.append(headers[-1].next_rank)
    bar = min(tails)
    out = []
    for c, headers in view.chains.items():
        for h in headers:
            if h.rank < bar:
                out.append(OrderedBlockRef(h.rank, h.chain_id, h.height, hash_header(h)))
    return sorted(out, key=lambda r: (r.rank, r.chain_id))


def is_prefix(shorter: list[OrderedBlockRef], longer: list[OrderedBlockRef]) -> bool:
    if len(shorter) > len(longer):
        return False
    return all(a == b for a, b in zip(shorter, longer))


def validate_view(view: GlobalView) -> None:
    """Check per-chain linkage and rank discipline over a header view.

    Raises OrderingError on the first violation: wrong chain_id, broken
    height/parent linkage, rank != parent next_rank, or next_rank <= rank.
    """
    for chain_id, headers in view.chains.items():
        prev: BlockHeader | None = None
        for h in headers:
            if h.chain_id != chain_id:
                raise OrderingError(
                    f"chain {chain_id} holds header for chain {h.chain_id}"
                )
            if h.next_rank <= h.rank:
                raise OrderingError(
                    f"chain {chain_id} height {h.height}: "
                    f"next_rank {h.next_rank} <= rank {h.rank}"
                )
            if prev is None:
                if h.height != 0 or h.rank != 0:
                    raise OrderingError(f"chain {chain_id} view must start at genesis")
            else:
                if h.height != prev.height + 1:
                    raise OrderingError(
                        f"chain {chain_id}: height {h.height} after {prev.height}"
                    )
                if h.parent_hash != hash_header(prev):
                    raise OrderingError(
                        f"chain {chain_id} height {h.height}: parent hash mismatch"
                    )
                if h.rank != prev.next_rank:
                    raise OrderingError(
                        f"chain {chain_id} height {h.height}: "
                        f"rank {h.rank} != parent next_rank {prev.next_rank}"
                    )
            prev = h
