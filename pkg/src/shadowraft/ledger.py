"""Canonical data model for transactions, blocks, and per-chain ledgers.

Encodings are canonical by construction: fixed-width big-endian integers,
length-prefixed byte strings, fields in declaration order. Hashing is
SHA-256 throughout. The header byte layout (the hashing preimage) is:

    chain_id u32 || height u64 || parent_hash 32B || rank u64
    || next_rank u64 || tx_root 32B || proposer_term u64

All values here are immutable once constructed; a ledger grows only by
``append_block`` returning an extended ledger value.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from . import sealing

HASH_LEN = 32
ZERO_HASH = b"\x00" * HASH_LEN

_HEADER = struct.Struct(">IQ32sQQ32sQ")  # 100 bytes


class LedgerError(Exception):
    pass


class LinkageError(LedgerError):
    """Parent hash, height, or transaction root does not fit the chain."""


class RankError(LedgerError):
    """Rank continuity or the next_rank > rank constraint is violated."""


class ChainMismatch(LedgerError):
    """Block belongs to a different chain than the ledger."""


class DecodeError(LedgerError):
    """Bytes do not parse as a canonical encoding."""


@dataclass(frozen=True)
class Transaction:
    payload: bytes
    sensitive: bool
    fee: int
    nonce: int

    def __post_init__(self):
        if self.fee < 0:
            raise ValueError("fee must be non-negative")
        if not 0 <= self.nonce < 1 << 64:
            raise ValueError("nonce out of range")

    def validate(self) -> None:
        """Check the sensitive-payload invariant (payload parses as sealed)."""
        if self.sensitive:
            sealing.SealedPayload.decode(self.payload)


@dataclass(frozen=True)
class BlockHeader:
    chain_id: int
    height: int
    parent_hash: bytes
    rank: int
    next_rank: int
    tx_root: bytes
    proposer_term: int


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]


@dataclass(frozen=True)
class ChainLedger:
    chain_id: int
    blocks: tuple[Block, ...] = ()

    @property
    def tip(self) -> Block | None:
        return self.blocks[-1] if self.blocks else None

    def __len__(self) -> int:
        return len(self.blocks)


def encode_transaction(tx: Transaction) -> bytes:
    if not 0 <= tx.fee < 1 << 64:
        raise ValueError("fee out of u64 range")
    return b"".join(
        (
            struct.pack(">Q", len(tx.payload)),
            tx.payload,
            b"\x01" if tx.sensitive else b"\x00",
            struct.pack(">QQ", tx.fee, tx.nonce),
        )
    )


def _decode_transaction(buf: bytes, pos: int) -> tuple[Transaction, int]:
    if pos + 8 > len(buf):
        raise DecodeError("truncated transaction length")
    (plen,) = struct.unpack_from(">Q", buf, pos)
    pos += 8
    if pos + plen + 17 > len(buf):
        raise DecodeError("truncated transaction body")
    payload = buf[pos : pos + plen]
    pos += plen
    flag = buf[pos]
    if flag not in (0, 1):
        raise DecodeError("invalid sensitivity flag")
    fee, nonce = struct.unpack_from(">QQ", buf, pos + 1)
    pos += 17
    return Transaction(payload, bool(flag), fee, nonce), pos


def encode_transactions(txs: Iterable[Transaction]) -> bytes:
    txs = tuple(txs)
    return struct.pack(">Q", len(txs)) + b"".join(encode_transaction(t) for t in txs)


def transaction_id(tx: Transaction) -> bytes:
    """32-byte digest of the canonical transaction encoding."""
    return hashlib.sha256(encode_transaction(tx)).digest()


def tx_root(txs: Iterable[Transaction]) -> bytes:
    return hashlib.sha256(encode_transactions(txs)).digest()


def header_bytes(header: BlockHeader) -> bytes:
    return _HEADER.pack(
        header.chain_id,
        header.height,
        header.parent_hash,
        header.rank,
        header.next_rank,
        header.tx_root,
        header.proposer_term,
    )


def hash_header(header: BlockHeader) -> bytes:
    return hashlib.sha256(header_bytes(header)).digest()


def new_block(
    chain_id: int,
    height: int,
    parent_hash: bytes,
    rank: int,
    next_rank: int,
    transactions: Iterable[Transaction],
    proposer_term: int,
) -> Block:
    """Build a block with its tx_root computed from the transaction list."""
    txs = tuple(transactions)
    header = BlockHeader(
        chain_id=chain_id,
        height=height,
        parent_hash=parent_hash,
        rank=rank,
        next_rank=next_rank,
        tx_root=tx_root(txs),
        proposer_term=proposer_term,
    )
    return Block(header, txs)


def make_genesis(chain_id: int) -> Block:
    """Genesis block: height 0, rank 0, next_rank 1, zero parent, no transactions."""
    return new_block(chain_id, 0, ZERO_HASH, 0, 1, (), 0)


def encode_block(block: Block) -> bytes:
    return header_bytes(block.header) + encode_transactions(block.transactions)


def decode_block(data: bytes) -> Block:
    if len(data) < _HEADER.size + 8:
        raise DecodeError("truncated block header")
    fields = _HEADER.unpack_from(data, 0)
    header = BlockHeader(*fields)
    pos = _HEADER.size
    (count,) = struct.unpack_from(">Q", data, pos)
    pos += 8
    txs = []
    for _ in range(count):
        tx, pos = _decode_transaction(data, pos)
        txs.append(tx)
    if pos != len(data):
        raise DecodeError("trailing bytes after block")
    return Block(header, tuple(txs))


def append_block(ledger: ChainLedger, block: Block) -> ChainLedger:
    """Validate linkage, rank continuity, and next_rank > rank, then append.

    Returns a new ledger value; the input ledger is unchanged.
    """
    h = block.header
    if h.chain_id != ledger.chain_id:
        raise ChainMismatch(f"block chain {h.chain_id} != ledger chain {ledger.chain_id}")
    if h.height != len(ledger.blocks):
        raise LinkageError(f"height {h.height}, expected {len(ledger.blocks)}")
    if h.tx_root != tx_root(block.transactions):
        raise LinkageError("tx_root does not match transaction list")
    if h.next_rank <= h.rank:
        raise RankError(f"next_rank {h.next_rank} <= rank {h.rank}")
    tip = ledger.tip
    if tip is None:
        if h.parent_hash != ZERO_HASH:
            raise LinkageError("genesis parent_hash must be all zero")
        if h.rank != 0:
            raise RankError(f"genesis rank {h.rank} != 0")
    else:
        if h.parent_hash != hash_header(tip.header):
            raise LinkageError("parent_hash does not match chain tip")
        if h.rank != tip.header.next_rank:
            raise RankError(f"rank {h.rank}, expected tip next_rank {tip.header.next_rank}")
    return ChainLedger(ledger.chain_id, ledger.blocks + (block,))


def save_chain(ledger: ChainLedger, path: str | Path) -> None:
    """Persist as newline-delimited hex records, one encoded block per line."""
    with open(path, "w", encoding="ascii") as fh:
        for block in ledger.blocks:
            fh.write(encode_block(block).hex())
            fh.write("\n")


def load_chain(chain_id: int, path: str | Path) -> ChainLedger:
    ledger = ChainLedger(chain_id)
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                raw = bytes.fromhex(line)
            except ValueError as exc:
                raise DecodeError(f"bad hex record: {exc}") from exc
            ledger = append_block(ledger, decode_block(raw))
    return ledger
