"""Raft consensus state machine for one verifier on one shadow chain.

Message-driven and free of I/O: every handler maps (state, input, now) to a
list of ``(destination, message)`` pairs, with all timing injected through
``now`` and all randomness through the node's timeout stream. The rules are
standard Raft: randomized election timeouts, the log consistency check on
AppendEntries, the up-to-date restriction on votes, and commit counting
restricted to the leader's current term. An entry commits once it is
replicated on ``quorum_threshold(n)`` nodes, which also commits everything
before it.

Heartbeats are AppendEntries with empty entry lists. Followers that fall
behind catch up through the leader's next_index backtracking (decrement by
one per rejection) and through entry batches attached at submit time.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

from .rng import Stream


class Role(Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"


class NotLeader(Exception):
    """Command submitted to a node that is not the leader."""


@dataclass(frozen=True)
class LogEntry:
    term: int
    index: int
    command: bytes


@dataclass(frozen=True)
class VoteRequest:
    term: int
    candidate_id: int
    last_log_index: int
    last_log_term: int


@dataclass(frozen=True)
class VoteReply:
    term: int
    granted: bool


@dataclass(frozen=True)
class AppendEntries:
    term: int
    leader_id: int
    prev_log_index: int
    prev_log_term: int
    entries: tuple[LogEntry, ...]
    leader_commit: int


@dataclass(frozen=True)
class AppendReply:
    term: int
    success: bool
    match_index: int


RaftMessage = Union[VoteRequest, VoteReply, AppendEntries, AppendReply]

Outgoing = list[tuple[int, RaftMessage]]


def quorum_threshold(n: int) -> int:
    """Acknowledgement count at which an entry commits: floor(n/2) + 1.

    A strict majority for every n, so any two quorums intersect. For even n
    this is the larger of the two candidate readings of "half the cluster";
    the smaller one would let disjoint halves elect rival leaders.
    """
    if n < 1:
        raise ValueError("cluster size must be at least 1")
    return n // 2 + 1


class RaftNode:
    """Consensus state of one node. Owned by a single caller; not thread-safe."""

    def __init__(
        self,
        node_id: int,
        cluster: Sequence[int],
        election_timeout: int,
        heartbeat_interval: int,
        timeout_stream: Stream,
        now: int = 0,
    ):
        if node_id not in cluster:
            raise ValueError("node_id must be a cluster member")
        if election_timeout < 1 or heartbeat_interval < 1:
            raise ValueError("timeouts must be positive")
        self.node_id = node_id
        self.cluster = tuple(cluster)
        self.peers = tuple(p for p in cluster if p != node_id)
        self.n = len(self.cluster)
        self.quorum = quorum_threshold(self.n)

        self.current_term = 0
        self.voted_for: int | None = None
        self.log: list[LogEntry] = []
        self.commit_index = 0
        self.role = Role.FOLLOWER
        self.leader_id: int | None = None
        self.votes: set[int] = set()
        self.next_index: dict[int, int] = {}
        self.match_index: dict[int, int] = {}

        self.election_timeout = election_timeout
        self.heartbeat_interval = heartbeat_interval
        self._timeouts = timeout_stream
        self.election_deadline = now + self._draw_timeout()
        self.heartbeat_deadline = 0

    # -- timing ---------------------------------------------------------

    def _draw_timeout(self) -> int:
        # uniform in [T, 2T)
        return self.election_timeout + self._timeouts.next_below(self.election_timeout)

    def next_deadline(self) -> int:
        if self.role is Role.LEADER:
            return self.heartbeat_deadline
        return self.election_deadline

    def tick(self, now: int) -> Outgoing:
        if self.role is Role.LEADER:
            if now >= self.heartbeat_deadline:
                self.heartbeat_deadline = now + self.heartbeat_interval
                return [(p, self._make_append(p, heartbeat=True)) for p in self.peers]
            return []
        if now >= self.election_deadline:
            return self.handle_election_timeout(now)
        return []

    # -- log helpers ------------------------------------------------------

    def last_log_index(self) -> int:
        return len(self.log)

    def last_log_term(self) -> int:
        return self.log[-1].term if self.log else 0

    def _term_at(self, index: int) -> int:
        return self.log[index - 1].term if index >= 1 else 0

    def _step_down(self, term: int) -> None:
        self.current_term = term
        self.role = Role.FOLLOWER
        self.voted_for = None
        self.votes = set()
        self.leader_id = None

    # -- elections --------------------------------------------------------

    def handle_election_timeout(self, now: int) -> Outgoing:
        if self.role is Role.LEADER:
            return []
        self.current_term += 1
        self.role = Role.CANDIDATE
        self.voted_for = self.node_id
        self.votes = {self.node_id}
        self.leader_id = None
        self.election_deadline = now + self._draw_timeout()
        request = VoteRequest(
            term=self.current_term,
            candidate_id=self.node_id,
            last_log_index=self.last_log_index(),
            last_log_term=self.last_log_term(),
        )
        out: Outgoing = [(p, request) for p in self.peers]
        # single-node cluster wins immediately
        out.extend(self._maybe_win(now))
        return out

    def handle_vote_request(self, src: int, msg: VoteRequest, now: int) -> Outgoing:
        if msg.term > self.current_term:
            self._step_down(msg.term)
        granted = False
        if msg.term == self.current_term and self.voted_for in (None, msg.candidate_id):
            up_to_date = (msg.last_log_term, msg.last_log_index) >= (
                self.last_log_term(),
                self.last_log_index(),
            )
            if up_to_date:
                granted = True
                self.voted_for = msg.candidate_id
                self.election_deadline = now + self._draw_timeout()
        return [(src, VoteReply(self.current_term, granted))]

    def handle_vote_reply(self, src: int, msg: VoteReply, now: int) -> Outgoing:
        if msg.term > self.current_term:
            self._step_down(msg.term)
            return []
        if self.role is not Role.CANDIDATE or msg.term < self.current_term:
            return []
        if msg.granted:
            self.votes.add(src)
            return self._maybe_win(now)
        return []

    def _maybe_win(self, now: int) -> Outgoing:
        if self.role is Role.CANDIDATE and len(self.votes) >= self.quorum:
            self.role = Role.LEADER
            self.leader_id = self.node_id
            self.next_index = {p: self.last_log_index() + 1 for p in self.peers}
            self.match_index = {p: 0 for p in self.peers}
            self.heartbeat_deadline = now + self.heartbeat_interval
            self._advance_commit()
            return [(p, self._make_append(p, heartbeat=True)) for p in self.peers]
        return []

    # -- replication --------------------------------------------------------

    def client_submit(self, command: bytes, now: int) -> Outgoing:
        if self.role is not Role.LEADER:
            raise NotLeader(f"node {self.node_id} is {self.role.value}")
        entry = LogEntry(self.current_term, self.last_log_index() + 1, command)
        self.log.append(entry)
        out = [(p, self._make_append(p)) for p in self.peers]
        self.heartbeat_deadline = now + self.heartbeat_interval
        self._advance_commit()
        return out

    def _make_append(self, peer: int, heartbeat: bool = False) -> AppendEntries:
        prev = self.next_index[peer] - 1
        entries = () if heartbeat else tuple(self.log[prev:])
        return AppendEntries(
            term=self.current_term,
            leader_id=self.node_id,
            prev_log_index=prev,
            prev_log_term=self._term_at(prev),
            entries=entries,
            leader_commit=self.commit_index,
        )

    def handle_append_entries(self, src: int, msg: AppendEntries, now: int) -> Outgoing:
        if msg.term < self.current_term:
            return [(src, AppendReply(self.current_term, False, 0))]
        if msg.term > self.current_term or self.role is not Role.FOLLOWER:
            self._step_down(msg.term)
        self.leader_id = msg.leader_id
        self.election_deadline = now + self._draw_timeout()

        if msg.prev_log_index > 0 and (
            msg.prev_log_index > self.last_log_index()
            or self._term_at(msg.prev_log_index) != msg.prev_log_term
        ):
            return [(src, AppendReply(self.current_term, False, 0))]

        index = msg.prev_log_index
        for entry in msg.entries:
            index += 1
            if index <= self.last_log_index():
                if self.log[index - 1].term != entry.term:
                    del self.log[index - 1 :]
                    self.log.append(entry)
            else:
                self.log.append(entry)
        last_new = msg.prev_log_index + len(msg.entries)
        if msg.leader_commit > self.commit_index:
            self.commit_index = max(self.commit_index, min(msg.leader_commit, last_new))
        return [(src, AppendReply(self.current_term, True, last_new))]

    def handle_append_reply(self, src: int, msg: AppendReply, now: int) -> Outgoing:
        if msg.term > self.current_term:
            self._step_down(msg.term)
            return []
        if self.role is not Role.LEADER or msg.term < self.current_term:
            return []
        if msg.success:
            if msg.match_index > self.match_index[src]:
                self.match_index[src] = msg.match_index
            self.next_index[src] = max(self.next_index[src], self.match_index[src] + 1)
            self._advance_commit()
            return []
        self.next_index[src] = max(1, self.next_index[src] - 1)
        return [(src, self._make_append(src))]

    def _advance_commit(self) -> None:
        for index in range(self.last_log_index(), self.commit_index, -1):
            if self._term_at(index) != self.current_term:
                break
            acks = 1 + sum(1 for p in self.peers if self.match_index[p] >= index)
            if acks >= self.quorum:
                self.commit_index = index
                break

    # -- dispatch -------------------------------------------------------------

    def handle_message(self, src: int, msg: RaftMessage, now: int) -> Outgoing:
        if isinstance(msg, VoteRequest):
            return self.handle_vote_request(src, msg, now)
        if isinstance(msg, VoteReply):
            return self.handle_vote_reply(src, msg, now)
        if isinstance(msg, AppendEntries):
            return self.handle_append_entries(src, msg, now)
        if isinstance(msg, AppendReply):
            return self.handle_append_reply(src, msg, now)
        raise TypeError(f"not a raft message: {msg!r}")
