"""Per-node message validation: stateless checks, the stateful sortition
check, the pending buffer for messages that cannot be decided yet, the
duplicate caches, sleep-simulated verification costs, and peer scoring.

Each node runs a single validator process: messages are checked one at a
time in arrival order, and every check charges its configured cost on the
simulation clock before the verdict lands.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import sortition
from .core import BLOCK_PROPOSAL, CREDENTIAL, VOTE, KeyRegistry, Message, \
    ROLE_PROPOSER, sim_verify

# Verdicts
ACCEPT = 0
REJECT = 1
DEFER = 2

# Reject reasons
R_STRUCTURE = "bad-structure"
R_AUTH = "bad-auth"
R_DUPLICATE = "duplicate"
R_BAD_PROOF = "bad-proof"
R_BANNED = "banned-peer"

# validation stages
_S_STATELESS = 0
_S_PROOF = 1
_S_BLOCK = 2


@dataclass
class ValidationConfig:
    """Simulated CPU costs (milliseconds) and misbehaviour policy."""

    structure_ms: float = 0.01
    sig_verify_ms: float = 2.8
    hash_ms_per_mb: float = 10.0
    block_verify_ms_per_mb: float = 2.0
    tx_verify_ms: float = 0.9
    ban_threshold: int = 1
    pending_cap_bytes: int = 2048 * 1000 * 1000

    def stateless_cost(self, byte_size: int) -> float:
        return (self.structure_ms + self.sig_verify_ms
                + self.hash_ms_per_mb * byte_size / 1e6) / 1e3

    def proof_cost(self) -> float:
        return self.sig_verify_ms / 1e3

    def block_cost(self, byte_size: int, uncached_stubs: int) -> float:
        return (self.block_verify_ms_per_mb * byte_size / 1e6
                + self.tx_verify_ms * uncached_stubs) / 1e3


@dataclass
class PeerScore:
    peer: int
    undecided_bytes: int = 0
    invalid_count: int = 0
    banned: bool = False


@dataclass
class PendingEntry:
    msg: Message
    arrived: float
    peer: int


@dataclass
class PendingBuffer:
    """Arrival-ordered store for messages that cannot be fully validated
    yet; capped by bytes with drop-newest eviction."""

    cap: int
    entries: list[PendingEntry] = field(default_factory=list)
    byte_total: int = 0
    evictions: int = 0

    def add(self, entry: PendingEntry) -> bool:
        if self.byte_total + entry.msg.byte_size > self.cap:
            self.evictions += 1
            return False
        self.entries.append(entry)
        self.byte_total += entry.msg.byte_size
        return True

    def take_claiming(self, up_to_round: int) -> list[PendingEntry]:
        """Remove and return, in arrival order, entries whose claimed
        round is now checkable."""
        ready, rest = [], []
        for e in self.entries:
            (ready if e.msg.round <= up_to_round else rest).append(e)
        self.entries = rest
        self.byte_total = sum(e.msg.byte_size for e in rest)
        return ready

    def purge_peer(self, peer: int) -> list[PendingEntry]:
        gone = [e for e in self.entries if e.peer == peer]
        self.entries = [e for e in self.entries if e.peer != peer]
        self.byte_total = sum(e.msg.byte_size for e in self.entries)
        return gone


class Validator:
    """Sequential validation pipeline of one node.

    The owning node wires in callbacks:
      on_accept(msg, votes)        message fully validated
      on_reject(msg, peer, reason) terminal reject
      on_defer(msg, peer)          stored as undecidable
      on_ban(peer)                 peer crossed the misbehaviour threshold
      seed_for(round) -> Seed|None stateful lookup for the proof check
      p_for_role(role) -> float    sortition probability per role
      schedule(delay)              push a validation-done event
    """

    def __init__(self, node: int, cfg: ValidationConfig,
                 registry: KeyRegistry):
        self.node = node
        self.cfg = cfg
        self.registry = registry
        self.pending = PendingBuffer(cfg.pending_cap_bytes)
        self.peers: dict[int, PeerScore] = {}
        self.queue: deque = deque()
        self.busy = False
        self.current = None
        self._current_votes = 0
        self.time_charged = 0.0
        self.seen_mids: dict[int, int] = {}          # mid -> claimed round
        self.proposal_keys: dict[int, set] = {}      # round -> {sender}
        self.vote_keys: dict[tuple, set] = {}        # (round, step) -> {sender}
        self.tx_cache: dict[int, set] = {}           # round -> {stub}
        # wired by the node shell
        self.on_accept = None
        self.on_reject = None
        self.on_defer = None
        self.on_ban = None
        self.seed_for = None
        self.p_for_role = None
        self.schedule = None

    # -- queue mechanics -------------------------------------------------

    def score(self, peer: int) -> PeerScore:
        sc = self.peers.get(peer)
        if sc is None:
            sc = PeerScore(peer)
            self.peers[peer] = sc
        return sc

    def submit(self, msg: Message, peer: int, now: float,
               drained: bool = False) -> None:
        """Queue a live (or re-queued pending) message for validation."""
        sc = self.peers.get(peer)
        if sc is not None and sc.banned:
            self.on_reject(msg, peer, R_BANNED)
            return
        stage = _S_PROOF if drained else _S_STATELESS
        self.queue.append((msg, peer, stage))
        if not self.busy:
            self._begin_next()

    def _begin_next(self) -> None:
        while self.queue:
            msg, peer, stage = self.queue.popleft()
            sc = self.peers.get(peer)
            if sc is not None and sc.banned:
                self.on_reject(msg, peer, R_BANNED)
                continue
            self.busy = True
            self.current = (msg, peer, stage)
            self._charge(self._stage_cost(msg, stage))
            return
        self.busy = False
        self.current = None

    def _stage_cost(self, msg: Message, stage: int) -> float:
        if stage == _S_STATELESS:
            return self.cfg.stateless_cost(msg.byte_size)
        if stage == _S_PROOF:
            return self.cfg.proof_cost()
        uncached = self._uncached_stubs(msg)
        return self.cfg.block_cost(msg.block.byte_size, uncached)

    def _charge(self, cost: float) -> None:
        self.time_charged += cost
        self.schedule(cost)

    def _uncached_stubs(self, msg: Message) -> int:
        cache = self.tx_cache.get(msg.round)
        if cache is None:
            return len(msg.block.payset)
        return sum(1 for s in msg.block.payset if s not in cache)

    # -- verdict logic -----------------------------------------------------

    def on_stage_done(self, now: float) -> None:
        """A charged validation stage elapsed; evaluate it."""
        msg, peer, stage = self.current
        if stage == _S_STATELESS:
            result = self._stateless(msg, peer)
            if result is None:
                self.current = (msg, peer, _S_PROOF)
                self._charge(self._stage_cost(msg, _S_PROOF))
                return
        elif stage == _S_PROOF:
            result = self._proof_check(msg, peer, now)
            if result is None:
                self.current = (msg, peer, _S_BLOCK)
                self._charge(self._stage_cost(msg, _S_BLOCK))
                return
        else:
            self._cache_stubs(msg)
            result = (ACCEPT, self._current_votes)
        verdict, detail = result
        if verdict == ACCEPT:
            self.on_accept(msg, detail)
        elif verdict == DEFER:
            entry = PendingEntry(msg, now, peer)
            self.score(peer).undecided_bytes += msg.byte_size
            self.pending.add(entry)
            self.on_defer(msg, peer)
        # rejects were already reported by the stage handlers
        self._begin_next()

    def _stateless(self, msg: Message, peer: int):
        """Structure, envelope authentication, duplicate suppression.
        Returns None to continue into the proof check."""
        if not self._well_formed(msg):
            self.on_reject(msg, peer, R_STRUCTURE)
            return (REJECT, R_STRUCTURE)
        if not sim_verify(msg.auth_sig, msg.sender, msg.body_bytes(),
                          self.registry):
            self._penalize(msg, peer)
            self.on_reject(msg, peer, R_AUTH)
            return (REJECT, R_AUTH)
        if msg.mid_int in self.seen_mids:
            self.on_reject(msg, peer, R_DUPLICATE)
            return (REJECT, R_DUPLICATE)
        if msg.kind == BLOCK_PROPOSAL:
            keys = self.proposal_keys.setdefault(msg.round, set())
        elif msg.kind == VOTE:
            keys = self.vote_keys.setdefault((msg.round, msg.step), set())
        else:
            keys = None
        if keys is not None:
            if msg.sender in keys:
                self.on_reject(msg, peer, R_DUPLICATE)
                return (REJECT, R_DUPLICATE)
            keys.add(msg.sender)
        self.seen_mids[msg.mid_int] = msg.round
        return None

    def _well_formed(self, msg: Message) -> bool:
        if msg.kind == BLOCK_PROPOSAL:
            blk = msg.block
            return blk is not None and blk.round == msg.round \
                and msg.byte_size >= blk.byte_size
        if msg.kind == VOTE:
            return msg.value is not None and len(msg.value) in (1, 32)
        if msg.kind == CREDENTIAL:
            return msg.proof is not None
        return False

    def _proof_check(self, msg: Message, peer: int, now: float):
        """Stateful sortition check; None continues into block checks."""
        seed = self.seed_for(msg.round - 1)
        status, votes = sortition.verify_sortition(
            msg.proof, msg.round, msg.proof.claimed_step, seed,
            self.registry, self.p_for_role(msg.proof.role))
        if status == sortition.UNDECIDABLE:
            return (DEFER, None)
        if status == sortition.INVALID:
            self._penalize(msg, peer)
            self.on_reject(msg, peer, R_BAD_PROOF)
            return (REJECT, R_BAD_PROOF)
        if msg.kind == BLOCK_PROPOSAL and msg.proof.role != ROLE_PROPOSER:
            self._penalize(msg, peer)
            self.on_reject(msg, peer, R_BAD_PROOF)
            return (REJECT, R_BAD_PROOF)
        if msg.kind == BLOCK_PROPOSAL:
            self._current_votes = votes
            return None  # continue into block verification
        return (ACCEPT, votes)

    def _cache_stubs(self, msg: Message) -> None:
        cache = self.tx_cache.setdefault(msg.round, set())
        cache.update(msg.block.payset)

    # -- misbehaviour -----------------------------------------------------

    def _penalize(self, msg: Message, peer: int) -> None:
        sc = self.score(peer)
        sc.invalid_count += 1
        if not sc.banned and sc.invalid_count >= self.cfg.ban_threshold:
            sc.banned = True
            for entry in self.pending.purge_peer(peer):
                self.on_reject(entry.msg, peer, R_BANNED)
            kept = deque()
            for job in self.queue:
                if job[1] == peer:
                    self.on_reject(job[0], peer, R_BANNED)
                else:
                    kept.append(job)
            self.queue = kept
            self.on_ban(peer)

    # -- pending drain ------------------------------------------------------

    def drain_pending(self, new_round: int, now: float) -> int:
        """Re-queue every buffered message that became checkable, in
        arrival order; each re-check consumes proof-verification time."""
        ready = self.pending.take_claiming(new_round)
        for entry in ready:
            sc = self.score(entry.peer)
            sc.undecided_bytes = max(
                0, sc.undecided_bytes - entry.msg.byte_size)
            self.submit(entry.msg, entry.peer, now, drained=True)
        return len(ready)

    def purge_rounds(self, older_than: int) -> None:
        self.seen_mids = {m: r for m, r in self.seen_mids.items()
                          if r >= older_than}
        for r in [r for r in self.proposal_keys if r < older_than]:
            del self.proposal_keys[r]
        for rs in [rs for rs in self.vote_keys if rs[0] < older_than]:
            del self.vote_keys[rs]
        for r in [r for r in self.tx_cache if r < older_than]:
            del self.tx_cache[r]
