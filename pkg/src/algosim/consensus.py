"""Per-node round state machine: block proposal, the proposal-receiving
window, two reduction steps, binary agreement with step timeouts, and
finalization with the chained seed.

Step numbering: 0 is the proposal window, 1-2 the reduction steps, 3 and
up the binary agreement steps.  A round force-ends on the default block
once `max_steps` post-window steps have elapsed without a decision, so a
fully jammed round lasts exactly window + max_steps * step_timeout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import sortition
from .core import (
    Block,
    KeyPair,
    KeyRegistry,
    Message,
    ROLE_COMMITTEE,
    ROLE_PROPOSER,
    Seed,
    hash256,
    make_block,
    make_credential,
    make_empty_block,
    make_proposal,
    make_vote,
    next_seed,
    stub_capacity,
)

BIT_ACCEPT = b"\x00"
BIT_DEFAULT = b"\x01"


@dataclass
class ConsensusConfig:
    proposal_window: float = 150.0
    step_timeout: float = 60.0
    threshold_fraction: float = 0.685
    committee_size: float = 2000.0
    proposer_target: float = 26.0
    max_steps: int = 4
    max_block_size: int = 1_000_000
    lookback: int = 2
    stub_bytes: int = 250
    vote_bytes: int = 300
    credential_bytes: int = 200
    proposal_overhead_bytes: int = 300

    def __post_init__(self):
        if self.proposal_window <= 0 or self.step_timeout <= 0:
            raise ValueError("window and step timeout must be positive")
        if not 0.5 < self.threshold_fraction <= 1.0:
            raise ValueError("threshold fraction must lie in (0.5, 1]")

    @property
    def vote_threshold(self) -> float:
        return self.threshold_fraction * self.committee_size


@dataclass
class RoundState:
    round: int
    started_at: float
    window_close: float
    empty_block: Block
    empty_hash: bytes
    step: int = 0
    phase_deadline: float = 0.0
    best: tuple | None = None          # (priority, sender, hash, block)
    tallies: dict = field(default_factory=dict)   # step -> {value: weight}
    voters: dict = field(default_factory=dict)    # step -> {sender}
    reduction_output: bytes | None = None
    decided: Block | None = None
    step_timeouts: int = 0


class ConsensusNode:
    """Protocol process of one honest node.

    Shell callbacks:
      broadcast(msg)                      gossip a self-authored message
      schedule_timer(at, round, step)
      on_step_end(round, step, timed_out)
      on_decided(block, duration, timeouts)
    """

    def __init__(self, node: int, key: KeyPair, cfg: ConsensusConfig,
                 registry: KeyRegistry, genesis_seed: Seed,
                 genesis_hash: bytes, total_stake: int):
        self.node = node
        self.key = key
        self.cfg = cfg
        self.registry = registry
        self.p_proposer = cfg.proposer_target / total_stake
        self.p_committee = cfg.committee_size / total_stake
        self.seeds: dict[int, Seed] = {0: genesis_seed}
        self.prev_hash = genesis_hash
        self.block_store: dict[bytes, Block] = {}
        self.chain: list[tuple[int, bytes, bool]] = []
        self.state: RoundState | None = None
        self.now = lambda: 0.0
        self.broadcast = None
        self.schedule_timer = None
        self.on_step_end = None
        self.on_decided = None

    # -- round lifecycle -------------------------------------------------

    def seed_for(self, rnd: int) -> Seed | None:
        return self.seeds.get(rnd)

    def p_for_role(self, role: int) -> float:
        return self.p_proposer if role == ROLE_PROPOSER else self.p_committee

    def current_round(self) -> int:
        return self.state.round if self.state is not None else 0

    def begin_round(self, rnd: int, now: float) -> None:
        prev_seed = self.seeds[rnd - 1]
        empty = make_empty_block(rnd, prev_seed, self.prev_hash)
        self.state = RoundState(rnd, now, now + self.cfg.proposal_window,
                                empty, empty.hash())
        self.state.phase_deadline = self.state.window_close
        self.block_store = {}
        self.schedule_timer(self.state.window_close, rnd, 0)
        self._try_propose(rnd, prev_seed)

    def _stub_ids(self, rnd: int, count: int) -> tuple[int, ...]:
        # Per-proposer pending transactions; opaque, fixed-size stubs.
        base = hash256(self.key.public_id + struct.pack(">q", rnd))
        prefix = int.from_bytes(base[:8], "big")
        return tuple((prefix + i) & ((1 << 63) - 1) for i in range(count))

    def _try_propose(self, rnd: int, prev_seed: Seed) -> None:
        if not self.key.eligible(rnd, self.cfg.lookback) or \
                self.key.stake <= 0:
            return
        outcome, proof = sortition.draw(
            self.key, rnd, 1, prev_seed, ROLE_PROPOSER, self.p_proposer,
            self.cfg.lookback)
        if outcome.votes < 1:
            return
        n_stubs = stub_capacity(self.cfg.max_block_size, self.cfg.stub_bytes)
        block = make_block(rnd, self.key, prev_seed, self.prev_hash,
                           self._stub_ids(rnd, n_stubs),
                           self.cfg.max_block_size)
        bp = make_proposal(self.key, block, proof,
                           self.cfg.proposal_overhead_bytes)
        cm = make_credential(self.key, rnd, proof, self.cfg.credential_bytes)
        # own proposal counts as received by itself at time zero
        self._consider_proposal(outcome.priority, self.key.public_id, block)
        self.broadcast(cm)
        self.broadcast(bp)

    # -- message handling --------------------------------------------------

    def _consider_proposal(self, priority: bytes, sender: bytes,
                           block: Block) -> None:
        h = block.hash()
        self.block_store[h] = block
        key = (priority, sender)
        if self.state.best is None or key < (self.state.best[0],
                                             self.state.best[1]):
            self.state.best = (priority, sender, h, block)

    def on_proposal(self, msg: Message, votes: int, now: float) -> None:
        st = self.state
        if st is None or msg.round != st.round or st.decided is not None:
            return
        if now >= st.window_close:
            return  # too late to influence this round; block not retained
        priority = sortition.proposer_priority(msg.proof, votes)
        self._consider_proposal(priority, msg.sender, msg.block)

    def on_vote(self, msg: Message, votes: int, now: float) -> None:
        st = self.state
        if st is None or msg.round != st.round or st.decided is not None:
            return
        self._tally(msg.step, msg.sender, msg.value, votes, now)

    def _tally(self, step: int, sender: bytes, value: bytes, votes: int,
               now: float) -> None:
        st = self.state
        voters = st.voters.setdefault(step, set())
        if sender in voters:
            return
        voters.add(sender)
        tally = st.tallies.setdefault(step, {})
        weight = tally.get(value, 0) + votes
        tally[value] = weight
        if step == st.step and weight >= self.cfg.vote_threshold:
            self._on_threshold(step, value, now)

    # -- step machinery ----------------------------------------------------

    def _coin(self, rnd: int, step: int) -> bytes:
        prev = self.seeds[rnd - 1]
        h = hash256(prev.value + struct.pack(">qq", rnd, step))
        return BIT_DEFAULT if h[-1] & 1 else BIT_ACCEPT

    def _threshold_value(self, step: int) -> bytes | None:
        tally = self.state.tallies.get(step)
        if not tally:
            return None
        thresh = self.cfg.vote_threshold
        winner = None
        for value, weight in tally.items():
            if weight >= thresh and (winner is None or value < winner):
                winner = value
        return winner

    def _enter_step(self, step: int, now: float) -> None:
        st = self.state
        if step > self.cfg.max_steps:
            self._finalize(st.empty_block, now)
            return
        st.step = step
        st.phase_deadline = now + self.cfg.step_timeout
        self.schedule_timer(st.phase_deadline, st.round, step)
        vote_value = self._own_vote_value(step)
        self._cast_vote(step, vote_value, now)
        if st.decided is None:
            # drained or early traffic may already satisfy this step
            winner = self._threshold_value(step)
            if winner is not None:
                self._on_threshold(step, winner, now)

    def _own_vote_value(self, step: int) -> bytes:
        st = self.state
        if step == 1:
            return st.best[2] if st.best is not None else st.empty_hash
        if step == 2:
            winner = self._threshold_value(1)
            return winner if winner is not None else st.empty_hash
        if step == 3:
            winner = self._threshold_value(2)
            st.reduction_output = winner if winner is not None \
                else st.empty_hash
            return BIT_ACCEPT if winner is not None else BIT_DEFAULT
        prev = self.state.tallies.get(step - 1, {})
        thresh = self.cfg.vote_threshold
        if prev.get(BIT_ACCEPT, 0) >= thresh:
            return BIT_ACCEPT
        if prev.get(BIT_DEFAULT, 0) >= thresh:
            return BIT_DEFAULT
        return self._coin(st.round, step)

    def _cast_vote(self, step: int, value: bytes, now: float) -> None:
        st = self.state
        if self.key.stake <= 0 or \
                not self.key.eligible(st.round, self.cfg.lookback):
            return
        outcome, proof = sortition.draw(
            self.key, st.round, step, self.seeds[st.round - 1],
            ROLE_COMMITTEE, self.p_committee, self.cfg.lookback)
        if outcome.votes < 1:
            return
        vm = make_vote(self.key, st.round, step, value, proof,
                       self.cfg.vote_bytes)
        self.broadcast(vm)
        self._tally(step, self.key.public_id, value, outcome.votes, now)

    def _on_threshold(self, step: int, value: bytes, now: float) -> None:
        st = self.state
        if st.decided is not None or step != st.step:
            return
        self.on_step_end(st.round, step, False)
        if step <= 2:
            self._enter_step(step + 1, now)
        else:
            self._finalize_bit(value, now)

    def on_timer(self, rnd: int, step: int, now: float) -> None:
        st = self.state
        if st is None or st.round != rnd or st.decided is not None \
                or st.step != step:
            return
        if step == 0:
            self.on_step_end(rnd, 0, False)
            self._enter_step(1, now)
            return
        st.step_timeouts += 1
        self.on_step_end(rnd, step, True)
        if not self._scan_past_agreements(now):
            self._enter_step(step + 1, now)

    def _scan_past_agreements(self, now: float) -> bool:
        """At a step boundary, act on any agreement-step tally that has
        meanwhile crossed the threshold."""
        st = self.state
        thresh = self.cfg.vote_threshold
        for s in range(3, st.step + 1):
            tally = st.tallies.get(s)
            if not tally:
                continue
            for bit in (BIT_ACCEPT, BIT_DEFAULT):
                if tally.get(bit, 0) >= thresh:
                    self._finalize_bit(bit, now)
                    return True
        return False

    # -- decisions -----------------------------------------------------------

    def _finalize_bit(self, bit: bytes, now: float) -> None:
        st = self.state
        if bit == BIT_ACCEPT:
            h = st.reduction_output
            if h is None or h == st.empty_hash:
                block = st.empty_block
            else:
                block = self.block_store.get(h)
                if block is None:
                    # agreed on a block this node never obtained in time
                    block = st.empty_block
        else:
            block = st.empty_block
        self._finalize(block, now)

    def _finalize(self, block: Block, now: float) -> None:
        st = self.state
        st.decided = block
        rnd = st.round
        self.seeds[rnd] = next_seed(block, self.seeds[rnd - 1])
        self.prev_hash = block.hash()
        self.chain.append((rnd, self.prev_hash, block.is_empty))
        self.on_decided(block, now - st.started_at, st.step_timeouts)
