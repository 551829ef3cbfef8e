"""Coordinated flooding attacker: a key farm signing undecidable block
proposals one round ahead, triggered the instant a target is seen to have
entered a new round, fired from every malicious node simultaneously.

Payloads pass every stateless check by construction (genuine envelope
signatures, one proposal per key) but carry fabricated sortition proofs
over a seed no honest node can know yet, so the target can only buffer
them until its next round, when they all fail verification.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .core import (
    BLOCK_PROPOSAL,
    Block,
    CREDENTIAL,
    KeyPair,
    Message,
    ROLE_PROPOSER,
    hash256,
    make_proposal,
    stub_capacity,
)
from .netsim import EV_ATTACK_TRIGGER
from .sortition import forged_proof

TRIGGER_CREDENTIAL = "credential"
TRIGGER_PROPOSAL = "proposal"


@dataclass
class AttackConfig:
    enabled: bool = False
    n_malicious: int = 0
    keys_per_node: int = 0
    payload_block_bytes: int = 1_000_000
    n_targets: int = 1
    trigger: str = TRIGGER_CREDENTIAL

    def __post_init__(self):
        if self.enabled:
            if self.n_malicious < 1 or self.keys_per_node < 1:
                raise ValueError("attack needs nodes and keys")
            if self.keys_per_node > 70:
                raise ValueError("at most 70 proposals per node per round")
            if self.trigger not in (TRIGGER_CREDENTIAL, TRIGGER_PROPOSAL):
                raise ValueError("unknown trigger %r" % self.trigger)

    @property
    def offered_bytes(self) -> int:
        return self.n_malicious * self.keys_per_node \
            * self.payload_block_bytes


@dataclass
class AttackPayload:
    round: int
    proposals: list[Message] = field(default_factory=list)


class Adversary:
    """Single coordinating entity behind all malicious nodes."""

    def __init__(self, cfg: AttackConfig, keys: list[list[KeyPair]],
                 node_ids: list[int], targets: list[int], engine,
                 stub_bytes: int, proposal_overhead: int):
        self.cfg = cfg
        self.keys = keys              # keys[i] belong to node_ids[i]
        self.node_ids = node_ids
        self.targets = set(targets)
        self.engine = engine
        self.stub_bytes = stub_bytes
        self.proposal_overhead = proposal_overhead
        self.fired: set[tuple[int, int]] = set()
        self._payloads: dict[tuple[int, int], AttackPayload] = {}
        self.floods_sent = 0

    # -- payload construction ------------------------------------------------

    def build_share(self, attacker_index: int, observed_round: int
                    ) -> AttackPayload:
        """One malicious node's proposals claiming the round after the
        observed one; needs nothing but the adversary's own keys."""
        cached = self._payloads.get((attacker_index, observed_round))
        if cached is not None:
            return cached
        claimed = observed_round + 1
        size = self.cfg.payload_block_bytes
        n_stubs = stub_capacity(size, self.stub_bytes)
        payload = AttackPayload(claimed)
        for key in self.keys[attacker_index]:
            junk = hash256(key.public_id + struct.pack(">q", claimed))
            stub0 = int.from_bytes(junk[:8], "big") >> 1
            block = Block(claimed,
                          tuple((stub0 + i) & ((1 << 63) - 1)
                                for i in range(n_stubs)),
                          junk, junk, False, size)
            proof = forged_proof(key.public_id, claimed, 1, ROLE_PROPOSER,
                                 junk)
            payload.proposals.append(
                make_proposal(key, block, proof, self.proposal_overhead))
        self._payloads[(attacker_index, observed_round)] = payload
        return payload

    # -- trigger and flood -----------------------------------------------------

    def _trigger_kind(self) -> int:
        return CREDENTIAL if self.cfg.trigger == TRIGGER_CREDENTIAL \
            else BLOCK_PROPOSAL

    def observe(self, malicious_node: int, msg: Message, from_peer: int,
                now: float) -> None:
        """Passive participation: watch traffic relayed by targets and
        fire once per (target, round)."""
        if from_peer not in self.targets:
            return
        if msg.kind != self._trigger_kind():
            return
        key = (from_peer, msg.round)
        if key in self.fired:
            return
        self.fired.add(key)
        self.engine.push(now, EV_ATTACK_TRIGGER, (from_peer, msg.round))

    def fire(self, target: int, observed_round: int) -> None:
        """All malicious nodes flood the target at the same sim-instant."""
        for i, node in enumerate(self.node_ids):
            share = self.build_share(i, observed_round)
            for bp in share.proposals:
                if self.engine.send(node, target, bp):
                    self.floods_sent += 1

    def key_ids(self) -> set[bytes]:
        return {k.public_id for keys in self.keys for k in keys}
