"""Wires one simulation instance together: honest nodes (network shell,
validator process, protocol process), malicious observers, the global
event loop, and metric collection.

Everything is deterministic for a given scenario config and seed; a grid
of scenarios can run as fully isolated instances in parallel processes.
"""

from __future__ import annotations

import struct

from .adversary import Adversary, AttackConfig
from .consensus import ConsensusConfig, ConsensusNode
from .core import (
    BLOCK_PROPOSAL,
    Block,
    CREDENTIAL,
    KeyPair,
    KeyRegistry,
    Message,
    Seed,
    VOTE,
    hash256,
)
from .metrics import MetricsCollector
from .netsim import EV_TIMER, EV_VALIDATION_DONE, Engine, build_topology
from .validation import ValidationConfig, Validator

import random


def derive_seed(master: int, label: str) -> int:
    return int.from_bytes(
        hash256(struct.pack(">q", master) + label.encode())[:8], "big")


def _make_key(master: int, label: str, index: int, stake: int,
              created_round: int) -> KeyPair:
    base = hash256(b"key:%s:%d:%d" % (label.encode(), index, master))
    return KeyPair(base, hash256(base + b"secret"), stake, created_round)


class HonestNode:
    """Network interface + validator process + protocol process."""

    def __init__(self, node_id: int, key: KeyPair, sim: "Simulation"):
        self.id = node_id
        self.sim = sim
        self.engine = sim.engine
        self.metrics = sim.metrics
        self.rx_seen: dict[int, int] = {}
        cons_cfg = sim.consensus_cfg
        self.consensus = ConsensusNode(
            node_id, key, cons_cfg, sim.registry, sim.genesis_seed,
            sim.genesis_hash, sim.total_stake)
        self.validator = Validator(node_id, sim.validation_cfg, sim.registry)
        c, v = self.consensus, self.validator
        c.now = lambda: self.engine.now
        c.broadcast = self._broadcast
        c.schedule_timer = self._schedule_timer
        c.on_step_end = self._on_step_end
        c.on_decided = self._on_decided
        v.on_accept = self._on_accept
        v.on_reject = self._on_reject
        v.on_defer = self._on_defer
        v.on_ban = self._on_ban
        v.seed_for = c.seed_for
        v.p_for_role = c.p_for_role
        v.schedule = self._schedule_validation

    # -- network interface ---------------------------------------------------

    def on_delivery(self, msg: Message, from_peer: int) -> None:
        now = self.engine.now
        mid = msg.mid_int
        if mid not in self.rx_seen:
            self.rx_seen[mid] = msg.round
            if msg.sender not in self.sim.adversary_key_ids:
                self.metrics.on_received(self.id, msg, now)
        self.engine.note_received_from(self.id, msg, from_peer)
        self.validator.submit(msg, from_peer, now)

    def _gossip_out(self, msg: Message, author: bool) -> None:
        legit = msg.sender not in self.sim.adversary_key_ids
        sent_to = self.engine.gossip(self.id, msg, author=author)
        if not legit:
            return
        st = self.engine.msg_state[msg.mid_int]
        n_honest = self.sim.topo.n_honest
        for q in sent_to:
            if q < n_honest and q not in st.counted_to:
                st.counted_to.add(q)
                self.metrics.on_sent_to(q, msg)

    def _broadcast(self, msg: Message) -> None:
        # the author never re-validates or re-counts its own message
        self.rx_seen[msg.mid_int] = msg.round
        self.validator.seen_mids[msg.mid_int] = msg.round
        self.engine.track_message(msg).round = msg.round
        self._gossip_out(msg, author=True)

    # -- validator wiring -----------------------------------------------------

    def _schedule_validation(self, cost: float) -> None:
        self.engine.push(self.engine.now + cost, EV_VALIDATION_DONE, self.id)

    def _on_accept(self, msg: Message, votes: int) -> None:
        now = self.engine.now
        self.metrics.on_validated(self.id, msg, now)
        self._gossip_out(msg, author=False)
        if msg.kind == BLOCK_PROPOSAL:
            self.consensus.on_proposal(msg, votes, now)
        elif msg.kind == VOTE:
            self.consensus.on_vote(msg, votes, now)

    def _on_reject(self, msg: Message, peer: int, reason: str) -> None:
        if msg.sender in self.sim.adversary_key_ids:
            self.metrics.on_adversary_verdict("reject")

    def _on_defer(self, msg: Message, peer: int) -> None:
        if msg.sender in self.sim.adversary_key_ids:
            self.metrics.on_adversary_verdict("defer")

    def _on_ban(self, peer: int) -> None:
        self.metrics.on_ban()
        self.engine.drop_connection(self.id, peer)

    # -- protocol wiring ---------------------------------------------------------

    def _schedule_timer(self, at: float, rnd: int, step: int) -> None:
        self.engine.push(at, EV_TIMER, (self.id, rnd, step))

    def _on_step_end(self, rnd: int, step: int, timed_out: bool) -> None:
        self.metrics.on_step_end(self.id, rnd, step, self.engine.now,
                                 timed_out)

    def _on_decided(self, block: Block, duration: float,
                    timeouts: int) -> None:
        now = self.engine.now
        rnd = self.consensus.state.round
        self.metrics.on_round_decided(self.id, rnd, now, duration, timeouts,
                                      block.is_empty)
        self.consensus.begin_round(rnd + 1, now)
        self.validator.drain_pending(rnd + 1, now)
        self._purge(rnd - 1)
        self.sim.note_round_advance()

    def _purge(self, older_than: int) -> None:
        if older_than < 2:
            return
        self.rx_seen = {m: r for m, r in self.rx_seen.items()
                        if r >= older_than}
        self.validator.purge_rounds(older_than)


class Simulation:
    """One isolated scenario instance."""

    def __init__(self, *, n_honest: int, degree: int, bandwidth_mbps: float,
                 stake_per_node: int, consensus_cfg: ConsensusConfig,
                 validation_cfg: ValidationConfig, attack_cfg: AttackConfig,
                 seed: int, max_connections: int | None = None,
                 trace: bool = False):
        self.seed = seed
        self.consensus_cfg = consensus_cfg
        self.validation_cfg = validation_cfg
        self.attack_cfg = attack_cfg
        self.registry = KeyRegistry()
        lookback = consensus_cfg.lookback

        self.honest_keys = [
            _make_key(seed, "honest", i, stake_per_node, -lookback)
            for i in range(n_honest)]
        for k in self.honest_keys:
            self.registry.add(k)
        self.total_stake = n_honest * stake_per_node

        n_mal = attack_cfg.n_malicious if attack_cfg.enabled else 0
        mal_keys: list[list[KeyPair]] = []
        for m in range(n_mal):
            farm = [_make_key(seed, "mal:%d" % m, j, 0, -lookback)
                    for j in range(attack_cfg.keys_per_node)]
            for k in farm:
                self.registry.add(k)
            mal_keys.append(farm)

        targets = list(range(attack_cfg.n_targets)) if n_mal else []
        rng = random.Random(derive_seed(seed, "topology"))
        self.topo = build_topology(n_honest, n_mal, degree, tuple(targets),
                                   rng, max_connections)
        self.targets = targets
        self.engine = Engine(self.topo, bandwidth_mbps * 1e6, trace=trace)

        self.adversary = Adversary(
            attack_cfg, mal_keys, list(range(n_honest, n_honest + n_mal)),
            targets, self.engine, consensus_cfg.stub_bytes,
            consensus_cfg.proposal_overhead_bytes) if n_mal else None
        self.adversary_key_ids = self.adversary.key_ids() \
            if self.adversary else set()

        self.metrics = MetricsCollector(n_honest, self.adversary_key_ids)

        entropy = hash256(b"genesis:%d" % seed)
        self.genesis_seed = Seed(entropy, 0)
        genesis_block = Block(0, (), b"\x00" * 32, entropy, True, 100)
        self.genesis_hash = genesis_block.hash()

        self.nodes = [HonestNode(i, self.honest_keys[i], self)
                      for i in range(n_honest)]

        eng = self.engine
        eng.on_delivery = self._on_delivery
        eng.on_validation_done = self._on_validation_done
        eng.on_timer = self._on_timer
        eng.on_attack_trigger = self._on_attack_trigger
        self._min_round = 1

    # -- engine dispatch -----------------------------------------------------

    def _on_delivery(self, msg: Message, src: int, dst: int) -> None:
        if dst < self.topo.n_honest:
            self.nodes[dst].on_delivery(msg, src)
        elif self.adversary is not None:
            self.adversary.observe(dst, msg, src, self.engine.now)

    def _on_validation_done(self, node: int) -> None:
        self.nodes[node].validator.on_stage_done(self.engine.now)

    def _on_timer(self, node: int, rnd: int, step: int) -> None:
        self.nodes[node].consensus.on_timer(rnd, step, self.engine.now)

    def _on_attack_trigger(self, payload) -> None:
        target, rnd = payload
        self.adversary.fire(target, rnd)

    def note_round_advance(self) -> None:
        new_min = min(n.consensus.current_round() for n in self.nodes)
        if new_min > self._min_round:
            self._min_round = new_min
            self.engine.purge_messages(new_min - 1)

    # -- running ------------------------------------------------------------------

    def start(self) -> None:
        for node in self.nodes:
            node.consensus.begin_round(1, 0.0)

    def run(self, duration: float) -> None:
        self.start()
        self.engine.run(duration)

    # -- result helpers -------------------------------------------------------

    def honest_ids(self) -> list[int]:
        return list(range(self.topo.n_honest))

    def focus_ids(self) -> list[int]:
        """Attacked nodes when targets exist, else all honest nodes."""
        return self.targets if self.targets else self.honest_ids()

    def fork_rounds(self) -> list[int]:
        """Rounds where two honest nodes finalized different blocks."""
        by_round: dict[int, set[bytes]] = {}
        for node in self.nodes:
            for rnd, block_hash, _ in node.consensus.chain:
                by_round.setdefault(rnd, set()).add(block_hash)
        return sorted(r for r, hashes in by_round.items() if len(hashes) > 1)

    def completed_rounds(self, node: int) -> int:
        return self.metrics.completed.get(node, 0)
