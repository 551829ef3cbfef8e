"""Discrete-event network simulation: virtual clock, event queue, peer
topology, per-link FIFO transport with fair-share bandwidth, and gossip.

Transport model: every directed link carries at most one in-flight
transfer at a time (reliable, ordered).  An in-flight transfer runs at
min(sender_up / n_out, receiver_down / n_in), i.e. each node divides its
capacity equally among its concurrent transfers.  Rates are piecewise
constant and recomputed whenever a transfer starts or finishes at either
endpoint; back-to-back transfers on one link reuse the same share, so
bursts of small messages do not disturb the rest of the network.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

from .core import Message

# Event kinds, in deterministic dispatch order for equal timestamps.
EV_TRANSFER_DONE = 0
EV_VALIDATION_DONE = 1
EV_TIMER = 2
EV_ATTACK_TRIGGER = 3


class SimulatorBugError(AssertionError):
    """Internal invariant violation; names the invariant that broke."""


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Peer graph: honest nodes form a random regular graph, every
    malicious node is linked to every attack target."""

    n_honest: int
    n_malicious: int
    adjacency: tuple[tuple[int, ...], ...]
    targets: tuple[int, ...]
    max_connections: int

    @property
    def n_nodes(self) -> int:
        return self.n_honest + self.n_malicious

    def is_malicious(self, node: int) -> bool:
        return node >= self.n_honest

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for a, peers in enumerate(self.adjacency):
            for b in peers:
                if a < b:
                    out.append((a, b))
        return out


def _regular_pairing(n: int, degree: int, rng) -> list[set[int]] | None:
    """One configuration-model attempt at a simple regular graph."""
    stubs = [v for v in range(n) for _ in range(degree)]
    rng.shuffle(stubs)
    adj: list[set[int]] = [set() for _ in range(n)]
    retry = 0
    while stubs:
        a = stubs.pop()
        placed = False
        for i in range(len(stubs)):
            b = stubs[i]
            if b != a and b not in adj[a]:
                stubs.pop(i)
                adj[a].add(b)
                adj[b].add(a)
                placed = True
                break
        if not placed:
            retry += 1
            if retry > 2 * n * degree:
                return None
            stubs.insert(0, a)
    return adj


def _connected(adj: list[set[int]], n: int) -> bool:
    seen = {0}
    frontier = [0]
    while frontier:
        v = frontier.pop()
        for w in adj[v]:
            if w < n and w not in seen:
                seen.add(w)
                frontier.append(w)
    return len(seen) == n


def build_topology(n_honest: int, n_malicious: int, degree: int,
                   attack_targets: tuple[int, ...], rng,
                   max_connections: int | None = None) -> Topology:
    """Random honest graph plus attacker-to-target links; deterministic
    for a given rng state."""
    if n_honest < 2:
        raise TopologyError("need at least 2 honest nodes")
    if degree < 2 or degree >= n_honest:
        raise TopologyError("degree %d unsatisfiable for %d honest nodes"
                            % (degree, n_honest))
    if (n_honest * degree) % 2:
        raise TopologyError("n_honest * degree must be even")
    for t in attack_targets:
        if not 0 <= t < n_honest:
            raise TopologyError("attack target %d is not an honest node" % t)

    adj = None
    for _ in range(64):
        cand = _regular_pairing(n_honest, degree, rng)
        if cand is not None and _connected(cand, n_honest):
            adj = cand
            break
    if adj is None:
        raise TopologyError("could not build a connected %d-regular graph"
                            % degree)

    adj += [set() for _ in range(n_malicious)]
    for m in range(n_honest, n_honest + n_malicious):
        for t in attack_targets:
            adj[m].add(t)
            adj[t].add(m)

    cap = max_connections if max_connections is not None \
        else degree + n_malicious
    for v, peers in enumerate(adj):
        if len(peers) > cap:
            raise TopologyError("node %d exceeds max_connections=%d"
                                % (v, cap))

    return Topology(n_honest, n_malicious,
                    tuple(tuple(sorted(p)) for p in adj),
                    tuple(attack_targets), cap)


class Transfer:
    __slots__ = ("msg", "src", "dst", "remaining", "rate", "t_last", "ver",
                 "done")

    def __init__(self, msg: Message, src: int, dst: int):
        self.msg = msg
        self.src = src
        self.dst = dst
        self.remaining = msg.byte_size * 8.0  # bits
        self.rate = 0.0
        self.t_last = 0.0
        self.ver = 0
        self.done = False


class _Link:
    __slots__ = ("queue", "active")

    def __init__(self):
        self.queue: deque[Message] = deque()
        self.active: Transfer | None = None


def transfer_time(byte_size: int, rate_bps: float) -> float:
    """Idle-network duration of a transfer at the given effective rate."""
    return byte_size * 8.0 / rate_bps


@dataclass
class MsgState:
    """Relay bookkeeping for one circulating message."""

    round: int
    recv_from: dict[int, int] = field(default_factory=dict)  # node -> peer mask
    counted_to: set[int] = field(default_factory=set)        # metrics denominator
    transmissions: int = 0


class Engine:
    """Global event queue plus the transport layer.

    Node behaviour (validation, consensus, the adversary) hangs off the
    dispatch hooks; the engine itself only moves bytes and time.
    """

    def __init__(self, topology: Topology, bandwidth_bps: float,
                 trace: bool = False):
        self.topo = topology
        self.up = bandwidth_bps
        self.down = bandwidth_bps
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.n_in = [0] * topology.n_nodes
        self.n_out = [0] * topology.n_nodes
        # insertion-ordered sets of active transfers per node
        self.in_active: list[dict[Transfer, None]] = \
            [dict() for _ in range(topology.n_nodes)]
        self.out_active: list[dict[Transfer, None]] = \
            [dict() for _ in range(topology.n_nodes)]
        self._links: dict[tuple[int, int], _Link] = {}
        for a, peers in enumerate(topology.adjacency):
            for b in peers:
                self._links[(a, b)] = _Link()
        self.peer_index = [
            {p: i for i, p in enumerate(peers)}
            for peers in topology.adjacency
        ]
        self.msg_state: dict[int, MsgState] = {}
        self.dead_links: set[tuple[int, int]] = set()
        self.trace_enabled = trace
        self.trace: list[tuple] = []
        self.events_processed = 0
        # dispatch hooks, wired by the Simulation
        self.on_delivery = None
        self.on_validation_done = None
        self.on_timer = None
        self.on_attack_trigger = None

    # -- event queue ---------------------------------------------------

    def push(self, at: float, kind: int, payload) -> None:
        if at < self.now - 1e-9:
            raise SimulatorBugError(
                "event causality: event scheduled in the past "
                "(at=%.9f now=%.9f)" % (at, self.now))
        heapq.heappush(self._heap, (at, self._seq, kind, payload))
        self._seq += 1

    def pending(self) -> int:
        return len(self._heap)

    def step(self) -> bool:
        """Dispatch one event; False when the queue is empty."""
        while self._heap:
            at, _, kind, payload = heapq.heappop(self._heap)
            if kind == EV_TRANSFER_DONE:
                transfer, ver = payload
                if transfer.done or transfer.ver != ver:
                    continue  # superseded by a re-rating
                self.now = at
                self._complete(transfer)
            elif kind == EV_VALIDATION_DONE:
                self.now = at
                self.on_validation_done(payload)
            elif kind == EV_TIMER:
                self.now = at
                node, rnd, step_no = payload
                self.on_timer(node, rnd, step_no)
            else:  # EV_ATTACK_TRIGGER
                self.now = at
                self.on_attack_trigger(payload)
            self.events_processed += 1
            return True
        return False

    def run(self, until: float) -> None:
        heap = self._heap
        while heap and heap[0][0] <= until:
            self.step()
        if heap:
            self.now = until

    # -- transport -----------------------------------------------------

    def rate_of(self, t: Transfer) -> float:
        return min(self.up / self.n_out[t.src], self.down / self.n_in[t.dst])

    def send(self, src: int, dst: int, msg: Message) -> bool:
        """Enqueue a message on the src->dst link (FIFO per link).

        Transfers toward a dropped connection are silently discarded;
        returns whether the message was actually enqueued.
        """
        if (src, dst) in self.dead_links:
            return False
        link = self._links.get((src, dst))
        if link is None:
            raise SimulatorBugError("gossip reachability: no link %d->%d"
                                    % (src, dst))
        st = self.msg_state.get(msg.mid_int)
        if st is not None:
            st.transmissions += 1
        if link.active is None:
            self._start(link, msg, src, dst, fresh=True)
        else:
            link.queue.append(msg)
        return True

    def _start(self, link: _Link, msg: Message, src: int, dst: int,
               fresh: bool) -> None:
        t = Transfer(msg, src, dst)
        t.t_last = self.now
        link.active = t
        self.out_active[src][t] = None
        self.in_active[dst][t] = None
        if fresh:
            self.n_out[src] += 1
            self.n_in[dst] += 1
            self._rerate(self.out_active[src], self.in_active[dst])
        else:
            # link stays busy: counts unchanged, inherit the share
            t.rate = self.rate_of(t)
            self._schedule(t)

    def _schedule(self, t: Transfer) -> None:
        t.ver += 1
        dur = t.remaining / t.rate if t.remaining > 0 else 0.0
        self.push(self.now + dur, EV_TRANSFER_DONE, (t, t.ver))

    def _rerate(self, *groups) -> None:
        seen_first = groups[0]
        for group in groups:
            for t in group:
                if group is not seen_first and t in seen_first:
                    continue
                t.remaining -= t.rate * (self.now - t.t_last)
                if t.remaining < 0.0:
                    t.remaining = 0.0
                t.t_last = self.now
                t.rate = self.rate_of(t)
                self._schedule(t)

    def _complete(self, t: Transfer) -> None:
        t.done = True
        src, dst = t.src, t.dst
        link = self._links[(src, dst)]
        del self.out_active[src][t]
        del self.in_active[dst][t]
        if link.queue:
            self._start(link, link.queue.popleft(), src, dst, fresh=False)
        else:
            link.active = None
            self.n_out[src] -= 1
            self.n_in[dst] -= 1
            self._rerate(self.out_active[src], self.in_active[dst])
        if self.trace_enabled:
            self.trace.append((round(self.now, 9), "deliver", src, dst,
                               t.msg.mid_int))
        self.on_delivery(t.msg, src, dst)

    def _drop_link_queue(self, src: int, dst: int) -> int:
        link = self._links.get((src, dst))
        if link is None:
            return 0
        dropped = len(link.queue)
        link.queue.clear()
        t = link.active
        if t is not None:
            dropped += 1
            t.done = True
            del self.out_active[src][t]
            del self.in_active[dst][t]
            link.active = None
            self.n_out[src] -= 1
            self.n_in[dst] -= 1
            self._rerate(self.out_active[src], self.in_active[dst])
        return dropped

    def drop_connection(self, a: int, b: int) -> int:
        """Tear down both directions of a peering; in-flight and queued
        transfers are aborted undelivered."""
        dropped = self._drop_link_queue(a, b) + self._drop_link_queue(b, a)
        self.dead_links.add((a, b))
        self.dead_links.add((b, a))
        return dropped

    def check_bandwidth(self) -> None:
        """Invariant probe: per-node aggregate rates within capacity."""
        for v in range(self.topo.n_nodes):
            inflow = sum(t.rate for t in self.in_active[v])
            outflow = sum(t.rate for t in self.out_active[v])
            if inflow > self.down * (1 + 1e-9) or \
                    outflow > self.up * (1 + 1e-9):
                raise SimulatorBugError(
                    "bandwidth conservation: node %d inflow=%.1f "
                    "outflow=%.1f" % (v, inflow, outflow))

    # -- gossip ----------------------------------------------------------

    def track_message(self, msg: Message) -> MsgState:
        st = self.msg_state.get(msg.mid_int)
        if st is None:
            st = MsgState(msg.round)
            self.msg_state[msg.mid_int] = st
        return st

    def note_received_from(self, node: int, msg: Message, peer: int) -> None:
        st = self.msg_state.get(msg.mid_int)
        if st is None:
            st = self.track_message(msg)
        idx = self.peer_index[node].get(peer)
        if idx is not None:
            st.recv_from[node] = st.recv_from.get(node, 0) | (1 << idx)

    def gossip(self, node: int, msg: Message, author: bool = False):
        """Relay a validated (or self-authored) message to every peer it
        was not received from; never sends twice on one link."""
        st = self.track_message(msg)
        mask = 0 if author else st.recv_from.pop(node, 0)
        sent_to = []
        for i, q in enumerate(self.topo.adjacency[node]):
            if mask & (1 << i):
                continue
            if self.send(node, q, msg):
                sent_to.append(q)
        return sent_to

    def purge_messages(self, older_than_round: int) -> None:
        stale = [mid for mid, st in self.msg_state.items()
                 if st.round < older_than_round]
        for mid in stale:
            del self.msg_state[mid]
