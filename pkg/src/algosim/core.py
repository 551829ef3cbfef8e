"""Protocol data structures and the simulated-cryptography layer.

Signatures are keyed digests rather than real asymmetric crypto: a tag is
deterministically derived from (secret, payload) and verified by
re-derivation.  CPU cost of verification is charged on the simulation
clock by the validation pipeline, not here.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

HASH_BYTES = 32

# Wire-size accounting defaults (bytes).  These are simulation knobs, not
# derived from the canonical encoding; scenario configs may override them.
TX_STUB_BYTES = 250
BLOCK_HEADER_BYTES = 100
CREDENTIAL_BYTES = 200
VOTE_BYTES = 300
PROPOSAL_OVERHEAD_BYTES = 300

# Message kinds
BLOCK_PROPOSAL = 1
VOTE = 2
CREDENTIAL = 3

# Sortition roles
ROLE_PROPOSER = 0
ROLE_COMMITTEE = 1


def hash256(payload: bytes) -> bytes:
    """256-bit digest of an arbitrary byte string."""
    return hashlib.sha256(payload).digest()


@dataclass(frozen=True)
class KeyPair:
    """Identity of a participant: opaque id, signing secret, and stake."""

    public_id: bytes
    secret: bytes
    stake: int
    created_round: int

    def eligible(self, rnd: int, lookback: int) -> bool:
        return self.created_round <= rnd - lookback


@dataclass(frozen=True)
class SimSignature:
    signer: bytes
    payload_digest: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return self.signer + self.payload_digest + self.tag

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SimSignature":
        if len(raw) != 3 * HASH_BYTES:
            raise ValueError("malformed signature block")
        return cls(raw[:32], raw[32:64], raw[64:96])


class KeyRegistry:
    """Maps public ids to key material so tags can be re-derived.

    One registry per simulation; unknown ids simply fail verification.
    """

    def __init__(self) -> None:
        self._keys: dict[bytes, KeyPair] = {}

    def add(self, key: KeyPair) -> None:
        if key.public_id in self._keys:
            raise ValueError("duplicate public id")
        if key.stake < 0:
            raise ValueError("negative stake")
        self._keys[key.public_id] = key

    def get(self, public_id: bytes) -> KeyPair | None:
        return self._keys.get(public_id)

    def total_stake(self) -> int:
        return sum(k.stake for k in self._keys.values())


def _tag(secret: bytes, payload_digest: bytes) -> bytes:
    return hash256(secret + payload_digest)


def sim_sign(key: KeyPair, payload: bytes) -> SimSignature:
    digest = hash256(payload)
    return SimSignature(key.public_id, digest, _tag(key.secret, digest))


def sim_verify(sig: SimSignature, public_id: bytes, payload: bytes,
               registry: KeyRegistry) -> bool:
    if sig.signer != public_id:
        return False
    key = registry.get(public_id)
    if key is None:
        return False
    digest = hash256(payload)
    return sig.payload_digest == digest and sig.tag == _tag(key.secret, digest)


@dataclass(frozen=True)
class Seed:
    """Round-chained randomness feeding the next round's sortition."""

    value: bytes
    round: int


@dataclass(frozen=True)
class SortitionProof:
    """Signature over (round, step, previous seed) presented with a message.

    Verifying it requires the verifier to already know that seed, which is
    the stateful dependency the flooding attack exploits.
    """

    signature: SimSignature
    role: int
    signer: bytes
    claimed_round: int
    claimed_step: int

    def to_bytes(self) -> bytes:
        return struct.pack(">Bqq", self.role, self.claimed_round,
                           self.claimed_step) + self.signature.to_bytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SortitionProof":
        role, rnd, step = struct.unpack(">Bqq", raw[:17])
        sig = SimSignature.from_bytes(raw[17:17 + 96])
        return cls(sig, role, sig.signer, rnd, step)


@dataclass(frozen=True)
class Block:
    round: int
    payset: tuple[int, ...]
    prev_hash: bytes
    seed_material: bytes
    is_empty: bool
    byte_size: int

    def to_bytes(self) -> bytes:
        head = struct.pack(">q?II", self.round, self.is_empty,
                           self.byte_size, len(self.payset))
        body = self.prev_hash + struct.pack(">I", len(self.seed_material)) \
            + self.seed_material
        stubs = struct.pack(">%dQ" % len(self.payset), *self.payset)
        return head + body + stubs

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Block":
        rnd, empty, size, n = struct.unpack(">q?II", raw[:17])
        prev = raw[17:49]
        (mlen,) = struct.unpack(">I", raw[49:53])
        material = raw[53:53 + mlen]
        off = 53 + mlen
        payset = struct.unpack(">%dQ" % n, raw[off:off + 8 * n])
        return cls(rnd, tuple(payset), prev, material, empty, size)

    def hash(self) -> bytes:
        return hash256(self.to_bytes())


def stub_capacity(block_bytes: int, stub_bytes: int = TX_STUB_BYTES) -> int:
    """Transaction stubs carried by a block of the given wire size."""
    return max(0, (block_bytes - BLOCK_HEADER_BYTES) // stub_bytes)


def make_empty_block(rnd: int, prev_seed: Seed, prev_hash: bytes) -> Block:
    """Default block for a round; identical on every node that agrees on
    the previous round."""
    if rnd < 1:
        raise ValueError("rounds start at 1")
    return Block(rnd, (), prev_hash, prev_seed.value, True,
                 BLOCK_HEADER_BYTES)


def seed_domain(prev_seed: Seed, rnd: int) -> bytes:
    return prev_seed.value + struct.pack(">q", rnd)


def make_block(rnd: int, proposer: KeyPair, prev_seed: Seed,
               prev_hash: bytes, payset: tuple[int, ...],
               byte_size: int) -> Block:
    """Proposed block; its seed material is the proposer's signature over
    (previous seed, round) so the next seed is recomputable from the block
    alone."""
    material = sim_sign(proposer, seed_domain(prev_seed, rnd)).tag
    return Block(rnd, payset, prev_hash, material, False, byte_size)


def next_seed(block: Block, prev_seed: Seed) -> Seed:
    """Seed for the block's round, chained from the previous one."""
    if block.is_empty:
        value = hash256(seed_domain(prev_seed, block.round))
    else:
        value = hash256(block.seed_material)
    return Seed(value, block.round)


class Message:
    """Gossiped consensus message: block proposal, vote, or credential.

    `byte_size` is the simulated wire size used by the transport and the
    buffers; the canonical encoding below is the artifact's own compact
    form and only has to round-trip.
    """

    __slots__ = ("kind", "sender", "round", "step", "value", "block",
                 "proof", "auth_sig", "byte_size", "mid", "mid_int")

    def __init__(self, kind: int, sender: bytes, rnd: int, step: int,
                 proof: SortitionProof, auth_sig: SimSignature,
                 byte_size: int, value: bytes | None = None,
                 block: Block | None = None):
        self.kind = kind
        self.sender = sender
        self.round = rnd
        self.step = step
        self.value = value
        self.block = block
        self.proof = proof
        self.auth_sig = auth_sig
        self.byte_size = byte_size
        self.mid = hash256(self.body_bytes())
        self.mid_int = int.from_bytes(self.mid[:8], "big")

    def body_bytes(self) -> bytes:
        """Canonical body: what the envelope signature covers."""
        head = struct.pack(">Bqq", self.kind, self.round, self.step)
        parts = [head, self.sender]
        if self.value is not None:
            parts.append(struct.pack(">B", len(self.value)))
            parts.append(self.value)
        else:
            parts.append(b"\x00")
        if self.block is not None:
            blk = self.block.to_bytes()
            parts.append(struct.pack(">I", len(blk)))
            parts.append(blk)
        else:
            parts.append(struct.pack(">I", 0))
        parts.append(self.proof.to_bytes())
        return b"".join(parts)

    def to_bytes(self) -> bytes:
        body = self.body_bytes()
        return struct.pack(">II", len(body), self.byte_size) + body \
            + self.auth_sig.to_bytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Message":
        blen, byte_size = struct.unpack(">II", raw[:8])
        body = raw[8:8 + blen]
        auth = SimSignature.from_bytes(raw[8 + blen:8 + blen + 96])
        kind, rnd, step = struct.unpack(">Bqq", body[:17])
        sender = body[17:49]
        off = 49
        vlen = body[off]
        off += 1
        value = body[off:off + vlen] if vlen else None
        off += vlen
        (blklen,) = struct.unpack(">I", body[off:off + 4])
        off += 4
        block = Block.from_bytes(body[off:off + blklen]) if blklen else None
        off += blklen
        proof = SortitionProof.from_bytes(body[off:])
        return cls(kind, sender, rnd, step, proof, auth, byte_size,
                   value=value, block=block)

    def __repr__(self) -> str:  # debugging aid only
        names = {BLOCK_PROPOSAL: "bp", VOTE: "vm", CREDENTIAL: "cm"}
        return "<%s r=%d s=%d from=%s>" % (names[self.kind], self.round,
                                           self.step, self.sender[:4].hex())


# The body digest does not cover the envelope signature, so builders can
# construct the message first and sign its body afterwards.
_AUTH_PLACEHOLDER = SimSignature(b"\x00" * 32, b"\x00" * 32, b"\x00" * 32)


def make_proposal(key: KeyPair, block: Block, proof: SortitionProof,
                  overhead: int = PROPOSAL_OVERHEAD_BYTES) -> Message:
    msg = Message(BLOCK_PROPOSAL, key.public_id, block.round, 1, proof,
                  _AUTH_PLACEHOLDER, block.byte_size + overhead, block=block)
    msg.auth_sig = sim_sign(key, msg.body_bytes())
    return msg


def make_vote(key: KeyPair, rnd: int, step: int, value: bytes,
              proof: SortitionProof, byte_size: int = VOTE_BYTES) -> Message:
    msg = Message(VOTE, key.public_id, rnd, step, proof, _AUTH_PLACEHOLDER,
                  byte_size, value=value)
    msg.auth_sig = sim_sign(key, msg.body_bytes())
    return msg


def make_credential(key: KeyPair, rnd: int, proof: SortitionProof,
                    byte_size: int = CREDENTIAL_BYTES) -> Message:
    msg = Message(CREDENTIAL, key.public_id, rnd, 1, proof,
                  _AUTH_PLACEHOLDER, byte_size)
    msg.auth_sig = sim_sign(key, msg.body_bytes())
    return msg
