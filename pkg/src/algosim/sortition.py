"""Cryptographic sortition: VRF-style hash, binomial interval lookup,
proof verification, and block-proposer priorities.

A user with stake w is treated as w independent lottery tickets each
winning with probability p = expected_winners / total_stake; the number of
wins is read off a partition of [0,1) into cumulative-binomial intervals,
so the whole committee has a scale-free expected size.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .core import (
    HASH_BYTES,
    KeyPair,
    KeyRegistry,
    Seed,
    SimSignature,
    SortitionProof,
    hash256,
    sim_sign,
    sim_verify,
)

TWO_256 = 1 << 256

# verify_sortition outcomes
VALID = 0
INVALID = 1
UNDECIDABLE = 2


class EligibilityError(Exception):
    """Key too recently created to take part in sortition."""


@dataclass(frozen=True)
class SortitionOutcome:
    votes: int
    priority: bytes | None
    hash: bytes


def sortition_domain(rnd: int, step: int, prev_seed: Seed) -> bytes:
    return struct.pack(">qq", rnd, step) + prev_seed.value


def sortition_hash(key: KeyPair, rnd: int, step: int, prev_seed: Seed,
                   role: int, lookback: int = 0) -> tuple[bytes, SortitionProof]:
    """Private lottery draw: only the key owner can produce it, anyone
    holding the previous seed can verify it."""
    if lookback and not key.eligible(rnd, lookback):
        raise EligibilityError("key created in round %d not eligible in "
                               "round %d" % (key.created_round, rnd))
    sig = sim_sign(key, sortition_domain(rnd, step, prev_seed))
    proof = SortitionProof(sig, role, key.public_id, rnd, step)
    return hash256(sig.tag), proof


def binomial_intervals(stake: int, p: float) -> list[float]:
    """Cumulative binomial sums [CDF(0), ..., CDF(stake)].

    Terms are produced with the multiplicative recurrence
    B(k+1) = B(k) * (w-k)/(k+1) * p/(1-p) to stay stable for large stakes.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    term = (1.0 - p) ** stake
    cum = term
    out = [cum]
    ratio = p / (1.0 - p)
    for k in range(stake):
        term *= (stake - k) / (k + 1.0) * ratio
        cum += term
        out.append(cum)
    return out


def votes_from_hash(hash_value: bytes, stake: int, p: float) -> int:
    """Number of elections won: the index of the cumulative-binomial
    interval containing hash / 2^256."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if stake <= 0:
        return 0
    x = int.from_bytes(hash_value, "big") / TWO_256
    term = (1.0 - p) ** stake
    cum = term
    if x < cum:
        return 0
    ratio = p / (1.0 - p)
    j = 0
    while j < stake:
        term *= (stake - j) / (j + 1.0) * ratio
        cum += term
        j += 1
        if x < cum:
            return j
    return stake


def proposer_priority(proof: SortitionProof, votes: int) -> bytes:
    """Lowest hash over the winner's sub-user indices; lower wins."""
    if votes < 1:
        raise ValueError("priority undefined without votes")
    tag = proof.signature.tag
    best = None
    for u in range(votes):
        cand = hash256(tag + struct.pack(">Q", u))
        if best is None or cand < best:
            best = cand
    return best


def draw(key: KeyPair, rnd: int, step: int, prev_seed: Seed, role: int,
         p: float, lookback: int = 0) -> tuple[SortitionOutcome, SortitionProof]:
    """Full private draw: hash, votes, and (for winners) priority."""
    h, proof = sortition_hash(key, rnd, step, prev_seed, role, lookback)
    votes = votes_from_hash(h, key.stake, p)
    prio = proposer_priority(proof, votes) if votes >= 1 else None
    return SortitionOutcome(votes, prio, h), proof


def verify_sortition(proof: SortitionProof, claimed_round: int,
                     claimed_step: int, local_seed: Seed | None,
                     registry: KeyRegistry, p: float) -> tuple[int, int]:
    """Stateful proof check.

    Returns (VALID, votes), (INVALID, 0), or (UNDECIDABLE, 0).  A node
    that has not yet computed the seed the proof references cannot decide
    either way and must buffer the message rather than discard it.
    """
    if local_seed is None or local_seed.round != claimed_round - 1:
        return UNDECIDABLE, 0
    key = registry.get(proof.signer)
    if key is None:
        return INVALID, 0
    domain = sortition_domain(claimed_round, claimed_step, local_seed)
    if not sim_verify(proof.signature, proof.signer, domain, registry):
        return INVALID, 0
    votes = votes_from_hash(hash256(proof.signature.tag), key.stake, p)
    if votes < 1:
        return INVALID, 0
    return VALID, votes


def forged_proof(signer: bytes, rnd: int, step: int, role: int,
                 junk: bytes) -> SortitionProof:
    """Proof with a fabricated signature over a seed nobody knows yet.

    It is indistinguishable from a real proof until the referenced seed
    becomes computable, at which point verification fails.
    """
    sig = SimSignature(signer, hash256(junk), hash256(junk + b"t"))
    return SortitionProof(sig, role, signer, rnd, step)
