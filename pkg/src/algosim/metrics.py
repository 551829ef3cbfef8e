"""Evaluation quantities: per-round durations and step timeouts, and the
share of honest traffic received and validated in due time.

"In due time" means before the step a message pertains to has ended at
the receiving node (for proposals and credentials: before that node's
proposal window closed).  "Received" is transport completion, "validated"
is an accept verdict.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field


@dataclass
class RoundRecord:
    node: int
    round: int
    duration: float | None = None
    step_timeouts: int = 0
    decided_empty: bool = False
    legit_sent_to_node: int = 0
    legit_received_in_time: int = 0
    legit_validated_in_time: int = 0


@dataclass
class ScenarioSummary:
    label: str
    block_size_mb: float
    n_malicious: int
    keys_per_node: int
    avg_round_time: float | None
    pct_received: float | None
    pct_validated: float | None
    rounds_completed: int
    mean_step_timeouts: float | None
    empty: bool = False

    def csv_row(self) -> list[str]:
        def f(x):
            return "" if x is None else "%.2f" % x
        return [f(self.block_size_mb), str(self.n_malicious),
                str(self.keys_per_node), f(self.avg_round_time),
                f(self.pct_received), f(self.pct_validated),
                str(self.rounds_completed), f(self.mean_step_timeouts)]


SUMMARY_HEADER = ["block_size_mb", "n_malicious", "keys_per_node",
                  "avg_round_time_s", "pct_received", "pct_validated",
                  "rounds_completed", "mean_step_timeouts"]


class MetricsCollector:
    """Append-only per-simulation collector, merged at scenario end."""

    def __init__(self, n_honest: int, adversary_keys: set[bytes]):
        self.n_honest = n_honest
        self.adversary_keys = adversary_keys
        self.records: dict[tuple[int, int], RoundRecord] = {}
        self.step_end: dict[tuple[int, int, int], float] = {}
        self.round_end: dict[tuple[int, int], float] = {}
        self.completed: dict[int, int] = {}
        self.adversary_verdicts = {"accept": 0, "reject": 0, "defer": 0}
        self.bans = 0
        self.validation_time: dict[int, float] = {}

    # -- helpers -------------------------------------------------------------

    def legit(self, msg) -> bool:
        return msg.sender not in self.adversary_keys

    def record(self, node: int, rnd: int) -> RoundRecord:
        rec = self.records.get((node, rnd))
        if rec is None:
            rec = RoundRecord(node, rnd)
            self.records[(node, rnd)] = rec
        return rec

    def _pertinent_step(self, msg) -> int:
        # proposals and credentials matter until the window closes (step 0)
        from .core import VOTE
        return msg.step if msg.kind == VOTE else 0

    def _in_time(self, node: int, msg, now: float) -> bool:
        rnd = msg.round
        s = self._pertinent_step(msg)
        end = self.step_end.get((node, rnd, s))
        if end is None:
            end = self.round_end.get((node, rnd))
        return end is None or now < end

    # -- event hooks ---------------------------------------------------------

    def on_sent_to(self, node: int, msg) -> None:
        """First enqueue of a legitimate message toward an honest node."""
        self.record(node, msg.round).legit_sent_to_node += 1

    def on_received(self, node: int, msg, now: float) -> None:
        """First transport completion of a legitimate message at a node."""
        if self._in_time(node, msg, now):
            self.record(node, msg.round).legit_received_in_time += 1

    def on_validated(self, node: int, msg, now: float) -> None:
        if self.legit(msg):
            if self._in_time(node, msg, now):
                self.record(node, msg.round).legit_validated_in_time += 1
        else:
            self.adversary_verdicts["accept"] += 1

    def on_adversary_verdict(self, kind: str) -> None:
        self.adversary_verdicts[kind] += 1

    def on_step_end(self, node: int, rnd: int, step: int, now: float,
                    timed_out: bool) -> None:
        self.step_end[(node, rnd, step)] = now
        if timed_out:
            self.record(node, rnd).step_timeouts += 1

    def on_round_decided(self, node: int, rnd: int, now: float,
                         duration: float, timeouts: int,
                         empty: bool) -> None:
        rec = self.record(node, rnd)
        rec.duration = duration
        rec.step_timeouts = timeouts
        rec.decided_empty = empty
        self.round_end[(node, rnd)] = now
        self.completed[node] = self.completed.get(node, 0) + 1

    def on_ban(self) -> None:
        self.bans += 1

    # -- aggregation -----------------------------------------------------------

    def class_rounds(self, nodes: list[int]) -> list[RoundRecord]:
        return [rec for (n, _), rec in sorted(self.records.items())
                if n in nodes]

    def summarize(self, label: str, block_size_mb: float, n_malicious: int,
                  keys_per_node: int, focus_nodes: list[int]) -> ScenarioSummary:
        focus = set(focus_nodes)
        recs = self.class_rounds(focus)
        done = [r for r in recs if r.duration is not None]
        sent = sum(r.legit_sent_to_node for r in recs)
        rcvd = sum(r.legit_received_in_time for r in recs)
        vald = sum(r.legit_validated_in_time for r in recs)
        if not done:
            return ScenarioSummary(label, block_size_mb, n_malicious,
                                   keys_per_node, None, None, None, 0,
                                   None, empty=True)
        n_nodes = len(focus)
        return ScenarioSummary(
            label, block_size_mb, n_malicious, keys_per_node,
            sum(r.duration for r in done) / len(done),
            100.0 * rcvd / sent if sent else None,
            100.0 * vald / sent if sent else None,
            int(round(sum(self.completed.get(n, 0) for n in focus)
                      / n_nodes)),
            sum(r.step_timeouts for r in done) / len(done))

    def empty_decision_fraction(self, nodes: list[int],
                                from_round: int = 1) -> float | None:
        focus = set(nodes)
        done = [r for (n, _), r in sorted(self.records.items())
                if n in focus and r.duration is not None
                and r.round >= from_round]
        if not done:
            return None
        return sum(1 for r in done if r.decided_empty) / len(done)


def write_summary_csv(summaries: list[ScenarioSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summaries:
        w.writerow(s.csv_row())
    return buf.getvalue()


CELL_HEADER = ["node_class", "block_size_mb", "n_malicious", "keys_per_node",
               "avg_round_time_s", "pct_received", "pct_validated",
               "rounds_completed", "mean_step_timeouts", "pct_empty_decisions",
               "buffer_evictions", "bans"]


def write_cell_csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_HEADER)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()
