"""Checkpointing vote machine: a period/iteration BFT agreement loop.

Each checkpointer runs periods of five steps driven by a local clock
that resets at period entry. Steps 1, 2 and 4 are point actions at
clock 0, 2D and 4D; steps 3 and 5 are windowed conditions re-evaluated
whenever a vote arrives (and once on window entry). A quorum is 2t+1
matching votes. Seeing a cert-vote quorum for (value, period) halts the
iteration, turns the quorum into a certificate, and schedules the next
iteration after a fixed wait e. Seeing a next-vote quorum for period
p-1 starts period p; node-local period jumps are allowed as long as
they move forward.

Proposals are validated before soft-voting: the value must come from
the period leader, its checkpoint-depth block must extend every
checkpoint the node has marked, and (when depth containment is
enforced) its k-deep block must lie on the chain the node held at
period entry. Proposals below checkpoint depth are never made.

The machine is host-agnostic: a host object supplies time, the leader
oracle, online status, tick/timer scheduling and vote transport, which
keeps the step logic directly testable with a scripted host.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Set, Tuple

from .blocktree import GENESIS
from .node import Certificate, NodeState

SOFT = "soft"
CERT = "cert"
NEXT = "next"

# behavior of the vote emission layer
HONEST = "honest"
SILENT = "silent"
EQUIVOCATE = "equivocate"


class BAState:
    def __init__(self, node: NodeState, host, behavior: str = HONEST) -> None:
        self.node = node
        self.id = node.id
        self.host = host
        self.behavior = behavior

        self.cur_iter = 0  # 0 = not started
        self.cur_period = 0
        self.period_start = 0.0
        self.entry_tip = GENESIS
        self.st: Optional[int] = None
        self.halted = True

        # vote book: everything this node has seen, all iterations/periods
        self.book: Dict[Tuple[int, int, str, Optional[int]], Set[int]] = {}
        self.next_q: Dict[Tuple[int, int], Set[Optional[int]]] = {}
        self.soft_q: Dict[Tuple[int, int], Set[int]] = {}
        self.cert_q: List[Tuple[int, int, Optional[int]]] = []  # quorum arrivals, FIFO
        self.proposals: Dict[Tuple[int, int], List[int]] = {}
        self.outputs: Dict[int, Tuple[int, int, Certificate]] = {}  # iter -> (period, value, cert)

        self._cast_log: Set[Tuple[str, int, int, Optional[int]]] = set()
        self._cert_cast: Optional[int] = None  # value cert-voted in current period

    # -- clock -------------------------------------------------------------

    def clock(self, time: float) -> float:
        return time - self.period_start

    def _online(self) -> bool:
        return self.host.is_online(self.id)

    # -- ingestion (host calls these, then react once per batch) -----------

    def ingest_vote(self, voter: int, vkind: str, iteration: int, period: int,
                    value: Optional[int]) -> None:
        key = (iteration, period, vkind, value)
        seen = self.book.setdefault(key, set())
        if voter in seen:
            return
        seen.add(voter)
        if len(seen) == self.host.quorum:
            if vkind == NEXT:
                self.next_q.setdefault((iteration, period), set()).add(value)
            elif vkind == SOFT and value is not None:
                self.soft_q.setdefault((iteration, period), set()).add(value)
            elif vkind == CERT and value is not None:
                self.cert_q.append((iteration, period, value))

    def ingest_proposal(self, sender: int, iteration: int, period: int, value: int) -> None:
        if sender != self.host.leader_for(iteration, period):
            return
        values = self.proposals.setdefault((iteration, period), [])
        if value not in values:
            values.append(value)

    def ingest_cert(self, cert: Certificate, time: float) -> None:
        for voter in cert.voters:
            self.ingest_vote(voter, CERT, cert.iteration, cert.period, cert.value)
        self.node.receive_cert(cert, time)

    # -- period / iteration transitions -------------------------------------

    def start_iteration(self, iteration: int, time: float) -> None:
        """Timer target; a stale start (already past it) is a no-op."""
        if iteration <= self.cur_iter:
            return
        self.cur_iter = iteration
        self._enter_period(1, None, time)
        self.react(time)

    def _enter_period(self, period: int, st: Optional[int], time: float) -> None:
        self.cur_period = period
        self.period_start = time
        self.st = st
        self.entry_tip = self.node.tip
        self.halted = False
        self._cert_cast = None
        d = self.host.delta
        self.host.emit(time, "period", self.id, (self.cur_iter, period, _enc(st), self.entry_tip))
        self.host.schedule_tick(self.id, self.cur_iter, period, 1, time)
        self.host.schedule_tick(self.id, self.cur_iter, period, 2, time + 2 * d)
        self.host.schedule_tick(self.id, self.cur_iter, period, 4, time + 4 * d)

    # -- the step actions ----------------------------------------------------

    def on_tick(self, iteration: int, period: int, step: int, time: float) -> None:
        if iteration != self.cur_iter or period != self.cur_period or self.halted:
            return
        if step == 1:
            if self._online() and self.host.leader_for(iteration, period) == self.id:
                self._step1_propose(time)
        elif step == 2:
            if self._online():
                self._step2_filter(time)
            self._windows(time)
        elif step == 4:
            if self._online():
                self._step4_first_finish(time)
            self._windows(time)
        self.react(time)

    def _bot_quorum_prev(self) -> bool:
        if self.cur_period == 1:
            return False
        return None in self.next_q.get((self.cur_iter, self.cur_period - 1), ())

    def _value_quorum_prev(self) -> Optional[int]:
        vals = [v for v in self.next_q.get((self.cur_iter, self.cur_period - 1), ())
                if v is not None]
        return min(vals) if vals else None

    def _step1_propose(self, time: float) -> None:
        if self.cur_period == 1 or self._bot_quorum_prev():
            if self._proposable(self.entry_tip):
                self._propose(self.entry_tip, time)
        else:
            v = self._value_quorum_prev()
            if v is not None:
                self._propose(v, time)

    def _step2_filter(self, time: float) -> None:
        it, p = self.cur_iter, self.cur_period
        if p == 1 or self._bot_quorum_prev():
            prev_q = self.next_q.get((it, p - 1), ())
            for v in self.proposals.get((it, p), ()):
                if v in prev_q or self._is_valid(v) is True:
                    self._cast(SOFT, v, time)
                    break
        else:
            v = self._value_quorum_prev()
            if v is not None:
                self._cast(SOFT, v, time)

    def _step4_first_finish(self, time: float) -> None:
        if self._cert_cast is not None:
            self._cast(NEXT, self._cert_cast, time)
        elif self._bot_quorum_prev():
            self._cast(NEXT, None, time)
        else:
            self._cast(NEXT, self.st, time)

    def _windows(self, time: float) -> None:
        """Steps 3 and 5: windowed, checked on arrivals and window entry."""
        if self.halted or self.cur_iter == 0 or not self._online():
            return
        it, p = self.cur_iter, self.cur_period
        c = self.clock(time)
        d = self.host.delta
        if self._cert_cast is None and 2 * d <= c < 4 * d:
            for v in sorted(self.soft_q.get((it, p), ())):
                self._cert_cast = v
                self._cast(CERT, v, time)
                break
        if c >= 4 * d:
            for v in sorted(self.soft_q.get((it, p), ())):
                self._cast(NEXT, v, time)
            if self._bot_quorum_prev() and self._cert_cast is None:
                self._cast(NEXT, None, time)

    # -- quorum reactions ------------------------------------------------------

    def react(self, time: float) -> None:
        """Drain quorum arrivals: record outputs, advance periods, re-check windows."""
        progressed = True
        while progressed:
            progressed = False
            while self.cert_q:
                it, p, v = self.cert_q.pop(0)
                progressed = True
                if it not in self.outputs:
                    self._record_output(it, p, v, time)
            if self.cur_iter in self.outputs and not self.halted:
                p, v, _ = self.outputs[self.cur_iter]
                self.halted = True
                self.host.emit(time, "halt", self.id,
                               (self.cur_iter, p, v, self.clock(time)))
                progressed = True
            if not self.halted and self.cur_iter > 0:
                best = self.cur_period
                for (it, p), _vals in self.next_q.items():
                    if it == self.cur_iter and p >= self.cur_period and p + 1 > best:
                        best = p + 1
                if best > self.cur_period:
                    vals = self.next_q[(self.cur_iter, best - 1)]
                    st = min((v for v in vals if v is not None), default=None)
                    self._enter_period(best, st, time)
                    progressed = True
        self._windows(time)

    def _record_output(self, iteration: int, period: int, value: int, time: float) -> None:
        voters = tuple(sorted(self.book[(iteration, period, CERT, value)]))[: self.host.quorum]
        cert = Certificate(iteration, period, value, voters)
        self.outputs[iteration] = (period, value, cert)
        self.node.receive_cert(cert, time)
        if self._online():
            self.host.cast_cert(self.id, cert)
        self.host.schedule_iter_start(self.id, iteration + 1, time + self.host.e)

    # -- validity and proposal rules ----------------------------------------

    def _ckpt_depth(self) -> int:
        override = self.node.depth_override
        return self.node.k if override is None else override

    def _valid_depth(self) -> int:
        # containment enforcement pins validity to true k-depth even when the
        # extraction depth is overridden for attack variants
        return self.node.k if self.host.enforce_p3 else self._ckpt_depth()

    def _proposable(self, tip: int) -> bool:
        return self.node.tree.length(tip) >= self._valid_depth() + 1

    def _is_valid(self, value: int) -> Optional[bool]:
        """Tri-state: None means the chain is not resolvable yet (treat as unheard)."""
        node = self.node
        if value not in node.resolved:
            return None
        if node.next_ckpt_iter < self.cur_iter:
            return None  # marked history has a gap; cannot verify extension
        block = node.tree.block_at_depth(value, self._valid_depth())
        if block is None:
            return False
        for _it, ckpt_block, _p, _v in node.checkpoints:
            if not node.tree.is_ancestor(ckpt_block, block):
                return False
        if self.host.enforce_p3 and not node.tree.is_ancestor(block, self.entry_tip):
            return False
        return True

    # -- vote emission ---------------------------------------------------------

    def _propose(self, value: int, time: float) -> None:
        if self.behavior == SILENT:
            return
        self.host.cast_proposal(self.id, self.cur_iter, self.cur_period, value)
        self.ingest_proposal(self.id, self.cur_iter, self.cur_period, value)

    def _cast(self, vkind: str, value: Optional[int], time: float) -> None:
        if self.behavior == SILENT:
            return
        for val in self._with_equivocation(vkind, value):
            key = (vkind, self.cur_iter, self.cur_period, val)
            if key in self._cast_log:
                continue
            self._cast_log.add(key)
            self.host.cast_vote(self.id, vkind, self.cur_iter, self.cur_period, val)
            self.ingest_vote(self.id, vkind, self.cur_iter, self.cur_period, val)

    def _with_equivocation(self, vkind: str, value: Optional[int]) -> List[Optional[int]]:
        # double-voting is limited to soft and next votes; cert votes stay single
        if self.behavior != EQUIVOCATE or vkind == CERT:
            return [value]
        if value is None:
            return [None, self.entry_tip]
        alt = self.node.tree.parent(value)
        return [value, alt if alt >= 0 else None]


def _enc(value: Optional[int]) -> int:
    """Trace encoding for an optional value: -1 stands for the empty value."""
    return -1 if value is None else value
