"""Per-node chain state: the checkpointed longest chain rule.

Every node (miner or checkpointer) tracks the blocks it has heard of,
resolves them into chains once all ancestors are known, and holds one
adopted tip: the longest known chain that contains its latest
checkpoint. Certificates are verified, buffered until both the prior
checkpoint and the underlying chain data have arrived, and applied in
iteration order; applying one may truncate the adopted chain.

Two confirmation rules read off the adopted chain:
  * fin: everything up to and including the latest checkpoint block;
  * ada: everything except the last k' blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Set, Tuple

from .blocktree import GENESIS, BlockTree

TieBreak = Callable[[int, int, int], int]  # (node, incumbent, challenger) -> winner
Emit = Callable[[float, str, int, tuple], None]


@dataclass(frozen=True)
class Certificate:
    iteration: int
    period: int
    value: int  # tip of the agreed chain
    voters: Tuple[int, ...]


def keep_incumbent(node: int, incumbent: int, challenger: int) -> int:
    return incumbent


class NodeState:
    def __init__(
        self,
        node_id: int,
        tree: BlockTree,
        *,
        k: int,
        k_prime: int,
        quorum: int,
        checkpointer_ids: Set[int],
        enforce_p2: bool = True,
        depth_override: Optional[int] = None,
        tie_break: TieBreak = keep_incumbent,
        emit: Optional[Emit] = None,
    ) -> None:
        self.id = node_id
        self.tree = tree
        self.k = k
        self.k_prime = k_prime
        self.quorum = quorum
        self.checkpointer_ids = checkpointer_ids
        self.enforce_p2 = enforce_p2
        self.depth_override = depth_override
        self.tie_break = tie_break
        self.emit = emit or (lambda t, kind, node, data: None)

        self.known: Set[int] = {GENESIS}
        self.resolved: Set[int] = {GENESIS}
        self.tips: Set[int] = {GENESIS}
        self._orphans: Dict[int, List[int]] = {}  # missing parent -> waiting blocks
        self.tip: int = GENESIS

        self.checkpoints: List[Tuple[int, int, int, int]] = []  # (iter, block, period, value)
        self._pending_certs: Dict[int, Certificate] = {}
        self.next_ckpt_iter = 1
        self._last_confirm: Optional[Tuple[int, int]] = None

    # -- chain ingestion ---------------------------------------------------

    def receive_blocks(self, block_ids, time: float) -> None:
        fresh: List[int] = []
        for bid in block_ids:
            if bid in self.known:
                continue
            self.known.add(bid)
            parent = self.tree.parent(bid)
            if parent in self.resolved:
                fresh.extend(self._resolve_cascade(bid))
            else:
                self._orphans.setdefault(parent, []).append(bid)
        if not fresh:
            return
        for bid in fresh:
            if bid in self.tips:
                self._consider(bid, time)
        self._apply_pending_certs(time)

    def _resolve_cascade(self, bid: int) -> List[int]:
        out = []
        stack = [bid]
        while stack:
            b = stack.pop()
            self.resolved.add(b)
            self.tips.add(b)
            self.tips.discard(self.tree.parent(b))
            out.append(b)
            stack.extend(self._orphans.pop(b, ()))
        return out

    def _eligible(self, tip: int) -> bool:
        if not self.enforce_p2 or not self.checkpoints:
            return True
        return self.tree.is_ancestor(self.checkpoints[-1][1], tip)

    def _consider(self, candidate: int, time: float) -> None:
        if candidate == self.tip or not self._eligible(candidate):
            return
        cur_len = self.tree.length(self.tip)
        new_len = self.tree.length(candidate)
        if new_len < cur_len:
            return
        if new_len == cur_len:
            if self.tie_break(self.id, self.tip, candidate) != candidate:
                return
        self._adopt(candidate, time)

    def _adopt(self, new_tip: int, time: float) -> None:
        truncated = not self.tree.is_ancestor(self.tip, new_tip)
        self.tip = new_tip
        self.emit(time, "adopt", self.id, (new_tip, self.tree.length(new_tip), truncated))
        self._emit_confirm(time)

    # -- checkpoints ---------------------------------------------------------

    def receive_cert(self, cert: Certificate, time: float) -> None:
        voters = set(cert.voters)
        if len(voters) < self.quorum or not voters <= self.checkpointer_ids:
            self.emit(time, "anomaly", self.id, ("bad-cert", cert.iteration))
            return
        if cert.iteration < self.next_ckpt_iter:
            return
        self._pending_certs.setdefault(cert.iteration, cert)
        self._apply_pending_certs(time)

    def _apply_pending_certs(self, time: float) -> None:
        while True:
            cert = self._pending_certs.get(self.next_ckpt_iter)
            if cert is None or cert.value not in self.resolved:
                return
            depth = self.k if self.depth_override is None else self.depth_override
            block = self.tree.block_at_depth(cert.value, depth)
            if block is None:
                self.emit(time, "anomaly", self.id, ("ckpt-chain-too-short", cert.iteration))
                return
            if self.checkpoints and not self.tree.is_ancestor(self.checkpoints[-1][1], block):
                self.emit(time, "anomaly", self.id, ("non-monotone-ckpt", cert.iteration))
                return
            del self._pending_certs[cert.iteration]
            self.checkpoints.append((cert.iteration, block, cert.period, cert.value))
            self.next_ckpt_iter = cert.iteration + 1
            self.emit(time, "ckpt", self.id, (cert.iteration, block, cert.period, cert.value))
            self._reelect(time)

    def _reelect(self, time: float) -> None:
        """The latest checkpoint may disqualify the held chain; pick the best legal tip."""
        best = None
        for tip in self.tips:
            if not self._eligible(tip):
                continue
            if best is None or self.tree.length(tip) > self.tree.length(best):
                best = tip
            elif self.tree.length(tip) == self.tree.length(best) and tip != best:
                best = self.tie_break(self.id, best, tip)
        if best is not None and best != self.tip:
            self._adopt(best, time)
        else:
            self._emit_confirm(time)

    # -- confirmation rules --------------------------------------------------

    def last_checkpoint_block(self) -> int:
        return self.checkpoints[-1][1] if self.checkpoints else GENESIS

    def confirm_fin(self) -> int:
        return self.last_checkpoint_block()

    def confirm_ada(self) -> int:
        return self.tree.drop_last(self.tip, self.k_prime)

    def _emit_confirm(self, time: float) -> None:
        cur = (self.confirm_fin(), self.confirm_ada())
        if cur != self._last_confirm:
            self._last_confirm = cur
            self.emit(time, "confirm", self.id, cur)
