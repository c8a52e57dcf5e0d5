"""Adversary controllers: mining policies, tie-breaking and vote injection.

The controller is a single state machine the event loop calls
synchronously: it observes every honest send at zero latency, receives
the adversarial mining opportunities, breaks fork-choice ties for every
honest node, and may inject blocks, votes and proposals attributed to
the corrupted checkpointers with zero delivery delay. It keeps its own
chain/checkpoint view fed purely from observed public messages, so its
decisions never peek at honest-node internals.

Strategies:
- none: adversarial hash power mines on the public best tip and
  publishes immediately; ties keep the incumbent.
- private-chain: withholds a fork grown from the public best
  checkpointed tip and releases it the moment it leads the public chain
  by `release_lead` blocks; abandons the fork when a checkpoint lands
  off-branch or the public chain runs away.
- tie-stress: keeps two branches the same length by mining siblings and
  reinforcing the lagging branch, and splits honest nodes across tied
  branches by node-id parity.
- grandpa-rollback: drives the checkpoint-the-tip variant into a
  confirmed-chain truncation. It forks the honest tip with a sibling,
  steers miners onto the sibling branch while checkpointers keep the
  original, walks the stalled checkpointers into a new period with
  injected empty-value next-votes, lets them certify the original tip's
  chain, and withholds the corrupted cert-votes until the sibling
  branch is buried deep enough for the deep-confirmation rule, at which
  point completing the quorum truncates a confirmed branch.
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional

from .blocktree import GENESIS
from .checkpointer import CERT, NEXT, SOFT
from .config import quorum as quorum_of
from .netsim import ADVERSARY, BlockMsg, CertMsg, ProposalMsg, Simulation, VoteMsg
from .node import NodeState


class Controller:
    """Baseline adversary: behaves like honest mining power."""

    name = "none"

    def __init__(self, sim: Simulation, cfg: Dict[str, Any]) -> None:
        self.sim = sim
        self.cfg = cfg
        variant = cfg["variant"]
        self.view = NodeState(
            ADVERSARY,
            sim.tree,
            k=cfg["k"],
            k_prime=cfg["k_prime"],
            quorum=quorum_of(cfg),
            checkpointer_ids=set(sim.ckpt_ids),
            enforce_p2=variant["enforce_p2"],
            # mirror the honest marking depth so the tracked checkpoint
            # view matches what honest nodes actually mark
            depth_override=(None if variant["enforce_p3"]
                            else variant["checkpoint_depth_override"]),
        )

    def setup(self, time: float) -> None:
        pass

    def observe(self, msg, time: float) -> None:
        if isinstance(msg, BlockMsg):
            self.view.receive_blocks(msg.blocks, time)
        elif isinstance(msg, ProposalMsg):
            self.view.receive_blocks(msg.blocks, time)
        elif isinstance(msg, CertMsg):
            self.view.receive_blocks(msg.blocks, time)
            self.view.receive_cert(msg.cert, time)

    def on_mine(self, idx: int, time: float) -> None:
        block = self.sim.adv_mine(self.view.tip, withheld=False)
        self.view.receive_blocks((block.id,), time)
        self.sim.adv_release((block.id,))

    def on_wake(self, token, time: float) -> None:
        pass

    def choose_tie(self, node: int, incumbent: int, challenger: int) -> int:
        return incumbent


class PrivateChain(Controller):
    name = "private-chain"

    def __init__(self, sim: Simulation, cfg: Dict[str, Any]) -> None:
        super().__init__(sim, cfg)
        self.lead = cfg["adversary"]["release_lead"]
        self.after = cfg["adversary"]["attack_after"]
        self.k = cfg["k"]
        self.base: Optional[int] = None
        self.priv_tip: Optional[int] = None
        self.unreleased: List[int] = []

    def on_mine(self, idx: int, time: float) -> None:
        if time < self.after:
            super().on_mine(idx, time)
            return
        self._refresh_base(time)
        parent = self.priv_tip if self.priv_tip is not None else self.base
        block = self.sim.adv_mine(parent, withheld=True)
        self.priv_tip = block.id
        self.unreleased.append(block.id)
        self._maybe_release(time)

    def observe(self, msg, time: float) -> None:
        super().observe(msg, time)
        if isinstance(msg, (BlockMsg, CertMsg)):
            self._refresh_base(time)
            self._maybe_release(time)

    def _refresh_base(self, time: float) -> None:
        tree = self.sim.tree
        tip = self.priv_tip if self.priv_tip is not None else self.base
        stale = (
            tip is None
            or not tree.is_ancestor(self.view.last_checkpoint_block(), tip)
            or tree.length(self.view.tip) >= tree.length(tip) + self.k
        )
        if stale:
            if self.unreleased:
                self.sim.emit(time, "event", ADVERSARY,
                              ("abandon", len(self.unreleased)))
            self.base = self.view.tip
            self.priv_tip = None
            self.unreleased = []

    def _maybe_release(self, time: float) -> None:
        if self.priv_tip is None or not self.unreleased:
            return
        tree = self.sim.tree
        if tree.length(self.priv_tip) >= tree.length(self.view.tip) + self.lead:
            segment = tuple(self.unreleased)
            self.sim.emit(time, "event", ADVERSARY, ("release", segment[-1]))
            self.sim.adv_release(segment)
            self.view.receive_blocks(segment, time)
            self.unreleased = []

    def choose_tie(self, node: int, incumbent: int, challenger: int) -> int:
        blocks = self.sim.tree.blocks
        if blocks[challenger].adversarial and not blocks[incumbent].adversarial:
            return challenger
        return incumbent


class TieStress(Controller):
    name = "tie-stress"

    def on_mine(self, idx: int, time: float) -> None:
        tree = self.sim.tree
        tally: Dict[int, int] = {}
        for m in self.sim.miner_ids:
            tip = self.sim.states[m].tip
            tally[tip] = tally.get(tip, 0) + 1
        tips = sorted(tally, key=lambda tip: (-tree.length(tip), tally[tip], tip))
        best = tips[0]
        lagging = next((tip for tip in tips[1:]
                        if tree.length(tip) < tree.length(best)), None)
        if len(tips) == 1 or lagging is None:
            # no usable fork: manufacture a tie by mining the tip's sibling
            parent = tree.parent(best) if best != GENESIS else GENESIS
            block = self.sim.adv_mine(parent, withheld=False)
        else:
            block = self.sim.adv_mine(lagging, withheld=False)
        self.view.receive_blocks((block.id,), time)
        self.sim.adv_release((block.id,))

    def choose_tie(self, node: int, incumbent: int, challenger: int) -> int:
        return incumbent if node % 2 == 0 else challenger


class GrandpaRollback(Controller):
    name = "grandpa-rollback"

    def __init__(self, sim: Simulation, cfg: Dict[str, Any]) -> None:
        super().__init__(sim, cfg)
        self.after = cfg["adversary"]["attack_after"]
        self.k_prime = cfg["k_prime"]
        self.byz = sorted(sim.byz_ckpts)
        self.phase = "wait"
        self.b1: Optional[int] = None
        self.b2: Optional[int] = None

    def on_mine(self, idx: int, time: float) -> None:
        if self.phase != "wait" or time < self.after:
            return  # one-shot attack; all other opportunities are wasted
        tree = self.sim.tree
        target = self.view.tip
        if target == GENESIS:
            return  # nothing to fork yet, wait for the next opportunity
        sibling = self.sim.adv_mine(tree.parent(target), withheld=False)
        self.sim.adv_release((sibling.id,))
        self.view.receive_blocks((sibling.id,), time)
        self.b1 = target
        self.b2 = sibling.id
        self.sim.emit(time, "event", ADVERSARY, ("fork", (self.b1, self.b2)))
        if not self.byz:
            self.phase = "done"
            return
        # unblock the stalled period-1 checkpointers with an empty-value quorum
        for voter in self.byz:
            self.sim.adv_vote(voter, NEXT, 1, 1, None)
        if self.sim.leader_for(1, 2) in self.byz:
            self.sim.adv_proposal(self.sim.leader_for(1, 2), 1, 2, self.b1)
        self.phase = "forked"

    def observe(self, msg, time: float) -> None:
        super().observe(msg, time)
        if (self.phase == "forked" and isinstance(msg, VoteMsg)
                and msg.vkind == SOFT and msg.iteration == 1 and msg.period == 2
                and msg.value == self.b1):
            for voter in self.byz:
                self.sim.adv_vote(voter, SOFT, 1, 2, self.b1)
            self.phase = "softed"
        elif self.phase == "softed" and isinstance(msg, BlockMsg):
            tree = self.sim.tree
            deep_enough = (
                tree.is_ancestor(self.b2, self.view.tip)
                and tree.height(self.view.tip)
                >= tree.height(self.b2) + self.k_prime + 2
            )
            if deep_enough:
                for voter in self.byz:
                    self.sim.adv_vote(voter, CERT, 1, 2, self.b1)
                self.sim.emit(time, "event", ADVERSARY, ("rollback", self.b1))
                self.phase = "done"

    def choose_tie(self, node: int, incumbent: int, challenger: int) -> int:
        if self.b2 is None:
            return incumbent
        tree = self.sim.tree
        inc_on_fork = tree.is_ancestor(self.b2, incumbent)
        chal_on_fork = tree.is_ancestor(self.b2, challenger)
        if node in self.sim.states and node < self.cfg["checkpointers"]:
            # checkpointers stay off the sibling branch
            if inc_on_fork and not chal_on_fork:
                return challenger
            return incumbent
        if chal_on_fork and not inc_on_fork:
            return challenger
        return incumbent


_STRATEGIES = {
    cls.name: cls for cls in (Controller, PrivateChain, TieStress, GrandpaRollback)
}


def build_controller(sim: Simulation, cfg: Dict[str, Any]) -> Controller:
    return _STRATEGIES[cfg["adversary"]["strategy"]](sim, cfg)
