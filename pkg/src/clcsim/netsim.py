"""Deterministic discrete-event simulation of miners, checkpointers and the network.

One heap, one thread, one master seed. Every source of randomness is a
named stream derived from the seed, so a run is a pure function of its
config. Events at equal times fire in push order (a monotone sequence
number breaks heap ties), which pins down every interleaving.

Network model: under synchrony (or after the stabilization time) every
broadcast is delivered to everyone else exactly one delay bound later,
as a single batched event. Before stabilization a policy decides the
delay: "maximal" holds everything until the bound after stabilization,
"uniform" draws per-recipient delays, "two-halves" splits the node set
by id parity and only delays cross-half traffic. The adversary observes
every send instantly and its own messages are delivered with zero
latency. Offline nodes collect deliveries in an inbox replayed when
they return. Any message first reaching an honest node through a
selective send is rebroadcast once, so availability bounds hold for
everything an honest node acts on.

Mining: two pre-sampled Poisson streams (honest and adversarial) whose
rates split the aggregate block rate by the adversarial fraction; each
honest opportunity is assigned uniformly to one currently-online miner,
so churn never slows the aggregate chain.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from .blocktree import GENESIS, NOBODY, Block, BlockTree
from .checkpointer import BAState
from .config import quorum as quorum_of
from .node import Certificate, NodeState
from .trace import Trace

ADVERSARY = -1
EVERYONE = -3


@dataclass(frozen=True)
class BlockMsg:
    mid: int
    sender: int
    blocks: Tuple[int, ...]


@dataclass(frozen=True)
class VoteMsg:
    mid: int
    sender: int
    voter: int
    vkind: str
    iteration: int
    period: int
    value: Optional[int]


@dataclass(frozen=True)
class ProposalMsg:
    mid: int
    sender: int
    proposer: int
    iteration: int
    period: int
    value: int
    blocks: Tuple[int, ...]


@dataclass(frozen=True)
class CertMsg:
    mid: int
    sender: int
    cert: Certificate
    blocks: Tuple[int, ...]


def _enc(value: Optional[int]) -> int:
    return -1 if value is None else value


class Simulation:
    def __init__(self, cfg: Dict[str, Any]) -> None:
        self.cfg = cfg
        self.seed = cfg["seed"]
        self.delta: float = float(cfg["delta"])
        self.horizon: float = float(cfg["horizon"])
        self.e: float = float(cfg["e"])
        self.k: int = cfg["k"]
        self.quorum: int = quorum_of(cfg)
        self.enforce_p3: bool = cfg["variant"]["enforce_p3"]
        self.lam = cfg["lambda_per_delta"] / self.delta
        self.beta = cfg["beta"]

        net = cfg["network"]
        self.flush_window: float = float(net["flush_window"])
        gst = float(net["gst"]) if net["model"] == "M1" else 0.0
        self.heal_time = min(gst, self.horizon) if self.flush_window > 0 else gst
        self.pre_gst_policy = net["pre_gst_policy"]
        self.end_time = self.horizon + self.flush_window

        self.time = 0.0
        self._heap: List[Tuple[float, int, str, tuple]] = []
        self._seq = 0
        self._mids = 0

        self.tree = BlockTree()
        self.trace = Trace({"config": cfg})

        n_ckpt = cfg["checkpointers"]
        n_miners = cfg["miners"]
        self.ckpt_ids = list(range(n_ckpt))
        self.miner_ids = list(range(n_ckpt, n_ckpt + n_miners))
        nb = cfg["byz_checkpointers"]
        self.byz_ckpts: Set[int] = set(self.ckpt_ids[n_ckpt - nb:]) if nb else set()
        behavior = cfg["byz_behavior"]
        self.scripted: Set[int] = self.byz_ckpts if behavior == "scripted" else set()
        self.offline_ckpts: Set[int] = set(cfg["participation"]["offline_checkpointers"])
        self.online_miners: Set[int] = set(self.miner_ids)
        self._eligible_leaders = tuple(
            sorted(set(self.ckpt_ids) - self.offline_ckpts))

        from .adversary import build_controller  # deferred: adversary uses our types

        self.controller = build_controller(self, cfg)
        tie = self.controller.choose_tie

        variant = cfg["variant"]
        self.states: Dict[int, NodeState] = {}
        self.bas: Dict[int, BAState] = {}
        ckpt_id_set = set(self.ckpt_ids)
        for nid in self.ckpt_ids + self.miner_ids:
            if nid in self.scripted:
                continue
            self.states[nid] = NodeState(
                nid,
                self.tree,
                k=self.k,
                k_prime=cfg["k_prime"],
                quorum=self.quorum,
                checkpointer_ids=ckpt_id_set,
                enforce_p2=variant["enforce_p2"],
                # the depth guard pins marking to true depth k as well:
                # a node enforcing it refuses to mark a shallower block
                depth_override=(None if variant["enforce_p3"]
                                else variant["checkpoint_depth_override"]),
                tie_break=tie,
                emit=self.trace.emit,
            )
        for nid in self.ckpt_ids:
            if nid in self.scripted:
                continue
            node_behavior = behavior if nid in self.byz_ckpts else "honest"
            self.bas[nid] = BAState(self.states[nid], self, behavior=node_behavior)

        self.receivers = tuple(sorted(self.states))
        self._halves = (
            tuple(n for n in self.receivers if n % 2 == 0),
            tuple(n for n in self.receivers if n % 2 == 1),
        )
        self._seen: Dict[int, Set[int]] = {n: set() for n in self.receivers}
        self._inbox: Dict[int, List[tuple]] = {n: [] for n in self.receivers}
        self._flooded: Set[int] = set()
        self._leaders: Dict[Tuple[int, int], int] = {}
        self._net_rng = random.Random(f"{self.seed}:net")

        self._emit_genesis()
        self._schedule_mining()
        self._schedule_churn()
        for nid in sorted(self.bas):
            self.schedule_iter_start(nid, 1, 0.0)
        self.controller.setup(0.0)

    # -- bootstrap ----------------------------------------------------------

    def _emit_genesis(self) -> None:
        self.trace.emit(0.0, "block", NOBODY, (GENESIS, -1, 0, NOBODY, False, False))
        for nid in self.receivers:
            kind = "offline" if not self.is_online(nid) else "online"
            self.trace.emit(0.0, kind, nid, ())

    def _schedule_mining(self) -> None:
        for label, rate, kind in (
            ("honest", (1.0 - self.beta) * self.lam, "mine_h"),
            ("adv", self.beta * self.lam, "mine_a"),
        ):
            if rate <= 0:
                continue
            rng = random.Random(f"{self.seed}:mine:{label}")
            t, idx = 0.0, 0
            while True:
                t += rng.expovariate(rate)
                if t > self.horizon:
                    break
                self._push(t, kind, (idx,))
                idx += 1

    def _schedule_churn(self) -> None:
        part = self.cfg["participation"]
        if part["model"] != "U2" or part["miner_floor"] >= 1.0:
            return
        rng = random.Random(f"{self.seed}:churn")
        raw: List[Tuple[float, int, bool]] = []
        for m in self.miner_ids:
            t = 0.0
            while True:
                t += rng.expovariate(1.0 / part["churn_on"])
                if t > self.horizon:
                    break
                raw.append((t, m, False))
                t += rng.expovariate(1.0 / part["churn_off"])
                if t > self.horizon:
                    break
                raw.append((t, m, True))
        raw.sort(key=lambda ev: (ev[0], ev[1]))
        floor = max(1, math.ceil(part["miner_floor"] * len(self.miner_ids)))
        online = set(self.miner_ids)
        for t, m, goes_on in raw:
            if goes_on:
                if m not in online:
                    online.add(m)
                    self._push(t, "churn", (m, True))
            elif m in online and len(online) - 1 >= floor:
                online.remove(m)
                self._push(t, "churn", (m, False))

    # -- scheduling primitives ------------------------------------------------

    def _push(self, time: float, kind: str, data: tuple) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, data))
        self._seq += 1

    def wake_at(self, time: float, token: Any) -> None:
        self._push(time, "wake", (token,))

    def now(self) -> float:
        return self.time

    # -- participation and leaders ---------------------------------------------

    def is_online(self, node: int) -> bool:
        if node in self.online_miners:
            return True
        if node in self.miner_ids:
            return False
        return node not in self.offline_ckpts

    def leader_for(self, iteration: int, period: int) -> int:
        key = (iteration, period)
        leader = self._leaders.get(key)
        if leader is None:
            rng = random.Random(f"{self.seed}:leader:{iteration}:{period}")
            leader = rng.choice(self._eligible_leaders)
            self._leaders[key] = leader
            self.trace.emit(self.time, "event", leader, ("leader", (iteration, period)))
        return leader

    # -- host interface for the vote machines -----------------------------------

    def schedule_tick(self, node: int, iteration: int, period: int, step: int,
                      at: float) -> None:
        self._push(at, "tick", (node, iteration, period, step))

    def schedule_iter_start(self, node: int, iteration: int, at: float) -> None:
        self._push(at, "iter", (node, iteration))

    def emit(self, time: float, kind: str, node: int, data: tuple) -> None:
        self.trace.emit(time, kind, node, data)

    def cast_vote(self, node: int, vkind: str, iteration: int, period: int,
                  value: Optional[int]) -> None:
        self.trace.emit(self.time, "vote", node, (vkind, iteration, period, _enc(value)))
        msg = VoteMsg(self._new_mid(), node, node, vkind, iteration, period, value)
        self._broadcast(msg, node)

    def cast_proposal(self, node: int, iteration: int, period: int, value: int) -> None:
        self.trace.emit(self.time, "proposal", node, (iteration, period, value))
        msg = ProposalMsg(self._new_mid(), node, node, iteration, period, value,
                          self._chain_payload(value))
        self._broadcast(msg, node)

    def cast_cert(self, node: int, cert: Certificate) -> None:
        msg = CertMsg(self._new_mid(), node, cert, self._chain_payload(cert.value))
        self._broadcast(msg, node)

    # -- adversary interface -----------------------------------------------------

    def adv_mine(self, parent: int, withheld: bool) -> Block:
        block = self.tree.append(parent, ADVERSARY, self.time, True)
        self.trace.emit(self.time, "block", ADVERSARY,
                        (block.id, parent, block.height, ADVERSARY, True, withheld))
        return block

    def adv_release(self, blocks: Sequence[int],
                    recipients: Optional[Sequence[int]] = None) -> None:
        msg = BlockMsg(self._new_mid(), ADVERSARY, tuple(blocks))
        self._adv_send(msg, recipients)

    def adv_vote(self, voter: int, vkind: str, iteration: int, period: int,
                 value: Optional[int],
                 recipients: Optional[Sequence[int]] = None) -> None:
        assert voter in self.byz_ckpts
        self.trace.emit(self.time, "vote", voter,
                        (vkind, iteration, period, _enc(value)))
        msg = VoteMsg(self._new_mid(), ADVERSARY, voter, vkind, iteration, period, value)
        self._adv_send(msg, recipients)

    def adv_proposal(self, proposer: int, iteration: int, period: int,
                     value: int) -> None:
        assert proposer in self.byz_ckpts
        self.trace.emit(self.time, "proposal", proposer, (iteration, period, value))
        msg = ProposalMsg(self._new_mid(), ADVERSARY, proposer, iteration, period,
                          value, self._chain_payload(value))
        self._adv_send(msg, None)

    def _adv_send(self, msg, recipients: Optional[Sequence[int]]) -> None:
        payload = _payload_summary(msg)
        self.trace.emit(self.time, "send", ADVERSARY,
                        (msg.mid, type(msg).__name__, ADVERSARY, payload))
        if recipients is None:
            self._flooded.add(msg.mid)
            recips: Tuple[int, ...] = ()
        else:
            recips = tuple(sorted(recipients))
        self._push(self.time, "deliver", (msg, recips, self.time))

    # -- network -------------------------------------------------------------------

    def _new_mid(self) -> int:
        self._mids += 1
        return self._mids

    def _chain_payload(self, value: int) -> Tuple[int, ...]:
        path = self.tree.path(value)
        return tuple(path[-(self.k + 4):])

    def _broadcast(self, msg, sender: int) -> None:
        self.trace.emit(self.time, "send", sender,
                        (msg.mid, type(msg).__name__, msg.sender, _payload_summary(msg)))
        self._flooded.add(msg.mid)
        if sender in self._seen:
            self._seen[sender].add(msg.mid)
        self.controller.observe(msg, self.time)
        for at, recips in self._plan(self.time, sender):
            self._push(at, "deliver", (msg, recips, self.time))

    def _plan(self, time: float,
              sender: int) -> List[Tuple[float, Tuple[int, ...]]]:
        if time >= self.heal_time:
            return [(time + self.delta, ())]
        if self.pre_gst_policy == "maximal":
            return [(self.heal_time + self.delta, ())]
        if self.pre_gst_policy == "two-halves":
            same, other = self._halves[sender % 2], self._halves[1 - sender % 2]
            return [(time + self.delta, same),
                    (self.heal_time + self.delta, other)]
        # uniform: an independent in-bound delay per recipient
        hi = self.heal_time + self.delta - time
        return [(time + self._net_rng.uniform(0.0, hi), (r,))
                for r in self.receivers]

    def _handle_deliver(self, msg, recips: Tuple[int, ...], sent: float) -> None:
        targets = recips or self.receivers
        if recips:
            for r in targets:
                self.trace.emit(self.time, "delivery", r, (msg.mid, r, sent))
        else:
            self.trace.emit(self.time, "delivery", EVERYONE, (msg.mid, EVERYONE, sent))
        for r in targets:
            if not self.is_online(r):
                self._inbox[r].append((msg, sent))
            else:
                self._ingest(r, msg, sent)

    def _ingest(self, node: int, msg, sent: float) -> None:
        if self._note(node, msg):
            self._apply(node, msg)

    def _note(self, node: int, msg) -> bool:
        """Dedup and re-flood a message; True when the node has not seen it."""
        seen = self._seen[node]
        if msg.mid in seen:
            return False
        seen.add(msg.mid)
        if msg.mid not in self._flooded:
            self._flooded.add(msg.mid)
            self._broadcast(msg, node)
        return True

    def _apply(self, node: int, msg) -> None:
        if isinstance(msg, (BlockMsg, ProposalMsg, CertMsg)):
            self.states[node].receive_blocks(msg.blocks, self.time)
        self._apply_control(node, msg)

    def _apply_control(self, node: int, msg) -> None:
        state = self.states[node]
        ba = self.bas.get(node)
        if isinstance(msg, VoteMsg):
            if ba is not None:
                ba.ingest_vote(msg.voter, msg.vkind, msg.iteration, msg.period,
                               msg.value)
                ba.react(self.time)
        elif isinstance(msg, ProposalMsg):
            if ba is not None:
                ba.ingest_proposal(msg.proposer, msg.iteration, msg.period, msg.value)
        elif isinstance(msg, CertMsg):
            if ba is not None:
                ba.ingest_cert(msg.cert, self.time)
                ba.react(self.time)
            else:
                state.receive_cert(msg.cert, self.time)

    # -- mining ------------------------------------------------------------------

    def _handle_mine_honest(self, idx: int) -> None:
        candidates = sorted(self.online_miners)
        if not candidates:
            self.trace.emit(self.time, "opportunity", NOBODY, ("h", -1))
            return
        miner = random.Random(f"{self.seed}:assign:{idx}").choice(candidates)
        self.trace.emit(self.time, "opportunity", miner, ("h", miner))
        state = self.states[miner]
        block = self.tree.append(state.tip, miner, self.time, False)
        self.trace.emit(self.time, "block", miner,
                        (block.id, block.parent, block.height, miner, False, False))
        state.receive_blocks((block.id,), self.time)
        self._broadcast(BlockMsg(self._new_mid(), miner, (block.id,)), miner)

    # -- main loop ------------------------------------------------------------------

    def run(self) -> Trace:
        heap = self._heap
        while heap:
            if heap[0][0] > self.end_time:
                break
            time, _seq, kind, data = heapq.heappop(heap)
            self.time = time
            if kind == "deliver":
                self._handle_deliver(*data)
            elif kind == "tick":
                node, iteration, period, step = data
                self.bas[node].on_tick(iteration, period, step, time)
            elif kind == "mine_h":
                self._handle_mine_honest(data[0])
            elif kind == "mine_a":
                self.trace.emit(time, "opportunity", ADVERSARY, ("a", ADVERSARY))
                self.controller.on_mine(data[0], time)
            elif kind == "iter":
                node, iteration = data
                ba = self.bas[node]
                before = ba.cur_iter
                ba.start_iteration(iteration, time)
                if ba.cur_iter == iteration and before < iteration:
                    self.trace.emit(time, "iterstart", node, (iteration,))
            elif kind == "churn":
                self._handle_churn(*data)
            elif kind == "wake":
                self.controller.on_wake(data[0], time)
        return self.trace

    def _handle_churn(self, node: int, goes_online: bool) -> None:
        if goes_online:
            self.online_miners.add(node)
            self.trace.emit(self.time, "online", node, ())
            backlog, self._inbox[node] = self._inbox[node], []
            blocks: List[int] = []
            control = []
            for msg, sent in backlog:
                self.trace.emit(self.time, "delivery", node, (msg.mid, node, sent))
                if not self._note(node, msg):
                    continue
                if isinstance(msg, (BlockMsg, ProposalMsg, CertMsg)):
                    blocks.extend(msg.blocks)
                if not isinstance(msg, BlockMsg):
                    control.append(msg)
            if blocks:
                self.states[node].receive_blocks(blocks, self.time)
            for msg in control:
                self._apply_control(node, msg)
            ba = self.bas.get(node)
            if ba is not None:
                ba.react(self.time)
        else:
            self.online_miners.discard(node)
            self.trace.emit(self.time, "offline", node, ())


def _payload_summary(msg) -> tuple:
    if isinstance(msg, BlockMsg):
        return ("block", len(msg.blocks), msg.blocks[-1])
    if isinstance(msg, VoteMsg):
        return ("vote", msg.voter, msg.vkind, msg.iteration, msg.period,
                _enc(msg.value))
    if isinstance(msg, ProposalMsg):
        return ("proposal", msg.proposer, msg.iteration, msg.period, msg.value)
    return ("cert", msg.cert.iteration, msg.cert.period, msg.cert.value)


def run_scenario(cfg: Dict[str, Any]) -> Trace:
    return Simulation(cfg).run()
