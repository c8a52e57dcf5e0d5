"""Property checks over recorded runs.

Every check reads only the trace: the block tree is rebuilt from block
records and node behaviour is judged from adopt, confirm, vote, period,
halt and checkpoint records.  A violation found here can therefore be
reproduced from the trace file alone.  Checks return lists of violation
dicts; an empty list means the property held.

Checks that honest nodes must satisfy skip faulty checkpointers (the
configured byzantine tail of the checkpointer id range and permanently
offline ones): the guarantees only cover well-behaved nodes.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .blocktree import BlockTree, GENESIS
from .config import quorum

EVERYONE = -3

SOFT = "soft"
CERT = "cert"
NEXT = "next"

BOTTOM = -1  # encoded empty vote value


class RunView:
    """A trace unpacked for checking: rebuilt tree plus grouped records."""

    def __init__(self, trace):
        self.trace = trace
        self.cfg = trace.config()
        cfg = self.cfg
        self.delta: float = cfg["delta"]
        self.k: int = cfg["k"]
        self.k_prime: int = cfg["k_prime"]
        self.e: float = cfg["e"]
        self.quorum: int = quorum(cfg)
        self.horizon: float = cfg["horizon"]
        self.gst: float = cfg["network"]["gst"]
        flush = cfg["network"]["flush_window"]
        self.heal: float = min(self.gst, self.horizon) if flush > 0 else self.gst
        self.end: float = self.horizon + flush

        n_ckpt = cfg["checkpointers"]
        n_byz = cfg["byz_checkpointers"]
        self.ckpt_ids = list(range(n_ckpt))
        self.miner_ids = list(range(n_ckpt, n_ckpt + cfg["miners"]))
        self.byz: Set[int] = set(self.ckpt_ids[n_ckpt - n_byz:]) if n_byz else set()
        self.off_ckpts: Set[int] = set(cfg["participation"]["offline_checkpointers"])
        self.honest_ckpts = [
            c for c in self.ckpt_ids if c not in self.byz and c not in self.off_ckpts
        ]
        self.honest: Set[int] = set(self.honest_ckpts) | set(self.miner_ids)

        self.tree = BlockTree()
        self.block_time: Dict[int, float] = {GENESIS: 0.0}
        for rec in trace.by_kind("block"):
            bid, parent, height, miner, adversarial, withheld = rec[4]
            if bid == GENESIS:
                continue
            blk = self.tree.append(parent, miner, rec[0], adversarial)
            if blk.id != bid or blk.height != height:
                raise ValueError("block records disagree with tree rebuild")
            self.block_time[bid] = rec[0]

        self._grouped: Dict[str, Dict[int, List[tuple]]] = {}

    def by_node(self, kind: str) -> Dict[int, List[tuple]]:
        """Records of one kind split per node, emission order preserved."""
        if kind not in self._grouped:
            grouped: Dict[int, List[tuple]] = defaultdict(list)
            for rec in self.trace.by_kind(kind):
                grouped[rec[3]].append(rec)
            self._grouped[kind] = dict(grouped)
        return self._grouped[kind]

    def leader_events(self) -> Dict[Tuple[int, int], Tuple[int, float]]:
        """(iteration, period) -> (leader, first-query time)."""
        out: Dict[Tuple[int, int], Tuple[int, float]] = {}
        for rec in self.trace.by_kind("event"):
            if rec[4][0] == "leader":
                key = tuple(rec[4][1])
                out.setdefault(key, (rec[3], rec[0]))
        return out

    def first_ckpt_times(self) -> List[Tuple[int, float, int]]:
        """Per iteration: (iteration, first honest mark time, block)."""
        first: Dict[int, Tuple[float, int]] = {}
        for rec in self.trace.by_kind("ckpt"):
            if rec[3] not in self.honest:
                continue
            iteration, block, period, value = rec[4]
            if iteration not in first:
                first[iteration] = (rec[0], block)
        return sorted((i, t, b) for i, (t, b) in first.items())


def _viol(what: str, time: float, node: int, **detail) -> dict:
    return {"what": what, "time": time, "node": node, "detail": detail}


# -- agreement and chain structure ----------------------------------------


def check_output_agreement(view: RunView) -> List[dict]:
    """No two honest checkpointers may finish the same iteration with
    different values, and no two honest nodes may mark different blocks
    for the same checkpoint iteration."""
    out: List[dict] = []
    halted: Dict[int, Tuple[int, int, float]] = {}
    for rec in view.trace.by_kind("halt"):
        if rec[3] not in view.honest:
            continue
        iteration, period, value, clock = rec[4]
        seen = halted.get(iteration)
        if seen is None:
            halted[iteration] = (value, rec[3], rec[0])
        elif seen[0] != value:
            out.append(_viol(
                "output-agreement", rec[0], rec[3],
                iteration=iteration, value=value,
                other_node=seen[1], other_value=seen[0]))
    marked: Dict[int, Tuple[int, int]] = {}
    for rec in view.trace.by_kind("ckpt"):
        if rec[3] not in view.honest:
            continue
        iteration, block, period, value = rec[4]
        seen = marked.get(iteration)
        if seen is None:
            marked[iteration] = (block, rec[3])
        elif seen[0] != block:
            out.append(_viol(
                "output-agreement", rec[0], rec[3],
                iteration=iteration, block=block,
                other_node=seen[1], other_block=seen[0]))
    return out


def check_checkpoint_chain(view: RunView) -> List[dict]:
    """Each honest node's checkpoint marks must be made in iteration order
    and every mark must extend the previous one."""
    out: List[dict] = []
    for node, recs in sorted(view.by_node("ckpt").items()):
        if node not in view.honest:
            continue
        prev_iter = 0
        prev_block = GENESIS
        for rec in recs:
            iteration, block, period, value = rec[4]
            if iteration <= prev_iter:
                out.append(_viol("checkpoint-chain", rec[0], node,
                                 iteration=iteration, prev_iteration=prev_iter))
            if not view.tree.is_ancestor(prev_block, block):
                out.append(_viol("checkpoint-chain", rec[0], node,
                                 iteration=iteration, block=block,
                                 prev_block=prev_block))
            prev_iter, prev_block = iteration, block
    return out


def _last_per_time(recs: List[tuple]) -> List[tuple]:
    """Drop all but the final record of each same-timestamp run.

    A node that processes several messages carrying one timestamp walks
    through transient states that no other node can ever observe; the
    state it holds at that time is the one after the last of them.
    """
    return [rec for idx, rec in enumerate(recs)
            if idx + 1 == len(recs) or recs[idx + 1][0] != rec[0]]


def _confirm_monotone(view: RunView, slot: int, what: str) -> List[dict]:
    out: List[dict] = []
    for node, recs in sorted(view.by_node("confirm").items()):
        if node not in view.honest:
            continue
        prev = GENESIS
        for rec in _last_per_time(recs):
            tip = rec[4][slot]
            if not view.tree.is_ancestor(prev, tip):
                out.append(_viol(what, rec[0], node, tip=tip, prev=prev))
            prev = tip
    return out


def check_fin_safety(view: RunView) -> List[dict]:
    """A node's finalized tip may only ever extend its previous one."""
    return _confirm_monotone(view, 0, "fin-safety")


def check_ada_safety(view: RunView) -> List[dict]:
    """A node's deep-prefix confirmed tip may only ever extend its
    previous one."""
    return _confirm_monotone(view, 1, "ada-safety")


def check_nesting(view: RunView) -> List[dict]:
    """The finalized tip must always be a prefix of the deep-prefix tip."""
    out: List[dict] = []
    for node, recs in sorted(view.by_node("confirm").items()):
        if node not in view.honest:
            continue
        for rec in _last_per_time(recs):
            fin, ada = rec[4]
            if not view.tree.is_ancestor(fin, ada):
                out.append(_viol("nesting", rec[0], node, fin=fin, ada=ada))
    return out


# -- common prefix ----------------------------------------------------------


def _honest_adopts(view: RunView) -> List[tuple]:
    settled = {}
    for rec in view.trace.by_kind("adopt"):
        if rec[3] in view.honest:
            settled[(rec[3], rec[0])] = rec
    return sorted(settled.values(), key=lambda rec: rec[1])


def check_common_prefix(view: RunView, k: Optional[int] = None,
                        after: float = 0.0) -> List[dict]:
    """Every honest adoption must extend the deep prefix of every honest
    chain held at the same time or earlier.

    Dropping k blocks from a held tip yields that chain's guard block.  A
    later chain that fails to contain some earlier guard is a violation.
    It suffices to test new tips against the antichain of deepest known
    guards: descending a guard implies descending all its ancestors, and
    missing a removed (ancestral) guard implies missing the deeper guard
    that replaced it.  Adoptions sharing a timestamp are checked against
    each other's guards in both directions.
    """
    depth = view.k if k is None else k
    tree = view.tree
    out: List[dict] = []
    frontier: List[int] = []  # antichain of guard blocks

    def guard_of(tip: int) -> int:
        g = tree.block_at_depth(tip, depth)
        return GENESIS if g is None else g

    def absorb(g: int) -> None:
        for held in frontier:
            if tree.is_ancestor(g, held):
                return
        frontier[:] = [h for h in frontier if not tree.is_ancestor(h, g)]
        frontier.append(g)

    adopts = [rec for rec in _honest_adopts(view) if rec[0] >= after]
    i = 0
    while i < len(adopts):
        j = i
        while j < len(adopts) and adopts[j][0] == adopts[i][0]:
            j += 1
        group = adopts[i:j]
        guards = [guard_of(rec[4][0]) for rec in group]
        for rec in group:
            tip = rec[4][0]
            for g in frontier + guards:
                if not tree.is_ancestor(g, tip):
                    out.append(_viol("common-prefix", rec[0], rec[3],
                                     tip=tip, guard=g))
                    break
        for g in guards:
            absorb(g)
        i = j
    return out


def check_common_prefix_brute(view: RunView, k: Optional[int] = None,
                              after: float = 0.0) -> List[dict]:
    """Quadratic reference for :func:`check_common_prefix`: test every
    ordered pair of honest adoptions directly."""
    depth = view.k if k is None else k
    tree = view.tree
    adopts = [rec for rec in _honest_adopts(view) if rec[0] >= after]
    out: List[dict] = []
    for b_idx, b in enumerate(adopts):
        flagged = False
        for a in adopts:
            if a[0] > b[0]:
                break
            if a is b:
                continue
            g = tree.block_at_depth(a[4][0], depth)
            if g is None:
                g = GENESIS
            if not tree.is_ancestor(g, b[4][0]):
                flagged = True
                break
        if flagged:
            out.append(_viol("common-prefix", b[0], b[3], tip=b[4][0]))
    return out


# -- chain quality -----------------------------------------------------------


def check_chain_quality(view: RunView, window: Optional[int] = None,
                        after: float = 0.0) -> List[dict]:
    """No honest node may ever hold a chain containing ``window``
    consecutive adversarial blocks all mined after ``after``."""
    span = view.k if window is None else window
    tree = view.tree
    run: Dict[int, int] = {GENESIS: 0}
    worst: Dict[int, int] = {GENESIS: 0}
    for blk in tree.blocks[1:]:
        if blk.adversarial and blk.time > after:
            run[blk.id] = run[blk.parent] + 1
        else:
            run[blk.id] = 0
        worst[blk.id] = max(worst[blk.parent], run[blk.id])
    out: List[dict] = []
    for rec in _honest_adopts(view):
        tip = rec[4][0]
        if worst[tip] >= span:
            out.append(_viol("chain-quality", rec[0], rec[3],
                             tip=tip, run=worst[tip]))
    return out


def check_chain_quality_brute(view: RunView, window: Optional[int] = None,
                              after: float = 0.0) -> List[dict]:
    """Quadratic reference for :func:`check_chain_quality`: scan every
    window of every adopted chain."""
    span = view.k if window is None else window
    tree = view.tree
    out: List[dict] = []
    for rec in _honest_adopts(view):
        tip = rec[4][0]
        path = tree.path(tip)
        flagged = False
        for start in range(1, len(path)):
            stop = start
            while (stop < len(path)
                   and tree.blocks[path[stop]].adversarial
                   and tree.blocks[path[stop]].time > after):
                stop += 1
            if stop - start >= span:
                flagged = True
                break
            start = stop
        if flagged:
            out.append(_viol("chain-quality", rec[0], rec[3], tip=tip))
    return out


# -- progress ----------------------------------------------------------------


def _vote_quorums(view: RunView) -> Tuple[Set[Tuple[int, int]], Set[int]]:
    """(iteration, period) pairs with a full next-vote quorum on one value,
    and iterations with a full cert-vote quorum on one value.  Only votes
    cast early enough to reach everyone before the end of the run count."""
    votes: Dict[Tuple[str, int, int, int], Set[int]] = defaultdict(set)
    for rec in view.trace.by_kind("vote"):
        if max(rec[0], view.heal) + view.delta > view.end + 1e-9:
            continue
        vkind, iteration, period, value = rec[4]
        votes[(vkind, iteration, period, value)].add(rec[3])
    next_q: Set[Tuple[int, int]] = set()
    cert_q: Set[int] = set()
    for (vkind, iteration, period, value), voters in votes.items():
        if len(voters) < view.quorum:
            continue
        if vkind == NEXT:
            next_q.add((iteration, period))
        elif vkind == CERT:
            cert_q.add(iteration)
    return next_q, cert_q


def check_progress(view: RunView) -> List[dict]:
    """With every message eventually delivered, no honest checkpointer may
    end the run behind a quorum it has seen: whoever is still in an open
    period must have reached the furthest startable one, and whoever
    halted long enough before the end must have started the next
    iteration."""
    next_q, cert_q = _vote_quorums(view)

    reach_iter = 1
    while reach_iter in cert_q:
        reach_iter += 1
    # a full next-vote quorum for period p makes p+1 startable directly
    reach_period = max(
        (p + 1 for it, p in next_q if it == reach_iter), default=1)

    out: List[dict] = []
    periods = view.by_node("period")
    halts = view.by_node("halt")
    for node in view.honest_ckpts:
        recs = periods.get(node, [])
        if not recs:
            out.append(_viol("progress", 0.0, node, reason="never started"))
            continue
        last = recs[-1]
        last_iter, last_period = last[4][0], last[4][1]
        halted_iters = {r[4][0] for r in halts.get(node, [])}
        if last_iter in halted_iters:
            # waiting out the inter-iteration delay is not being stuck
            halt_time = max(r[0] for r in halts[node] if r[4][0] == last_iter)
            if last_iter < reach_iter and halt_time + view.e <= view.end - 1e-9:
                out.append(_viol("progress", halt_time, node,
                                 reason="halted but never started next iteration",
                                 iteration=last_iter))
            continue
        if (last_iter, last_period) < (reach_iter, reach_period):
            out.append(_viol("progress", last[0], node,
                             reason="behind a delivered quorum",
                             at=(last_iter, last_period),
                             reachable=(reach_iter, reach_period)))
    return out


def flush_advancement(view: RunView) -> Dict[int, int]:
    """How many period entries each honest checkpointer logged at or after
    the heal time (the forced-delivery point in flush runs)."""
    out: Dict[int, int] = {}
    for node in view.honest_ckpts:
        recs = view.by_node("period").get(node, [])
        out[node] = sum(1 for r in recs if r[0] >= view.heal - 1e-9)
    return out


# -- audits -------------------------------------------------------------------


def _online_intervals(view: RunView) -> Dict[int, List[Tuple[float, int]]]:
    toggles: Dict[int, List[Tuple[float, int]]] = defaultdict(list)
    for rec in view.trace.by_kind("online"):
        toggles[rec[3]].append((rec[0], 1))
    for rec in view.trace.by_kind("offline"):
        toggles[rec[3]].append((rec[0], 0))
    for node in toggles:
        toggles[node].sort()
    return dict(toggles)


def check_delivery(view: RunView) -> List[dict]:
    """Every delivery must land within the network bound: one delay unit
    after the send, or after the heal time for messages sent while the
    schedule was still adversarial.  Later landings are only allowed as
    inbox replays at the moment a recipient comes back online."""
    out: List[dict] = []
    toggles = _online_intervals(view)
    online_times: Dict[int, Set[float]] = {
        node: {t for t, flag in marks if flag} for node, marks in toggles.items()
    }
    for rec in view.trace.by_kind("delivery"):
        t = rec[0]
        mid, recipient, sent = rec[4]
        bound = max(sent, view.heal) + view.delta + 1e-9
        if t <= bound:
            continue
        if recipient != EVERYONE and t in online_times.get(recipient, ()):
            continue
        out.append(_viol("delivery", t, rec[3], msg=mid, sent=sent,
                         bound=bound))
    return out


def check_capabilities(view: RunView) -> List[dict]:
    """Only checkpointers vote, honest checkpointers never cast two
    different values for the same vote slot, proposals come from the
    period's leader, and adversarial blocks never outnumber adversarial
    mining opportunities."""
    out: List[dict] = []
    cast: Dict[Tuple[int, str, int, int], int] = {}
    for rec in view.trace.by_kind("vote"):
        node = rec[3]
        vkind, iteration, period, value = rec[4]
        if node not in view.ckpt_ids:
            out.append(_viol("capability", rec[0], node,
                             reason="vote from non-checkpointer"))
            continue
        if node not in view.honest:
            continue
        key = (node, vkind, iteration, period)
        seen = cast.get(key)
        if seen is None:
            cast[key] = value
        elif seen != value:
            out.append(_viol("capability", rec[0], node,
                             reason="honest node cast two values",
                             slot=key, values=(seen, value)))
    leaders = view.leader_events()
    for rec in view.trace.by_kind("proposal"):
        iteration, period, value = rec[4]
        entry = leaders.get((iteration, period))
        if entry is not None and entry[0] != rec[3]:
            out.append(_viol("capability", rec[0], rec[3],
                             reason="proposal from non-leader",
                             leader=entry[0]))
    adv_blocks = sum(
        1 for rec in view.trace.by_kind("block") if rec[4][4] and rec[0] > 0.0
    )
    adv_chances = sum(
        1 for rec in view.trace.by_kind("opportunity") if rec[4][0] == "a"
    )
    if adv_blocks > adv_chances:
        out.append(_viol("capability", view.end, EVERYONE,
                         reason="more adversarial blocks than opportunities",
                         blocks=adv_blocks, chances=adv_chances))
    return out


# -- latency and cadence statistics -------------------------------------------


def ba_iteration_stats(view: RunView) -> List[dict]:
    """Per completed iteration: who led period 1, how many periods each
    honest node went through, and every honest node's entry/halt times."""
    periods = view.by_node("period")
    halts = view.by_node("halt")
    leaders = view.leader_events()

    entries: Dict[Tuple[int, int, int], float] = {}
    max_period: Dict[int, int] = defaultdict(int)
    for node, recs in periods.items():
        if node not in view.honest:
            continue
        for rec in recs:
            iteration, period = rec[4][0], rec[4][1]
            entries.setdefault((node, iteration, period), rec[0])
            max_period[iteration] = max(max_period[iteration], period)

    halt_times: Dict[int, Dict[int, Tuple[float, int]]] = defaultdict(dict)
    for node, recs in halts.items():
        if node not in view.honest:
            continue
        for rec in recs:
            iteration, period, value, clock = rec[4]
            halt_times[rec[4][0]].setdefault(node, (rec[0], period))

    out: List[dict] = []
    for iteration in sorted(halt_times):
        nodes = halt_times[iteration]
        leader1 = leaders.get((iteration, 1))
        spans = {}
        for node, (t_halt, period) in nodes.items():
            t_entry = entries.get((node, iteration, period))
            if t_entry is not None:
                spans[node] = t_halt - t_entry
        out.append({
            "iteration": iteration,
            "leader1": None if leader1 is None else leader1[0],
            "leader1_byz": None if leader1 is None else leader1[0] in view.byz,
            "periods": max_period[iteration],
            "halts": dict(sorted(nodes.items())),
            "deciding_spans": spans,
            "full_spans": {
                n: nodes[n][0] - entries[(n, iteration, 1)]
                for n in nodes if (n, iteration, 1) in entries
            },
            "spread": (max(t for t, _ in nodes.values())
                       - min(t for t, _ in nodes.values())),
        })
    return out


def period_advancement(view: RunView) -> List[Tuple[int, int, int, float, float]]:
    """For every honest period entry that was left for a later period or a
    halt, how long the node stayed: (node, iteration, period, entry, stay)."""
    out: List[Tuple[int, int, int, float, float]] = []
    halts = view.by_node("halt")
    for node, recs in sorted(view.by_node("period").items()):
        if node not in view.honest:
            continue
        halted_at = {r[4][0]: r[0] for r in halts.get(node, [])}
        for idx, rec in enumerate(recs):
            iteration, period = rec[4][0], rec[4][1]
            ends = []
            if idx + 1 < len(recs):
                ends.append(recs[idx + 1][0])
            if iteration in halted_at and halted_at[iteration] >= rec[0]:
                ends.append(halted_at[iteration])
            if not ends:
                continue  # still open at the end of the run
            out.append((node, iteration, period, rec[0], min(ends) - rec[0]))
    return out


def checkpoint_recency(view: RunView) -> List[dict]:
    """For each checkpoint: the time between the mark appearing and the
    last earlier moment its block sat exactly k deep in some honest held
    chain.  None when no such moment exists."""
    tree = view.tree
    k = view.k

    # honest holding intervals bucketed by tip height
    by_height: Dict[int, List[Tuple[float, float, int]]] = defaultdict(list)
    for node, all_recs in view.by_node("adopt").items():
        if node not in view.honest:
            continue
        recs = _last_per_time(all_recs)
        for idx, rec in enumerate(recs):
            tip = rec[4][0]
            until = recs[idx + 1][0] if idx + 1 < len(recs) else view.end
            by_height[tree.height(tip)].append((rec[0], until, tip))

    out: List[dict] = []
    for iteration, appear, block in view.first_ckpt_times():
        want = tree.height(block) + k
        best: Optional[float] = None
        for start, until, tip in by_height.get(want, ()):
            if start > appear:
                continue
            if not tree.is_ancestor(block, tip):
                continue
            moment = min(until, appear)
            if best is None or moment > best:
                best = moment
        out.append({
            "iteration": iteration,
            "block": block,
            "appear": appear,
            "recency": None if best is None else appear - best,
        })
    return out


def liveness_gaps(view: RunView, start: float) -> dict:
    """Checkpoint arrival cadence at and after ``start``: arrival times,
    the gaps between consecutive arrivals, and the honest period count of
    each iteration (for sizing the allowed jitter)."""
    arrivals = [(i, t) for i, t, _ in view.first_ckpt_times() if t >= start]
    times = [t for _, t in arrivals]
    gaps = [b - a for a, b in zip(times, times[1:])]
    max_period: Dict[int, int] = defaultdict(int)
    for node, recs in view.by_node("period").items():
        if node not in view.honest:
            continue
        for rec in recs:
            iteration, period = rec[4][0], rec[4][1]
            max_period[iteration] = max(max_period[iteration], period)
    return {
        "arrivals": arrivals,
        "gaps": gaps,
        "periods": dict(max_period),
    }


# -- registry ------------------------------------------------------------------

CHECKS = {
    "output-agreement": check_output_agreement,
    "checkpoint-chain": check_checkpoint_chain,
    "fin-safety": check_fin_safety,
    "ada-safety": check_ada_safety,
    "nesting": check_nesting,
    "common-prefix": check_common_prefix,
    "chain-quality": check_chain_quality,
    "progress": check_progress,
    "delivery": check_delivery,
    "capability": check_capabilities,
}


def run_checks(trace, names: Optional[Sequence[str]] = None) -> Dict[str, List[dict]]:
    """Run the named checks (all registered ones by default) over a trace."""
    view = RunView(trace)
    picked = list(CHECKS) if names is None else list(names)
    out: Dict[str, List[dict]] = {}
    for name in picked:
        out[name] = CHECKS[name](view)
    return out
