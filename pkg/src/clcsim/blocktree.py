"""Append-only block tree with the chain queries the protocol needs.

Blocks are identified by dense integer ids assigned in insertion order
(id 0 is genesis). Heights are assigned on insert from the parent, so
every view of the tree agrees on them. Ancestor queries use binary
lifting, which keeps the trace checkers near-linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

GENESIS = 0
NOBODY = -2  # miner id used for genesis


@dataclass(frozen=True)
class Block:
    id: int
    parent: int
    height: int
    miner: int
    time: float
    adversarial: bool


class BlockTree:
    """Shared, append-only tree; per-node views are subsets of its ids."""

    def __init__(self) -> None:
        g = Block(GENESIS, -1, 0, NOBODY, 0.0, False)
        self.blocks: List[Block] = [g]
        # _jumps[i][k] = ancestor of i at distance 2**k
        self._jumps: List[List[int]] = [[]]

    def __len__(self) -> int:
        return len(self.blocks)

    def append(self, parent: int, miner: int, time: float, adversarial: bool) -> Block:
        if parent < 0 or parent >= len(self.blocks):
            raise ValueError(f"unknown parent {parent}")
        bid = len(self.blocks)
        blk = Block(bid, parent, self.blocks[parent].height + 1, miner, time, adversarial)
        self.blocks.append(blk)
        jumps = [parent]
        k = 0
        while len(self._jumps[jumps[k]]) > k:
            jumps.append(self._jumps[jumps[k]][k])
            k += 1
        self._jumps.append(jumps)
        return blk

    def height(self, bid: int) -> int:
        return self.blocks[bid].height

    def length(self, bid: int) -> int:
        """Chain length counted in blocks, genesis included."""
        return self.blocks[bid].height + 1

    def parent(self, bid: int) -> int:
        return self.blocks[bid].parent

    def ancestor_at(self, bid: int, height: int) -> int:
        """The unique ancestor of bid at the given height (<= its own)."""
        h = self.blocks[bid].height
        if height > h:
            raise ValueError("ancestor height above block height")
        delta = h - height
        while delta:
            k = delta.bit_length() - 1
            bid = self._jumps[bid][k]
            delta -= 1 << k
        return bid

    def is_ancestor(self, a: int, b: int) -> bool:
        """True iff a is on the path from genesis to b (a == b counts)."""
        ha = self.blocks[a].height
        if ha > self.blocks[b].height:
            return False
        return self.ancestor_at(b, ha) == a

    def path(self, bid: int) -> List[int]:
        """Block ids from genesis to bid inclusive."""
        out = []
        while bid != -1:
            out.append(bid)
            bid = self.blocks[bid].parent
        out.reverse()
        return out

    def drop_last(self, tip: int, n: int) -> int:
        """Tip of the chain with its last n blocks removed, saturating at genesis."""
        if n <= 0:
            return tip
        target = self.blocks[tip].height - n
        if target <= 0:
            return GENESIS
        return self.ancestor_at(tip, target)

    def block_at_depth(self, tip: int, depth: int) -> Optional[int]:
        """Block exactly `depth` below tip, or None if the chain is too short."""
        target = self.blocks[tip].height - depth
        if target < 0:
            return None
        return self.ancestor_at(tip, target)

    def fork_point(self, a: int, b: int) -> int:
        """Deepest common ancestor of a and b."""
        ha, hb = self.blocks[a].height, self.blocks[b].height
        h = min(ha, hb)
        a = self.ancestor_at(a, h)
        b = self.ancestor_at(b, h)
        while a != b:
            a = self.blocks[a].parent
            b = self.blocks[b].parent
        return a
