"""Binary regression trees and sum-of-trees ensembles.

Decision rule convention: an interior node with rule (j, c) sends x to the
left child when x[j] < c and to the right child otherwise, so ties at the
cutpoint go right. Rules store both the cutpoint's grid index (for
feasibility bookkeeping) and its value (for evaluation).
"""

from __future__ import annotations

import numpy as np

from .data import CutpointGrid


class TreeError(ValueError):
    """Raised for structurally invalid trees or malformed dumps."""


class Node:
    """Interior node (var >= 0) or leaf (var == -1)."""

    __slots__ = ("var", "cut_index", "cut_value", "left", "right",
                 "mu", "parent", "uid")

    def __init__(self):
        self.var = -1
        self.cut_index = -1
        self.cut_value = 0.0
        self.left = None
        self.right = None
        self.mu = 0.0
        self.parent = None
        self.uid = -1

    @property
    def is_leaf(self) -> bool:
        return self.var < 0

    @property
    def depth(self) -> int:
        d = 0
        node = self
        while node.parent is not None:
            d += 1
            node = node.parent
        return d


class Tree:
    """Mutable binary tree with grow/prune moves.

    Every leaf carries a persistent integer uid, unique within the tree's
    lifetime, used by the samplers to keep observation-to-leaf assignments
    consistent across accepted moves.
    """

    def __init__(self):
        root = Node()
        root.uid = 0
        self.root = root
        self._next_uid = 1

    @classmethod
    def single_leaf(cls, mu: float = 0.0) -> "Tree":
        t = cls()
        t.root.mu = float(mu)
        return t

    def _take_uid(self) -> int:
        uid = self._next_uid
        self._next_uid += 1
        return uid

    def nodes(self) -> list[Node]:
        """All nodes in depth-first order, left before right."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def leaves(self) -> list[Node]:
        """Leaves in depth-first order."""
        return [node for node in self.nodes() if node.is_leaf]

    def nog_nodes(self) -> list[Node]:
        """Interior nodes whose children are both leaves."""
        return [node for node in self.nodes()
                if not node.is_leaf
                and node.left.is_leaf and node.right.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def feasible_ranges(self, leaf: Node, grid: CutpointGrid) -> np.ndarray:
        """Half-open cutpoint index intervals [lo, hi) per predictor at a
        leaf, given the rules on the path from the root."""
        p = grid.p
        lo = np.zeros(p, dtype=np.int64)
        hi = np.array([grid.n_cuts(j) for j in range(p)], dtype=np.int64)
        node = leaf
        while node.parent is not None:
            parent = node.parent
            j, c = parent.var, parent.cut_index
            if node is parent.left:
                hi[j] = min(hi[j], c)
            else:
                lo[j] = max(lo[j], c + 1)
            node = parent
        return np.stack([lo, hi])

    def grow(self, leaf: Node, var: int, cut_index: int, cut_value: float,
             mu_left: float = 0.0, mu_right: float = 0.0):
        """Split a leaf in place. Returns (left, right) children."""
        if not leaf.is_leaf:
            raise TreeError("grow target is not a leaf")
        left, right = Node(), Node()
        left.mu, right.mu = float(mu_left), float(mu_right)
        left.uid, right.uid = self._take_uid(), self._take_uid()
        left.parent = right.parent = leaf
        leaf.var = int(var)
        leaf.cut_index = int(cut_index)
        leaf.cut_value = float(cut_value)
        leaf.left, leaf.right = left, right
        leaf.uid = -1
        return left, right

    def prune(self, nog: Node, mu: float = 0.0) -> Node:
        """Collapse a no-grandchild interior node back into a leaf."""
        if nog.is_leaf or not (nog.left.is_leaf and nog.right.is_leaf):
            raise TreeError("prune target must have two leaf children")
        nog.var = -1
        nog.cut_index = -1
        nog.cut_value = 0.0
        nog.left = nog.right = None
        nog.mu = float(mu)
        nog.uid = self._take_uid()
        return nog

    def validate(self, grid: CutpointGrid | None = None):
        """Check structural invariants; with a grid, also check that every
        interior rule was feasible given its ancestors."""
        def walk(node, lo, hi):
            if node.is_leaf:
                if node.left is not None or node.right is not None:
                    raise TreeError("leaf with children")
                return
            if node.left is None or node.right is None:
                raise TreeError("interior node missing a child")
            if node.left.parent is not node or node.right.parent is not node:
                raise TreeError("broken parent link")
            j, c = node.var, node.cut_index
            if grid is not None:
                if not (0 <= j < grid.p):
                    raise TreeError(f"rule predictor {j} out of range")
                if not (lo[j] <= c < hi[j]):
                    raise TreeError(
                        f"rule cutpoint index {c} infeasible for predictor "
                        f"{j} (allowed [{lo[j]}, {hi[j]}))")
                if grid.value(j, c) != node.cut_value:
                    raise TreeError("cut value disagrees with grid")
                hi2 = hi.copy(); hi2[j] = c
                lo2 = lo.copy(); lo2[j] = c + 1
                walk(node.left, lo, hi2)
                walk(node.right, lo2, hi)
            else:
                walk(node.left, lo, hi)
                walk(node.right, lo, hi)

        if grid is not None:
            lo = np.zeros(grid.p, dtype=np.int64)
            hi = np.array([grid.n_cuts(j) for j in range(grid.p)],
                          dtype=np.int64)
        else:
            lo = hi = None
        walk(self.root, lo, hi)


def eval_tree(tree: Tree, x) -> float:
    """Fitted value for a single predictor vector."""
    x = np.asarray(x, dtype=float)
    node = tree.root
    while not node.is_leaf:
        node = node.left if x[node.var] < node.cut_value else node.right
    return node.mu


def tree_predict(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Fitted values for every row of x."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape[0])

    def descend(node, idx):
        if node.is_leaf:
            out[idx] = node.mu
            return
        go_left = x[idx, node.var] < node.cut_value
        descend(node.left, idx[go_left])
        descend(node.right, idx[~go_left])

    descend(tree.root, np.arange(x.shape[0]))
    return out


def leaf_assignment(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Index of each row's leaf, numbering leaves in depth-first order."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape[0], dtype=np.int64)
    order = {id(leaf): k for k, leaf in enumerate(tree.leaves())}

    def descend(node, idx):
        if node.is_leaf:
            out[idx] = order[id(node)]
            return
        go_left = x[idx, node.var] < node.cut_value
        descend(node.left, idx[go_left])
        descend(node.right, idx[~go_left])

    descend(tree.root, np.arange(x.shape[0]))
    return out


class Ensemble:
    """Fixed-size list of trees whose fits add."""

    def __init__(self, trees: list[Tree]):
        if not trees:
            raise TreeError("ensemble needs at least one tree")
        self.trees = trees

    @classmethod
    def of_single_leaves(cls, m: int) -> "Ensemble":
        if m < 1:
            raise TreeError(f"need m >= 1 trees, got {m}")
        return cls([Tree.single_leaf(0.0) for _ in range(m)])

    @property
    def m(self) -> int:
        return len(self.trees)


def eval_ensemble(ens: Ensemble, x) -> float:
    return float(sum(eval_tree(t, x) for t in ens.trees))


def ensemble_predict(ens: Ensemble, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[0])
    for t in ens.trees:
        total += tree_predict(t, x)
    return total


# Flat text dump, one node per line:
#   id parent side kind rest
# kind 's' (split): rest is "var cut_value"; kind 'l' (leaf): rest is "mu".
# side is 'L', 'R', or '-' for the root. ids follow breadth-first order.

def dump_tree(tree: Tree) -> str:
    lines = []
    queue = [(tree.root, -1, "-")]
    ids = {}
    while queue:
        node, parent_id, side = queue.pop(0)
        node_id = len(ids)
        ids[id(node)] = node_id
        if node.is_leaf:
            lines.append(f"{node_id} {parent_id} {side} l {node.mu!r}")
        else:
            lines.append(f"{node_id} {parent_id} {side} s "
                         f"{node.var} {node.cut_value!r}")
            queue.append((node.left, node_id, "L"))
            queue.append((node.right, node_id, "R"))
    return "\n".join(lines) + "\n"


def dump_ensemble(ens: Ensemble) -> str:
    """Trees separated by blank lines, in ensemble order."""
    return "\n".join(dump_tree(t) for t in ens.trees)


def parse_tree(text: str, grid: CutpointGrid | None = None) -> Tree:
    """Inverse of dump_tree. With a grid, rule indices are recovered by
    exact value lookup and the result is validated."""
    records = {}
    for raw in text.splitlines():
        raw = raw.strip()
        if not raw:
            continue
        parts = raw.split()
        node_id, parent_id, side, kind = (int(parts[0]), int(parts[1]),
                                          parts[2], parts[3])
        if kind == "l":
            if len(parts) != 5:
                raise TreeError(f"bad leaf line: {raw!r}")
            records[node_id] = (parent_id, side, None, float(parts[4]))
        elif kind == "s":
            if len(parts) != 6:
                raise TreeError(f"bad split line: {raw!r}")
            records[node_id] = (parent_id, side,
                                (int(parts[4]), float(parts[5])), None)
        else:
            raise TreeError(f"unknown node kind {kind!r} in {raw!r}")
    if 0 not in records:
        raise TreeError("dump has no root (id 0)")

    tree = Tree()
    nodes = {0: tree.root}
    for node_id in sorted(records):
        parent_id, side, rule, mu = records[node_id]
        if node_id == 0:
            node = tree.root
            if parent_id != -1 or side != "-":
                raise TreeError("root must have parent -1 and side '-'")
        else:
            node = Node()
            node.parent = nodes.get(parent_id)
            if node.parent is None:
                raise TreeError(f"node {node_id} references missing parent "
                                f"{parent_id}")
            if side == "L":
                node.parent.left = node
            elif side == "R":
                node.parent.right = node
            else:
                raise TreeError(f"bad side {side!r} for node {node_id}")
            nodes[node_id] = node
        if rule is None:
            node.var = -1
            node.mu = mu
            node.uid = tree._take_uid()
        else:
            node.var, node.cut_value = rule
            node.cut_index = (grid.index_of(node.var, node.cut_value)
                              if grid is not None else -1)
            if grid is not None and node.cut_index < 0:
                raise TreeError(
                    f"cut value {node.cut_value!r} for predictor {node.var} "
                    f"is not on the grid")
            node.uid = -1
    tree.validate(grid)
    return tree


def parse_ensemble(text: str, grid: CutpointGrid | None = None) -> Ensemble:
    blocks = [b for b in text.split("\n\n") if b.strip()]
    return Ensemble([parse_tree(b, grid) for b in blocks])
