"""Dense-matrix structures and algorithms for strict partial orders.

Items are integers 0..n-1 throughout; relations live in boolean matrices
where entry [z, x] means "z must come before x".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Brute-force enumeration guard: refuse choice sets larger than this.
ENUMERATION_LIMIT = 10


def _square_bool(matrix, name: str) -> np.ndarray:
    m = np.array(matrix, dtype=bool, copy=True)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


@dataclass
class PartialOrder:
    """Strict precedence relation on items 0..n_items-1.

    ``precedes[z, x]`` is True iff z must occur before x.  Any irreflexive,
    asymmetric relation is accepted (e.g. a cover graph); instances flagged
    ``is_closure=True`` are additionally checked for transitivity.
    """

    precedes: np.ndarray
    is_closure: bool = False

    def __post_init__(self):
        p = _square_bool(self.precedes, "precedes")
        if p.diagonal().any():
            raise ValueError("precedes must be irreflexive (no self-loops)")
        if (p & p.T).any():
            raise ValueError("precedes must be asymmetric (no mutual pairs)")
        if self.is_closure:
            implied = (p @ p) & ~p
            if implied.any():
                z, x = map(int, np.argwhere(implied)[0])
                raise ValueError(f"relation flagged as closure is not transitive: "
                                 f"{z}->{x} is implied but absent")
        p.setflags(write=False)
        self.precedes = p

    @property
    def n_items(self) -> int:
        return self.precedes.shape[0]

    def n_relations(self) -> int:
        return int(self.precedes.sum())

    def edges(self) -> list[tuple[int, int]]:
        return [(int(z), int(x)) for z, x in np.argwhere(self.precedes)]


@dataclass
class WeightedDigraph:
    """Directed graph with nonnegative edge weights (may contain cycles)."""

    adjacency: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = _square_bool(self.adjacency, "adjacency")
        w = np.array(self.weights, dtype=float, copy=True)
        if w.shape != a.shape:
            raise ValueError(f"weights shape {w.shape} != adjacency shape {a.shape}")
        if not np.isfinite(w[a]).all() or (w[a] < 0).any():
            raise ValueError("edge weights must be finite and nonnegative")
        w[~a] = 0.0  # weights only meaningful on edges
        a.setflags(write=False)
        w.setflags(write=False)
        self.adjacency = a
        self.weights = w

    @property
    def n_items(self) -> int:
        return self.adjacency.shape[0]


def transitive_closure(relation: np.ndarray | PartialOrder) -> np.ndarray:
    """Reachability matrix of a directed relation (Warshall, k-loop vectorized)."""
    if isinstance(relation, PartialOrder):
        relation = relation.precedes
    reach = _square_bool(relation, "relation")
    n = reach.shape[0]
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return reach


def transitive_reduction(po: PartialOrder | np.ndarray) -> PartialOrder:
    """Cover graph of a finite strict order: the unique minimal relation
    whose closure reproduces the input's closure.

    Raises if the relation contains a cycle ("not a DAG").
    """
    closure = transitive_closure(po)
    if closure.diagonal().any() or (closure & closure.T).any():
        raise ValueError("not a DAG: relation contains a cycle")
    # edge (z, x) is redundant iff some 2-step path z -> k -> x exists in the closure
    two_step = (closure @ closure) & closure
    return PartialOrder(closure & ~two_step)


def max_set(po: PartialOrder, remaining) -> list[int]:
    """Items of `remaining` with no predecessor inside `remaining` (the frontier)."""
    rem = _check_item_subset(po.n_items, remaining)
    sub = po.precedes[np.ix_(rem, rem)]
    frontier = rem[~sub.any(axis=0)]
    if frontier.size == 0:
        raise ValueError("max_set is empty: relation restricted to `remaining` is cyclic")
    return [int(i) for i in frontier]


def is_linear_extension(po: PartialOrder, seq) -> bool:
    """True iff `seq` never places an item after one of its successors."""
    seq = np.asarray(list(seq), dtype=int)
    if seq.size != np.unique(seq).size:
        raise ValueError("sequence contains duplicate items")
    if seq.size and (seq.min() < 0 or seq.max() >= po.n_items):
        raise ValueError("sequence contains items outside the universe")
    q = po.precedes[np.ix_(seq, seq)]
    # violation: position b holds an item that precedes the item at a < b
    return not np.tril(q, k=-1).any()


def enumerate_linear_extensions(po: PartialOrder, choice_set) -> list[tuple[int, ...]]:
    """All linear extensions of the order restricted to `choice_set`.

    Depth-first frontier expansion in ascending item order; guarded to
    |choice_set| <= ENUMERATION_LIMIT because the count can reach |S|!.
    """
    items = _check_item_subset(po.n_items, choice_set)
    if items.size > ENUMERATION_LIMIT:
        raise ValueError(f"oracle limit exceeded: |choice_set| = {items.size} "
                         f"> {ENUMERATION_LIMIT}")
    sub = po.precedes[np.ix_(items, items)]
    m = items.size
    out: list[tuple[int, ...]] = []
    prefix: list[int] = []
    alive = np.ones(m, dtype=bool)

    def expand():
        if len(prefix) == m:
            out.append(tuple(int(items[i]) for i in prefix))
            return
        for i in range(m):
            if alive[i] and not (sub[alive, i]).any():
                alive[i] = False
                prefix.append(i)
                expand()
                prefix.pop()
                alive[i] = True

    expand()
    return out


def break_cycles_and_close(g: WeightedDigraph) -> PartialOrder:
    """Delete the minimum-weight edge of a found cycle until acyclic, then close.

    Cycle search is depth-first from the lowest-index vertex with neighbors
    visited in ascending order; on weight ties the first minimal edge along
    the cycle is removed.  Returns the transitive closure of the surviving DAG.
    """
    adj = np.array(g.adjacency, dtype=bool, copy=True)
    while True:
        cycle = _find_cycle(adj)
        if cycle is None:
            break
        z, x = min(cycle, key=lambda e: g.weights[e])
        adj[z, x] = False
    return PartialOrder(transitive_closure(adj), is_closure=True)


def _find_cycle(adj: np.ndarray):
    """First cycle under DFS from the lowest-index vertex, or None.

    Returns the cycle as a list of edges (z, x) in traversal order.
    """
    n = adj.shape[0]
    color = np.zeros(n, dtype=np.int8)  # 0 white, 1 on stack, 2 done
    parent = np.full(n, -1, dtype=int)
    for root in range(n):
        if color[root] != 0:
            continue
        stack = [(root, 0)]
        color[root] = 1
        while stack:
            v, nxt = stack[-1]
            if adj[v, v]:
                return [(v, v)]
            succ = np.flatnonzero(adj[v])
            if nxt < succ.size:
                stack[-1] = (v, nxt + 1)
                w = int(succ[nxt])
                if color[w] == 1:
                    # back edge closes a cycle w -> ... -> v -> w
                    path = [w]
                    u = v
                    while u != w:
                        path.append(u)
                        u = int(parent[u])
                    path.reverse()  # w, ..., v
                    return [(path[i], path[(i + 1) % len(path)])
                            for i in range(len(path))]
                if color[w] == 0:
                    color[w] = 1
                    parent[w] = v
                    stack.append((w, 0))
            else:
                color[v] = 2
                stack.pop()
    return None


def _check_item_subset(n_items: int, subset) -> np.ndarray:
    raw = [int(i) for i in subset]
    if not raw:
        raise ValueError("item subset must be nonempty")
    items = np.asarray(sorted(set(raw)), dtype=int)
    if items.size != len(raw):
        raise ValueError("item subset contains duplicates")
    if items.min() < 0 or items.max() >= n_items:
        raise ValueError(f"item subset contains indices outside 0..{n_items - 1}")
    return items
