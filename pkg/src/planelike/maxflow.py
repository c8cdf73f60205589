"""Dinic maximum flow on integer capacities.

The graph is stored as a flat edge array in CSR order: edge ``e`` and its
reverse ``e ^ 1`` are adjacent, ``start[v]:start[v+1]`` lists the edges
leaving ``v`` after sorting.  Both backends return the flow value and the
residual capacities.
"""
import numpy as np

from ._accel import njit, use_numba


def build_graph(n_nodes, tails, heads, caps, rcaps=None):
    """Pack directed arcs ``tail -> head`` (capacity ``cap``, reverse ``rcap``)."""
    tails = np.asarray(tails, np.int64)
    heads = np.asarray(heads, np.int64)
    caps = np.asarray(caps, np.int64)
    rcaps = np.zeros_like(caps) if rcaps is None else np.asarray(rcaps, np.int64)
    E = len(tails)
    src = np.empty(2 * E, np.int64)
    dst = np.empty(2 * E, np.int64)
    cap = np.empty(2 * E, np.int64)
    src[0::2], src[1::2] = tails, heads
    dst[0::2], dst[1::2] = heads, tails
    cap[0::2], cap[1::2] = caps, rcaps
    order = np.argsort(src, kind="stable")
    pos = np.empty(2 * E, np.int64)
    pos[order] = np.arange(2 * E)
    # reverse of sorted edge k is pos[original partner]
    partner = np.arange(2 * E) ^ 1
    rev = pos[partner[order]]
    start = np.zeros(n_nodes + 1, np.int64)
    np.add.at(start, src + 1, 1)
    start = np.cumsum(start)
    return start, dst[order].copy(), cap[order].copy(), rev


@njit
def _bfs(start, to, cap, s, t, level, queue):
    level[:] = -1
    level[s] = 0
    qh = 0
    qt = 1
    queue[0] = s
    while qh < qt:
        v = queue[qh]
        qh += 1
        for e in range(start[v], start[v + 1]):
            w = to[e]
            if cap[e] > 0 and level[w] < 0:
                level[w] = level[v] + 1
                queue[qt] = w
                qt += 1
    return level[t] >= 0


@njit
def _dinic_nb(start, to, cap, rev, s, t):
    n = start.shape[0] - 1
    level = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    path = np.empty(n, np.int64)
    flow = 0
    while _bfs(start, to, cap, s, t, level, queue):
        for v in range(n):
            it[v] = start[v]
        # iterative DFS, one augmenting path at a time
        while True:
            depth = 0
            v = s
            found = False
            while True:
                if v == t:
                    found = True
                    break
                advanced = False
                while it[v] < start[v + 1]:
                    e = it[v]
                    w = to[e]
                    if cap[e] > 0 and level[w] == level[v] + 1:
                        path[depth] = e
                        depth += 1
                        v = w
                        advanced = True
                        break
                    it[v] += 1
                if not advanced:
                    if depth == 0:
                        break
                    # dead end: retreat and skip the edge that led here
                    level[v] = -1
                    depth -= 1
                    e = path[depth]
                    v = to[rev[e]]
                    it[v] += 1
            if not found:
                break
            aug = cap[path[0]]
            for k in range(1, depth):
                if cap[path[k]] < aug:
                    aug = cap[path[k]]
            for k in range(depth):
                e = path[k]
                cap[e] -= aug
                cap[rev[e]] += aug
            flow += aug
    return flow


def _dinic_py(start, to, cap, rev, s, t):
    from collections import deque
    n = len(start) - 1
    start = start.tolist()
    to_l = to.tolist()
    rev_l = rev.tolist()
    c = cap.tolist()
    flow = 0
    while True:
        level = [-1] * n
        level[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            for e in range(start[v], start[v + 1]):
                if c[e] > 0 and level[to_l[e]] < 0:
                    level[to_l[e]] = level[v] + 1
                    q.append(to_l[e])
        if level[t] < 0:
            break
        it = start[:-1].copy()
        while True:
            path = []
            v = s
            while v != t:
                while it[v] < start[v + 1]:
                    e = it[v]
                    w = to_l[e]
                    if c[e] > 0 and level[w] == level[v] + 1:
                        break
                    it[v] += 1
                else:
                    if not path:
                        break
                    level[v] = -1
                    e = path.pop()
                    v = to_l[rev_l[e]]
                    it[v] += 1
                    continue
                path.append(e)
                v = w
            if v != t:
                break
            aug = min(c[e] for e in path)
            for e in path:
                c[e] -= aug
                c[rev_l[e]] += aug
            flow += aug
    cap[:] = c
    return flow


def max_flow(start, to, cap, rev, s, t):
    """Run Dinic in place on ``cap``; returns the flow value."""
    if use_numba():
        return int(_dinic_nb(start, to, cap, rev, s, t))
    return int(_dinic_py(start, to, cap, rev, s, t))


def reaches_sink(start, to, cap, rev, t):
    """Nodes with a residual path to ``t`` (BFS on reversed residual arcs)."""
    n = len(start) - 1
    seen = np.zeros(n, bool)
    seen[t] = True
    stack = [t]
    while stack:
        v = stack.pop()
        for e in range(start[v], start[v + 1]):
            # arc w -> v is the reverse of e; its residual is cap[rev[e]]
            w = to[e]
            if not seen[w] and cap[rev[e]] > 0:
                seen[w] = True
                stack.append(w)
    return seen
