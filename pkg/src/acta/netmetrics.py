"""Dynamic brain-network construction and graph metrics.

Windows become binary undirected graphs by thresholding absolute channel
correlations; metrics are Newman-Girvan modularity (greedy agglomerative
partition), mean clustering coefficient, characteristic path length (largest
component when disconnected) and the small-world index against
degree-preserving rewired baselines. All functions are pure and seeded.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGraph

DEFAULT_THRESHOLD = 0.5
DEFAULT_REWIRES = 20
_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class BrainGraph:
    nodes: tuple
    adjacency: np.ndarray  # boolean, symmetric, zero diagonal
    ts: float = 0.0

    def __post_init__(self):
        a = self.adjacency
        if a.shape[0] != a.shape[1] or a.shape[0] != len(self.nodes):
            raise ValueError("adjacency shape does not match nodes")
        if a.dtype != bool:
            raise ValueError("adjacency must be boolean")
        if np.any(a != a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a)):
            raise ValueError("self-loops are not allowed")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_edges(self):
        return int(self.adjacency.sum()) // 2

    def edges(self):
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    def degrees(self):
        return self.adjacency.sum(axis=1).astype(int)


@dataclass(frozen=True)
class Partition:
    communities: dict  # node label -> community id

    def __post_init__(self):
        if not self.communities:
            raise ValueError("empty partition")

    def groups(self, nodes):
        out = {}
        for n in nodes:
            out.setdefault(self.communities[n], []).append(n)
        return out


@dataclass(frozen=True)
class MetricRow:
    ts: float
    modularity: float
    clustering: float
    path_length: float
    small_world: float | None
    connected: bool


@dataclass(frozen=True)
class MetricSeries:
    rows: tuple
    gaps: tuple = ()  # (ts, reason)

    def __post_init__(self):
        ts = [r.ts for r in self.rows]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("metric timestamps must be monotone")

    def to_table(self):
        """Delimited text export: ts, q, c, l, sigma per row."""
        lines = ["ts\tq\tc\tl\tsigma"]
        for r in self.rows:
            sigma = "na" if r.small_world is None else f"{r.small_world:.6f}"
            lines.append(
                f"{r.ts:.6f}\t{r.modularity:.6f}\t{r.clustering:.6f}\t"
                f"{r.path_length:.6f}\t{sigma}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PathLengthResult:
    value: float
    connected: bool
    component_size: int


@dataclass(frozen=True)
class SmallWorldResult:
    sigma: float | None
    clustering: float
    clustering_rand: float
    path_length: float
    path_length_rand: float
    note: str = ""


def build_graph(window, threshold=DEFAULT_THRESHOLD, node_labels=None):
    """Graph from one EEG window: edge iff |corr| >= threshold.

    Zero-variance channels correlate with nothing (no incident edges).
    """
    x = np.asarray(window.samples, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 channels")
    std = x.std(axis=1)
    ok = std > 0
    corr = np.zeros((n, n))
    if ok.sum() >= 2:
        sub = np.corrcoef(x[ok])
        corr[np.ix_(ok, ok)] = np.nan_to_num(sub, nan=0.0)
    adj = np.abs(corr) >= threshold
    np.fill_diagonal(adj, False)
    labels = tuple(node_labels) if node_labels is not None else tuple(range(n))
    return BrainGraph(nodes=labels, adjacency=adj, ts=getattr(window, "start_ts", 0.0))


def modularity(g, partition):
    """Newman-Girvan Q of a node partition."""
    m = g.n_edges
    if m == 0:
        raise EmptyGraph("modularity needs at least one edge")
    idx = {n: i for i, n in enumerate(g.nodes)}
    deg = g.degrees()
    q = 0.0
    for members in partition.groups(g.nodes).values():
        rows = [idx[n] for n in members]
        sub = g.adjacency[np.ix_(rows, rows)]
        e_c = int(sub.sum()) // 2
        d_c = int(deg[rows].sum())
        q += e_c / m - (d_c / (2.0 * m)) ** 2
    return q


def greedy_partition(g):
    """Agglomerative modularity maximization: start from singletons, merge
    the pair with the largest positive gain; ties resolve to the pair with
    the smallest node labels (declared channel order)."""
    m = g.n_edges
    if m == 0:
        raise EmptyGraph("partitioning needs at least one edge")
    n = g.n_nodes
    members = {i: {i} for i in range(n)}  # community -> node indices
    deg = g.degrees()
    comm_deg = {i: int(deg[i]) for i in range(n)}
    adj = g.adjacency
    while len(members) > 1:
        best = None
        cids = sorted(members, key=lambda c: min(members[c]))
        for ai in range(len(cids)):
            for bi in range(ai + 1, len(cids)):
                ca, cb = cids[ai], cids[bi]
                rows = sorted(members[ca])
                cols = sorted(members[cb])
                e_ab = int(adj[np.ix_(rows, cols)].sum())
                gain = e_ab / m - comm_deg[ca] * comm_deg[cb] / (2.0 * m * m)
                if best is None or gain > best[0] + _MERGE_TOL:
                    best = (gain, ca, cb)
        if best is None or best[0] <= _MERGE_TOL:
            break
        _, ca, cb = best
        members[ca] = members[ca] | members[cb]
        comm_deg[ca] += comm_deg[cb]
        del members[cb]
        del comm_deg[cb]
    assignment = {}
    next_id = 0
    owner = {}
    for i in range(n):
        cid = next(c for c, nodes in members.items() if i in nodes)
        if cid not in owner:
            owner[cid] = next_id
            next_id += 1
        assignment[g.nodes[i]] = owner[cid]
    return Partition(assignment)


def clustering_coefficient(g):
    """Mean local clustering coefficient (nodes with degree < 2 count 0)."""
    a = g.adjacency.astype(np.int64)
    deg = a.sum(axis=1)
    triangles = np.diag(a @ a @ a) / 2.0
    out = 0.0
    for i in range(g.n_nodes):
        k = int(deg[i])
        if k >= 2:
            out += triangles[i] / (k * (k - 1) / 2.0)
    return out / g.n_nodes


def _components(adj):
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in np.nonzero(adj[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        comps.append(sorted(comp))
    return comps


def char_path_length(g):
    """Mean BFS shortest-path length over unordered node pairs.

    Disconnected graphs are measured on the largest component and flagged.
    """
    comps = _components(g.adjacency)
    comp = max(comps, key=lambda c: (len(c), -c[0]))
    connected = len(comps) == 1
    k = len(comp)
    if k < 2:
        return PathLengthResult(0.0, connected, k)
    sub = g.adjacency[np.ix_(comp, comp)]
    total = 0
    for s in range(k):
        dist = np.full(k, -1, dtype=int)
        dist[s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in np.nonzero(sub[u])[0]:
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(int(v))
            frontier = nxt
        total += dist[s + 1 :].sum()
    pairs = k * (k - 1) // 2
    return PathLengthResult(total / pairs, connected, k)


def _rewire(adj, rng, swap_factor=10):
    """Degree-preserving double-edge-swap randomization; returns (adj, swaps)."""
    a = adj.copy()
    edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(a, 1)))]
    m = len(edges)
    swaps = 0
    for _ in range(swap_factor * m):
        e1, e2 = rng.integers(0, m, size=2)
        if e1 == e2:
            continue
        u, v = edges[e1]
        x, y = edges[e2]
        if rng.random() < 0.5:
            x, y = y, x
        if len({u, v, x, y}) < 4:
            continue
        if a[u, x] or a[v, y]:
            continue
        a[u, v] = a[v, u] = False
        a[x, y] = a[y, x] = False
        a[u, x] = a[x, u] = True
        a[v, y] = a[y, v] = True
        edges[e1] = (u, x)
        edges[e2] = (v, y)
        swaps += 1
    return a, swaps


def small_world_index(g, seed, rewires=DEFAULT_REWIRES):
    """sigma = (C/C_rand) / (L/L_rand) against rewired baselines.

    Returns the baselines alongside sigma; sigma is None when a baseline
    degenerates (e.g., no triangles in any rewiring).
    """
    if g.n_nodes < 4 or g.n_edges < 3:
        return SmallWorldResult(None, 0.0, 0.0, 0.0, 0.0, note="graph too small")
    c = clustering_coefficient(g)
    l = char_path_length(g).value
    rng = np.random.default_rng(seed)
    c_rand = []
    l_rand = []
    total_swaps = 0
    for _ in range(rewires):
        a, swaps = _rewire(g.adjacency, rng)
        total_swaps += swaps
        rg = BrainGraph(g.nodes, a, g.ts)
        c_rand.append(clustering_coefficient(rg))
        l_rand.append(char_path_length(rg).value)
    c_bar = float(np.mean(c_rand))
    l_bar = float(np.mean(l_rand))
    note = "" if total_swaps else "degree sequence admits no rewiring"
    if c_bar == 0.0 or l_bar == 0.0 or l == 0.0:
        return SmallWorldResult(None, c, c_bar, l, l_bar, note="degenerate baseline")
    return SmallWorldResult((c / c_bar) / (l / l_bar), c, c_bar, l, l_bar, note=note)


def metric_series(windows, threshold=DEFAULT_THRESHOLD, seed=0, node_labels=None,
                  rewires=DEFAULT_REWIRES):
    """Per-window graph metrics; windows whose graph has no edges become gaps."""
    rows = []
    gaps = []
    seeds = np.random.SeedSequence(seed).spawn(len(windows))
    for i, w in enumerate(windows):
        g = build_graph(w, threshold, node_labels=node_labels)
        if g.n_edges == 0:
            gaps.append((w.start_ts, "no edges at threshold"))
            continue
        q = modularity(g, greedy_partition(g))
        c = clustering_coefficient(g)
        pl = char_path_length(g)
        sw = small_world_index(g, seeds[i], rewires=rewires)
        rows.append(
            MetricRow(
                ts=w.start_ts,
                modularity=q,
                clustering=c,
                path_length=pl.value,
                small_world=sw.sigma,
                connected=pl.connected,
            )
        )
    return MetricSeries(rows=tuple(rows), gaps=tuple(gaps))
