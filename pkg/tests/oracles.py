"""Independent brute-force oracles the implementation is checked against.

Nothing here shares code paths with the package's analyses: reaching
definitions and control dependence are recomputed by bounded path
enumeration, WL refinement by an uncompressed string relabeling, and the
SVM dual by grid line searches that only ever evaluate the objective.
"""

from __future__ import annotations

import itertools

import numpy as np

from vulnpipe.graphs import Cfg, _address_taken, def_use


def oracle_reaching_definitions(cfg: Cfg, tree) -> dict[int, set]:
    """IN sets via enumeration of all CFG paths of length <= 2*|nodes|.

    States (node, live defs) already seen with at least as many remaining
    steps are pruned, which keeps the walk finite without losing coverage.
    """
    taken = _address_taken(tree)
    gens: dict[int, list] = {}
    for n in cfg.nodes:
        gens[n] = [] if n in (cfg.entry, cfg.exit) else def_use(tree, n, taken)[0]
    succ: dict[int, list[int]] = {n: [] for n in cfg.nodes}
    for e in cfg.edges:
        succ[e.src].append(e.dst)

    limit = 2 * len(cfg.nodes)
    in_sets: dict[int, set] = {n: set() for n in cfg.nodes}
    seen: dict[tuple[int, frozenset], int] = {}
    stack = [(cfg.entry, frozenset(), limit)]
    while stack:
        node, live, steps = stack.pop()
        key = (node, live)
        if seen.get(key, -1) >= steps:
            continue
        seen[key] = steps
        in_sets[node] |= live
        if steps == 0:
            continue
        strong = {v for v, is_strong in gens[node] if is_strong}
        out = {d for d in live if d[1] not in strong}
        out |= {(node, v) for v, _ in gens[node]}
        out_f = frozenset(out)
        for m in succ[node]:
            stack.append((m, out_f, steps - 1))
    return in_sets


def oracle_data_dependence(cfg: Cfg, tree) -> list[tuple[int, int, str]]:
    rd = oracle_reaching_definitions(cfg, tree)
    taken = _address_taken(tree)
    edges = set()
    for n in cfg.nodes:
        if n in (cfg.entry, cfg.exit):
            continue
        _, uses = def_use(tree, n, taken)
        for d_node, var in rd[n]:
            if var in uses:
                edges.add((d_node, n, var))
    return sorted(edges)


def _simple_paths(succ: dict[int, list[int]], start: int, goal: int):
    """Yield every simple path start -> goal as a node tuple."""
    path = [start]
    on_path = {start}

    def dfs(node):
        if node == goal:
            yield tuple(path)
            return
        for m in succ[node]:
            if m not in on_path:
                path.append(m)
                on_path.add(m)
                yield from dfs(m)
                path.pop()
                on_path.remove(m)

    yield from dfs(start)


def oracle_post_dominators(cfg: Cfg) -> dict[int, set[int]]:
    """pdom(n) = nodes on every simple path n -> Exit (cycle removal makes
    simple paths sufficient)."""
    succ: dict[int, list[int]] = {n: [] for n in cfg.nodes}
    for e in cfg.edges:
        succ[e.src].append(e.dst)
    pdom: dict[int, set[int]] = {}
    for n in cfg.nodes:
        common: set[int] | None = None
        for path in _simple_paths(succ, n, cfg.exit):
            nodes = set(path)
            common = nodes if common is None else (common & nodes)
        pdom[n] = common if common is not None else set()
    return pdom


def oracle_control_dependence(cfg: Cfg) -> list[tuple[int, int, str]]:
    """Direct application of the definition: s depends on (c, b) iff s
    post-dominates c's b-successor but not c itself (s != c)."""
    pdom = oracle_post_dominators(cfg)
    out = set()
    for e in cfg.edges:
        if e.branch == "uncond":
            continue
        for s in cfg.nodes:
            if s == e.src:
                continue
            if s in pdom[e.dst] and s not in pdom[e.src]:
                out.add((e.src, s, e.branch))
    return sorted(out)


def oracle_wl_histograms(adj: dict[int, list[tuple[str, int]]], labels: dict[int, str], h: int):
    """Uncompressed WL refinement over explicit adjacency; returns per-iteration
    label-count dicts keyed by full label strings."""
    current = dict(labels)
    histograms = []
    for _ in range(h + 1):
        counts: dict[str, int] = {}
        for nid in current:
            counts[current[nid]] = counts.get(current[nid], 0) + 1
        histograms.append(counts)
        nxt = {}
        for nid in current:
            neigh = sorted(f"{kind}:{current[m]}" for kind, m in adj[nid])
            nxt[nid] = current[nid] + "(" + ";".join(neigh) + ")"
        current = nxt
    return histograms


def dual_objective(K: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


def oracle_grid_dual_max(K: np.ndarray, y: np.ndarray, C: float, step_frac: float = 0.01,
                         max_sweeps: int = 200) -> tuple[np.ndarray, float]:
    """Maximize the SVM dual by exhaustive grid line searches on every
    feasible pair direction (step 0.01*C), iterated to a fixpoint.

    Only the objective value is ever consulted, so this is independent of
    the analytic SMO update.
    """
    n = len(y)
    step = step_frac * C
    alpha = np.zeros(n)
    best_obj = dual_objective(K, y, alpha)
    for _ in range(max_sweeps):
        improved = False
        for i, j in itertools.combinations(range(n), 2):
            # alpha_i' = alpha_i + y_i * t, alpha_j' = alpha_j - y_j * t
            # keeps sum(alpha * y) unchanged for any t.
            lo_i = (0.0 - alpha[i]) * y[i]
            hi_i = (C - alpha[i]) * y[i]
            lo_j = (alpha[j] - C) * y[j]
            hi_j = alpha[j] * y[j]
            lo = max(min(lo_i, hi_i), min(lo_j, hi_j))
            hi = min(max(lo_i, hi_i), max(lo_j, hi_j))
            if hi - lo < 1e-15:
                continue
            ts = np.arange(np.ceil(lo / step) * step, hi + step / 2, step)
            ts = np.clip(np.unique(np.concatenate([[lo], ts, [hi]])), lo, hi)
            cand = np.tile(alpha, (len(ts), 1))
            cand[:, i] = alpha[i] + y[i] * ts
            cand[:, j] = alpha[j] - y[j] * ts
            v = cand * y
            objs = cand.sum(axis=1) - 0.5 * np.einsum("gi,ij,gj->g", v, K, v)
            k = int(np.argmax(objs))
            if objs[k] > best_obj + 1e-12:
                alpha = cand[k]
                best_obj = float(objs[k])
                improved = True
        if not improved:
            break
    return alpha, best_obj


def oracle_full_grid_dual_max(K: np.ndarray, y: np.ndarray, C: float,
                              step_frac: float = 0.01) -> float:
    """Truly exhaustive cartesian grid over the dual box (tiny n only),
    filtered by the equality constraint; validates the pairwise oracle."""
    n = len(y)
    step = step_frac * C
    grid = np.arange(0.0, C + step / 2, step)
    best = -np.inf
    for combo in itertools.product(grid, repeat=n):
        a = np.asarray(combo)
        if abs(float(a @ y)) > 1e-12:
            continue
        best = max(best, dual_objective(K, y, a))
    return best
