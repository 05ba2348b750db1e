"""CFG construction, dependence analyses, and the merged code property graph.

Granularity: CFG nodes are statement-level AST ids (Decl, Assign, Call
statements, Return, plus If/While/For acting as their own condition nodes);
expressions stay AST-only.  Two synthetic Entry/Exit nodes are added.
Statements unreachable from Entry (dead code after a return) are dropped
from the CFG but remain in the AST.

Dataflow is intentionally conservative and function-local:

* ``Decl`` and ``Assign``-to-identifier define (strong, killing) defs;
* an array-element store is a weak def of the array variable;
* a store through ``*p`` weakly defines every address-taken variable, as
  does a call receiving ``&v`` among its arguments;
* every ``Identifier`` read anywhere in a statement's expressions is a use
  (including under ``&``);
* parameters introduce no definitions, so uses of never-assigned names
  simply have no incoming data edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .frontend import Ast, AstNode

EDGE_KINDS = ("AST", "CFG", "CDG", "DDG")

STATEMENT_KINDS = frozenset({"Decl", "Assign", "Call", "Return", "If", "While", "For"})

ENTRY_KIND = "Entry"
EXIT_KIND = "Exit"

# kind ordinal table shared with the encoders: 17 syntax kinds + Entry/Exit
KIND_VOCAB = (
    "Function", "Param", "Block", "Decl", "If", "While", "For", "Return",
    "Assign", "Call", "BinaryOp", "UnaryOp", "ArrayIndex", "Deref",
    "Identifier", "IntLiteral", "StrLiteral", ENTRY_KIND, EXIT_KIND,
)
KIND_ORDINAL = {k: i for i, k in enumerate(KIND_VOCAB)}


class AnalysisError(Exception):
    """Malformed CFG (some node cannot reach Exit)."""


class ConsistencyError(Exception):
    """A graph edge references a node id that does not exist."""


@dataclass(frozen=True)
class CfgEdge:
    src: int
    dst: int
    branch: str  # "uncond" | "true" | "false"


@dataclass
class Cfg:
    """Statement-level control flow graph over AST ids plus Entry/Exit."""

    nodes: list[int]
    edges: list[CfgEdge]
    entry: int
    exit: int

    def successors(self, node: int) -> list[tuple[int, str]]:
        return [(e.dst, e.branch) for e in self.edges if e.src == node]

    def predecessors(self, node: int) -> list[int]:
        return [e.src for e in self.edges if e.dst == node]


@dataclass
class PdgEdges:
    control: list[tuple[int, int, str]]  # (governor, dependent, branch)
    data: list[tuple[int, int, str]]  # (def stmt, use stmt, variable)


@dataclass(frozen=True)
class CpgNode:
    id: int
    kind: str
    attr: str | None


@dataclass(frozen=True)
class CpgEdge:
    src: int
    dst: int
    kind: str  # AST | CFG | CDG | DDG
    tag: str | None


@dataclass
class Cpg:
    nodes: list[CpgNode]
    edges: list[CpgEdge]

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}

    def node(self, nid: int) -> CpgNode:
        return self._by_id[nid]

    def has_node(self, nid: int) -> bool:
        return nid in self._by_id

    def edges_of_kind(self, kind: str) -> list[CpgEdge]:
        return [e for e in self.edges if e.kind == kind]

    def undirected_neighbors(self, nid: int) -> list[tuple[str, int]]:
        """(edge kind, neighbor) over the union multigraph, both directions.

        A self-loop contributes its endpoint twice, once per direction.
        """
        out = []
        for e in self.edges:
            if e.src == nid:
                out.append((e.kind, e.dst))
            if e.dst == nid:
                out.append((e.kind, e.src))
        return out

    def degree(self, nid: int) -> int:
        return len(self.undirected_neighbors(nid))


# --------------------------------------------------------------------------
# CFG construction
# --------------------------------------------------------------------------

def build_cfg(tree: Ast) -> Cfg:
    """Lower a function AST to its statement-level CFG.

    If/While/For become condition nodes with true/false out-edges; a For's
    init and step clauses are CFG nodes of their own; return connects to
    Exit; statement lists chain by fallthrough.
    """
    entry = len(tree.nodes)
    exit_ = entry + 1
    edges: list[CfgEdge] = []

    def emit(src: int, dst: int, branch: str = "uncond"):
        edges.append(CfgEdge(src, dst, branch))

    def stmt_head(node: AstNode) -> int:
        """First CFG node of a statement, -1 if it generates none (empty blocks)."""
        if node.kind == "For":
            return stmt_head(tree.nodes[node.children[0]])
        if node.kind == "Block":
            for s in tree.child_nodes(node):
                head = stmt_head(s)
                if head != -1:
                    return head
            return -1
        return node.id

    def wire_list(stmts: list[AstNode], follow: int):
        """Wire a statement list whose normal continuation is `follow`."""
        for i, stmt in enumerate(stmts):
            nxt = first_reachable(stmts[i + 1 :], follow)
            wire_stmt(stmt, nxt)

    def first_reachable(rest: list[AstNode], follow: int) -> int:
        for s in rest:
            head = stmt_head(s)
            if head != -1:
                return head
        return follow

    def wire_stmt(node: AstNode, follow: int):
        kind = node.kind
        if kind in ("Decl", "Assign", "Call"):
            emit(node.id, follow)
        elif kind == "Return":
            emit(node.id, exit_)
        elif kind == "If":
            kids = tree.child_nodes(node)
            then_head = branch_head(kids[1], follow)
            emit(node.id, then_head, "true")
            wire_stmt(kids[1], follow)
            if len(kids) == 3:
                else_head = branch_head(kids[2], follow)
                emit(node.id, else_head, "false")
                wire_stmt(kids[2], follow)
            else:
                emit(node.id, follow, "false")
        elif kind == "While":
            kids = tree.child_nodes(node)
            body_head = branch_head(kids[1], node.id)
            emit(node.id, body_head, "true")
            emit(node.id, follow, "false")
            wire_stmt(kids[1], node.id)
        elif kind == "For":
            init, _cond, step, body = tree.child_nodes(node)
            emit(init.id, node.id)
            body_head = branch_head(body, step.id)
            emit(node.id, body_head, "true")
            emit(node.id, follow, "false")
            wire_stmt(body, step.id)
            emit(step.id, node.id)
        elif kind == "Block":
            kids = tree.child_nodes(node)
            wire_list(kids, follow)
        else:  # pragma: no cover - parser only yields statement kinds here
            raise AssertionError(f"unexpected statement kind {kind}")

    def branch_head(node: AstNode, follow: int) -> int:
        head = stmt_head(node)
        return follow if head == -1 else head

    root = tree.root
    body = tree.nodes[root.children[-1]]
    body_stmts = tree.child_nodes(body)
    emit(entry, first_reachable(body_stmts, exit_))
    wire_list(body_stmts, exit_)

    # Prune anything not reachable from Entry (e.g. code after a return).
    succ: dict[int, list[int]] = {}
    for e in edges:
        succ.setdefault(e.src, []).append(e.dst)
    reachable = {entry}
    stack = [entry]
    while stack:
        n = stack.pop()
        for m in succ.get(n, ()):
            if m not in reachable:
                reachable.add(m)
                stack.append(m)
    kept_edges = [e for e in edges if e.src in reachable and e.dst in reachable]

    nodes = sorted(reachable - {entry, exit_})
    return Cfg(nodes=[entry, *nodes, exit_] if exit_ in reachable else [entry, *nodes],
               edges=kept_edges, entry=entry, exit=exit_)


# --------------------------------------------------------------------------
# Post-dominators and control dependence
# --------------------------------------------------------------------------

def post_dominators(cfg: Cfg) -> dict[int, int]:
    """Immediate post-dominator of every node except Exit.

    Simple set-intersection fixpoint on the reversed graph; fine at the
    function sizes this pipeline sees.
    """
    succ: dict[int, list[int]] = {n: [] for n in cfg.nodes}
    for e in cfg.edges:
        succ[e.src].append(e.dst)

    # Every node must reach Exit.
    reaches_exit = {cfg.exit}
    pred: dict[int, list[int]] = {n: [] for n in cfg.nodes}
    for e in cfg.edges:
        pred[e.dst].append(e.src)
    stack = [cfg.exit]
    while stack:
        n = stack.pop()
        for m in pred[n]:
            if m not in reaches_exit:
                reaches_exit.add(m)
                stack.append(m)
    missing = [n for n in cfg.nodes if n not in reaches_exit]
    if missing:
        raise AnalysisError(f"nodes cannot reach Exit: {sorted(missing)}")

    all_nodes = set(cfg.nodes)
    pdom: dict[int, set[int]] = {n: set(all_nodes) for n in cfg.nodes}
    pdom[cfg.exit] = {cfg.exit}
    order = [n for n in cfg.nodes if n != cfg.exit]
    changed = True
    while changed:
        changed = False
        for n in order:
            succ_sets = [pdom[s] for s in succ[n]]
            new = set.intersection(*succ_sets) if succ_sets else set()
            new = new | {n}
            if new != pdom[n]:
                pdom[n] = new
                changed = True

    ipdom: dict[int, int] = {}
    for n in cfg.nodes:
        if n == cfg.exit:
            continue
        strict = pdom[n] - {n}
        # The immediate post-dominator is the strict one closest to n, i.e.
        # the one with the largest strict-postdominator count of its own.
        ipdom[n] = max(strict, key=lambda p: (len(pdom[p]), p))
    return ipdom


def control_dependence(cfg: Cfg, ipdom: dict[int, int]) -> list[tuple[int, int, str]]:
    """(governor, dependent, branch) triples, self-dependences dropped.

    Standard post-dominator-tree walk: for each branch edge (c, t, b), every
    node on the ipdom chain from t up to (exclusive) ipdom(c) is control
    dependent on (c, b).
    """
    out: set[tuple[int, int, str]] = set()
    for e in cfg.edges:
        if e.branch == "uncond":
            continue
        stop = ipdom[e.src]
        w = e.dst
        guard = 0
        while w != stop:
            if w != e.src:
                out.add((e.src, w, e.branch))
            if w == cfg.exit:
                break
            w = ipdom[w]
            guard += 1
            if guard > len(cfg.nodes) + 1:  # pragma: no cover - ipdom is acyclic
                raise AnalysisError("ipdom chain does not terminate")
    return sorted(out)


# --------------------------------------------------------------------------
# Def/use extraction and reaching definitions
# --------------------------------------------------------------------------

def _idents_in(tree: Ast, nid: int) -> list[str]:
    node = tree.nodes[nid]
    names: list[str] = []
    if node.kind == "Identifier":
        names.append(node.attr)
    for c in node.children:
        names.extend(_idents_in(tree, c))
    return names


def _address_taken(tree: Ast) -> set[str]:
    """Variables whose address is taken anywhere in the function."""
    taken: set[str] = set()
    for node in tree.nodes:
        if node.kind == "UnaryOp" and node.attr == "&":
            inner = tree.nodes[node.children[0]]
            if inner.kind == "Identifier":
                taken.add(inner.attr)
    return taken


def _args_take_address_of(tree: Ast, call: AstNode) -> set[str]:
    taken: set[str] = set()
    stack = list(call.children)
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if node.kind == "UnaryOp" and node.attr == "&":
            inner = tree.nodes[node.children[0]]
            if inner.kind == "Identifier":
                taken.add(inner.attr)
        stack.extend(node.children)
    return taken


def def_use(tree: Ast, nid: int, address_taken: set[str]) -> tuple[list[tuple[str, bool]], list[str]]:
    """(defs, uses) of one CFG statement node.

    defs is a list of (variable, strong) pairs; strong defs kill other defs
    of the same variable, weak ones do not.  uses is a sorted name list.
    """
    node = tree.nodes[nid]
    kind = node.kind
    defs: list[tuple[str, bool]] = []
    uses: list[str] = []
    if kind == "Decl":
        defs.append((node.attr, True))
        for c in node.children:
            uses.extend(_idents_in(tree, c))
    elif kind == "Assign":
        lhs, rhs = tree.child_nodes(node)
        uses.extend(_idents_in(tree, rhs.id))
        if lhs.kind == "Identifier":
            defs.append((lhs.attr, True))
        elif lhs.kind == "ArrayIndex":
            base = tree.nodes[lhs.children[0]]
            if base.kind == "Identifier":
                defs.append((base.attr, False))
                uses.append(base.attr)
            else:
                uses.extend(_idents_in(tree, lhs.children[0]))
            uses.extend(_idents_in(tree, lhs.children[1]))
        elif lhs.kind == "Deref":
            uses.extend(_idents_in(tree, lhs.id))
            for v in sorted(address_taken):
                defs.append((v, False))
    elif kind == "Call":
        for c in node.children:
            uses.extend(_idents_in(tree, c))
        for v in sorted(_args_take_address_of(tree, node)):
            defs.append((v, False))
    elif kind == "Return":
        for c in node.children:
            uses.extend(_idents_in(tree, c))
    elif kind in ("If", "While"):
        uses.extend(_idents_in(tree, node.children[0]))
    elif kind == "For":
        uses.extend(_idents_in(tree, node.children[1]))
    return defs, sorted(set(uses))


Definition = tuple[int, str]  # (statement id, variable)


def reaching_definitions(cfg: Cfg, tree: Ast) -> dict[int, set[Definition]]:
    """IN set of definitions for every CFG node (least fixpoint).

    Iterates in reverse post-order from Entry until stable.
    """
    taken = _address_taken(tree)
    gen: dict[int, list[tuple[str, bool]]] = {}
    for n in cfg.nodes:
        if n in (cfg.entry, cfg.exit):
            gen[n] = []
        else:
            gen[n], _ = def_use(tree, n, taken)

    succ: dict[int, list[int]] = {n: [] for n in cfg.nodes}
    pred: dict[int, list[int]] = {n: [] for n in cfg.nodes}
    for e in cfg.edges:
        succ[e.src].append(e.dst)
        pred[e.dst].append(e.src)

    # reverse post-order from Entry
    visited: set[int] = set()
    post: list[int] = []

    def dfs(n: int):
        stack = [(n, iter(succ[n]))]
        visited.add(n)
        while stack:
            node, it = stack[-1]
            advanced = False
            for m in it:
                if m not in visited:
                    visited.add(m)
                    stack.append((m, iter(succ[m])))
                    advanced = True
                    break
            if not advanced:
                post.append(node)
                stack.pop()

    dfs(cfg.entry)
    rpo = list(reversed(post))

    in_sets: dict[int, set[Definition]] = {n: set() for n in cfg.nodes}
    out_sets: dict[int, set[Definition]] = {n: set() for n in cfg.nodes}
    changed = True
    while changed:
        changed = False
        for n in rpo:
            new_in: set[Definition] = set()
            for p in pred[n]:
                new_in |= out_sets[p]
            strong_vars = {v for v, strong in gen[n] if strong}
            new_out = {d for d in new_in if d[1] not in strong_vars}
            new_out |= {(n, v) for v, _ in gen[n]}
            if new_in != in_sets[n] or new_out != out_sets[n]:
                in_sets[n] = new_in
                out_sets[n] = new_out
                changed = True
    return in_sets


def data_dependence(rd: dict[int, set[Definition]], cfg: Cfg, tree: Ast) -> list[tuple[int, int, str]]:
    """(def stmt, use stmt, variable) edges from the reaching-definition sets."""
    taken = _address_taken(tree)
    edges: set[tuple[int, int, str]] = set()
    for n in cfg.nodes:
        if n in (cfg.entry, cfg.exit):
            continue
        _, uses = def_use(tree, n, taken)
        for d_node, d_var in rd[n]:
            if d_var in uses:
                edges.add((d_node, n, d_var))
    return sorted(edges)


def build_pdg(cfg: Cfg, tree: Ast) -> PdgEdges:
    ipdom = post_dominators(cfg)
    control = control_dependence(cfg, ipdom)
    rd = reaching_definitions(cfg, tree)
    data = data_dependence(rd, cfg, tree)
    return PdgEdges(control=control, data=data)


# --------------------------------------------------------------------------
# CPG merge and exports
# --------------------------------------------------------------------------

def merge_cpg(tree: Ast, cfg: Cfg, pdg: PdgEdges) -> Cpg:
    """Attach AST, CFG, CDG and DDG edge layers to one shared node set."""
    nodes = [CpgNode(n.id, n.kind, n.attr) for n in tree.nodes]
    nodes.append(CpgNode(cfg.entry, ENTRY_KIND, None))
    nodes.append(CpgNode(cfg.exit, EXIT_KIND, None))
    ids = {n.id for n in nodes}

    edges: list[CpgEdge] = []
    for n in tree.nodes:
        for c in n.children:
            edges.append(CpgEdge(n.id, c, "AST", None))
    for e in cfg.edges:
        tag = None if e.branch == "uncond" else e.branch
        edges.append(CpgEdge(e.src, e.dst, "CFG", tag))
    for gov, dep, branch in pdg.control:
        edges.append(CpgEdge(gov, dep, "CDG", branch))
    for d, u, var in pdg.data:
        edges.append(CpgEdge(d, u, "DDG", var))

    for e in edges:
        if e.src not in ids or e.dst not in ids:
            raise ConsistencyError(f"edge {e} references unknown node id")
    return Cpg(nodes=nodes, edges=edges)


def build_cpg(tree: Ast) -> Cpg:
    """One-call pipeline from an AST to its code property graph."""
    cfg = build_cfg(tree)
    return merge_cpg(tree, cfg, build_pdg(cfg, tree))


def _sorted_edges(cpg: Cpg) -> list[CpgEdge]:
    return sorted(cpg.edges, key=lambda e: (e.src, e.dst, e.kind, e.tag or ""))


_DOT_COLORS = {"AST": "black", "CFG": "blue", "CDG": "red", "DDG": "darkgreen"}


def cpg_to_dot(cpg: Cpg) -> str:
    """Graphviz digraph text, deterministically ordered, edge kinds colored."""
    lines = ["digraph cpg {"]
    for n in sorted(cpg.nodes, key=lambda n: n.id):
        label = f"{n.id}: {n.kind}"
        if n.attr is not None:
            label += f" {n.attr}"
        lines.append(f'  n{n.id} [label="{label}"];')
    for e in _sorted_edges(cpg):
        color = _DOT_COLORS[e.kind]
        label = e.kind if e.tag is None else f"{e.kind}:{e.tag}"
        lines.append(f'  n{e.src} -> n{e.dst} [label="{label}", color="{color}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cpg_to_json(cpg: Cpg) -> str:
    doc = {
        "nodes": [
            {"id": n.id, "kind": n.kind, "attr": n.attr}
            for n in sorted(cpg.nodes, key=lambda n: n.id)
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "kind": e.kind, "tag": e.tag}
            for e in _sorted_edges(cpg)
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def cpg_from_json(text: str) -> Cpg:
    doc = json.loads(text)
    nodes = [CpgNode(r["id"], r["kind"], r["attr"]) for r in doc["nodes"]]
    edges = [CpgEdge(r["src"], r["dst"], r["kind"], r["tag"]) for r in doc["edges"]]
    return Cpg(nodes=nodes, edges=edges)
