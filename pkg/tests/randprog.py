"""Grammar-driven random mini-C program generator for property tests."""

from __future__ import annotations

import random

_BASE_TYPES = ("int", "bool", "char")
_CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
_ARITH_OPS = ("+", "-", "*", "/", "%")


class ProgGen:
    """Samples syntactically valid functions from the mini-C grammar."""

    def __init__(self, rng: random.Random, max_stmts: int = 4, max_depth: int = 2,
                 allow_loops: bool = True):
        self.rng = rng
        self.max_stmts = max_stmts
        self.max_depth = max_depth
        self.allow_loops = allow_loops
        self.counter = 0
        self.scalars: list[str] = []
        self.arrays: list[str] = []

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"

    def expr(self, depth: int = 0) -> str:
        r = self.rng.random()
        if depth >= self.max_depth or r < 0.35 or not self.scalars:
            if self.scalars and self.rng.random() < 0.6:
                return self.rng.choice(self.scalars)
            return str(self.rng.randint(0, 99))
        if r < 0.55:
            return f"{self.expr(depth + 1)} {self.rng.choice(_ARITH_OPS)} {self.expr(depth + 1)}"
        if r < 0.7:
            return f"{self.expr(depth + 1)} {self.rng.choice(_CMP_OPS)} {self.expr(depth + 1)}"
        if r < 0.8 and self.arrays:
            return f"{self.rng.choice(self.arrays)}[{self.expr(depth + 1)}]"
        if r < 0.9:
            return f"(!{self.expr(depth + 1)})"
        return f"(-{self.expr(depth + 1)})"

    def cond(self) -> str:
        return f"{self.expr(1)} {self.rng.choice(_CMP_OPS)} {self.expr(1)}"

    def stmt(self, depth: int) -> str:
        pad = "    " * (depth + 1)
        choices = ["decl", "assign", "call"]
        if depth < self.max_depth:
            choices += ["if"]
            if self.allow_loops:
                choices += ["while", "for"]
        kind = self.rng.choice(choices)
        if kind == "decl":
            if self.rng.random() < 0.2:
                name = self.fresh("a")
                self.arrays.append(name)
                return f"{pad}int {name}[{self.rng.randint(2, 16)}];"
            name = self.fresh("v")
            self.scalars.append(name)
            return f"{pad}int {name} = {self.expr(1)};"
        if kind == "assign" and self.scalars:
            if self.arrays and self.rng.random() < 0.3:
                return f"{pad}{self.rng.choice(self.arrays)}[{self.expr(1)}] = {self.expr(1)};"
            return f"{pad}{self.rng.choice(self.scalars)} = {self.expr(1)};"
        if kind == "assign":
            name = self.fresh("v")
            self.scalars.append(name)
            return f"{pad}int {name} = {self.expr(1)};"
        if kind == "call":
            return f'{pad}printf("x{self.rng.randint(0, 9)}");'
        if kind == "if":
            body = self.block(depth + 1, self.rng.randint(1, 2))
            if self.rng.random() < 0.5:
                other = self.block(depth + 1, self.rng.randint(1, 2))
                return f"{pad}if ({self.cond()}) {body}\n{pad}else {other}"
            return f"{pad}if ({self.cond()}) {body}"
        if kind == "while":
            body = self.block(depth + 1, self.rng.randint(1, 2))
            return f"{pad}while ({self.cond()}) {body}"
        # for
        if self.scalars and self.rng.random() < 0.5:
            var = self.rng.choice(self.scalars)
            init = f"{var} = 0"
        else:
            var = self.fresh("v")
            self.scalars.append(var)
            init = f"int {var} = 0"
        body = self.block(depth + 1, self.rng.randint(1, 2))
        return f"{pad}for ({init}; {var} < {self.rng.randint(1, 8)}; {var} = {var} + 1) {body}"

    def block(self, depth: int, n_stmts: int) -> str:
        pad = "    " * depth
        stmts = [self.stmt(depth) for _ in range(n_stmts)]
        return "{\n" + "\n".join(stmts) + f"\n{pad}}}"

    def function(self) -> str:
        self.counter = 0
        self.scalars = []
        self.arrays = []
        n_params = self.rng.randint(0, 2)
        params = []
        for _ in range(n_params):
            name = self.fresh("p")
            self.scalars.append(name)
            params.append(f"int {name}")
        header = f"int fn({', '.join(params)})"
        n = self.rng.randint(1, self.max_stmts)
        body_stmts = [self.stmt(0) for _ in range(n)]
        body_stmts.append(f"    return {self.expr(1)};")
        return header + " {\n" + "\n".join(body_stmts) + "\n}\n"


def random_programs(seed: int, count: int, **kwargs) -> list[str]:
    rng = random.Random(seed)
    gen = ProgGen(rng, **kwargs)
    return [gen.function() for _ in range(count)]


def random_small_cfg_programs(seed: int, count: int, max_cfg_nodes: int = 8) -> list[str]:
    """Programs whose statement-level CFGs have at most max_cfg_nodes nodes."""
    from vulnpipe.frontend import parse_source
    from vulnpipe.graphs import build_cfg

    rng = random.Random(seed)
    gen = ProgGen(rng, max_stmts=3, max_depth=2)
    out: list[str] = []
    while len(out) < count:
        src = gen.function()
        cfg = build_cfg(parse_source(src))
        if len(cfg.nodes) <= max_cfg_nodes:
            out.append(src)
    return out
