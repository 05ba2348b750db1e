"""Tokenizer and recursive-descent parser for the mini-C input language.

The language is a deliberately small C subset: one function per compilation
unit, types limited to ``int``/``bool``/``char`` plus pointers and
fixed-size arrays, statements ``decl | assign | if | while | for | return |
call | block``, and ordinary C expression operators.  Callables are
recognized by name only (``malloc``, ``free``, ``memcpy``, ``strcpy``,
``printf`` need no declaration, and neither does anything else).

AST conventions (load-bearing for the graph layers downstream):

* node ids are dense 0..n-1 in pre-order; children spans nest in parents;
* a ``Function`` node's children are ``Identifier`` (the function name),
  then one ``Param`` per parameter, then the body ``Block``;
* ``Function.attr`` holds the return type text, ``Param.attr``/``Decl.attr``
  the declared name;
* a braced group with exactly one statement collapses to that statement
  wherever the grammar expects a statement; the function body never
  collapses and is always a ``Block``;
* ``If`` has 2 or 3 children (cond, then, optional else); ``While`` has 2
  (cond, body); ``For`` has exactly 4 (init, cond, step, body) and all
  three header clauses are required; ``Return`` has 0 or 1;
* ``Decl`` has no child for a plain declaration, an ``IntLiteral`` child
  for an array size, or an initializer expression child (arrays cannot be
  initialized).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum


class LexError(Exception):
    """Unrecognized byte sequence in the source text."""

    def __init__(self, span: tuple[int, int], message: str):
        super().__init__(f"{message} at offset {span[0]}")
        self.span = span
        self.message = message


class ParseError(Exception):
    """Grammar violation; carries the offending span plus expected/found."""

    def __init__(self, span: tuple[int, int], expected: str, found: str):
        super().__init__(f"expected {expected}, found {found} at offset {span[0]}")
        self.span = span
        self.expected = expected
        self.found = found


class TokenKind(Enum):
    IDENT = "identifier"
    INT = "integer-literal"
    STRING = "string-literal"
    KEYWORD = "keyword"
    OP = "operator"
    PUNCT = "punctuation"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    span: tuple[int, int]


KEYWORDS = frozenset({"int", "bool", "char", "if", "else", "while", "for", "return"})

# Longest-match first.
OPERATORS = ("==", "!=", "<=", ">=", "&&", "||", "<", ">", "+", "-", "*", "/", "%", "!", "&", "=")
PUNCTUATION = ("(", ")", "{", "}", "[", "]", ";", ",")

NODE_KINDS = (
    "Function", "Param", "Block", "Decl", "If", "While", "For", "Return",
    "Assign", "Call", "BinaryOp", "UnaryOp", "ArrayIndex", "Deref",
    "Identifier", "IntLiteral", "StrLiteral",
)

BUILTIN_CALLS = frozenset({"malloc", "free", "memcpy", "strcpy", "printf"})

# Brace/paren nesting beyond this raises ParseError instead of blowing the
# Python stack (each level costs several interpreter frames); keeps parse()
# total on adversarial input.
MAX_NESTING = 64


@dataclass
class AstNode:
    id: int
    kind: str
    children: list[int]
    attr: str | None
    span: tuple[int, int]


@dataclass
class Ast:
    """A parsed function: nodes indexed by id, root at id 0."""

    nodes: list[AstNode]

    @property
    def root(self) -> AstNode:
        return self.nodes[0]

    def child_nodes(self, node: AstNode) -> list[AstNode]:
        return [self.nodes[c] for c in node.children]

    def __len__(self) -> int:
        return len(self.nodes)


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(source: str) -> list[Token]:
    """Lex mini-C source into tokens; comments and whitespace are skipped.

    Raises LexError on any byte the lexical grammar does not cover
    (including an unterminated string or block comment).
    """
    tokens: list[Token] = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise LexError((i, n), "unterminated block comment")
            i = j + 2
            continue
        if _is_ident_start(ch):
            j = i + 1
            while j < n and _is_ident_char(source[j]):
                j += 1
            text = source[i:j]
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENT
            tokens.append(Token(kind, text, (i, j)))
            i = j
            continue
        if ch.isdigit():
            j = i + 1
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token(TokenKind.INT, source[i:j], (i, j)))
            i = j
            continue
        if ch == '"':
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\\" and j + 1 < n:
                    j += 2
                else:
                    j += 1
            if j >= n:
                raise LexError((i, n), "unterminated string literal")
            tokens.append(Token(TokenKind.STRING, source[i : j + 1], (i, j + 1)))
            i = j + 1
            continue
        matched = False
        for op in OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token(TokenKind.OP, op, (i, i + len(op))))
                i += len(op)
                matched = True
                break
        if matched:
            continue
        if ch in PUNCTUATION:
            tokens.append(Token(TokenKind.PUNCT, ch, (i, i + 1)))
            i += 1
            continue
        raise LexError((i, i + 1), f"unrecognized character {ch!r}")
    return tokens


class _NodeDraft:
    """Mutable tree node used while parsing; flattened to ids afterwards."""

    __slots__ = ("kind", "children", "attr", "span")

    def __init__(self, kind: str, children: list["_NodeDraft"], attr: str | None, span: tuple[int, int]):
        self.kind = kind
        self.children = children
        self.attr = attr
        self.span = span


# binary operators by ascending precedence tier
_BINARY_TIERS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
)


class _Parser:
    def __init__(self, tokens: list[Token], end: int):
        self.tokens = tokens
        self.pos = 0
        self.end_offset = end
        self.depth = 0

    # --- token helpers -------------------------------------------------

    def _peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _span_here(self) -> tuple[int, int]:
        tok = self._peek()
        return tok.span if tok else (self.end_offset, self.end_offset)

    def _found(self) -> str:
        tok = self._peek()
        return repr(tok.text) if tok else "end of input"

    def _error(self, expected: str) -> ParseError:
        return ParseError(self._span_here(), expected, self._found())

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _at(self, text: str) -> bool:
        tok = self._peek()
        return tok is not None and tok.text == text

    def _at_kind(self, kind: TokenKind) -> bool:
        tok = self._peek()
        return tok is not None and tok.kind == kind

    def _expect(self, text: str) -> Token:
        if not self._at(text):
            raise self._error(repr(text))
        return self._advance()

    def _expect_ident(self) -> Token:
        if not self._at_kind(TokenKind.IDENT):
            raise self._error("identifier")
        return self._advance()

    def _enter(self):
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise ParseError(self._span_here(), "shallower nesting", "nesting too deep")

    def _leave(self):
        self.depth -= 1

    def _last_end(self) -> int:
        """End offset of the most recently consumed token."""
        return self.tokens[self.pos - 1].span[1] if self.pos else 0

    # --- grammar productions -------------------------------------------

    def parse_type(self) -> str:
        tok = self._peek()
        if tok is None or tok.text not in ("int", "bool", "char"):
            raise self._error("type keyword")
        base = self._advance().text
        stars = ""
        while self._at("*"):
            self._advance()
            stars += "*"
        return base + stars

    def parse_function(self) -> _NodeDraft:
        start = self._span_here()[0]
        rtype = self.parse_type()
        name_tok = self._expect_ident()
        name = _NodeDraft("Identifier", [], name_tok.text, name_tok.span)
        self._expect("(")
        params: list[_NodeDraft] = []
        if not self._at(")"):
            while True:
                pstart = self._span_here()[0]
                self.parse_type()  # type is not recorded; dataflow only needs the name
                ptok = self._expect_ident()
                params.append(_NodeDraft("Param", [], ptok.text, (pstart, ptok.span[1])))
                if self._at(","):
                    self._advance()
                    continue
                break
        self._expect(")")
        body = self.parse_block()
        tok = self._peek()
        if tok is not None:
            raise ParseError(tok.span, "end of input", repr(tok.text))
        return _NodeDraft("Function", [name, *params, body], rtype, (start, body.span[1]))

    def parse_block(self) -> _NodeDraft:
        self._enter()
        open_tok = self._expect("{")
        stmts: list[_NodeDraft] = []
        while not self._at("}"):
            if self._peek() is None:
                raise self._error("'}'")
            stmts.append(self.parse_statement())
        close_tok = self._expect("}")
        self._leave()
        return _NodeDraft("Block", stmts, None, (open_tok.span[0], close_tok.span[1]))

    def _block_or_stmt(self) -> _NodeDraft:
        """A statement position: singleton braced groups collapse."""
        stmt = self.parse_statement()
        if stmt.kind == "Block" and len(stmt.children) == 1:
            return stmt.children[0]
        return stmt

    def parse_statement(self) -> _NodeDraft:
        tok = self._peek()
        if tok is None:
            raise self._error("statement")
        if tok.text == "{":
            block = self.parse_block()
            if len(block.children) == 1:
                return block.children[0]
            return block
        if tok.text in ("int", "bool", "char"):
            decl = self.parse_decl_core()
            semi = self._expect(";")
            decl.span = (decl.span[0], semi.span[1])
            return decl
        if tok.text == "if":
            return self.parse_if()
        if tok.text == "while":
            return self.parse_while()
        if tok.text == "for":
            return self.parse_for()
        if tok.text == "return":
            start = self._advance().span[0]
            if self._at(";"):
                semi = self._advance()
                return _NodeDraft("Return", [], None, (start, semi.span[1]))
            expr = self.parse_expression()
            semi = self._expect(";")
            return _NodeDraft("Return", [expr], None, (start, semi.span[1]))
        # Remaining: assignment or call statement, both starting with an
        # expression-ish prefix.
        stmt = self.parse_assign_or_call_core()
        semi = self._expect(";")
        stmt.span = (stmt.span[0], semi.span[1])
        return stmt

    def parse_decl_core(self) -> _NodeDraft:
        start = self._span_here()[0]
        self.parse_type()
        name_tok = self._expect_ident()
        children: list[_NodeDraft] = []
        end = name_tok.span[1]
        if self._at("["):
            self._advance()
            size_tok = self._peek()
            if size_tok is None or size_tok.kind != TokenKind.INT:
                raise self._error("array size literal")
            self._advance()
            children.append(_NodeDraft("IntLiteral", [], size_tok.text, size_tok.span))
            end = self._expect("]").span[1]
        elif self._at("="):
            self._advance()
            init = self.parse_expression()
            children.append(init)
            end = init.span[1]
        return _NodeDraft("Decl", children, name_tok.text, (start, end))

    def parse_assign_or_call_core(self) -> _NodeDraft:
        """An assignment ``lvalue = expr`` or a bare call, no semicolon."""
        start = self._span_here()[0]
        expr = self.parse_expression()
        if self._at("="):
            if expr.kind not in ("Identifier", "Deref", "ArrayIndex"):
                raise ParseError(expr.span, "lvalue (identifier, *deref or index)", expr.kind)
            self._advance()
            rhs = self.parse_expression()
            return _NodeDraft("Assign", [expr, rhs], None, (start, rhs.span[1]))
        if expr.kind != "Call":
            raise ParseError(expr.span, "assignment or call statement", expr.kind)
        return expr

    def parse_if(self) -> _NodeDraft:
        self._enter()
        start = self._expect("if").span[0]
        self._expect("(")
        cond = self.parse_expression()
        self._expect(")")
        then = self._block_or_stmt()
        children = [cond, then]
        # A collapsed singleton branch keeps its own span, so the construct
        # end is the last consumed token (covers the closing brace).
        end = self._last_end()
        if self._at("else"):
            self._advance()
            other = self._block_or_stmt()
            children.append(other)
            end = self._last_end()
        self._leave()
        return _NodeDraft("If", children, None, (start, end))

    def parse_while(self) -> _NodeDraft:
        self._enter()
        start = self._expect("while").span[0]
        self._expect("(")
        cond = self.parse_expression()
        self._expect(")")
        body = self._block_or_stmt()
        self._leave()
        return _NodeDraft("While", [cond, body], None, (start, self._last_end()))

    def parse_for(self) -> _NodeDraft:
        self._enter()
        start = self._expect("for").span[0]
        self._expect("(")
        if self._at_kind(TokenKind.KEYWORD) and self._peek().text in ("int", "bool", "char"):
            init = self.parse_decl_core()
        else:
            init = self.parse_assign_or_call_core()
            if init.kind != "Assign":
                raise ParseError(init.span, "declaration or assignment", init.kind)
        self._expect(";")
        cond = self.parse_expression()
        self._expect(";")
        step = self.parse_assign_or_call_core()
        if step.kind != "Assign":
            raise ParseError(step.span, "assignment", step.kind)
        self._expect(")")
        body = self._block_or_stmt()
        self._leave()
        return _NodeDraft("For", [init, cond, step, body], None, (start, self._last_end()))

    def parse_expression(self) -> _NodeDraft:
        self._enter()
        try:
            return self._parse_binary(0)
        finally:
            self._leave()

    def _parse_binary(self, tier: int) -> _NodeDraft:
        if tier >= len(_BINARY_TIERS):
            return self._parse_unary()
        ops = _BINARY_TIERS[tier]
        left = self._parse_binary(tier + 1)
        while True:
            tok = self._peek()
            if tok is None or tok.kind != TokenKind.OP or tok.text not in ops:
                return left
            self._advance()
            right = self._parse_binary(tier + 1)
            left = _NodeDraft("BinaryOp", [left, right], tok.text, (left.span[0], right.span[1]))

    def _parse_unary(self) -> _NodeDraft:
        tok = self._peek()
        if tok is not None and tok.kind == TokenKind.OP and tok.text in ("!", "-", "&", "*"):
            self._enter()
            self._advance()
            operand = self._parse_unary()
            self._leave()
            span = (tok.span[0], operand.span[1])
            if tok.text == "*":
                return _NodeDraft("Deref", [operand], None, span)
            return _NodeDraft("UnaryOp", [operand], tok.text, span)
        return self._parse_postfix()

    def _parse_postfix(self) -> _NodeDraft:
        node = self._parse_primary()
        while True:
            if self._at("["):
                self._enter()
                self._advance()
                index = self.parse_expression()
                close = self._expect("]")
                self._leave()
                node = _NodeDraft("ArrayIndex", [node, index], None, (node.span[0], close.span[1]))
                continue
            if self._at("("):
                if node.kind != "Identifier":
                    raise ParseError(node.span, "callable name", node.kind)
                self._enter()
                self._advance()
                args: list[_NodeDraft] = []
                if not self._at(")"):
                    while True:
                        args.append(self.parse_expression())
                        if self._at(","):
                            self._advance()
                            continue
                        break
                close = self._expect(")")
                self._leave()
                node = _NodeDraft("Call", args, node.attr, (node.span[0], close.span[1]))
                continue
            return node

    def _parse_primary(self) -> _NodeDraft:
        tok = self._peek()
        if tok is None:
            raise self._error("expression")
        if tok.kind == TokenKind.IDENT:
            self._advance()
            return _NodeDraft("Identifier", [], tok.text, tok.span)
        if tok.kind == TokenKind.INT:
            self._advance()
            return _NodeDraft("IntLiteral", [], tok.text, tok.span)
        if tok.kind == TokenKind.STRING:
            self._advance()
            return _NodeDraft("StrLiteral", [], tok.text[1:-1], tok.span)
        if tok.text == "(":
            self._enter()
            open_tok = self._advance()
            inner = self.parse_expression()
            close = self._expect(")")
            self._leave()
            # Parens are transparent in the tree but belong to the span, so
            # an enclosing node's span stays balanced.
            inner.span = (open_tok.span[0], close.span[1])
            return inner
        raise self._error("expression")


def _flatten(root: _NodeDraft) -> Ast:
    """Assign dense pre-order ids and freeze drafts into an Ast."""
    nodes: list[AstNode] = []

    def visit(draft: _NodeDraft) -> int:
        nid = len(nodes)
        node = AstNode(nid, draft.kind, [], draft.attr, draft.span)
        nodes.append(node)
        for child in draft.children:
            node.children.append(visit(child))
        return nid

    visit(root)
    return Ast(nodes)


def parse(tokens: list[Token], source_len: int | None = None) -> Ast:
    """Parse a token stream into a function AST with pre-order ids."""
    end = source_len if source_len is not None else (tokens[-1].span[1] if tokens else 0)
    return _flatten(_Parser(tokens, end).parse_function())


def parse_source(source: str) -> Ast:
    """Convenience entry: tokenize then parse one function."""
    return parse(tokenize(source), len(source))


def _parse_entry(tokens: list[Token], end: int, production: str) -> Ast:
    """Parse a specific nonterminal; used by span-soundness checks."""
    p = _Parser(tokens, end)
    if production == "function":
        draft = p.parse_function()
    elif production == "block":
        draft = p.parse_block()
    elif production == "statement":
        draft = p.parse_statement()
    elif production == "decl_core":  # for-header form, no semicolon
        draft = p.parse_decl_core()
    elif production == "assign_core":
        draft = p.parse_assign_or_call_core()
    elif production == "expression":
        draft = p.parse_expression()
    elif production == "param":
        start = p._span_here()[0]
        p.parse_type()
        tok = p._expect_ident()
        draft = _NodeDraft("Param", [], tok.text, (start, tok.span[1]))
    else:
        raise ValueError(f"unknown production {production!r}")
    if p._peek() is not None and production == "function":
        raise p._error("end of input")
    return _flatten(draft)


def structurally_equal(a: Ast, b: Ast) -> bool:
    """Compare kinds/attrs/shape, ignoring ids and spans."""
    if len(a) != len(b):
        return False
    # Pre-order ids make positional comparison sufficient.
    for na, nb in zip(a.nodes, b.nodes):
        if na.kind != nb.kind or na.attr != nb.attr or len(na.children) != len(nb.children):
            return False
        if [c for c in na.children] != [c for c in nb.children]:
            return False
    return True


def ast_to_json(tree: Ast) -> str:
    """Canonical JSON for an AST: stable key order, explicit ids, 2-space indent."""
    doc = {
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind,
                "attr": n.attr,
                "children": list(n.children),
                "span": [n.span[0], n.span[1]],
            }
            for n in tree.nodes
        ]
    }
    return json.dumps(doc, indent=2) + "\n"


def ast_from_json(text: str) -> Ast:
    doc = json.loads(text)
    nodes = [
        AstNode(rec["id"], rec["kind"], list(rec["children"]), rec["attr"], (rec["span"][0], rec["span"][1]))
        for rec in doc["nodes"]
    ]
    nodes.sort(key=lambda n: n.id)
    return Ast(nodes)
