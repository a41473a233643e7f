"""Token-level extraction-rule language: parser, canonical printer, compiler.

A rule file is a sequence of bindings and rules::

    $StartISIN = (
        /ISIN/ /:/ |
        /Codice/ /del/ /Prodotto|prodotto/ /:/
    )
    $code = "/([A-Za-z][A-Za-z][0-9]{10})/"
    {
        ruleType: "tokens",
        pattern: ( ($StartISIN) (?$CodeISIN [{word:$code} & {SECTION:"SECTION_PRODUCT"}]+?) (/*/) ),
        action: ( Annotate($CodeISIN, ISIN, "ISIN") )
    }

Pattern atoms match whole tokens: ``/regex/`` anchors a character regex
against the token text, ``/*/`` matches any token, ``[{key:value} & ...]``
is a conjunction over token text (key ``word``) and annotations, ``$name``
references an earlier binding. ``| ? * + *? +? {n,m}`` behave as in
backtracking regexes with ordered alternation. Line comments start ``//``.

Compilation turns each pattern into a small instruction program over token
predicates with capture slots; execution lives in :mod:`kidex.matcher`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional


class RuleError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)


class RuleParseError(RuleError):
    pass


class RuleCompileError(RuleError):
    pass


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_IDENT_START = re.compile(r"[A-Za-z_]")
_IDENT_CONT = re.compile(r"[A-Za-z0-9_]")
_OP_CHARS = set("()[]{}|&=:,?*+")


@dataclass(frozen=True)
class Tok:
    kind: str  # pname | ident | int | string | regex | op | eof
    value: str
    line: int
    col: int


def _lex(source: str) -> list[Tok]:
    toks: list[Tok] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def advance(k: int = 1) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if i < n and source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance()
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            while i < n and source[i] != "\n":
                advance()
            continue
        start_line, start_col = line, col
        if ch == "/":
            advance()
            body: list[str] = []
            while i < n and source[i] != "/":
                if source[i] == "\n":
                    raise RuleParseError("unterminated token regex", start_line, start_col)
                if source[i] == "\\" and i + 1 < n:
                    nxt = source[i + 1]
                    body.append("/" if nxt == "/" else "\\" + nxt)
                    advance(2)
                else:
                    body.append(source[i])
                    advance()
            if i >= n:
                raise RuleParseError("unterminated token regex", start_line, start_col)
            advance()
            toks.append(Tok("regex", "".join(body), start_line, start_col))
            continue
        if ch == '"':
            advance()
            body = []
            while i < n and source[i] != '"':
                if source[i] == "\n":
                    raise RuleParseError("unterminated string", start_line, start_col)
                if source[i] == "\\" and i + 1 < n:
                    nxt = source[i + 1]
                    body.append(nxt if nxt in '"\\' else "\\" + nxt)
                    advance(2)
                else:
                    body.append(source[i])
                    advance()
            if i >= n:
                raise RuleParseError("unterminated string", start_line, start_col)
            advance()
            toks.append(Tok("string", "".join(body), start_line, start_col))
            continue
        if ch == "$":
            advance()
            if i >= n or not _IDENT_START.match(source[i]):
                raise RuleParseError("expected a name after '$'", start_line, start_col)
            s = i
            while i < n and _IDENT_CONT.match(source[i]):
                advance()
            toks.append(Tok("pname", source[s:i], start_line, start_col))
            continue
        if ch.isdigit():
            s = i
            while i < n and source[i].isdigit():
                advance()
            toks.append(Tok("int", source[s:i], start_line, start_col))
            continue
        if _IDENT_START.match(ch):
            s = i
            while i < n and _IDENT_CONT.match(source[i]):
                advance()
            toks.append(Tok("ident", source[s:i], start_line, start_col))
            continue
        if ch in _OP_CHARS:
            if ch in "*+" and i + 1 < n and source[i + 1] == "?":
                toks.append(Tok("op", ch + "?", start_line, start_col))
                advance(2)
            else:
                toks.append(Tok("op", ch, start_line, start_col))
                advance()
            continue
        raise RuleParseError(f"unexpected character {ch!r}", start_line, start_col)
    toks.append(Tok("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TokenRegex:
    """Character regex anchored against the whole token text; body ``*`` is the any-token wildcard."""
    body: str
    pos: Optional[tuple[int, int]] = field(default=None, compare=False)

    @property
    def wildcard(self) -> bool:
        return self.body == "*"


@dataclass(frozen=True)
class Constraint:
    """One ``{key:value}`` clause; ``kind`` is lit, regex or ref."""
    key: str
    kind: str
    value: str
    pos: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(frozen=True)
class AttrSet:
    constraints: tuple[Constraint, ...]
    pos: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(frozen=True)
class VarRef:
    name: str
    pos: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(frozen=True)
class NamedGroup:
    name: str
    body: "PatternExpr"
    pos: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(frozen=True)
class Seq:
    items: tuple["PatternExpr", ...]


@dataclass(frozen=True)
class Alt:
    options: tuple["PatternExpr", ...]


@dataclass(frozen=True)
class Repeat:
    """Quantifier: ``hi`` is None for unbounded; ``lazy`` only for *? and +?."""
    body: "PatternExpr"
    lo: int
    hi: Optional[int]
    lazy: bool = False


PatternExpr = TokenRegex | AttrSet | VarRef | NamedGroup | Seq | Alt | Repeat


@dataclass(frozen=True)
class AnnotateAction:
    """Annotate(group, KEY, value); value None means the captured tokens' text."""
    group: Optional[str]
    key: str
    value: Optional[str]


@dataclass(frozen=True)
class Rule:
    pattern: PatternExpr
    actions: tuple[AnnotateAction, ...]
    stage: int = 0
    # diagnostics only: source:line, so reprinting must not affect equality
    rule_id: str = field(default="", compare=False)
    pos: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(frozen=True)
class Binding:
    """``$name = (pattern)`` or ``$name = "/char-regex/"``; exactly one side is set."""
    name: str
    pattern: Optional[PatternExpr] = None
    regex: Optional[str] = None
    pos: Optional[tuple[int, int]] = field(default=None, compare=False)


@dataclass(frozen=True)
class RuleFile:
    bindings: tuple[Binding, ...]
    rules: tuple[Rule, ...]

    def binding_map(self) -> dict[str, Binding]:
        return {b.name: b for b in self.bindings}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, source: str, source_name: str):
        self.toks = _lex(source)
        self.i = 0
        self.source_name = source_name
        self.env: dict[str, Binding] = {}
        self._group_cache: dict[str, frozenset[str]] = {}

    def peek(self, ahead: int = 0) -> Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Tok:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def error(self, message: str, tok: Optional[Tok] = None) -> RuleParseError:
        tok = tok or self.peek()
        return RuleParseError(message, tok.line, tok.col)

    def expect_op(self, value: str) -> Tok:
        tok = self.peek()
        if tok.kind != "op" or tok.value != value:
            raise self.error(f"expected {value!r}, found {tok.value or tok.kind!r}")
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Tok:
        tok = self.peek()
        if tok.kind != kind:
            raise self.error(f"expected {what}, found {tok.value or tok.kind!r}")
        return self.next()

    # --- file level ------------------------------------------------------

    def parse_file(self) -> RuleFile:
        bindings: list[Binding] = []
        rules: list[Rule] = []
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "pname":
                bindings.append(self.parse_binding())
            elif tok.kind == "op" and tok.value == "{":
                rules.append(self.parse_rule())
            else:
                raise self.error("expected a '$name =' binding or a '{...}' rule")
        return RuleFile(tuple(bindings), tuple(rules))

    def parse_binding(self) -> Binding:
        name_tok = self.next()
        if name_tok.value in self.env:
            raise self.error(f"duplicate binding ${name_tok.value}", name_tok)
        self.expect_op("=")
        tok = self.peek()
        if tok.kind == "op" and tok.value == "(":
            self.next()
            pattern = self.parse_alt()
            self.expect_op(")")
            binding = Binding(name_tok.value, pattern=pattern,
                              pos=(name_tok.line, name_tok.col))
        elif tok.kind == "string":
            self.next()
            body = tok.value
            if len(body) < 2 or not (body.startswith("/") and body.endswith("/")):
                raise self.error("a string binding must hold a \"/char-regex/\"", tok)
            binding = Binding(name_tok.value, regex=body[1:-1].replace("\\/", "/"),
                              pos=(name_tok.line, name_tok.col))
        else:
            raise self.error("binding must be '( pattern )' or a \"/char-regex/\" string")
        self.env[binding.name] = binding
        return binding

    def parse_rule(self) -> Rule:
        brace = self.expect_op("{")
        self._expect_key("ruleType")
        rtype = self.expect_kind("string", "a string")
        if rtype.value != "tokens":
            raise self.error(f'ruleType must be "tokens", found "{rtype.value}"', rtype)
        self.expect_op(",")
        self._expect_key("pattern")
        self.expect_op("(")
        pattern = self.parse_alt()
        self.expect_op(")")
        self.expect_op(",")
        self._expect_key("action")
        self.expect_op("(")
        actions = [self.parse_action(pattern)]
        while self.peek().kind == "op" and self.peek().value == ",":
            self.next()
            actions.append(self.parse_action(pattern))
        self.expect_op(")")
        stage = 0
        if self.peek().kind == "op" and self.peek().value == ",":
            self.next()
            self._expect_key("stage")
            stage_tok = self.expect_kind("int", "a stage number")
            stage = int(stage_tok.value)
        self.expect_op("}")
        rule_id = f"{self.source_name}:{brace.line}"
        return Rule(pattern, tuple(actions), stage, rule_id, pos=(brace.line, brace.col))

    def _expect_key(self, key: str) -> None:
        tok = self.peek()
        if tok.kind != "ident" or tok.value != key:
            raise self.error(f"expected {key!r}, found {tok.value or tok.kind!r}")
        self.next()
        self.expect_op(":")

    def parse_action(self, pattern: PatternExpr) -> AnnotateAction:
        head = self.expect_kind("ident", "'Annotate'")
        if head.value != "Annotate":
            raise self.error(f"unknown action {head.value!r}, expected 'Annotate'", head)
        self.expect_op("(")
        group: Optional[str] = None
        if self.peek().kind == "pname":
            group_tok = self.next()
            group = group_tok.value
            if group not in self._pattern_groups(pattern):
                raise self.error(f"action references group ${group} not bound in the pattern",
                                 group_tok)
            self.expect_op(",")
        key = self.expect_kind("ident", "an annotation key").value
        self.expect_op(",")
        tok = self.peek()
        if tok.kind == "string":
            self.next()
            value: Optional[str] = tok.value
        elif tok.kind == "ident" and tok.value == "CAPTURED_TEXT":
            self.next()
            value = None
        else:
            raise self.error("expected a \"literal\" or CAPTURED_TEXT")
        self.expect_op(")")
        return AnnotateAction(group, key, value)

    def _pattern_groups(self, node: PatternExpr) -> frozenset[str]:
        if isinstance(node, NamedGroup):
            return frozenset({node.name}) | self._pattern_groups(node.body)
        if isinstance(node, Seq):
            out: frozenset[str] = frozenset()
            for item in node.items:
                out |= self._pattern_groups(item)
            return out
        if isinstance(node, Alt):
            out = frozenset()
            for option in node.options:
                out |= self._pattern_groups(option)
            return out
        if isinstance(node, Repeat):
            return self._pattern_groups(node.body)
        if isinstance(node, VarRef):
            if node.name not in self._group_cache:
                binding = self.env[node.name]
                self._group_cache[node.name] = (
                    self._pattern_groups(binding.pattern) if binding.pattern is not None
                    else frozenset())
            return self._group_cache[node.name]
        return frozenset()

    # --- pattern level ----------------------------------------------------

    def parse_alt(self) -> PatternExpr:
        options = [self.parse_seq()]
        while self.peek().kind == "op" and self.peek().value == "|":
            self.next()
            options.append(self.parse_seq())
        return options[0] if len(options) == 1 else Alt(tuple(options))

    def parse_seq(self) -> PatternExpr:
        items: list[PatternExpr] = []
        while True:
            tok = self.peek()
            if tok.kind in ("regex", "pname"):
                items.append(self.parse_quant())
            elif tok.kind == "op" and tok.value in ("(", "["):
                items.append(self.parse_quant())
            else:
                break
        if len(items) == 1:
            return items[0]
        return Seq(tuple(items))

    def parse_quant(self) -> PatternExpr:
        atom = self.parse_atom()
        tok = self.peek()
        if tok.kind == "op" and tok.value in ("?", "*", "+", "*?", "+?"):
            self.next()
            lo, hi = {"?": (0, 1), "*": (0, None), "+": (1, None),
                      "*?": (0, None), "+?": (1, None)}[tok.value]
            return Repeat(atom, lo, hi, lazy=tok.value in ("*?", "+?"))
        if tok.kind == "op" and tok.value == "{" and self.peek(1).kind == "int":
            self.next()
            lo_tok = self.expect_kind("int", "a repeat bound")
            self.expect_op(",")
            hi_tok = self.expect_kind("int", "a repeat bound")
            self.expect_op("}")
            lo, hi = int(lo_tok.value), int(hi_tok.value)
            if lo > hi:
                raise self.error(f"repeat bounds {{{lo},{hi}}} are inverted", lo_tok)
            return Repeat(atom, lo, hi)
        return atom

    def parse_atom(self) -> PatternExpr:
        tok = self.peek()
        if tok.kind == "regex":
            self.next()
            return TokenRegex(tok.value, pos=(tok.line, tok.col))
        if tok.kind == "pname":
            self.next()
            if tok.value not in self.env:
                raise self.error(f"undefined binding ${tok.value}", tok)
            return VarRef(tok.value, pos=(tok.line, tok.col))
        if tok.kind == "op" and tok.value == "[":
            return self.parse_attrset()
        if tok.kind == "op" and tok.value == "(":
            self.next()
            if (self.peek().kind == "op" and self.peek().value == "?"
                    and self.peek(1).kind == "pname"):
                self.next()
                name_tok = self.next()
                body = self.parse_alt()
                self.expect_op(")")
                return NamedGroup(name_tok.value, body, pos=(name_tok.line, name_tok.col))
            inner = self.parse_alt()
            self.expect_op(")")
            return inner
        raise self.error("expected a pattern atom (/regex/, [..], $name or a group)")

    def parse_attrset(self) -> AttrSet:
        open_tok = self.expect_op("[")
        constraints = [self.parse_constraint()]
        while self.peek().kind == "op" and self.peek().value == "&":
            self.next()
            constraints.append(self.parse_constraint())
        self.expect_op("]")
        return AttrSet(tuple(constraints), pos=(open_tok.line, open_tok.col))

    def parse_constraint(self) -> Constraint:
        self.expect_op("{")
        key_tok = self.expect_kind("ident", "a constraint key")
        self.expect_op(":")
        tok = self.next()
        if tok.kind == "string":
            made = Constraint(key_tok.value, "lit", tok.value, pos=(tok.line, tok.col))
        elif tok.kind == "regex":
            made = Constraint(key_tok.value, "regex", tok.value, pos=(tok.line, tok.col))
        elif tok.kind == "pname":
            binding = self.env.get(tok.value)
            if binding is None:
                raise self.error(f"undefined binding ${tok.value}", tok)
            if binding.regex is None:
                raise self.error(f"${tok.value} is a pattern binding; a constraint "
                                 "needs a \"/char-regex/\" binding", tok)
            made = Constraint(key_tok.value, "ref", tok.value, pos=(tok.line, tok.col))
        else:
            raise self.error("expected a \"literal\", /regex/ or $name constraint value")
        self.expect_op("}")
        return made


def parse_rules(source: str, source_name: str = "rules") -> RuleFile:
    """Parse a rule file; raises RuleParseError with line/column on bad input."""
    return _Parser(source, source_name).parse_file()


def parse_pattern(source: str, bindings: Iterable[Binding] = ()) -> PatternExpr:
    """Parse a bare pattern expression (test helper for pattern-level tooling)."""
    parser = _Parser("", "pattern")
    parser.env = {b.name: b for b in bindings}
    parser.toks = _lex(source)
    parser.i = 0
    expr = parser.parse_alt()
    tok = parser.peek()
    if tok.kind != "eof":
        raise parser.error("trailing input after pattern")
    return expr


# ---------------------------------------------------------------------------
# Canonical printer
# ---------------------------------------------------------------------------

_ALT, _SEQ, _QUANT, _ATOM = range(4)


def _escape_regex_body(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(body[i:i + 2])
            i += 2
        elif ch == "/":
            out.append("\\/")
            i += 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _escape_string(body: str) -> str:
    return body.replace("\\", "\\\\").replace('"', '\\"')


def _print_constraint(c: Constraint) -> str:
    if c.kind == "lit":
        return '{%s:"%s"}' % (c.key, _escape_string(c.value))
    if c.kind == "regex":
        return "{%s:/%s/}" % (c.key, _escape_regex_body(c.value))
    return "{%s:$%s}" % (c.key, c.value)


def print_pattern(node: PatternExpr, prec: int = _ALT) -> str:
    if isinstance(node, TokenRegex):
        return "/%s/" % _escape_regex_body(node.body)
    if isinstance(node, AttrSet):
        return "[%s]" % " & ".join(_print_constraint(c) for c in node.constraints)
    if isinstance(node, VarRef):
        return "$" + node.name
    if isinstance(node, NamedGroup):
        return "(?$%s %s)" % (node.name, print_pattern(node.body, _ALT))
    if isinstance(node, Seq):
        if not node.items:
            return "()"
        text = " ".join(print_pattern(item, _QUANT) for item in node.items)
        return "(%s)" % text if prec > _SEQ else text
    if isinstance(node, Alt):
        text = " | ".join(print_pattern(o, _SEQ) for o in node.options)
        return "(%s)" % text if prec > _ALT else text
    if isinstance(node, Repeat):
        suffixes = {(0, 1, False): "?", (0, None, False): "*", (1, None, False): "+",
                    (0, None, True): "*?", (1, None, True): "+?"}
        suffix = suffixes.get((node.lo, node.hi, node.lazy), "{%d,%d}" % (node.lo, node.hi or 0))
        text = print_pattern(node.body, _ATOM) + suffix
        return "(%s)" % text if prec > _QUANT else text
    raise TypeError(f"not a pattern node: {node!r}")


def _print_action(action: AnnotateAction) -> str:
    value = "CAPTURED_TEXT" if action.value is None else '"%s"' % _escape_string(action.value)
    if action.group is None:
        return "Annotate(%s, %s)" % (action.key, value)
    return "Annotate($%s, %s, %s)" % (action.group, action.key, value)


def print_rules(rule_file: RuleFile) -> str:
    """Canonical textual form; parse(print_rules(parse(s))) == parse(s)."""
    lines: list[str] = []
    for binding in rule_file.bindings:
        if binding.pattern is not None:
            lines.append("$%s = ( %s )" % (binding.name, print_pattern(binding.pattern, _ALT)))
        else:
            lines.append('$%s = "/%s/"' % (binding.name,
                                           _escape_string(_escape_regex_body(binding.regex))))
    for rule in rule_file.rules:
        parts = ['ruleType: "tokens"',
                 "pattern: ( %s )" % print_pattern(rule.pattern, _ALT),
                 "action: ( %s )" % ", ".join(_print_action(a) for a in rule.actions)]
        if rule.stage:
            parts.append("stage: %d" % rule.stage)
        lines.append("{ %s }" % ", ".join(parts))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Predicates and compiled form
# ---------------------------------------------------------------------------

class AnyPred:
    def test(self, ctx, i: int) -> bool:
        return True

    def describe(self) -> str:
        return "/*/"


class TextRegexPred:
    __slots__ = ("rx",)

    def __init__(self, rx: re.Pattern):
        self.rx = rx

    def test(self, ctx, i: int) -> bool:
        return self.rx.fullmatch(ctx.token_text(i)) is not None

    def describe(self) -> str:
        return f"/{self.rx.pattern}/"


class TextEqPred:
    __slots__ = ("value",)

    def __init__(self, value: str):
        self.value = value

    def test(self, ctx, i: int) -> bool:
        return ctx.token_text(i) == self.value

    def describe(self) -> str:
        return f'{{word:"{self.value}"}}'


class AnnEqPred:
    __slots__ = ("key", "value")

    def __init__(self, key: str, value: str):
        self.key = key
        self.value = value

    def test(self, ctx, i: int) -> bool:
        return self.value in ctx.ann_values(self.key, i)

    def describe(self) -> str:
        return f'{{{self.key}:"{self.value}"}}'


class AnnRegexPred:
    __slots__ = ("key", "rx")

    def __init__(self, key: str, rx: re.Pattern):
        self.key = key
        self.rx = rx

    def test(self, ctx, i: int) -> bool:
        return any(self.rx.fullmatch(v) for v in ctx.ann_values(self.key, i))

    def describe(self) -> str:
        return f"{{{self.key}:/{self.rx.pattern}/}}"


class AndPred:
    __slots__ = ("preds",)

    def __init__(self, preds: tuple):
        self.preds = preds

    def test(self, ctx, i: int) -> bool:
        return all(p.test(ctx, i) for p in self.preds)

    def describe(self) -> str:
        return "[" + " & ".join(p.describe() for p in self.preds) + "]"


# instruction opcodes; programs are tuples of (op, a, b)
OP_PRED, OP_SPLIT, OP_JMP, OP_GSTART, OP_GEND, OP_SETPOS, OP_PROGRESS, OP_MATCH = range(8)


@dataclass(frozen=True)
class CompiledPattern:
    """Backtracking program over token predicates with capture slots.

    ``first_preds`` is a prefilter: the set of predicates one of which must
    accept the first token of any non-empty match. ``None`` means the
    pattern may match the empty token sequence, so every start offset must
    be attempted.
    """
    instrs: tuple
    n_regs: int
    first_preds: Optional[tuple]


@dataclass(frozen=True)
class CompiledRule:
    rule_id: str
    stage: int
    pattern: CompiledPattern
    actions: tuple[AnnotateAction, ...]


@dataclass(frozen=True)
class CompiledRules:
    """Rules grouped by ascending stage, file order preserved within a stage."""
    stages: tuple[tuple[int, tuple[CompiledRule, ...]], ...]

    def all_rules(self) -> list[CompiledRule]:
        return [rule for _, rules in self.stages for rule in rules]


class _PatternCompiler:
    def __init__(self, env: dict[str, Binding]):
        self.env = env
        self.instrs: list = []
        self.n_regs = 0

    def emit(self, op: int, a=None, b=None) -> int:
        self.instrs.append([op, a, b])
        return len(self.instrs) - 1

    def compile(self, node: PatternExpr) -> CompiledPattern:
        self._node(node)
        self.emit(OP_MATCH)
        instrs = tuple(tuple(ins) for ins in self.instrs)
        return CompiledPattern(instrs, self.n_regs, _first_preds(instrs))

    def _regex(self, body: str, pos) -> re.Pattern:
        try:
            return re.compile(body)
        except re.error as e:
            line, col = pos or (None, None)
            raise RuleCompileError(f"invalid character regex /{body}/: {e}", line, col) from None

    def _constraint_pred(self, c: Constraint):
        if c.kind == "ref":
            body = self.env[c.value].regex
            rx = self._regex(body, c.pos)
            return TextRegexPred(rx) if c.key == "word" else AnnRegexPred(c.key, rx)
        if c.kind == "regex":
            rx = self._regex(c.value, c.pos)
            return TextRegexPred(rx) if c.key == "word" else AnnRegexPred(c.key, rx)
        return TextEqPred(c.value) if c.key == "word" else AnnEqPred(c.key, c.value)

    def _node(self, node: PatternExpr) -> None:
        if isinstance(node, TokenRegex):
            pred = AnyPred() if node.wildcard else TextRegexPred(self._regex(node.body, node.pos))
            self.emit(OP_PRED, pred)
        elif isinstance(node, AttrSet):
            preds = tuple(self._constraint_pred(c) for c in node.constraints)
            self.emit(OP_PRED, preds[0] if len(preds) == 1 else AndPred(preds))
        elif isinstance(node, VarRef):
            binding = self.env[node.name]
            if binding.pattern is not None:
                self._node(binding.pattern)
            else:
                self.emit(OP_PRED, TextRegexPred(self._regex(binding.regex, node.pos)))
        elif isinstance(node, Seq):
            for item in node.items:
                self._node(item)
        elif isinstance(node, Alt):
            jumps = []
            for k, option in enumerate(node.options):
                last = k == len(node.options) - 1
                split = None if last else self.emit(OP_SPLIT)
                self._node(option)
                if not last:
                    jumps.append(self.emit(OP_JMP))
                    self.instrs[split][1] = split + 1
                    self.instrs[split][2] = len(self.instrs)
            end = len(self.instrs)
            for j in jumps:
                self.instrs[j][1] = end
        elif isinstance(node, NamedGroup):
            # one register per group instance: nested same-name groups must
            # not clobber each other's start, the last-closed capture wins
            reg = self.n_regs
            self.n_regs += 1
            self.emit(OP_GSTART, reg)
            self._node(node.body)
            self.emit(OP_GEND, node.name, reg)
        elif isinstance(node, Repeat):
            for _ in range(node.lo):
                self._node(node.body)
            if node.hi is None:
                self._star_tail(node.body, node.lazy)
            else:
                self._bounded_tail(node.body, node.hi - node.lo, node.lazy)
        else:
            raise TypeError(f"not a pattern node: {node!r}")

    def _star_tail(self, body: PatternExpr, lazy: bool) -> None:
        # an iteration that consumes nothing fails via OP_PROGRESS, which
        # backtracks to the exit arm: zero-width loop iterations never happen
        reg = self.n_regs
        self.n_regs += 1
        top = self.emit(OP_SPLIT)
        self.emit(OP_SETPOS, reg)
        self._node(body)
        self.emit(OP_PROGRESS, reg)
        self.emit(OP_JMP, top)
        end = len(self.instrs)
        self.instrs[top][1:] = [end, top + 1] if lazy else [top + 1, end]

    def _bounded_tail(self, body: PatternExpr, count: int, lazy: bool) -> None:
        # flattened nested optionals: greedy prefers taking one more copy
        splits = []
        for _ in range(count):
            splits.append(self.emit(OP_SPLIT))
            self._node(body)
        end = len(self.instrs)
        for s in splits:
            self.instrs[s][1:] = [end, s + 1] if lazy else [s + 1, end]


def _first_preds(instrs: tuple) -> Optional[tuple]:
    """Predicates reachable before any token is consumed; None if MATCH is reachable."""
    preds: list = []
    seen: set[int] = set()
    work = [0]
    while work:
        pc = work.pop()
        if pc in seen:
            continue
        seen.add(pc)
        op, a, b = instrs[pc]
        if op == OP_PRED:
            preds.append(a)
        elif op == OP_MATCH:
            return None
        elif op == OP_SPLIT:
            work.extend((a, b))
        elif op == OP_JMP:
            work.append(a)
        else:  # capture/register bookkeeping falls through
            work.append(pc + 1)
    return tuple(preds)


def compile_pattern(node: PatternExpr, bindings: Iterable[Binding] = ()) -> CompiledPattern:
    env = {b.name: b for b in bindings}
    return _PatternCompiler(env).compile(node)


def compile(rules: RuleFile) -> CompiledRules:  # noqa: A001 - established operation name
    """Compile every rule; total on valid rule files except malformed char regexes."""
    env = rules.binding_map()
    by_stage: dict[int, list[CompiledRule]] = {}
    for rule in rules.rules:
        pattern = _PatternCompiler(env).compile(rule.pattern)
        by_stage.setdefault(rule.stage, []).append(
            CompiledRule(rule.rule_id, rule.stage, pattern, rule.actions))
    stages = tuple((stage, tuple(by_stage[stage])) for stage in sorted(by_stage))
    return CompiledRules(stages)


def compile_rules(rules: RuleFile) -> CompiledRules:
    """Alias for :func:`compile` that doesn't shadow the builtin at call sites."""
    return compile(rules)
