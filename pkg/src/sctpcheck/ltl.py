"""Linear temporal logic over the system's atomic propositions.

Concrete syntax (the appendix-style property strings parse unchanged):

    G, F, X        temporal prefixes
    U              until (infix)
    !, &&, ||, ->  boolean connectives
    st[i] == Name, ost[i] != Name,
    timers[i] == T1_COOKIE, everAborted == false, term, true, false
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .peer import PeerStateName


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class Const(Formula):
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Atom(Formula):
    key: tuple
    text: str

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula

    def __str__(self) -> str:
        return f"!({self.operand})"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} && {self.right})"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} || {self.right})"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} -> {self.right})"


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula

    def __str__(self) -> str:
        return f"X({self.operand})"


@dataclass(frozen=True)
class Globally(Formula):
    operand: Formula

    def __str__(self) -> str:
        return f"G({self.operand})"


@dataclass(frozen=True)
class Finally(Formula):
    operand: Formula

    def __str__(self) -> str:
        return f"F({self.operand})"


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} U {self.right})"


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<op>&&|\|\||->|==|!=|[!()\[\]])|(?P<word>[A-Za-z_][A-Za-z_0-9]*)|(?P<num>\d+))"
)

_STATE_NAMES = {s.value: s for s in PeerStateName}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup == "op":
            tokens.append(("op", m.group("op"), pos))
        elif m.lastgroup == "word":
            tokens.append(("word", m.group("word"), pos))
        else:
            tokens.append(("num", m.group("num"), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str, int]], text: str):
        self.tokens = tokens
        self.i = 0
        self.text = text

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", len(self.text))
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.take()
        if tok[1] != value:
            raise ParseError(f"expected {value!r}, got {tok[1]!r}", tok[2])
        return tok

    # implication, right-associative, lowest precedence
    def parse_formula(self) -> Formula:
        left = self.parse_or()
        tok = self.peek()
        if tok is not None and tok[1] == "->":
            self.take()
            return Implies(left, self.parse_formula())
        return left

    def parse_or(self) -> Formula:
        left = self.parse_and()
        while True:
            tok = self.peek()
            if tok is None or tok[1] != "||":
                return left
            self.take()
            left = Or(left, self.parse_and())

    def parse_and(self) -> Formula:
        left = self.parse_until()
        while True:
            tok = self.peek()
            if tok is None or tok[1] != "&&":
                return left
            self.take()
            left = And(left, self.parse_until())

    def parse_until(self) -> Formula:
        left = self.parse_unary()
        tok = self.peek()
        if tok is not None and tok[1] == "U":
            self.take()
            return Until(left, self.parse_until())
        return left

    def parse_unary(self) -> Formula:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", len(self.text))
        if tok[1] == "!":
            self.take()
            return Not(self.parse_unary())
        if tok[1] in ("G", "F", "X"):
            self.take()
            inner = self.parse_unary()
            return {"G": Globally, "F": Finally, "X": Next}[tok[1]](inner)
        if tok[1] == "(":
            self.take()
            inner = self.parse_formula()
            self.expect(")")
            return inner
        return self.parse_atom()

    def parse_atom(self) -> Formula:
        tok = self.take()
        kind, value, pos = tok
        if kind != "word":
            raise ParseError(f"expected an atom, got {value!r}", pos)
        if value == "true":
            return TRUE
        if value == "false":
            return FALSE
        if value == "term":
            return Atom(("term",), "term")
        if value in ("st", "ost"):
            self.expect("[")
            idx_tok = self.take()
            if idx_tok[0] != "num" or idx_tok[1] not in ("0", "1"):
                raise ParseError("peer index must be 0 or 1", idx_tok[2])
            idx = int(idx_tok[1])
            self.expect("]")
            op = self.take()
            if op[1] not in ("==", "!="):
                raise ParseError("expected == or !=", op[2])
            name_tok = self.take()
            if name_tok[1] in ("st", "ost"):
                # cross comparison: st[i] == ost[i] ("peer i did not move")
                if name_tok[1] == value:
                    raise ParseError("cannot compare a variable to itself", name_tok[2])
                self.expect("[")
                idx2_tok = self.take()
                self.expect("]")
                if idx2_tok[1] != str(idx):
                    raise ParseError("cross comparison must use one peer index",
                                     idx2_tok[2])
                atom = Atom(("unchanged", idx), f"st[{idx}] == ost[{idx}]")
                return atom if op[1] == "==" else Not(atom)
            state = _STATE_NAMES.get(name_tok[1])
            if state is None:
                raise ParseError(f"unknown peer state {name_tok[1]!r}", name_tok[2])
            atom = Atom((value, idx, state), f"{value}[{idx}] == {state.value}")
            return atom if op[1] == "==" else Not(atom)
        if value == "timers":
            self.expect("[")
            idx_tok = self.take()
            if idx_tok[0] != "num" or idx_tok[1] not in ("0", "1"):
                raise ParseError("peer index must be 0 or 1", idx_tok[2])
            idx = int(idx_tok[1])
            self.expect("]")
            op = self.take()
            if op[1] not in ("==", "!="):
                raise ParseError("expected == or !=", op[2])
            name_tok = self.take()
            if name_tok[1] != "T1_COOKIE":
                raise ParseError("only T1_COOKIE is modeled", name_tok[2])
            atom = Atom(
                ("cookie_timer_active", idx), f"timers[{idx}] == T1_COOKIE"
            )
            return atom if op[1] == "==" else Not(atom)
        if value in ("everAborted", "everTimedOut"):
            atom = Atom((value,), f"{value} == true")
            nxt = self.peek()
            if nxt is not None and nxt[1] in ("==", "!="):
                op = self.take()
                rhs = self.take()
                if rhs[1] not in ("true", "false"):
                    raise ParseError("expected true or false", rhs[2])
                positive = (op[1] == "==") == (rhs[1] == "true")
                return atom if positive else Not(atom)
            return atom
        raise ParseError(f"unknown atom {value!r}", pos)


def parse_formula(text: str) -> Formula:
    tokens = _tokenize(text)
    parser = _Parser(tokens, text)
    f = parser.parse_formula()
    tok = parser.peek()
    if tok is not None:
        raise ParseError(f"trailing input {tok[1]!r}", tok[2])
    return f


_PROPERTY_TEXT = {
    "phi1": "G((st[0] == Closed) -> (X(F(st[0] == Closed || st[0] == Established"
            " || st[0] == CookieWait))))",
    "phi2": "G(F(st[0] != ost[0] || st[1] != ost[1] ||"
            " (st[0] == Closed && st[1] == Closed) ||"
            " (st[0] == Established && st[1] == Established)))",
    "phi3": "G((st[0] != ost[0] && ost[0] == ShutdownAckSent) -> (st[0] == Closed))",
    "phi4": "G(F(st[0] != CookieEchoed || timers[0] == T1_COOKIE))",
    "phi5": "G(st[0] != ShutdownReceived || st[1] != ShutdownReceived)",
    "phi6": "G((st[0] != ost[0] && ost[0] == ShutdownReceived) ->"
            " (st[0] == ShutdownAckSent || st[0] == Closed))",
    "phi7": "G(st[0] != CookieEchoed || st[1] != ShutdownReceived)",
    "phi8": "G((ost[1] == Established && ost[0] == Closed && everAborted == false"
            " && everTimedOut == false && ost[0] != st[0]) ->"
            " (st[0] == Established || st[0] == IntermediaryCookieWait))",
    "phi9": "G((ost[0] == Established && ost[1] == Closed && everAborted == false"
            " && everTimedOut == false && ost[1] != st[1]) ->"
            " (st[1] == Established || st[1] == IntermediaryCookieWait))",
    "phi10": "G((ost[0] == Established && (st[0] == ShutdownSent ||"
             " st[0] == ShutdownReceived)) -> F(st[0] == Closed))",
}

# The prose form of phi4 is an invariant; the main listing's form is the
# weaker always-eventually phrasing. Both are exposed; discrepancies between
# them are reported, never reconciled silently.
_PHI4_STRICT_TEXT = "G(st[0] != CookieEchoed || timers[0] == T1_COOKIE)"

PROPERTY_NAMES = tuple(f"phi{i}" for i in range(1, 11))


def builtin_properties() -> dict[str, Formula]:
    """The ten correctness properties, keyed phi1..phi10, in order."""
    return {name: parse_formula(_PROPERTY_TEXT[name]) for name in PROPERTY_NAMES}


def builtin_property_texts() -> dict[str, str]:
    return dict(_PROPERTY_TEXT)


def phi4_strict() -> Formula:
    return parse_formula(_PHI4_STRICT_TEXT)


def atoms_of(f: Formula) -> frozenset[tuple]:
    out: set[tuple] = set()

    def walk(g: Formula) -> None:
        if isinstance(g, Atom):
            out.add(g.key)
        elif isinstance(g, (Not, Next, Globally, Finally)):
            walk(g.operand)
        elif isinstance(g, (And, Or, Implies, Until)):
            walk(g.left)
            walk(g.right)

    walk(f)
    return frozenset(out)
