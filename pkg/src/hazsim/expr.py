"""Hazard expression language: tokenizer, parser, binder, evaluator.

Expressions describe a hazard (or log/cumulative hazard) as a function of
analysis time ``{t}``, the time of entry to the current state ``{t0}``,
covariate names, numeric literals and the operators ``+ - * / ^``.  Each
binary operator also has a colon-prefixed spelling (``:+ :- :* :/ :^``)
which parses identically; the colon forms exist so expressions can be
embedded in option strings that already use the plain characters as
separators.

Precedence, tightest first: ``^`` (right-associative), unary minus,
``* /``, ``+ -``.  So ``-2^2`` is ``-(2^2) = -4`` and ``2^-1`` is valid.

Only ``log``, ``exp``, ``sqrt`` and ``abs`` may be called.  Any other
identifier is a covariate reference and must be bound to a data column
before evaluation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BindingError, EvaluationError, ExpressionError

FUNCTIONS = ("log", "exp", "sqrt", "abs")

_NUMBER_RE = re.compile(r"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_COLON_OPS = "+-*/^"


@dataclass(frozen=True)
class Token:
    kind: str  # number | time_t | time_t0 | identifier | operator | lparen | rparen | comma
    lexeme: str
    position: int


def tokenize(source: str) -> list[Token]:
    """Split ``source`` into tokens.  Raises ExpressionError with the
    character offset on any unknown construct."""
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c == "{":
            j = source.find("}", i)
            if j < 0:
                raise ExpressionError("unterminated '{'", position=i)
            name = source[i + 1 : j].strip()
            if name == "t":
                tokens.append(Token("time_t", "{t}", i))
            elif name == "t0":
                tokens.append(Token("time_t0", "{t0}", i))
            else:
                raise ExpressionError(
                    f"unknown time variable '{{{name}}}', expected {{t}} or {{t0}}",
                    position=i,
                )
            i = j + 1
            continue
        if c == ":":
            if i + 1 < n and source[i + 1] in _COLON_OPS:
                tokens.append(Token("operator", source[i + 1], i))
                i += 2
                continue
            raise ExpressionError("':' must be followed by one of + - * / ^", position=i)
        if c in _COLON_OPS:
            tokens.append(Token("operator", c, i))
            i += 1
            continue
        if c == "(":
            tokens.append(Token("lparen", c, i))
            i += 1
            continue
        if c == ")":
            tokens.append(Token("rparen", c, i))
            i += 1
            continue
        if c == ",":
            tokens.append(Token("comma", c, i))
            i += 1
            continue
        m = _NUMBER_RE.match(source, i)
        if m:
            tokens.append(Token("number", m.group(), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(Token("identifier", m.group(), i))
            i = m.end()
            continue
        raise ExpressionError(f"unexpected character {c!r}", position=i)
    return tokens


# ---------------------------------------------------------------------------
# AST


class ExprAst:
    """Base class for expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Constant(ExprAst):
    value: float


@dataclass(frozen=True)
class TimeT(ExprAst):
    pass


@dataclass(frozen=True)
class TimeT0(ExprAst):
    pass


@dataclass(frozen=True)
class CovariateRef(ExprAst):
    name: str


@dataclass(frozen=True)
class Negate(ExprAst):
    child: ExprAst


@dataclass(frozen=True)
class BinaryOp(ExprAst):
    op: str  # + - * / ^
    left: ExprAst
    right: ExprAst


@dataclass(frozen=True)
class FunctionCall(ExprAst):
    name: str  # one of FUNCTIONS
    arg: ExprAst


VAR_T = TimeT()
VAR_T0 = TimeT0()


class _Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, tokens: list[Token], source: str):
        self.tokens = tokens
        self.source = source
        self.pos = 0

    def _peek(self) -> Token | None:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return None

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _match(self, kind: str, lexeme: str | None = None) -> Token | None:
        tok = self._peek()
        if tok is not None and tok.kind == kind and (lexeme is None or tok.lexeme == lexeme):
            return self._advance()
        return None

    def _error(self, message: str) -> ExpressionError:
        tok = self._peek()
        pos = tok.position if tok is not None else len(self.source)
        return ExpressionError(message, position=pos)

    def parse(self) -> ExprAst:
        if not self.tokens:
            raise ExpressionError("empty expression")
        node = self._additive()
        if self.pos != len(self.tokens):
            raise self._error(f"unexpected token {self._peek().lexeme!r}")
        return node

    def _additive(self) -> ExprAst:
        node = self._multiplicative()
        while True:
            tok = self._peek()
            if tok is not None and tok.kind == "operator" and tok.lexeme in "+-":
                self._advance()
                node = BinaryOp(tok.lexeme, node, self._multiplicative())
            else:
                return node

    def _multiplicative(self) -> ExprAst:
        node = self._unary()
        while True:
            tok = self._peek()
            if tok is not None and tok.kind == "operator" and tok.lexeme in "*/":
                self._advance()
                node = BinaryOp(tok.lexeme, node, self._unary())
            else:
                return node

    def _unary(self) -> ExprAst:
        if self._match("operator", "-"):
            return Negate(self._unary())
        if self._match("operator", "+"):
            # no unary plus in the grammar
            raise ExpressionError("unary '+' is not allowed", position=self.tokens[self.pos - 1].position)
        return self._power()

    def _power(self) -> ExprAst:
        base = self._primary()
        tok = self._peek()
        if tok is not None and tok.kind == "operator" and tok.lexeme == "^":
            self._advance()
            # right-associative; the exponent may start with a unary minus
            return BinaryOp("^", base, self._unary())
        return base

    def _primary(self) -> ExprAst:
        tok = self._peek()
        if tok is None:
            raise self._error("unexpected end of expression")
        if tok.kind == "number":
            self._advance()
            return Constant(float(tok.lexeme))
        if tok.kind == "time_t":
            self._advance()
            return VAR_T
        if tok.kind == "time_t0":
            self._advance()
            return VAR_T0
        if tok.kind == "identifier":
            self._advance()
            if self._match("lparen"):
                if tok.lexeme not in FUNCTIONS:
                    raise ExpressionError(
                        f"unknown function '{tok.lexeme}', allowed: {', '.join(FUNCTIONS)}",
                        position=tok.position,
                    )
                arg = self._additive()
                if not self._match("rparen"):
                    raise self._error("expected ')'")
                return FunctionCall(tok.lexeme, arg)
            return CovariateRef(tok.lexeme)
        if tok.kind == "lparen":
            self._advance()
            node = self._additive()
            if not self._match("rparen"):
                raise self._error("expected ')'")
            return node
        raise self._error(f"unexpected token {tok.lexeme!r}")


def parse(source: str) -> ExprAst:
    """Parse ``source`` into an AST."""
    return _Parser(tokenize(source), source).parse()


def format_expr(ast: ExprAst, colon: bool = False) -> str:
    """Render an AST back to source.  Conservatively parenthesizes every
    compound subexpression, so the output always re-parses to an identical
    tree.  With ``colon=True`` binary operators use their colon spellings."""

    def render(node: ExprAst) -> str:
        if isinstance(node, Constant):
            return repr(node.value)
        if isinstance(node, TimeT):
            return "{t}"
        if isinstance(node, TimeT0):
            return "{t0}"
        if isinstance(node, CovariateRef):
            return node.name
        if isinstance(node, FunctionCall):
            return f"{node.name}({render(node.arg)})"
        if isinstance(node, Negate):
            return f"(-{render(node.child)})"
        if isinstance(node, BinaryOp):
            op = f":{node.op}" if colon else node.op
            return f"({render(node.left)}{op}{render(node.right)})"
        raise TypeError(f"not an expression node: {node!r}")

    return render(ast)


def covariate_names(ast: ExprAst) -> list[str]:
    """Covariate names referenced by ``ast``, in first-appearance order."""
    names: list[str] = []

    def walk(node: ExprAst) -> None:
        if isinstance(node, CovariateRef):
            if node.name not in names:
                names.append(node.name)
        elif isinstance(node, Negate):
            walk(node.child)
        elif isinstance(node, BinaryOp):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, FunctionCall):
            walk(node.arg)

    walk(ast)
    return names


def uses_t0(ast: ExprAst) -> bool:
    if isinstance(ast, TimeT0):
        return True
    if isinstance(ast, Negate):
        return uses_t0(ast.child)
    if isinstance(ast, BinaryOp):
        return uses_t0(ast.left) or uses_t0(ast.right)
    if isinstance(ast, FunctionCall):
        return uses_t0(ast.arg)
    return False


@dataclass(frozen=True)
class CompiledExpr:
    """An AST with its covariate references resolved to column indices."""

    ast: ExprAst
    covariate_bindings: tuple[tuple[str, int], ...]
    uses_t0: bool

    @cached_property
    def binding_map(self) -> dict[str, int]:
        return dict(self.covariate_bindings)


def bind(ast: ExprAst, schema: tuple[str, ...] | list[str]) -> CompiledExpr:
    """Resolve covariate references against ``schema`` (an ordered list of
    column names).  Unknown names raise BindingError."""
    index = {name: i for i, name in enumerate(schema)}
    bindings = []
    for name in covariate_names(ast):
        if name not in index:
            raise BindingError(
                f"covariate '{name}' not found in data columns {list(schema)!r}"
            )
        bindings.append((name, index[name]))
    return CompiledExpr(ast=ast, covariate_bindings=tuple(bindings), uses_t0=uses_t0(ast))


def _fault_t(t, mask) -> float:
    """First offending t value for a domain error, for the error message."""
    shape = np.broadcast_shapes(np.shape(t), np.shape(mask))
    tb = np.broadcast_to(np.asarray(t, dtype=float), shape).reshape(-1)
    mb = np.broadcast_to(mask, shape).reshape(-1)
    if tb.size == 0:
        return 0.0
    return float(tb[int(np.argmax(mb))])


def evaluate_with(compiled: CompiledExpr, t, t0, cov):
    """Evaluate against arbitrary covariate values.

    ``cov`` maps a column index to a value broadcastable against ``t``.
    ``t`` may be a scalar or any-dimensional array; ``t0`` likewise.
    Returns a float64 array of the broadcast shape.
    """
    t_arr = np.asarray(t, dtype=float)
    t0_arr = np.asarray(t0, dtype=float)
    bmap = compiled.binding_map

    def ev(node: ExprAst):
        if isinstance(node, Constant):
            return node.value
        if isinstance(node, TimeT):
            return t_arr
        if isinstance(node, TimeT0):
            return t0_arr
        if isinstance(node, CovariateRef):
            return cov(bmap[node.name])
        if isinstance(node, Negate):
            return -np.asarray(ev(node.child))
        if isinstance(node, BinaryOp):
            left = ev(node.left)
            right = ev(node.right)
            if node.op == "+":
                return np.add(left, right)
            if node.op == "-":
                return np.subtract(left, right)
            if node.op == "*":
                return np.multiply(left, right)
            if node.op == "/":
                right = np.asarray(right)
                bad = right == 0
                if np.any(bad):
                    raise EvaluationError("division by zero", t=_fault_t(t_arr, bad))
                return np.divide(left, right)
            if node.op == "^":
                with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
                    out = np.float_power(left, right)
                out = np.asarray(out)
                bad = np.isnan(out) & ~(np.isnan(np.asarray(left)) | np.isnan(np.asarray(right)))
                if np.any(bad):
                    raise EvaluationError(
                        "invalid power (negative base with non-integer exponent)",
                        t=_fault_t(t_arr, bad),
                    )
                return out
            raise TypeError(f"unknown operator {node.op!r}")
        if isinstance(node, FunctionCall):
            arg = np.asarray(ev(node.arg), dtype=float)
            if node.name == "log":
                bad = arg < 0
                if np.any(bad):
                    raise EvaluationError("log of a negative value", t=_fault_t(t_arr, bad))
                with np.errstate(divide="ignore"):
                    return np.log(arg)
            if node.name == "sqrt":
                bad = arg < 0
                if np.any(bad):
                    raise EvaluationError("sqrt of a negative value", t=_fault_t(t_arr, bad))
                return np.sqrt(arg)
            if node.name == "exp":
                with np.errstate(over="ignore"):
                    return np.exp(arg)
            if node.name == "abs":
                return np.abs(arg)
            raise TypeError(f"unknown function {node.name!r}")
        raise TypeError(f"not an expression node: {node!r}")

    out = np.asarray(ev(compiled.ast), dtype=float)
    shape = np.broadcast_shapes(t_arr.shape, t0_arr.shape, out.shape)
    return np.broadcast_to(out, shape) if out.shape != shape else out


def evaluate(compiled: CompiledExpr, t, t0, row):
    """Evaluate for one observation.  ``row`` is a 1-D array of covariate
    values laid out per the schema the expression was bound against."""
    row_arr = np.asarray(row, dtype=float)
    return evaluate_with(compiled, t, t0, lambda i: row_arr[i])


def substitute_reset(ast: ExprAst) -> ExprAst:
    """Rewrite every ``{t}`` as ``({t} - {t0})``.  Used for clock-reset
    transitions: the kernel then measures time since state entry while the
    evaluator keeps working on the global timescale."""
    if isinstance(ast, TimeT):
        return BinaryOp("-", VAR_T, VAR_T0)
    if isinstance(ast, Negate):
        return Negate(substitute_reset(ast.child))
    if isinstance(ast, BinaryOp):
        return BinaryOp(ast.op, substitute_reset(ast.left), substitute_reset(ast.right))
    if isinstance(ast, FunctionCall):
        return FunctionCall(ast.name, substitute_reset(ast.arg))
    return ast
