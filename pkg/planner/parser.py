"""Parser and renderer for the ``.pln`` design language.

The language is a file-based spelling of the fluent design interface::

    variable interface { ffl latex }
    design d = design().counterbalance(interface).limit_plans(2)
    units participants = units(28)
    assign participants to d seed 42

``parse`` is a pure recursive-descent parser over a regex tokenizer; every
failure is a ``ParseError`` with a diagnostic code and a source position.
"""

import logging
import re
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple, Union

from .core import (
    BetweenSubjects,
    Counterbalance,
    Cross,
    Design,
    DesignAst,
    LimitPlans,
    Multifact,
    Nest,
    NumTrials,
    StartWith,
    VarRef,
    Variable,
    VariableSet,
    WithinSubjects,
    check_level,
    referenced_variables,
    unchain,
)
from .errors import InvalidLevel, ParseError

logger = logging.getLogger(__name__)

SYNTAX = "P001"
DUPLICATE_VARIABLE = "P002"
UNKNOWN_IDENTIFIER = "P003"
ARITY = "P004"
DUPLICATE_NAME = "P005"
ASSIGN_COUNT = "P006"
DUPLICATE_LEVEL = "P007"
UNIT_NESTING = "P008"
INVALID_LEVEL = "P009"

VARIABLE_METHODS = ("counterbalance", "within_subjects", "between_subjects")
METHODS = VARIABLE_METHODS + ("limit_plans", "num_trials", "start_with", "multifact")

_TOKEN_SPEC = [
    ("COMMENT", r"#[^\n]*"),
    ("NEWLINE", r"\n"),
    ("SPACE", r"[ \t\r]+"),
    ("STRING", r'"(?:[^"\\\n]|\\.)*"'),
    ("INT", r"\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("PUNCT", r"[{}().,=]"),
    ("ERROR", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_INT_RE = re.compile(r"\d+\Z")


# -- program model ------------------------------------------------------------

@dataclass(frozen=True)
class Units:
    count: int


@dataclass(frozen=True)
class Clusters:
    count: int
    inner: Units


UnitsSpec = Union[Units, Clusters]


@dataclass(frozen=True)
class AssignDirective:
    units: str
    design: str
    seed: Optional[int] = None


@dataclass(frozen=True)
class Program:
    """A parsed design program: declarations plus the single assign directive."""

    variable_set: VariableSet
    designs: Tuple[Tuple[str, DesignAst], ...]
    units: Tuple[Tuple[str, UnitsSpec], ...]
    assign: AssignDirective

    def design(self, name: str) -> DesignAst:
        return dict(self.designs)[name]

    def unit_spec(self, name: str) -> UnitsSpec:
        return dict(self.units)[name]

    @property
    def assigned_design(self) -> DesignAst:
        return self.design(self.assign.design)

    @property
    def assigned_units(self) -> UnitsSpec:
        return self.unit_spec(self.assign.units)

    def design_variables(self, name: Optional[str] = None) -> VariableSet:
        """Variables used by a design, in declaration order."""
        ast = self.assigned_design if name is None else self.design(name)
        used = set(referenced_variables(ast))
        return VariableSet(tuple(v for v in self.variable_set if v.name in used))


# -- tokenizer --------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    @property
    def value(self) -> str:
        if self.kind == "STRING":
            return re.sub(r"\\(.)", r"\1", self.text[1:-1])
        return self.text


def tokenize(source: str) -> Iterator[Token]:
    line, line_start = 1, 0
    for match in _TOKEN_RE.finditer(source):
        kind = match.lastgroup
        column = match.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = match.end()
            continue
        if kind in ("SPACE", "COMMENT"):
            continue
        if kind == "ERROR":
            raise ParseError(f"unexpected character {match.group()!r}", line, column, SYNTAX)
        yield Token(kind, match.group(), line, column)
    yield Token("EOF", "", line, len(source) - line_start + 1)


# -- parser ------------------------------------------------------------------------

class _Parser:
    """Recursive-descent parser over a token list; one instance per source."""

    def __init__(self, source: str):
        self.tokens = list(tokenize(source))
        self.pos = 0
        self.variables: Dict[str, Variable] = {}
        self.designs: Dict[str, DesignAst] = {}
        self.units: Dict[str, UnitsSpec] = {}
        self.assigns: List[Tuple[AssignDirective, Token]] = []

    # token helpers

    @property
    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != "EOF":
            self.pos += 1
        return token

    def error(self, message: str, token: Optional[Token] = None, code: str = SYNTAX) -> ParseError:
        token = token or self.peek
        return ParseError(message, token.line, token.column, code)

    def at(self, text: str) -> bool:
        return self.peek.kind in ("PUNCT", "IDENT") and self.peek.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.peek.text or "end of input"
            raise self.error(f"expected '{text}', found '{found}'")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.peek.kind != kind:
            found = self.peek.text or "end of input"
            raise self.error(f"expected {what}, found '{found}'")
        return self.advance()

    def positive_int(self) -> int:
        token = self.expect_kind("INT", "a positive integer")
        value = int(token.text)
        if value < 1:
            raise self.error("counts must be positive", token, ARITY)
        return value

    # statements

    def parse(self) -> Program:
        while self.peek.kind != "EOF":
            token = self.peek
            if token.kind != "IDENT":
                raise self.error(f"expected a statement, found '{token.text}'")
            if token.text == "variable":
                self.variable_decl()
            elif token.text == "design":
                self.design_decl()
            elif token.text == "units":
                self.units_decl()
            elif token.text == "assign":
                self.assign_decl()
            else:
                raise self.error(f"unknown statement '{token.text}'")
        if len(self.assigns) != 1:
            token = self.assigns[1][1] if self.assigns else self.peek
            raise self.error(
                f"a program needs exactly one assign directive, found {len(self.assigns)}",
                token,
                ASSIGN_COUNT,
            )
        return Program(
            variable_set=VariableSet(tuple(self.variables.values())),
            designs=tuple(self.designs.items()),
            units=tuple(self.units.items()),
            assign=self.assigns[0][0],
        )

    def variable_decl(self) -> None:
        self.expect("variable")
        name_token = self.expect_kind("IDENT", "a variable name")
        if name_token.text in self.variables:
            raise self.error(f"variable '{name_token.text}' is already declared", name_token, DUPLICATE_VARIABLE)
        self.expect("{")
        levels: List[str] = []
        while not self.at("}"):
            token = self.peek
            if token.kind not in ("IDENT", "STRING", "INT"):
                raise self.error(f"expected a level name, found '{token.text or 'end of input'}'")
            self.advance()
            try:
                check_level(token.value, name_token.text)
            except InvalidLevel as exc:
                raise self.error(exc.message, token, INVALID_LEVEL) from None
            if token.value in levels:
                raise self.error(f"level '{token.value}' repeated in '{name_token.text}'", token, DUPLICATE_LEVEL)
            levels.append(token.value)
        if not levels:
            raise self.error(f"variable '{name_token.text}' needs at least one level", self.peek, ARITY)
        self.expect("}")
        self.variables[name_token.text] = Variable(name_token.text, tuple(levels))

    def design_decl(self) -> None:
        self.expect("design")
        name_token = self.expect_kind("IDENT", "a design name")
        if name_token.text in self.designs:
            raise self.error(f"design '{name_token.text}' is already defined", name_token, DUPLICATE_NAME)
        self.expect("=")
        self.designs[name_token.text] = self.design_exp()

    def units_decl(self) -> None:
        self.expect("units")
        name_token = self.expect_kind("IDENT", "a units name")
        if name_token.text in self.units:
            raise self.error(f"units '{name_token.text}' are already defined", name_token, DUPLICATE_NAME)
        self.expect("=")
        self.units[name_token.text] = self.units_exp(top=True)

    def units_exp(self, top: bool) -> UnitsSpec:
        token = self.peek
        if self.at("units"):
            self.advance()
            self.expect("(")
            count = self.positive_int()
            self.expect(")")
            return Units(count)
        if self.at("clusters"):
            if not top:
                raise self.error("clusters of clusters are not supported", token, UNIT_NESTING)
            self.advance()
            self.expect("(")
            count = self.positive_int()
            self.expect(",")
            inner = self.units_exp(top=False)
            self.expect(")")
            return Clusters(count, inner)
        raise self.error(f"expected 'units' or 'clusters', found '{token.text or 'end of input'}'")

    def assign_decl(self) -> None:
        keyword = self.expect("assign")
        units_token = self.expect_kind("IDENT", "a units name")
        self.expect("to")
        design_token = self.expect_kind("IDENT", "a design name")
        seed = None
        if self.at("seed"):
            self.advance()
            seed = int(self.expect_kind("INT", "a seed").text)
        if units_token.text not in self.units:
            raise self.error(f"unknown units '{units_token.text}'", units_token, UNKNOWN_IDENTIFIER)
        if design_token.text not in self.designs:
            raise self.error(f"unknown design '{design_token.text}'", design_token, UNKNOWN_IDENTIFIER)
        self.assigns.append((AssignDirective(units_token.text, design_token.text, seed), keyword))

    # designs

    def design_exp(self) -> DesignAst:
        token = self.peek
        if self.at("design"):
            self.advance()
            self.expect("(")
            self.expect(")")
            node: DesignAst = Design()
        elif self.at("cross") or self.at("nest"):
            self.advance()
            self.expect("(")
            first = self.design_ref()
            if not self.at(","):
                raise self.error(f"{token.text} takes exactly two designs", self.peek, ARITY)
            self.advance()
            second = self.design_ref()
            if not self.at(")"):
                raise self.error(f"{token.text} takes exactly two designs", self.peek, ARITY)
            self.advance()
            node = Cross(first, second) if token.text == "cross" else Nest(first, second)
        else:
            raise self.error(f"expected a design expression, found '{token.text or 'end of input'}'")
        while self.at("."):
            node = self.chain(node)
        return node

    def design_ref(self) -> DesignAst:
        token = self.peek
        if token.kind == "IDENT" and token.text in ("design", "cross", "nest") and self.tokens[self.pos + 1].text == "(":
            return self.design_exp()
        if token.kind != "IDENT":
            raise self.error(f"expected a design, found '{token.text or 'end of input'}'")
        self.advance()
        if token.text not in self.designs:
            raise self.error(f"unknown design '{token.text}'", token, UNKNOWN_IDENTIFIER)
        return self.designs[token.text]

    def chain(self, base: DesignAst) -> DesignAst:
        self.expect(".")
        token = self.expect_kind("IDENT", "a design method")
        if token.text not in METHODS:
            raise self.error(f"unknown design method '{token.text}'", token, UNKNOWN_IDENTIFIER)
        self.expect("(")
        args: List[Tuple[str, object, Token]] = []
        while not self.at(")"):
            args.append(self.argument())
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        return self.build_method(base, token, args)

    def argument(self) -> Tuple[str, object, Token]:
        token = self.peek
        if token.kind == "INT":
            self.advance()
            return "int", int(token.text), token
        if token.kind == "STRING":
            self.advance()
            return "text", token.value, token
        if token.kind == "IDENT":
            self.advance()
            if token.text == "multifact" and self.at("("):
                self.advance()
                names = [self.expect_kind("IDENT", "a variable name").text]
                while self.at(","):
                    self.advance()
                    names.append(self.expect_kind("IDENT", "a variable name").text)
                self.expect(")")
                return "multifact", tuple(names), token
            return "name", token.text, token
        raise self.error(f"unexpected argument '{token.text or 'end of input'}'")

    def variable_ref(self, kind: str, value: object, token: Token) -> VarRef:
        if kind == "name":
            ref: VarRef = (str(value),)
        elif kind == "multifact":
            ref = tuple(value)  # type: ignore[arg-type]
            if len(ref) < 2:
                raise self.error("multifact needs at least two variables", token, ARITY)
        else:
            raise self.error(f"expected a variable, found '{token.text}'", token, ARITY)
        for name in ref:
            if name not in self.variables:
                raise self.error(f"unknown variable '{name}'", token, UNKNOWN_IDENTIFIER)
        if len(set(ref)) != len(ref):
            raise self.error("multifact repeats a variable", token, DUPLICATE_VARIABLE)
        return ref

    def build_method(self, base: DesignAst, token: Token, args: List[Tuple[str, object, Token]]) -> DesignAst:
        method = token.text

        def arity(expected: str) -> ParseError:
            return self.error(f"{method} expects {expected}, got {len(args)} argument(s)", token, ARITY)

        if method in VARIABLE_METHODS:
            if len(args) != 1:
                raise arity("one variable")
            ref = self.variable_ref(*args[0])
            node_type = {
                "counterbalance": Counterbalance,
                "within_subjects": WithinSubjects,
                "between_subjects": BetweenSubjects,
            }[method]
            return node_type(base, ref)
        if method in ("limit_plans", "num_trials"):
            if len(args) != 1 or args[0][0] != "int":
                raise arity("one integer")
            count = int(args[0][1])  # type: ignore[arg-type]
            if count < 1:
                raise self.error(f"{method} needs a positive count", args[0][2], ARITY)
            return LimitPlans(base, count) if method == "limit_plans" else NumTrials(base, count)
        if method == "start_with":
            if len(args) != 2:
                raise arity("a variable and a level")
            ref = self.variable_ref(*args[0])
            kind, value, level_token = args[1]
            if kind == "multifact":
                raise self.error("start_with expects a level name", level_token, ARITY)
            level = str(value)
            compound = VariableSet(tuple(self.variables[n] for n in ref))
            try:
                if len(ref) == 1:
                    compound.get(ref[0]).index(level)
                else:
                    compound.encode(tuple(level.split("-")))
            except InvalidLevel:
                raise self.error(f"'{level}' is not a level of '{'-'.join(ref)}'", level_token, UNKNOWN_IDENTIFIER) from None
            return StartWith(base, ref, level)
        # multifact as a chain method
        if len(args) < 2:
            raise arity("at least two variables")
        names: List[str] = []
        for kind, value, arg_token in args:
            names.extend(self.variable_ref(kind, value, arg_token))
        if len(set(names)) != len(names):
            raise self.error("multifact repeats a variable", token, DUPLICATE_VARIABLE)
        return Multifact(base, tuple(names))


def parse(source: str) -> Program:
    """Parse design-language text into a ``Program``."""
    program = _Parser(source).parse()
    logger.debug(
        "Parsed %d variables, %d designs, %d unit declarations",
        len(program.variable_set), len(program.designs), len(program.units),
    )
    return program


# -- renderer ---------------------------------------------------------------------------

def _render_level(level: str) -> str:
    if _IDENT_RE.match(level) or _INT_RE.match(level):
        return level
    escaped = level.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def _render_ref(ref: VarRef) -> str:
    if len(ref) == 1:
        return ref[0]
    return f"multifact({', '.join(ref)})"


def render_design(node: DesignAst, names: Optional[Dict[DesignAst, str]] = None) -> str:
    """Text of one design expression; sub-designs found in ``names`` are referenced by name."""
    names = names or {}
    base, methods = unchain(node)

    def ref(child: DesignAst) -> str:
        return names.get(child) or render_design(child, names)

    if isinstance(base, Cross):
        text = f"cross({ref(base.left)}, {ref(base.right)})"
    elif isinstance(base, Nest):
        text = f"nest({ref(base.inner)}, {ref(base.outer)})"
    else:
        text = "design()"
    for method in methods:
        if isinstance(method, Counterbalance):
            text += f".counterbalance({_render_ref(method.variable)})"
        elif isinstance(method, WithinSubjects):
            text += f".within_subjects({_render_ref(method.variable)})"
        elif isinstance(method, BetweenSubjects):
            text += f".between_subjects({_render_ref(method.variable)})"
        elif isinstance(method, LimitPlans):
            text += f".limit_plans({method.count})"
        elif isinstance(method, NumTrials):
            text += f".num_trials({method.count})"
        elif isinstance(method, StartWith):
            text += f".start_with({_render_ref(method.variable)}, {_render_level(method.level)})"
        elif isinstance(method, Multifact):
            text += f".multifact({', '.join(method.components)})"
    return text


def _render_units(spec: UnitsSpec) -> str:
    if isinstance(spec, Clusters):
        return f"clusters({spec.count}, {_render_units(spec.inner)})"
    return f"units({spec.count})"


def render(program: Program) -> str:
    """Canonical source text; ``parse(render(p)) == p``."""
    lines: List[str] = []
    for variable in program.variable_set:
        levels = " ".join(_render_level(level) for level in variable.levels)
        lines.append(f"variable {variable.name} {{ {levels} }}")
    named: Dict[DesignAst, str] = {}
    for name, ast in program.designs:
        lines.append(f"design {name} = {render_design(ast, named)}")
        named.setdefault(ast, name)
    for name, spec in program.units:
        lines.append(f"units {name} = {_render_units(spec)}")
    directive = f"assign {program.assign.units} to {program.assign.design}"
    if program.assign.seed is not None:
        directive += f" seed {program.assign.seed}"
    lines.append(directive)
    return "\n".join(lines) + "\n"
