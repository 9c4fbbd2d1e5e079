"""Parser for the template language.

A template file looks like::

    # site-wide defaults
    template site;
    '/cluster/name' = 'lxbatch';
    '/software/packages/openssh' = { version = '3.5p1', release = '6', arch = 'i386' };

    object lxb0001;
    include site;
    '/hardware/cpus' = 2;
    '/cluster/name' := 'lxplus';
    delete '/software/packages/openssh';

``object <name>;`` starts a node template, ``template <name>;`` starts an
includable one.  Statements run until ``;`` and may span lines.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from fabsim.config.profile import NAME_RE, SEGMENT_RE, ConfigPath
from fabsim.errors import ConfigSyntaxError, DuplicateTemplateError, MalformedPathError

ASSIGN = "assign"
OVERRIDE = "override"
DELETE = "delete"

OBJECT = "object"
INCLUDE = "include"


@dataclass(frozen=True)
class Statement:
    path: ConfigPath
    value: object = None
    mode: str = ASSIGN
    line: int = 0

    def __post_init__(self):
        if self.mode not in (ASSIGN, OVERRIDE, DELETE):
            raise ValueError(f"unknown statement mode {self.mode!r}")
        if self.mode == DELETE and self.value is not None:
            raise ValueError("delete carries no value")


@dataclass(frozen=True)
class TemplateSource:
    name: str
    kind: str = OBJECT
    statements: tuple = ()
    includes: tuple = ()
    line: int = 1

    def __post_init__(self):
        if self.kind not in (OBJECT, INCLUDE):
            raise ValueError(f"unknown template kind {self.kind!r}")


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>'(?:[^'\\\n]|\\.)*')
  | (?P<op>:=|\?=|[;=\[\]{},])
  | (?P<word>-?[A-Za-z0-9_][A-Za-z0-9_.-]*)
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", "'": "'"}


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _unquote(raw, line, col):
    out = []
    i = 1
    while i < len(raw) - 1:
        c = raw[i]
        if c == "\\":
            nxt = raw[i + 1]
            if nxt not in _ESCAPES:
                raise ConfigSyntaxError(f"unknown escape '\\{nxt}'", line, col + i)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def tokenize(text):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            if text[pos] == "'":
                raise ConfigSyntaxError("unterminated string", line, col)
            raise ConfigSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.tok
        if tok.kind == "eof":
            message = f"unexpected end of input: {message}"
        raise ConfigSyntaxError(message, tok.line, tok.col)

    def expect_op(self, op):
        tok = self.tok
        if tok.kind != "op" or tok.text != op:
            self.fail(f"expected {op!r}, found {tok.text!r}")
        return self.advance()

    def name(self):
        tok = self.tok
        if tok.kind != "word" or not NAME_RE.match(tok.text):
            self.fail(f"expected a name, found {tok.text!r}")
        return self.advance().text

    def path(self):
        tok = self.tok
        if tok.kind != "string":
            self.fail(f"expected a quoted path, found {tok.text!r}")
        self.advance()
        raw = _unquote(tok.text, tok.line, tok.col)
        try:
            return ConfigPath.parse(raw)
        except MalformedPathError as exc:
            raise MalformedPathError(str(exc), tok.line, tok.col) from None

    def value(self):
        tok = self.tok
        if tok.kind == "string":
            self.advance()
            return _unquote(tok.text, tok.line, tok.col)
        if tok.kind == "word":
            if re.fullmatch(r"-?[0-9]+", tok.text):
                self.advance()
                return int(tok.text)
            if tok.text in ("true", "false"):
                self.advance()
                return tok.text == "true"
            self.fail(f"bare word {tok.text!r} is not a value")
        if tok.kind == "op" and tok.text == "[":
            self.advance()
            items = []
            while not (self.tok.kind == "op" and self.tok.text == "]"):
                items.append(self.value())
                if self.tok.kind == "op" and self.tok.text == ",":
                    self.advance()
                elif not (self.tok.kind == "op" and self.tok.text == "]"):
                    self.fail(f"expected ',' or ']', found {self.tok.text!r}")
            self.advance()
            return items
        if tok.kind == "op" and tok.text == "{":
            self.advance()
            record = {}
            while not (self.tok.kind == "op" and self.tok.text == "}"):
                ktok = self.tok
                if ktok.kind != "word" or not SEGMENT_RE.match(ktok.text):
                    self.fail(f"expected a record key, found {ktok.text!r}")
                self.advance()
                if ktok.text in record:
                    self.fail(f"duplicate record key {ktok.text!r}", ktok)
                self.expect_op("=")
                record[ktok.text] = self.value()
                if self.tok.kind == "op" and self.tok.text == ",":
                    self.advance()
                elif not (self.tok.kind == "op" and self.tok.text == "}"):
                    self.fail(f"expected ',' or '}}', found {self.tok.text!r}")
            self.advance()
            return record
        self.fail(f"expected a value, found {tok.text!r}")

    def templates(self):
        out = []
        current = None
        while self.tok.kind != "eof":
            tok = self.tok
            if tok.kind == "word" and tok.text in ("object", "template"):
                self.advance()
                name = self.name()
                self.expect_op(";")
                current = {
                    "name": name,
                    "kind": OBJECT if tok.text == "object" else INCLUDE,
                    "statements": [],
                    "includes": [],
                    "line": tok.line,
                }
                out.append(current)
                continue
            if current is None:
                self.fail("template must start with 'object <name>;' or 'template <name>;'")
            if tok.kind == "word" and tok.text == "include":
                self.advance()
                current["includes"].append(self.name())
                self.expect_op(";")
            elif tok.kind == "word" and tok.text == "delete":
                self.advance()
                path = self.path()
                self.expect_op(";")
                current["statements"].append(Statement(path, None, DELETE, tok.line))
            elif tok.kind == "string":
                path = self.path()
                op = self.tok
                if op.kind == "op" and op.text == "?=":
                    self.fail("'?=' is not supported")
                if op.kind != "op" or op.text not in ("=", ":="):
                    self.fail(f"expected '=' or ':=', found {op.text!r}")
                self.advance()
                value = self.value()
                self.expect_op(";")
                mode = ASSIGN if op.text == "=" else OVERRIDE
                current["statements"].append(Statement(path, value, mode, tok.line))
            else:
                self.fail(f"unexpected {tok.text!r}")
        return [
            TemplateSource(t["name"], t["kind"], tuple(t["statements"]), tuple(t["includes"]), t["line"])
            for t in out
        ]


def parse_templates(text):
    """Parse every template in ``text``; names must be unique."""
    templates = _Parser(text).templates()
    seen = {}
    for t in templates:
        if t.name in seen:
            raise DuplicateTemplateError(
                f"template {t.name!r} defined twice (lines {seen[t.name]} and {t.line})"
            )
        seen[t.name] = t.line
    return templates


def parse_template(text):
    """Parse a text holding exactly one template."""
    templates = parse_templates(text)
    if not templates:
        raise ConfigSyntaxError("no template header found", 1, 1)
    if len(templates) > 1:
        raise ConfigSyntaxError(
            f"expected one template, found {len(templates)}", templates[1].line, 1
        )
    return templates[0]


def template_set(*groups):
    """Merge templates into a name -> TemplateSource map, rejecting duplicates."""
    out = {}
    for group in groups:
        if isinstance(group, TemplateSource):
            group = [group]
        elif isinstance(group, dict):
            group = group.values()
        for t in group:
            if t.name in out:
                raise DuplicateTemplateError(f"template {t.name!r} defined twice")
            out[t.name] = t
    return out
