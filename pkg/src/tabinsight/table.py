"""Tables, file ingestion and the flat ``col : ... | ...`` serialization.

The flat form is one line per table part::

    title : <title>            (omitted when the title is empty)
    col : <h1> | <h2> | ...
    row 1 : <c11> | <c12> | ...

Cell, header and title text is escaped so that the format stays line- and
bar-delimited: ``\\`` for a backslash, ``\\p`` for ``|``, ``\\n`` and ``\\r``
for line breaks, and ``\\s`` for a leading or trailing space (which the parser
would otherwise strip as separator padding).  Clean text is emitted verbatim.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    DecodeError,
    EmptyHeaderError,
    GrammarError,
    RaggedRowError,
    RowIndexGapError,
    TableError,
    TableTooLongError,
)

__all__ = [
    "Table",
    "FlatTable",
    "ingest_table",
    "serialize_table",
    "parse_flat_table",
    "estimate_tokens",
    "DEFAULT_MAX_TOKENS",
]

DEFAULT_MAX_TOKENS = 8192
CHARS_PER_TOKEN = 4

FORMATS = ("csv", "tsv", "json-grid")


@dataclass(frozen=True)
class Table:
    """A titled rectangular grid of text cells.

    Rows are stored 0-based; every reference exposed to users or models
    (evidence, flat text) is 1-based.
    """

    title: str
    column_headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = ()
    source_id: str = ""

    def __post_init__(self):
        headers = tuple(self.column_headers)
        if len(headers) < 1:
            raise TableError("a table needs at least one column")
        rows = tuple(tuple(r) for r in self.rows)
        for i, row in enumerate(rows, start=1):
            if len(row) != len(headers):
                raise RaggedRowError(i, len(headers), len(row))
        for value in (self.title, *headers, *(c for r in rows for c in r)):
            if not isinstance(value, str):
                raise TableError(f"cell values must be text, got {type(value).__name__}")
        object.__setattr__(self, "column_headers", headers)
        object.__setattr__(self, "rows", rows)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.column_headers)

    def to_grid(self) -> dict:
        """JSON-grid form (``title``, ``columns``, ``rows``)."""
        return {
            "title": self.title,
            "columns": list(self.column_headers),
            "rows": [list(r) for r in self.rows],
        }

    @classmethod
    def from_grid(cls, grid: dict, source_id: str = "") -> "Table":
        if not isinstance(grid, dict):
            raise TableError("JSON grid must be an object")
        columns = grid.get("columns", grid.get("header"))
        if columns is None:
            raise TableError("JSON grid has no 'columns'")
        rows = grid.get("rows", [])
        return _build(
            grid.get("title", "") or "",
            [_cell_text(c) for c in columns],
            [[_cell_text(c) for c in row] for row in rows],
            source_id or str(grid.get("source_id", "")),
        )


@dataclass(frozen=True)
class FlatTable:
    text: str
    table_id: str = ""

    def __str__(self):
        return self.text


def _cell_text(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    raise TableError(f"unsupported cell value {value!r}")


def _build(title: str, headers: Sequence[str], rows: Iterable[Sequence[str]], source_id: str) -> Table:
    headers = list(headers)
    if not headers:
        raise EmptyHeaderError("table has no header row")
    for j, h in enumerate(headers, start=1):
        if not h.strip():
            raise EmptyHeaderError(f"header {j} is empty")
    rows = [list(r) for r in rows]
    for i, row in enumerate(rows, start=1):
        if len(row) != len(headers):
            raise RaggedRowError(i, len(headers), len(row))
    return Table(title, tuple(headers), tuple(tuple(r) for r in rows), source_id)


# -- ingestion ---------------------------------------------------------------


def ingest_table(data: bytes | str, format: str = "csv", title: str = "", source_id: str = "") -> Table:
    """Build a :class:`Table` from raw file content.

    ``format`` is one of ``csv`` (RFC 4180 quoting), ``tsv`` or ``json-grid``.
    For JSON grids an explicit ``title`` overrides the one in the file.
    Blank lines in delimited files are skipped.
    """
    if format not in FORMATS:
        raise TableError(f"unknown table format {format!r}; expected one of {FORMATS}")
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"content is not valid UTF-8: {exc}") from exc
    else:
        text = data

    if format == "json-grid":
        try:
            grid = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"invalid JSON grid: {exc}") from exc
        table = Table.from_grid(grid, source_id=source_id)
        if title:
            table = Table(title, table.column_headers, table.rows, table.source_id)
        return table

    delimiter = "," if format == "csv" else "\t"
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=delimiter, strict=True)
    try:
        records = [r for r in reader if r]
    except csv.Error as exc:
        raise DecodeError(f"malformed {format}: {exc}") from exc
    if not records:
        raise EmptyHeaderError("file has no header row")
    return _build(title, records[0], records[1:], source_id)


# -- serialization -------------------------------------------------------------

_ESCAPES = {"\\": "\\\\", "|": "\\p", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "p": "|", "n": "\n", "r": "\r", "s": " "}


def _escape(text: str) -> str:
    out = "".join(_ESCAPES.get(ch, ch) for ch in text)
    if out.startswith(" "):
        out = "\\s" + out[1:]
    if out.endswith(" "):
        out = out[:-1] + "\\s"
    return out


def _unescape(text: str, lineno: int) -> str:
    if "\\" not in text:
        return text
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in _UNESCAPES:
                raise GrammarError(lineno, f"bad escape sequence at column {i + 1}")
            out.append(_UNESCAPES[text[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / CHARS_PER_TOKEN)


def serialize_table(t: Table, max_tokens: int | None = DEFAULT_MAX_TOKENS) -> FlatTable:
    """Flatten ``t``.  Raises :class:`TableTooLongError` past ``max_tokens``."""
    lines = []
    if t.title:
        lines.append("title : " + _escape(t.title))
    lines.append("col : " + " | ".join(_escape(h) for h in t.column_headers))
    for i, row in enumerate(t.rows, start=1):
        lines.append(f"row {i} : " + " | ".join(_escape(c) for c in row))
    text = "\n".join(lines)
    if max_tokens is not None:
        n = estimate_tokens(text)
        if n > max_tokens:
            raise TableTooLongError(n, max_tokens)
    return FlatTable(text, t.source_id)


_TITLE_RE = re.compile(r"^title\s*:\s?(.*)$")
_COL_RE = re.compile(r"^col\s*:\s?(.*)$")
_ROW_RE = re.compile(r"^row\s*(\d+)\s*:\s?(.*)$")


def _split_cells(body: str, lineno: int) -> list[str]:
    return [_unescape(part.strip(" "), lineno) for part in body.split("|")]


def parse_flat_table(text: FlatTable | str, table_id: str = "") -> Table:
    """Inverse of :func:`serialize_table`.

    Blank lines are ignored and ``row 2:`` without the space before the colon
    is accepted.
    """
    if isinstance(text, FlatTable):
        table_id = table_id or text.table_id
        text = text.text

    title = ""
    headers = None
    rows: list[list[str]] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        if headers is None:
            m = _TITLE_RE.match(line)
            if m and not title:
                title = _unescape(m.group(1).strip(" "), lineno)
                continue
            m = _COL_RE.match(line)
            if not m:
                raise GrammarError(lineno, "expected 'col : ' header line")
            headers = _split_cells(m.group(1), lineno)
            continue
        m = _ROW_RE.match(line)
        if not m:
            if _COL_RE.match(line):
                raise GrammarError(lineno, "duplicate 'col : ' line")
            raise GrammarError(lineno, "expected 'row <i> : ' line")
        index = int(m.group(1))
        if index != len(rows) + 1:
            raise RowIndexGapError(lineno, f"row {index} follows row {len(rows)}")
        cells = _split_cells(m.group(2), lineno)
        if len(cells) != len(headers):
            raise GrammarError(
                lineno, f"row {index} has {len(cells)} cells, header has {len(headers)}"
            )
        rows.append(cells)
    if headers is None:
        raise GrammarError(0, "no 'col : ' header line")
    return Table(title, tuple(headers), tuple(tuple(r) for r in rows), table_id)
