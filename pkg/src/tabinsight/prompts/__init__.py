"""Prompt templates stored as UTF-8 text files.

A template named ``x`` lives in ``x.txt``; optional ``x.demo.txt`` and
``x.instruction.txt`` fill the ``{demonstration}`` and ``{instruction}``
placeholders.  Placeholders are ``{name}`` and are substituted in a single
pass, so braces inside substituted values (table cells, summaries) are never
re-expanded.  Point ``prompt_dir`` at a directory of replacement files to
swap in alternative templates; files missing there fall back to the
packaged ones.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from ..errors import TemplateError

PACKAGE_DIR = Path(__file__).parent

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    demonstration: str | None = None
    instruction: str | None = None

    @property
    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER.findall(self.body))

    def require(self, *names: str) -> "PromptTemplate":
        missing = [n for n in names if n not in self.placeholders]
        if missing:
            raise TemplateError(f"template {self.name!r} lacks placeholders {missing}")
        return self

    def render(self, **values: str) -> str:
        if self.demonstration is not None:
            values.setdefault("demonstration", self.demonstration)
        if self.instruction is not None:
            values.setdefault("instruction", self.instruction)

        def sub(m):
            key = m.group(1)
            if key not in values:
                raise TemplateError(f"template {self.name!r}: no value for {{{key}}}")
            return str(values[key])

        return _PLACEHOLDER.sub(sub, self.body)


def _read(path: Path) -> str:
    return path.read_text(encoding="utf-8").rstrip("\n")


def _find(name: str, suffix: str, prompt_dir: str | None) -> Path | None:
    for base in ([Path(prompt_dir)] if prompt_dir else []) + [PACKAGE_DIR]:
        path = base / f"{name}{suffix}"
        if path.is_file():
            return path
    return None


@lru_cache(maxsize=None)
def _load(name: str, prompt_dir: str | None) -> PromptTemplate:
    body = _find(name, ".txt", prompt_dir)
    if body is None:
        raise TemplateError(f"no prompt template named {name!r}")
    demo = _find(name, ".demo.txt", prompt_dir)
    instr = _find(name, ".instruction.txt", prompt_dir)
    return PromptTemplate(
        name,
        _read(body),
        _read(demo) if demo else None,
        _read(instr) if instr else None,
    )


def load_template(name: str, prompt_dir: str | None = None) -> PromptTemplate:
    return _load(name, str(prompt_dir) if prompt_dir else None)
