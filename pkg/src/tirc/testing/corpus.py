"""The example corpus: ``.tir`` files whose header comment lists input types.

A corpus file starts with comment lines; the one beginning ``// inputs:``
gives one concrete tensor type per argument, e.g. ``16x64xf32``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..ir.core import ProgramModule
from ..ir.types import ElementType
from ..text import parse_module
from .generator import random_array

_INPUTS = re.compile(r"^//\s*inputs:(.*)$", re.MULTILINE)


@dataclass
class CorpusProgram:
    name: str
    path: Path
    text: str
    input_types: list[tuple[tuple[int, ...], ElementType]]

    def parse(self) -> ProgramModule:
        return parse_module(self.text)


def _parse_type(token: str) -> tuple[tuple[int, ...], ElementType]:
    *dims, elem = token.split("x")
    return tuple(int(d) for d in dims), ElementType(elem)


def load_corpus(directory) -> list[CorpusProgram]:
    out = []
    for path in sorted(Path(directory).glob("*.tir")):
        text = path.read_text(encoding="utf-8")
        m = _INPUTS.search(text)
        types = [_parse_type(t) for t in m[1].split()] if m else []
        out.append(CorpusProgram(path.stem, path, text, types))
    return out


def corpus_inputs(program: CorpusProgram, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [random_array(rng, shape, elem) for shape, elem in program.input_types]
