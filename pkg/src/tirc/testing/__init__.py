"""Helpers for differential testing: random programs and the shipped corpus."""

from .corpus import CorpusProgram, corpus_inputs, load_corpus
from .generator import GeneratedProgram, generate_program, random_array, random_inputs

__all__ = [
    "CorpusProgram",
    "GeneratedProgram",
    "corpus_inputs",
    "generate_program",
    "load_corpus",
    "random_array",
    "random_inputs",
]
