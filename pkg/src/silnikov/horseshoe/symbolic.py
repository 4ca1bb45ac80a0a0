"""Finite windows of doubly infinite binary sequences.

A word ``(a_-k ... a_-1 . a_0 a_1 ... a_j)`` is written as a string with a
dot in front of the anchor, e.g. ``"01.0011"``; without a dot the anchor
is the middle symbol (index ``(L - 1) // 2``), so ``"010011"`` is the same
word as ``"01.0011"``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field


class DepartedSlab(Exception):
    """An iterate left both strips at step ``k`` (negative for the past)."""

    def __init__(self, k: int):
        super().__init__(f"iterate {k} left the slab")
        self.k = k


def _bits(seq) -> tuple[int, ...]:
    out = tuple(int(b) for b in seq)
    if any(b not in (0, 1) for b in out):
        raise ValueError(f"symbols must be 0 or 1, got {list(seq)}")
    return out


@dataclass(frozen=True)
class SymbolWord:
    past: tuple[int, ...]
    anchor: int
    future: tuple[int, ...]
    # first step at which an itinerary could not be continued, if any
    departed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "past", _bits(self.past))
        object.__setattr__(self, "future", _bits(self.future))
        object.__setattr__(self, "anchor", _bits([self.anchor])[0])

    @classmethod
    def parse(cls, text: str) -> "SymbolWord":
        text = text.strip()
        if text.count(".") > 1:
            raise ValueError("at most one anchor dot allowed")
        if "." in text:
            past, _, rest = text.partition(".")
        else:
            mid = (len(text) - 1) // 2
            past, rest = text[:mid], text[mid:]
        if not rest:
            raise ValueError("word needs an anchor symbol")
        return cls(_bits(past), int(rest[0]), _bits(rest[1:]))

    @classmethod
    def constant(cls, a: int, k: int, j: int) -> "SymbolWord":
        return cls((a,) * k, a, (a,) * j)

    @property
    def k(self) -> int:
        return len(self.past)

    @property
    def j(self) -> int:
        return len(self.future)

    def __len__(self) -> int:
        return self.k + 1 + self.j

    def symbols(self) -> tuple[int, ...]:
        """``a_-k .. a_j`` in order."""
        return self.past + (self.anchor,) + self.future

    def __getitem__(self, i: int) -> int:
        if not -self.k <= i <= self.j:
            raise IndexError(f"index {i} outside window [{-self.k}, {self.j}]")
        return self.symbols()[i + self.k]

    @property
    def departure(self) -> DepartedSlab | None:
        return None if self.departed is None else DepartedSlab(self.departed)

    def __str__(self) -> str:
        return "".join(map(str, self.past)) + "." + str(self.anchor) + "".join(map(str, self.future))


def shift_chi(word: SymbolWord) -> SymbolWord:
    """Re-anchor one place to the right: ``b_k = a_(k+1)``."""
    if not word.future:
        raise ValueError("cannot shift a word with empty future")
    return SymbolWord(word.past + (word.anchor,), word.future[0], word.future[1:])


def agrees_on(a: SymbolWord, b: SymbolWord, j: int) -> bool:
    """True when ``a_k = b_k`` for all ``|k| < j`` (the ``W_j`` neighbourhood)."""
    for i in range(-(j - 1), j):
        ina = -a.k <= i <= a.j
        inb = -b.k <= i <= b.j
        if ina != inb or (ina and a[i] != b[i]):
            return False
    return True


def all_words(k: int, j: int) -> list[SymbolWord]:
    """Every word with ``k`` past and ``j`` future symbols, in lexicographic order."""
    out = []
    for bits in itertools.product((0, 1), repeat=k + 1 + j):
        out.append(SymbolWord(bits[:k], bits[k], bits[k + 1:]))
    return out
