"""Exact spider phases: quarter turns plus integer multiples of free symbols.

A phase is ``quarter_turns * (pi/2) + sum_s coeff[s] * s`` where the symbols
``s`` are opaque integer ids standing for unknown real angles.  Arithmetic is
exact: quarter turns live in Z_4 and symbol coefficients are signed integers,
so rule applications never accumulate floating-point error.  A concrete angle
(no symbols) is therefore always an exact multiple of pi/2.
"""

from __future__ import annotations

import math
from typing import Mapping


class Angle:
    """Immutable, hashable exact angle."""

    __slots__ = ("_qt", "_symbols")

    def __init__(self, quarter_turns: int = 0, symbols: Mapping[int, int] | None = None):
        self._qt = int(quarter_turns) % 4
        if symbols:
            # Zero coefficients are dropped so equal angles compare equal.
            self._symbols = tuple(
                sorted((int(s), int(c)) for s, c in symbols.items() if int(c) != 0)
            )
        else:
            self._symbols = ()

    @classmethod
    def zero(cls) -> "Angle":
        return cls(0)

    @classmethod
    def pi(cls) -> "Angle":
        return cls(2)

    @classmethod
    def half_pi(cls) -> "Angle":
        return cls(1)

    @classmethod
    def symbol(cls, sym: int, coeff: int = 1) -> "Angle":
        return cls(0, {sym: coeff})

    @property
    def quarter_turns(self) -> int:
        return self._qt

    @property
    def symbols(self) -> dict[int, int]:
        return dict(self._symbols)

    @property
    def is_concrete(self) -> bool:
        return not self._symbols

    @property
    def is_zero(self) -> bool:
        return self._qt == 0 and not self._symbols

    @property
    def is_pi(self) -> bool:
        return self._qt == 2 and not self._symbols

    def free_symbols(self) -> set[int]:
        return {s for s, _ in self._symbols}

    def radians(self, assignment: Mapping[int, float] | None = None) -> float:
        """Numeric value; symbolic angles require an assignment for every symbol."""
        val = self._qt * (math.pi / 2.0)
        for sym, coeff in self._symbols:
            if assignment is None or sym not in assignment:
                raise KeyError(f"no value assigned to symbol {sym}")
            val += coeff * float(assignment[sym])
        return val

    def __add__(self, other: "Angle") -> "Angle":
        if not isinstance(other, Angle):
            return NotImplemented
        merged = dict(self._symbols)
        for sym, coeff in other._symbols:
            merged[sym] = merged.get(sym, 0) + coeff
        return Angle(self._qt + other._qt, merged)

    def __neg__(self) -> "Angle":
        return Angle(-self._qt, {s: -c for s, c in self._symbols})

    def __sub__(self, other: "Angle") -> "Angle":
        if not isinstance(other, Angle):
            return NotImplemented
        return self + (-other)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Angle)
            and self._qt == other._qt
            and self._symbols == other._symbols
        )

    def __hash__(self) -> int:
        return hash((self._qt, self._symbols))

    def __repr__(self) -> str:
        parts = []
        if self._qt or not self._symbols:
            parts.append(f"{self._qt}*pi/2")
        parts.extend(f"{c}*s{s}" for s, c in self._symbols)
        return "Angle(" + " + ".join(parts) + ")"
