"""Half-up decimal rounding for score aggregation.

Published score tables round half-up at two decimals, and deltas are taken
between the *rounded* segment averages. Doing this in binary floating point
drifts (42.99 / 6 is not representable), so all table-facing arithmetic goes
through Decimal. Floats are converted via their repr, which is exact for
values entered with two decimals.
"""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal
from collections.abc import Iterable


def to_decimal(value: float | int | Decimal) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, int):
        return Decimal(value)
    return Decimal(repr(float(value)))


def round_half_up(value: float | int | Decimal, places: int = 2) -> Decimal:
    quantum = Decimal(1).scaleb(-places)
    return to_decimal(value).quantize(quantum, rounding=ROUND_HALF_UP)


def mean_half_up(values: Iterable[float | int | Decimal], places: int = 2) -> Decimal:
    items = [to_decimal(v) for v in values]
    if not items:
        raise ValueError("mean of empty sequence")
    return round_half_up(sum(items) / len(items), places)


def format_signed(value: Decimal) -> str:
    """Render a rounded delta with an explicit sign, e.g. '+0.31', '-0.01'."""
    return f"{value:+.2f}"
