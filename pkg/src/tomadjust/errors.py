"""Exception hierarchy shared by every module."""

from __future__ import annotations


class TomAdjustError(Exception):
    """Base class for all package errors."""


class RankDeficient(TomAdjustError):
    pass


class LeverageOne(TomAdjustError):
    pass


class DfExhausted(TomAdjustError):
    pass


class BadPlan(TomAdjustError):
    pass


class TooLarge(TomAdjustError):
    pass


class EmptyArm(TomAdjustError):
    """An arm (or a stratum-arm, or cluster arm) has too few units."""


class StrataTooSmall(TomAdjustError):
    pass


class MissingPopulationMean(TomAdjustError):
    pass


class BadConfig(TomAdjustError):
    pass


class ZeroRmse(TomAdjustError):
    pass


class ParseError(TomAdjustError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class MissingColumn(ParseError):
    pass


class NonBinaryTreatment(ParseError):
    pass


class MissingValue(ParseError):
    pass
