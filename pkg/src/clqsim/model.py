"""Domain types shared by every other module: associations, seasons,
champion profiles, season tables, and qualifying-format descriptions.

No I/O and no randomness live here.  All types are immutable after
construction and safe to share across workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterable, Literal, Mapping, NamedTuple, Sequence

# The 45 champion-sending associations, ordered by their most recent access
# rank.  Liechtenstein fields no team and is tracked separately.
ASSOCIATIONS: tuple[str, ...] = (
    "Turkey",
    "Austria",
    "Switzerland",
    "Czech Republic",
    "Netherlands",
    "Greece",
    "Croatia",
    "Denmark",
    "Israel",
    "Cyprus",
    "Romania",
    "Poland",
    "Sweden",
    "Azerbaijan",
    "Bulgaria",
    "Serbia",
    "Scotland",
    "Belarus",
    "Kazakhstan",
    "Norway",
    "Slovenia",
    "Slovakia",
    "Moldova",
    "Albania",
    "Iceland",
    "Hungary",
    "FYR Macedonia",
    "Finland",
    "Republic of Ireland",
    "Bosnia and Herzegovina",
    "Latvia",
    "Estonia",
    "Lithuania",
    "Montenegro",
    "Georgia",
    "Armenia",
    "Malta",
    "Luxembourg",
    "Northern Ireland",
    "Wales",
    "Faroe Islands",
    "Gibraltar",
    "Andorra",
    "San Marino",
    "Kosovo",
)

NON_PARTICIPANT = "Liechtenstein"

SEASONS: tuple[str, ...] = ("2015/16", "2016/17", "2017/18", "2018/19", "2019/20")

# Kosovo joined in 2017/18; earlier season tables carry a synthetic rank-55
# row with no profile, and attribute draws are redirected to these seasons.
KOSOVO = "Kosovo"
KOSOVO_SEASONS: tuple[str, ...] = SEASONS[2:]

ASSOCIATION_INDEX: dict[str, int] = {name: i for i, name in enumerate(ASSOCIATIONS)}

RoundLabel = Literal["PR", "Q1", "Q2", "Q3", "PO"]
ROUND_LABELS: tuple[str, ...] = ("PR", "Q1", "Q2", "Q3", "PO")

TieKind = Literal["one-leg", "two-leg"]
Structure = Literal["pairwise", "mini-knockout"]
SeedingMode = Literal["seeded", "unseeded-random"]


class FormatError(ValueError):
    """A qualifying-format description or bracket input is structurally invalid."""


@dataclass(frozen=True)
class AssociationId:
    """Stable identifier for one champion-sending association."""

    name: str
    index: int

    def __post_init__(self) -> None:
        if self.name not in ASSOCIATION_INDEX:
            raise ValueError(f"unknown association: {self.name!r}")
        if ASSOCIATION_INDEX[self.name] != self.index:
            raise ValueError(
                f"index {self.index} does not match {self.name!r} "
                f"(expected {ASSOCIATION_INDEX[self.name]})"
            )

    @classmethod
    def of(cls, name: str) -> "AssociationId":
        return cls(name, ASSOCIATION_INDEX.get(name, -1))


@dataclass(frozen=True)
class SeasonId:
    """One of the five seasons covered by the dataset."""

    label: str

    def __post_init__(self) -> None:
        if self.label not in SEASONS:
            raise ValueError(f"unknown season: {self.label!r}")

    @property
    def index(self) -> int:
        return SEASONS.index(self.label)


@dataclass(frozen=True)
class ChampionProfile:
    """One association-season cell: the champion's club coefficient and its
    Elo rating.  The two values always travel together; they are never mixed
    across seasons for one association."""

    coefficient: Decimal
    elo: Decimal

    def __post_init__(self) -> None:
        if self.coefficient < 0:
            raise ValueError(f"coefficient must be nonnegative: {self.coefficient}")
        if self.elo <= 0:
            raise ValueError(f"elo must be positive: {self.elo}")


@dataclass(frozen=True)
class SeasonTable:
    """Ranks and champion profiles for one season.

    ``ranks`` covers every association including non-participants;
    ``participates`` flags which of them field a team; ``profiles`` holds the
    coefficient/Elo cells that exist for this season (Kosovo has none before
    2017/18 even though it is ranked and participating).
    """

    season: str
    ranks: Mapping[str, int]
    participates: Mapping[str, bool]
    profiles: Mapping[str, ChampionProfile]

    def present(self, association: str) -> bool:
        """Whether a real data cell exists for the association this season."""
        return association in self.profiles

    def effective_positions(self) -> dict[str, int]:
        """Map each participating association to its effective access position.

        A non-participating rank vacates its slot, moving every lower-ranked
        champion up one position.  Entry windows are defined over these
        positions, which keeps every round's team count constant no matter
        where the non-participant happens to be ranked in a given season.
        """
        vacated = sorted(r for a, r in self.ranks.items() if not self.participates.get(a, True))
        return {
            a: r - sum(1 for v in vacated if v < r)
            for a, r in self.ranks.items()
            if self.participates.get(a, True)
        }


class Slot(NamedTuple):
    """One bracket position: who occupies it and with which coefficients.

    ``draw_coefficient`` is the value used for pot assignment in the current
    round; it equals ``real_coefficient`` except in the round immediately
    after the occupant eliminated a higher-coefficient opponent.  ``elo`` is
    the occupant's drawn rating, used only to break pot ties.  Coefficients
    must support exact comparison (integers or decimals).
    """

    occupant: Any
    real_coefficient: Any
    draw_coefficient: Any
    elo: Any


@dataclass(frozen=True)
class RoundSpec:
    """One qualifying round of a format.

    ``entry_ranks`` is the raw access-list interval whose champions enter at
    this round; ``entrants`` is the number that actually enter (one less than
    the interval size when the non-participant's rank falls inside it).

    ``draw_coefficients`` says how this round's draw values the previous
    round's winners: "carried" when the draw precedes the previous round's
    finish (each winner slot counts the assumed, higher coefficient of its
    tie) or "real" when the draw happens late enough to use the actual
    winners' own coefficients.
    """

    label: str
    entry_ranks: frozenset[int]
    entrants: int
    tie_kind: str = "two-leg"
    structure: str = "pairwise"
    draw_coefficients: str = "carried"

    def __post_init__(self) -> None:
        if self.label not in ROUND_LABELS:
            raise FormatError(f"unknown round label: {self.label!r}")
        if self.tie_kind not in ("one-leg", "two-leg"):
            raise FormatError(f"unknown tie kind: {self.tie_kind!r}")
        if self.structure not in ("pairwise", "mini-knockout"):
            raise FormatError(f"unknown round structure: {self.structure!r}")
        if self.structure == "mini-knockout" and (self.label != "PR" or self.tie_kind != "one-leg"):
            raise FormatError("only PR may be a one-leg mini-knockout")
        if self.draw_coefficients not in ("carried", "real"):
            raise FormatError(
                f"unknown draw coefficient mode: {self.draw_coefficients!r}"
            )
        if self.entrants < 0 or self.entrants > len(self.entry_ranks):
            raise FormatError(
                f"round {self.label}: entrant count {self.entrants} incompatible "
                f"with {len(self.entry_ranks)} entry ranks"
            )


@dataclass(frozen=True)
class FormatSpec:
    """Declarative description of one qualifying regime.

    ``direct_ranks`` enter the group stage without playing; ``rounds`` are in
    bracket order (earliest first), each fed by its entrants plus the winners
    of the previous round.
    """

    name: str
    direct_ranks: frozenset[int]
    direct_count: int
    rounds: tuple[RoundSpec, ...]

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not self.rounds:
            raise FormatError(f"format {self.name!r} has no rounds")
        if self.direct_count < 1 or self.direct_count > len(self.direct_ranks):
            raise FormatError(f"format {self.name!r}: bad direct qualifier count")
        seen: set[int] = set(self.direct_ranks)
        for rnd in self.rounds:
            overlap = seen & rnd.entry_ranks
            if overlap:
                raise FormatError(
                    f"format {self.name!r}: ranks {sorted(overlap)} assigned twice"
                )
            seen |= rnd.entry_ranks
        labels = [r.label for r in self.rounds]
        if len(set(labels)) != len(labels):
            raise FormatError(f"format {self.name!r}: duplicate round labels")
        sizes = self.round_sizes()
        for rnd in self.rounds:
            size = sizes[rnd.label]
            if size % 2:
                raise FormatError(f"format {self.name!r}: odd round size {size}")
            if rnd.structure == "mini-knockout" and size != 4:
                raise FormatError("mini-knockout rounds take exactly 4 teams")

    def round_sizes(self) -> dict[str, int]:
        """Team count of every round: entrants plus previous-round winners."""
        sizes: dict[str, int] = {}
        carried = 0
        for rnd in self.rounds:
            size = rnd.entrants + carried
            sizes[rnd.label] = size
            carried = 1 if rnd.structure == "mini-knockout" else size // 2
        return sizes

    @property
    def group_stage_size(self) -> int:
        last = self.rounds[-1]
        winners = 1 if last.structure == "mini-knockout" else self.round_sizes()[last.label] // 2
        return self.direct_count + winners

    def entry_plan(self) -> list[tuple[str, range]]:
        """Effective-position windows, in ascending-position order.

        'direct' claims positions 1..direct_count, then each round claims the
        next ``entrants`` positions, walking rounds from the latest (closest
        to the group stage) to the earliest.  Rounds reached only by winners
        (no entry ranks) claim nothing.
        """
        plan = [("direct", self.direct_count)]
        plan += [
            (r.label, r.entrants)
            for r in reversed(self.rounds)
            if r.entrants
        ]
        windows: list[tuple[str, range]] = []
        start = 1
        for label, count in plan:
            windows.append((label, range(start, start + count)))
            start += count
        return windows


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of dataset validation: empty violation list means ok."""

    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(self.violations)


def validate_dataset(tables: Sequence[SeasonTable]) -> ValidationReport:
    """Check the five season tables against the association registry.

    Report-style: collects violations instead of raising, so callers can
    show everything wrong with a dataset at once.
    """
    problems: list[str] = []
    by_season = {t.season: t for t in tables}
    if sorted(by_season) != sorted(SEASONS):
        problems.append(
            f"expected one table per season {list(SEASONS)}, got {sorted(t.season for t in tables)}"
        )
        return ValidationReport(tuple(problems))

    for season in SEASONS:
        table = by_season[season]
        expected = set(ASSOCIATIONS) | {NON_PARTICIPANT}
        for name in sorted(expected - set(table.ranks)):
            problems.append(f"{season}: missing association {name!r}")
        for name in sorted(set(table.ranks) - expected):
            problems.append(f"{season}: unknown association {name!r}")

        ranks = list(table.ranks.values())
        dupes = sorted({r for r in ranks if ranks.count(r) > 1})
        if dupes:
            problems.append(f"{season}: duplicate rank {dupes}")
        for name, rank in table.ranks.items():
            if not 1 <= rank <= 55:
                problems.append(f"{season}: rank {rank} for {name!r} outside 1..55")

        if table.participates.get(NON_PARTICIPANT, True):
            problems.append(f"{season}: {NON_PARTICIPANT} must not participate")
        if NON_PARTICIPANT in table.profiles:
            problems.append(f"{season}: {NON_PARTICIPANT} must not have a profile")
        for name in ASSOCIATIONS:
            if name in table.ranks and not table.participates.get(name, False):
                problems.append(f"{season}: {name!r} flagged non-participating")

        kosovo_expected = season in KOSOVO_SEASONS
        if table.present(KOSOVO) != kosovo_expected:
            state = "present" if table.present(KOSOVO) else "absent"
            problems.append(f"{season}: Kosovo presence wrong ({state})")
        if not kosovo_expected and table.ranks.get(KOSOVO) != 55:
            problems.append(f"{season}: Kosovo must carry rank 55 when absent")

        for name, profile in table.profiles.items():
            if profile.elo <= 0:
                problems.append(f"{season}: non-positive Elo for {name!r}")
            if profile.coefficient < 0:
                problems.append(f"{season}: negative coefficient for {name!r}")
        for name in ASSOCIATIONS:
            if name in table.ranks and name not in table.profiles:
                if name != KOSOVO or kosovo_expected:
                    problems.append(f"{season}: missing profile for {name!r}")

    return ValidationReport(tuple(problems))


def make_format(
    name: str,
    direct_ranks: Iterable[int],
    direct_count: int,
    rounds: Sequence[RoundSpec],
) -> FormatSpec:
    return FormatSpec(
        name=name,
        direct_ranks=frozenset(direct_ranks),
        direct_count=direct_count,
        rounds=tuple(rounds),
    )
