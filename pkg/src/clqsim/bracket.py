"""Bracket execution for one simulated season under one format.

Builds per-round entry lists from a season's ranks, assigns seeded and
unseeded pots, draws uniform random seeded-vs-unseeded pairings, and
resolves ties through a supplied matrix of pre-drawn outcomes.  The
slot-coefficient carry-over rule is applied between rounds: a winner is
considered, for the next round's draw only, with the higher of the two
participants' real coefficients.

Everything here is a pure function of (format, draw, matrices, rng state);
callers parallelize by running many brackets, never within one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Protocol, Sequence

import numpy as np

from .model import FormatError, FormatSpec, SeasonTable, Slot


class UniformSource(Protocol):
    def random(self) -> float: ...


class Tie(NamedTuple):
    """One drawn pairing.  ``slot_a`` always holds the seeded-pot side."""

    slot_a: Slot
    slot_b: Slot
    round: str
    one_leg: bool
    seeded_side: str = "a"


@dataclass(frozen=True)
class OutcomeMatrices:
    """Pre-drawn binary advance decisions for every unordered competitor pair.

    ``two_leg[i, j] == 1`` means competitor i advances against j in a
    two-legged tie; ``one_leg`` likewise for single matches.  Anti-symmetry
    (m[i, j] = 1 - m[j, i]) guarantees both formats consult the same
    realization no matter which side of the pair a bracket reaches first.
    ``index`` optionally maps occupant keys to matrix rows.
    """

    two_leg: np.ndarray
    one_leg: np.ndarray
    index: "Mapping[Any, int] | None" = None

    def __post_init__(self) -> None:
        for name, m in (("two_leg", self.two_leg), ("one_leg", self.one_leg)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise FormatError(f"{name} matrix must be square, got {m.shape}")
            off = ~np.eye(m.shape[0], dtype=bool)
            total = m + m.T
            if not np.all(total[off] == 1):
                raise FormatError(f"{name} matrix is not anti-symmetric")

    def advances(self, i: Any, j: Any, one_leg: bool = False) -> bool:
        """Whether occupant i advances against occupant j."""
        if self.index is not None:
            i, j = self.index[i], self.index[j]
        if i == j:
            raise FormatError(f"pair ({i}, {j}) is not a valid tie")
        m = self.one_leg if one_leg else self.two_leg
        return bool(m[i, j])


@dataclass(frozen=True)
class EntryLists:
    """Who enters where for one (format, season) combination."""

    direct: tuple
    by_round: Mapping[str, tuple]
    competitors: tuple


@dataclass(frozen=True)
class SeasonDraw:
    """One iteration's bracket inputs: entry lists plus drawn attributes.

    Coefficients must support exact comparison (integers or decimals); Elo
    values must be orderable.  Occupant keys must be orderable so pot ties
    can break deterministically.
    """

    direct: tuple
    entrants: Mapping[str, tuple]
    coefficient: Mapping[Any, Any]
    elo: Mapping[Any, Any]


@dataclass
class RoundCounter:
    """Optional per-round bookkeeping collected during a bracket run."""

    played: dict = field(default_factory=dict)
    matches: int = 0

    def note_round(self, label: str, occupants: Sequence[Any], matches: int) -> None:
        self.played.setdefault(label, []).extend(occupants)
        self.matches += matches


def build_entry_lists(format_spec: FormatSpec, season: SeasonTable) -> EntryLists:
    """Assign every participating association to its entry round.

    Assignment runs over effective access positions so that each round's
    entrant count stays fixed even in seasons where the non-participating
    rank falls inside a different entry window.  Associations above the
    sampled field (effective position below the direct window's depth) are
    simply absent here; sampled direct qualifiers are returned.
    """
    positions = season.effective_positions()
    windows = format_spec.entry_plan()
    covered = max(w.stop - 1 for _, w in windows)
    direct: list = []
    by_round: dict[str, list] = {r.label: [] for r in format_spec.rounds}
    for name, pos in sorted(positions.items(), key=lambda kv: kv[1]):
        if pos > covered:
            raise FormatError(
                f"rank coverage gap: {name!r} at effective position {pos}, "
                f"format {format_spec.name!r} covers only 1..{covered}"
            )
        for label, window in windows:
            if pos in window:
                (direct if label == "direct" else by_round[label]).append(name)
                break
    for rnd in format_spec.rounds:
        if rnd.entrants and len(by_round[rnd.label]) != rnd.entrants:
            raise FormatError(
                f"round {rnd.label} of {format_spec.name!r}: expected "
                f"{rnd.entrants} entrants, assigned {len(by_round[rnd.label])} "
                f"({season.season})"
            )
    competitors = [n for ns in by_round.values() for n in ns]
    order = {n: positions[n] for n in competitors}
    return EntryLists(
        direct=tuple(direct),
        by_round={k: tuple(v) for k, v in by_round.items()},
        competitors=tuple(sorted(competitors, key=order.get)),
    )


def _pot_sort_key(slot: Slot):
    # Highest draw coefficient first; ties broken by higher Elo, then by
    # occupant order, so pot membership is always deterministic.
    return (slot.draw_coefficient, slot.elo)


def _ranked(slots: Sequence[Slot]) -> list[Slot]:
    order = sorted(range(len(slots)), key=lambda k: slots[k].occupant)
    by_occupant = sorted(order, key=lambda k: _pot_sort_key(slots[k]), reverse=True)
    return [slots[k] for k in by_occupant]


def _perm_from_uniforms(rng: UniformSource, k: int) -> list[int]:
    u = [rng.random() for _ in range(k)]
    return sorted(range(k), key=u.__getitem__)


def assign_pots(
    slots: Sequence[Slot],
    mode: str = "seeded",
    rng: "UniformSource | None" = None,
) -> tuple[list[Slot], list[Slot]]:
    """Split a round's slots into equal seeded and unseeded pots.

    Seeded mode ranks by draw coefficient (Elo, then occupant order break
    ties); unseeded-random mode draws a uniform random bipartition and is
    the counterfactual used to isolate the value of being seeded.
    """
    if len(slots) % 2:
        raise FormatError(f"round must have an even team count, got {len(slots)}")
    half = len(slots) // 2
    if mode == "seeded":
        ranked = _ranked(slots)
    elif mode == "unseeded-random":
        if rng is None:
            raise FormatError("unseeded-random pot assignment needs an rng")
        perm = _perm_from_uniforms(rng, len(slots))
        ranked = [slots[k] for k in perm]
    else:
        raise FormatError(f"unknown seeding mode: {mode!r}")
    return ranked[:half], ranked[half:]


def draw_round(
    seeded: Sequence[Slot],
    unseeded: Sequence[Slot],
    rng: UniformSource,
    round_label: str = "Q1",
    one_leg: bool = False,
) -> list[Tie]:
    """Draw a uniformly random perfect matching between the two pots."""
    if len(seeded) != len(unseeded):
        raise FormatError(
            f"pots must be equal, got {len(seeded)} seeded vs {len(unseeded)} unseeded"
        )
    perm = _perm_from_uniforms(rng, len(unseeded))
    return [
        Tie(slot_a=seeded[m], slot_b=unseeded[perm[m]], round=round_label, one_leg=one_leg)
        for m in range(len(seeded))
    ]


def resolve_tie(tie: Tie, matrices: OutcomeMatrices) -> Slot:
    """Resolve one tie and apply the carry-over rule to the winner.

    The winner's draw coefficient for the NEXT round is the higher of the
    two participants' real coefficients; its real coefficient is untouched,
    so the inflated value lasts exactly one round.  Rounds whose draw uses
    real coefficients simply ignore the carried value (see run_format).
    """
    a, b = tie.slot_a, tie.slot_b
    a_wins = matrices.advances(a.occupant, b.occupant, one_leg=tie.one_leg)
    winner = a if a_wins else b
    carried = max(a.real_coefficient, b.real_coefficient)
    return Slot(
        occupant=winner.occupant,
        real_coefficient=winner.real_coefficient,
        draw_coefficient=carried,
        elo=winner.elo,
    )


def play_preliminary(
    entrants: Sequence[Slot],
    matrices: OutcomeMatrices,
    rng: UniformSource,
    mode: str = "seeded",
) -> Slot:
    """Run the four-team one-leg mini-knockout and return its winner.

    Two seeded-vs-unseeded semifinals, then a final whose host is drawn
    (and ignored: the one-leg formula carries no home term).  The winner
    enters the next round carrying the highest real coefficient among
    itself and the teams it eliminated.
    """
    if len(entrants) != 4:
        raise FormatError(f"mini-knockout takes exactly 4 entrants, got {len(entrants)}")
    seeded, unseeded = assign_pots(entrants, mode, rng)
    semis = draw_round(seeded, unseeded, rng, round_label="PR", one_leg=True)
    rng.random()  # final host draw; the host enjoys no modeled advantage
    finalists = []
    beaten_by: dict[Any, list[Slot]] = {}
    for tie in semis:
        a_wins = matrices.advances(tie.slot_a.occupant, tie.slot_b.occupant, one_leg=True)
        winner, loser = (tie.slot_a, tie.slot_b) if a_wins else (tie.slot_b, tie.slot_a)
        finalists.append(winner)
        beaten_by[winner.occupant] = [loser]
    f0, f1 = finalists
    f0_wins = matrices.advances(f0.occupant, f1.occupant, one_leg=True)
    winner, loser = (f0, f1) if f0_wins else (f1, f0)
    eliminated = beaten_by[winner.occupant] + [loser]
    carried = max([winner.real_coefficient] + [s.real_coefficient for s in eliminated])
    return Slot(
        occupant=winner.occupant,
        real_coefficient=winner.real_coefficient,
        draw_coefficient=carried,
        elo=winner.elo,
    )


def run_format(
    format_spec: FormatSpec,
    draw: SeasonDraw,
    matrices: OutcomeMatrices,
    seeding: str = "seeded",
    rng: "UniformSource | None" = None,
    counter: "RoundCounter | None" = None,
) -> frozenset:
    """Play out one format and return the qualified occupants.

    The result is the direct qualifiers plus the final round's winners.
    Winners carry into the next round ahead of that round's new entrants,
    new entrants join in entry-list order.  A round whose draw uses real
    coefficients seeds the previous round's winners by their own values
    instead of the carried ones.
    """
    if rng is None:
        raise FormatError("run_format needs an rng")

    def fresh(occupant) -> Slot:
        c = draw.coefficient[occupant]
        return Slot(occupant, c, c, draw.elo[occupant])

    carried: list[Slot] = []
    for rnd in format_spec.rounds:
        if rnd.draw_coefficients == "real":
            carried = [
                Slot(s.occupant, s.real_coefficient, s.real_coefficient, s.elo)
                for s in carried
            ]
        slots = carried + [fresh(o) for o in draw.entrants.get(rnd.label, ())]
        if counter is not None:
            matches = 3 if rnd.structure == "mini-knockout" else len(slots) // 2
            counter.note_round(rnd.label, [s.occupant for s in slots], matches)
        if rnd.structure == "mini-knockout":
            carried = [play_preliminary(slots, matrices, rng, mode=seeding)]
        else:
            seeded, unseeded = assign_pots(slots, seeding, rng)
            ties = draw_round(
                seeded, unseeded, rng, round_label=rnd.label,
                one_leg=rnd.tie_kind == "one-leg",
            )
            carried = [resolve_tie(t, matrices) for t in ties]
    return frozenset(draw.direct) | frozenset(s.occupant for s in carried)
