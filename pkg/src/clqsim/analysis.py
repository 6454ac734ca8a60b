"""Post-processing: turn qualification tallies into comparison reports.

Everything here is deterministic arithmetic over tallies produced by the
simulation engine: per-association probabilities with binomial standard
errors, the reform delta between two regimes, relative losses, the seeding
contribution, scaling-parameter sweeps, and expected prize-money effects.

Report serialization
--------------------
CSV: one row per association, columns
    association, p_old, se_old, p_new, se_new, delta, relative_loss,
    money_delta_eur, fee_income_old_meur, fee_income_new_meur
with relative_loss left empty when it is not reported.  JSON: a nested
object with "meta" and an "associations" mapping carrying the same fields.
Both use full-precision float repr so identical runs serialize identically.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from functools import cached_property
from typing import IO, Iterable, Mapping, Sequence

from .elo import ScalingParam
from .mc import QualificationTally, RunConfig, run
from .model import ASSOCIATION_INDEX

# Ratios of noisy near-zero probabilities are meaningless; below this
# baseline probability the relative loss is not reported.
RELATIVE_LOSS_FLOOR = 1e-4

# Expected-money flag threshold: one million Euros of expected loss.
MONEY_FLAG_EUR = -1_000_000.0


def _default_round_fees() -> Mapping[str, Decimal]:
    return {
        "PR": Decimal("0.23"),
        "Q1": Decimal("0.28"),
        "Q2": Decimal("0.38"),
        "Q3": Decimal("0.48"),
        "PO": Decimal("5"),
        "GS": Decimal("15.25"),
    }


@dataclass(frozen=True)
class PrizeSchedule:
    """Participation fees per round reached, in million Euros.

    ``gs_premium`` is the net value of reaching the group stage instead of
    stopping at the play-off (million Euros); it drives the headline
    money-impact estimate, under which one percentage point of qualification
    probability is worth about 100 thousand Euros.  ``round_fees`` carries
    the full fee ladder for the supplementary expected-income figures.
    """

    round_fees: Mapping[str, Decimal] = field(default_factory=_default_round_fees)
    gs_premium: Decimal = Decimal("10")

    def __post_init__(self) -> None:
        for label, fee in self.round_fees.items():
            if fee < 0:
                raise ValueError(f"negative fee for {label}: {fee}")
        if self.gs_premium < 0:
            raise ValueError(f"negative group-stage premium: {self.gs_premium}")

    @property
    def gs_premium_eur(self) -> float:
        return float(self.gs_premium) * 1e6


@dataclass(frozen=True)
class AssociationRow:
    """One association's line of a ProbabilityReport.

    ``relative_loss`` is ``delta / p_old`` and is None when ``p_old`` is
    below the reporting floor.  ``money_delta_eur`` applies the group-stage
    premium to the delta.  Fee incomes are the expected sums of round
    participation fees (group stage included), in million Euros.
    """

    association: str
    p_old: float
    p_new: float
    se_old: float
    se_new: float
    delta: float
    relative_loss: "float | None"
    money_delta_eur: float
    fee_income_old: float
    fee_income_new: float


@dataclass(frozen=True)
class ProbabilityReport:
    """Per-association qualification probabilities under two regimes.

    The first configured format of the underlying run is reported as the
    reference ("old") regime and the last as the reform ("new") one.
    """

    rows: tuple[AssociationRow, ...]
    runs: int
    old_format: str
    new_format: str
    schedule: PrizeSchedule = PrizeSchedule()

    @cached_property
    def _by_name(self) -> dict[str, AssociationRow]:
        return {r.association: r for r in self.rows}

    def row(self, association: str) -> AssociationRow:
        return self._by_name[association]

    @property
    def associations(self) -> tuple[str, ...]:
        return tuple(r.association for r in self.rows)

    def to_json_dict(self) -> dict:
        return {
            "runs": self.runs,
            "old_format": self.old_format,
            "new_format": self.new_format,
            "gs_premium_meur": str(self.schedule.gs_premium),
            "associations": {
                r.association: {
                    "p_old": r.p_old,
                    "p_new": r.p_new,
                    "se_old": r.se_old,
                    "se_new": r.se_new,
                    "delta": r.delta,
                    "relative_loss": r.relative_loss,
                    "money_delta_eur": r.money_delta_eur,
                    "fee_income_old_meur": r.fee_income_old,
                    "fee_income_new_meur": r.fee_income_new,
                }
                for r in self.rows
            },
        }

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["association", "p_old", "se_old", "p_new", "se_new", "delta",
             "relative_loss", "money_delta_eur",
             "fee_income_old_meur", "fee_income_new_meur"]
        )
        for r in self.rows:
            writer.writerow(
                [r.association, repr(r.p_old), repr(r.se_old), repr(r.p_new),
                 repr(r.se_new), repr(r.delta),
                 "" if r.relative_loss is None else repr(r.relative_loss),
                 repr(r.money_delta_eur), repr(r.fee_income_old),
                 repr(r.fee_income_new)]
            )


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


def _ordered_names(names: Iterable[str]) -> list[str]:
    return sorted(names, key=lambda n: ASSOCIATION_INDEX.get(n, len(ASSOCIATION_INDEX)))


def _fee_income(tally_fmt, name: str, runs: int, schedule: PrizeSchedule) -> float:
    income = 0.0
    for label, per in tally_fmt.entered.items():
        fee = schedule.round_fees.get(label)
        if fee is not None:
            income += float(fee) * per[name] / runs
    gs_fee = schedule.round_fees.get("GS")
    if gs_fee is not None:
        income += float(gs_fee) * tally_fmt.counts[name] / runs
    return income


def probabilities(
    tally: QualificationTally,
    schedule: "PrizeSchedule | None" = None,
) -> ProbabilityReport:
    """Build the old-vs-new comparison report from a two-format tally."""
    if tally.runs < 1:
        raise ValueError("tally has no runs")
    names_by_format = list(tally.per_format)
    if len(names_by_format) < 2:
        raise ValueError(
            f"need two formats to compare, tally has {names_by_format}"
        )
    schedule = schedule or PrizeSchedule()
    old_name, new_name = names_by_format[0], names_by_format[-1]
    old, new = tally.per_format[old_name], tally.per_format[new_name]
    n = tally.runs
    rows = []
    for a in _ordered_names(old.counts):
        p_old = old.counts[a] / n
        p_new = new.counts[a] / n
        delta = p_new - p_old
        rel = delta / p_old if p_old >= RELATIVE_LOSS_FLOOR else None
        rows.append(
            AssociationRow(
                association=a,
                p_old=p_old,
                p_new=p_new,
                se_old=_binomial_se(p_old, n),
                se_new=_binomial_se(p_new, n),
                delta=delta,
                relative_loss=rel,
                money_delta_eur=delta * schedule.gs_premium_eur,
                fee_income_old=_fee_income(old, a, n, schedule),
                fee_income_new=_fee_income(new, a, n, schedule),
            )
        )
    return ProbabilityReport(
        rows=tuple(rows),
        runs=n,
        old_format=old_name,
        new_format=new_name,
        schedule=schedule,
    )


def _meta_mismatch(a, b) -> "str | None":
    if a is None or b is None:
        return "missing run metadata"
    if a.iterations != b.iterations:
        return f"iterations differ: {a.iterations} vs {b.iterations}"
    if a.scaling_s != b.scaling_s:
        return f"scaling differs: {a.scaling_s} vs {b.scaling_s}"
    if a.season_weights != b.season_weights:
        return "season weights differ"
    return None


def seeding_contribution(
    tally_seeded: QualificationTally,
    tally_unseeded: QualificationTally,
    format_name: "str | None" = None,
) -> dict[str, float]:
    """Percentage-point effect of coefficient seeding per association.

    Both tallies must come from runs that differ only in seeding mode.  The
    comparison format defaults to the last format the two runs share, which
    for a standard old/new pair is the reform regime.
    """
    meta_s, meta_u = tally_seeded.meta, tally_unseeded.meta
    problem = _meta_mismatch(meta_s, meta_u)
    if problem:
        raise ValueError(f"tallies are not comparable: {problem}")
    if meta_s.seeding_mode != "seeded" or meta_u.seeding_mode != "unseeded-random":
        raise ValueError(
            "expected one seeded and one unseeded-random tally, got "
            f"{meta_s.seeding_mode!r} and {meta_u.seeding_mode!r}"
        )
    if format_name is None:
        shared = [n for n in meta_s.format_names if n in meta_u.format_names]
        if not shared:
            raise ValueError("tallies share no format")
        format_name = shared[-1]
    for t in (tally_seeded, tally_unseeded):
        if format_name not in t.per_format:
            raise ValueError(f"format {format_name!r} missing from tally")
    seeded = tally_seeded.per_format[format_name]
    unseeded = tally_unseeded.per_format[format_name]
    return {
        a: 100.0 * (seeded.counts[a] / tally_seeded.runs
                    - unseeded.counts[a] / tally_unseeded.runs)
        for a in _ordered_names(seeded.counts)
    }


def sensitivity_sweep(
    config: RunConfig,
    dataset,
    s_values: Sequence[float],
    schedule: "PrizeSchedule | None" = None,
    engine: str = "array",
) -> dict[float, ProbabilityReport]:
    """One full paired run per scaling value, all from the same master seed."""
    out: dict[float, ProbabilityReport] = {}
    for s in s_values:
        cfg = dataclasses.replace(config, scaling=ScalingParam(float(s)))
        tally = run(cfg, dataset, engine=engine)
        out[float(s)] = probabilities(tally, schedule)
    return out


@dataclass(frozen=True)
class MoneyImpact:
    """Expected prize-money change for one association, in Euros."""

    euros: float
    flagged: bool


def money_impact(
    report: ProbabilityReport,
    schedule: "PrizeSchedule | None" = None,
) -> dict[str, MoneyImpact]:
    """Expected group-stage-premium change per association.

    Associations expected to lose more than one million Euros are flagged.
    """
    schedule = schedule or report.schedule
    out = {}
    for r in report.rows:
        euros = r.delta * schedule.gs_premium_eur
        out[r.association] = MoneyImpact(euros=euros, flagged=euros < MONEY_FLAG_EUR)
    return out


def association_mean_elo(dataset) -> dict[str, float]:
    """Each association's mean Elo over the seasons it has data for."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for t in dataset.season_tables:
        for name, profile in t.profiles.items():
            sums[name] = sums.get(name, 0.0) + float(profile.elo)
            counts[name] = counts.get(name, 0) + 1
    return {n: sums[n] / counts[n] for n in _ordered_names(sums)}


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    def ranks(v: Sequence[float]) -> list[float]:
        order = sorted(range(len(v)), key=v.__getitem__)
        r = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            avg = (i + j) / 2.0 + 1.0
            for k in range(i, j + 1):
                r[order[k]] = avg
            i = j + 1
        return r

    rx, ry = ranks(x), ranks(y)
    n = len(x)
    mx = sum(rx) / n
    my = sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


def write_report_json(report: ProbabilityReport, fh: IO[str], extra: "Mapping | None" = None) -> None:
    """Serialize a report (plus optional experiment framing) as stable JSON."""
    doc = dict(extra or {})
    doc.update(report.to_json_dict())
    json.dump(doc, fh, indent=2, sort_keys=True)
    fh.write("\n")
