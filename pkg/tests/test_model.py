"""Domain-type behavior: registry integrity, format validation, season tables."""
from __future__ import annotations

import dataclasses
from decimal import Decimal

import pytest

from clqsim.model import (
    ASSOCIATION_INDEX,
    ASSOCIATIONS,
    KOSOVO_SEASONS,
    NON_PARTICIPANT,
    SEASONS,
    AssociationId,
    ChampionProfile,
    FormatError,
    FormatSpec,
    RoundSpec,
    SeasonId,
    SeasonTable,
    Slot,
    ValidationReport,
    make_format,
    validate_dataset,
)


def test_registry_shape():
    assert len(ASSOCIATIONS) == 45
    assert len(set(ASSOCIATIONS)) == 45
    assert NON_PARTICIPANT not in ASSOCIATIONS
    assert ASSOCIATIONS[0] == "Turkey"
    assert ASSOCIATIONS[-1] == "Kosovo"
    assert all(ASSOCIATION_INDEX[name] == i for i, name in enumerate(ASSOCIATIONS))


def test_season_registry():
    assert SEASONS == ("2015/16", "2016/17", "2017/18", "2018/19", "2019/20")
    assert KOSOVO_SEASONS == ("2017/18", "2018/19", "2019/20")


def test_association_id():
    a = AssociationId.of("Hungary")
    assert a.index == ASSOCIATION_INDEX["Hungary"]
    with pytest.raises(ValueError):
        AssociationId("Hungary", 0)
    with pytest.raises(ValueError):
        AssociationId.of("Atlantis")


def test_season_id():
    s = SeasonId("2017/18")
    assert s.index == 2
    with pytest.raises(ValueError):
        SeasonId("2014/15")


def test_champion_profile_validation():
    p = ChampionProfile(Decimal("4.25"), Decimal(915))
    assert p.coefficient == Decimal("4.25")
    with pytest.raises(ValueError):
        ChampionProfile(Decimal(-1), Decimal(1500))
    with pytest.raises(ValueError):
        ChampionProfile(Decimal(5), Decimal(0))


def test_slot_field_order():
    s = Slot("Hungary", Decimal("3.5"), Decimal(27), 1468)
    assert s.occupant == "Hungary"
    assert s.real_coefficient == Decimal("3.5")
    assert s.draw_coefficient == Decimal(27)
    assert s.elo == 1468


def test_effective_positions_shift_past_vacated_rank():
    table = SeasonTable(
        season="2019/20",
        ranks={"A": 3, "B": 4, "C": 5, "D": 6},
        participates={"A": True, "B": False, "C": True, "D": True},
        profiles={},
    )
    assert table.effective_positions() == {"A": 3, "C": 4, "D": 5}


def test_effective_positions_multiple_vacancies():
    table = SeasonTable(
        season="2019/20",
        ranks={"A": 1, "B": 2, "C": 3, "D": 4, "E": 5},
        participates={"A": False, "B": True, "C": False, "D": True, "E": True},
        profiles={},
    )
    assert table.effective_positions() == {"B": 1, "D": 2, "E": 3}


def test_present_tracks_profile_cells():
    table = SeasonTable(
        season="2015/16",
        ranks={"A": 1},
        participates={"A": True},
        profiles={"A": ChampionProfile(Decimal(10), Decimal(1500))},
    )
    assert table.present("A")
    assert not table.present("B")


class TestRoundSpec:
    def test_defaults(self):
        r = RoundSpec("Q1", frozenset({46, 47}), 2)
        assert r.tie_kind == "two-leg"
        assert r.structure == "pairwise"
        assert r.draw_coefficients == "carried"

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(label="Q9"),
            dict(tie_kind="three-leg"),
            dict(structure="round-robin"),
            dict(draw_coefficients="guessed"),
        ],
    )
    def test_rejects_unknown_tokens(self, kwargs):
        base = dict(label="Q1", entry_ranks=frozenset({46, 47}), entrants=2)
        with pytest.raises(FormatError):
            RoundSpec(**{**base, **kwargs})

    def test_mini_knockout_restricted_to_one_leg_pr(self):
        with pytest.raises(FormatError):
            RoundSpec("Q1", frozenset({46, 47, 48, 49}), 4, structure="mini-knockout")
        with pytest.raises(FormatError):
            RoundSpec("PR", frozenset({52, 53, 54, 55}), 4, tie_kind="two-leg", structure="mini-knockout")
        r = RoundSpec("PR", frozenset({52, 53, 54, 55}), 4, tie_kind="one-leg", structure="mini-knockout")
        assert r.structure == "mini-knockout"

    def test_entrants_bounded_by_entry_ranks(self):
        with pytest.raises(FormatError):
            RoundSpec("Q1", frozenset({46, 47}), 3)
        with pytest.raises(FormatError):
            RoundSpec("Q1", frozenset({46, 47}), -1)


def synth_format(**overrides):
    kwargs = dict(
        name="synthetic6",
        direct_ranks=range(1, 3),
        direct_count=2,
        rounds=[
            RoundSpec("Q3", frozenset(range(3, 7)), 4),
            RoundSpec("PO", frozenset(), 0),
        ],
    )
    kwargs.update(overrides)
    return make_format(**kwargs)


class TestFormatSpec:
    def test_round_sizes_chain_winners(self):
        spec = synth_format()
        assert spec.round_sizes() == {"Q3": 4, "PO": 2}
        assert spec.group_stage_size == 3

    def test_entry_plan_walks_rounds_backwards(self):
        spec = synth_format()
        assert spec.entry_plan() == [("direct", range(1, 3)), ("Q3", range(3, 7))]

    def test_entry_plan_skips_winner_only_rounds(self):
        labels = [label for label, _ in synth_format().entry_plan()]
        assert "PO" not in labels

    def test_rejects_empty_rounds(self):
        with pytest.raises(FormatError):
            synth_format(rounds=[])

    def test_rejects_bad_direct_count(self):
        with pytest.raises(FormatError):
            synth_format(direct_count=0)
        with pytest.raises(FormatError):
            synth_format(direct_count=3)

    def test_rejects_overlapping_rank_windows(self):
        with pytest.raises(FormatError):
            synth_format(direct_ranks=range(1, 4))

    def test_rejects_duplicate_round_labels(self):
        with pytest.raises(FormatError):
            synth_format(
                rounds=[
                    RoundSpec("Q3", frozenset({3, 4}), 2),
                    RoundSpec("Q3", frozenset({5, 6}), 2),
                ]
            )

    def test_rejects_odd_round_size(self):
        with pytest.raises(FormatError):
            synth_format(
                direct_ranks=range(1, 4),
                direct_count=3,
                rounds=[RoundSpec("Q3", frozenset({4, 5, 6}), 3)],
            )

    def test_mini_knockout_round_must_have_four_teams(self):
        with pytest.raises(FormatError):
            make_format(
                name="bad-pr",
                direct_ranks=range(1, 2),
                direct_count=1,
                rounds=[
                    RoundSpec("PR", frozenset(range(2, 8)), 6, tie_kind="one-leg", structure="mini-knockout"),
                ],
            )


class TestValidateDataset:
    @pytest.fixture()
    def tables(self, dataset):
        return list(dataset.season_tables)

    def test_packaged_tables_are_clean(self, tables):
        report = validate_dataset(tables)
        assert report.ok, str(report)
        assert str(report) == "ok"

    def test_missing_season_reported(self, tables):
        report = validate_dataset(tables[:-1])
        assert not report.ok
        assert "one table per season" in str(report)

    def test_non_participant_must_not_participate(self, tables):
        t = tables[0]
        tables[0] = dataclasses.replace(
            t, participates={**t.participates, NON_PARTICIPANT: True}
        )
        report = validate_dataset(tables)
        assert any("must not participate" in v for v in report.violations)

    def test_duplicate_rank_reported(self, tables):
        t = tables[1]
        ranks = dict(t.ranks)
        ranks["Hungary"] = ranks["Poland"]
        tables[1] = dataclasses.replace(t, ranks=ranks)
        report = validate_dataset(tables)
        assert any("duplicate rank" in v for v in report.violations)

    def test_rank_range_enforced(self, tables):
        t = tables[2]
        tables[2] = dataclasses.replace(t, ranks={**t.ranks, "Hungary": 99})
        report = validate_dataset(tables)
        assert any("outside 1..55" in v for v in report.violations)

    def test_missing_profile_reported(self, tables):
        t = tables[3]
        profiles = dict(t.profiles)
        del profiles["Malta"]
        tables[3] = dataclasses.replace(t, profiles=profiles)
        report = validate_dataset(tables)
        assert any("missing profile for 'Malta'" in v for v in report.violations)

    def test_kosovo_presence_is_season_dependent(self, tables):
        # Kosovo has no 2015/16 cell; giving it one must be flagged, as must
        # removing its 2017/18 cell.
        early = tables[0]
        tables[0] = dataclasses.replace(
            early,
            profiles={**early.profiles, "Kosovo": ChampionProfile(Decimal(1), Decimal(1000))},
        )
        report = validate_dataset(tables)
        assert any("Kosovo presence wrong" in v for v in report.violations)

        tables[0] = early
        late = tables[2]
        profiles = dict(late.profiles)
        del profiles["Kosovo"]
        tables[2] = dataclasses.replace(late, profiles=profiles)
        report = validate_dataset(tables)
        assert any("Kosovo presence wrong" in v for v in report.violations)

    def test_unknown_association_reported(self, tables):
        t = tables[4]
        tables[4] = dataclasses.replace(
            t,
            ranks={**t.ranks, "Atlantis": 56},
            participates={**t.participates, "Atlantis": True},
        )
        report = validate_dataset(tables)
        assert any("unknown association 'Atlantis'" in v for v in report.violations)
        assert any("outside 1..55" in v for v in report.violations)


def test_validation_report_str_lists_violations():
    report = ValidationReport(("a broke", "b broke"))
    assert not report.ok
    assert str(report) == "a broke\nb broke"
