"""Monte-Carlo engine: sampling layers, dual engines, reproducibility."""
from __future__ import annotations

from decimal import Decimal

import numpy as np
import pytest

import clqsim.mc as mc
from clqsim.elo import ScalingParam
from clqsim.mc import (
    DEFAULT_CHECKPOINTS,
    WEIGHTED_SEASON_WEIGHTS,
    RunConfig,
    SamplingPolicy,
    convergence_series,
    generate_matrices,
    partition_bounds,
    run,
    sample_profiles,
    sample_season,
)
from clqsim.model import ASSOCIATIONS, ChampionProfile, SEASONS


class ScriptedRng:
    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


class TestSamplingPolicy:
    def test_default_is_uniform(self):
        assert SamplingPolicy().season_weights == (0.2,) * 5
        assert SamplingPolicy.uniform().season_weights == (0.2,) * 5

    def test_weighted_preset(self):
        assert SamplingPolicy.weighted().season_weights == WEIGHTED_SEASON_WEIGHTS
        assert sum(WEIGHTED_SEASON_WEIGHTS) == pytest.approx(1.0, abs=1e-15)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError, match="nonnegative"):
            SamplingPolicy(season_weights=(0.5, 0.7, -0.2, 0.0, 0.0))
        with pytest.raises(ValueError, match="sum to 1"):
            SamplingPolicy(season_weights=(0.3, 0.3, 0.3, 0.3, 0.3))


class TestRunConfig:
    def test_validation(self, both_formats):
        good = RunConfig(iterations=10, formats=both_formats)
        assert good.scaling_s == 400.0
        with pytest.raises(ValueError, match="iterations"):
            RunConfig(iterations=0, formats=both_formats)
        with pytest.raises(ValueError, match="partitions"):
            RunConfig(iterations=10, partitions=0, formats=both_formats)
        with pytest.raises(ValueError, match="seeding mode"):
            RunConfig(iterations=10, seeding_mode="lucky", formats=both_formats)
        with pytest.raises(ValueError, match="format"):
            RunConfig(iterations=10)
        with pytest.raises(ValueError, match="unique"):
            RunConfig(iterations=10, formats=both_formats + both_formats)

    def test_scaling_accepts_param_or_number(self, both_formats):
        assert RunConfig(iterations=1, scaling=ScalingParam(600.0), formats=both_formats).scaling_s == 600.0
        assert RunConfig(iterations=1, scaling=800, formats=both_formats).scaling_s == 800.0


class TestSampleSeason:
    def test_uniform_boundaries(self):
        policy = SamplingPolicy.uniform()
        picks = [
            sample_season(ScriptedRng([u]), policy).label
            for u in (0.0, 0.19999, 0.2, 0.5, 0.9999)
        ]
        assert picks == ["2015/16", "2015/16", "2016/17", "2017/18", "2019/20"]

    def test_weighted_boundaries(self):
        policy = SamplingPolicy.weighted()
        assert sample_season(ScriptedRng([0.05]), policy).label == "2015/16"
        assert sample_season(ScriptedRng([0.1]), policy).label == "2016/17"
        assert sample_season(ScriptedRng([0.95]), policy).label == "2019/20"

    def test_top_edge_clips_to_last_season(self):
        policy = SamplingPolicy.uniform()
        assert sample_season(ScriptedRng([0.9999999999999999]), policy).label == "2019/20"


class TestSampleProfiles:
    def test_consumes_one_uniform_per_association_in_registry_order(self, dataset):
        rng = ScriptedRng([0.0] * len(ASSOCIATIONS))
        profiles = sample_profiles(rng, SamplingPolicy.uniform(), dataset)
        assert not rng.values
        assert list(profiles) == list(ASSOCIATIONS)

    def test_zero_uniform_picks_first_available_cell(self, dataset):
        profiles = sample_profiles(ScriptedRng([0.0] * 45), SamplingPolicy.uniform(), dataset)
        first = dataset.table("2015/16")
        assert profiles["Turkey"] == first.profiles["Turkey"]
        # Kosovo has no early data, so its first cell is 2017/18.
        assert profiles["Kosovo"] == dataset.table("2017/18").profiles["Kosovo"]

    def test_high_uniform_picks_last_available_cell(self, dataset):
        profiles = sample_profiles(ScriptedRng([0.999999] * 45), SamplingPolicy.uniform(), dataset)
        last = dataset.table("2019/20")
        assert profiles["Hungary"] == last.profiles["Hungary"]
        assert profiles["Kosovo"] == last.profiles["Kosovo"]

    def test_coefficient_and_elo_stay_coherent(self, dataset):
        rng = np.random.default_rng(17)
        for _ in range(40):
            profiles = sample_profiles(rng, SamplingPolicy.uniform(), dataset)
            for name, profile in profiles.items():
                seasons = [
                    t.season for t in dataset.season_tables if t.profiles.get(name) == profile
                ]
                assert seasons, f"{name} drew a cell that exists in no season"


class TestGenerateMatrices:
    def test_zero_uniforms_let_lower_index_advance(self):
        profiles = {
            "X": ChampionProfile(Decimal(1), Decimal(1500)),
            "Y": ChampionProfile(Decimal(1), Decimal(1400)),
            "Z": ChampionProfile(Decimal(1), Decimal(1300)),
        }
        m = generate_matrices(ScriptedRng([0.0] * 6), profiles, 400.0)
        for i, j in (("X", "Y"), ("X", "Z"), ("Y", "Z")):
            assert m.advances(i, j)
            assert m.advances(i, j, one_leg=True)

    def test_high_uniforms_let_higher_index_advance(self):
        profiles = {
            "X": ChampionProfile(Decimal(1), Decimal(1500)),
            "Y": ChampionProfile(Decimal(1), Decimal(1400)),
        }
        m = generate_matrices(ScriptedRng([0.999999, 0.999999]), profiles, 400.0)
        assert not m.advances("X", "Y")
        assert m.advances("Y", "X")

    def test_two_leg_frequency_matches_kernel(self):
        profiles = {
            "Hun": ChampionProfile(Decimal(1), Decimal(1468)),
            "Cro": ChampionProfile(Decimal(1), Decimal(1682)),
        }
        rng = np.random.default_rng(41)
        n = 20_000
        hits = sum(generate_matrices(rng, profiles, 400.0).advances("Hun", "Cro") for _ in range(n))
        # reference advance probability 0.14904; 0.008 is a bit over 3 sigma
        assert abs(hits / n - 0.14904059821754201239) < 0.008

    def test_scaling_flattens_frequencies(self):
        profiles = {
            "Hun": ChampionProfile(Decimal(1), Decimal(1468)),
            "Cro": ChampionProfile(Decimal(1), Decimal(1682)),
        }
        n = 20_000
        rng = np.random.default_rng(42)
        hits_800 = sum(generate_matrices(rng, profiles, 800.0).advances("Hun", "Cro") for _ in range(n))
        assert abs(hits_800 / n - 0.29503111527077639693) < 0.011


def small_config(formats, **overrides):
    kwargs = dict(iterations=4000, master_seed=10, formats=formats)
    kwargs.update(overrides)
    return RunConfig(**kwargs)


def tally_key(tally):
    return (
        tally.runs,
        {n: dict(t.counts) for n, t in tally.per_format.items()},
        {n: {r: dict(per) for r, per in t.entered.items()} for n, t in tally.per_format.items()},
        {n: (t.elo_units, t.qualified) for n, t in tally.per_format.items()},
        tally.joint_counts,
    )


class TestEngineEquivalence:
    @pytest.mark.parametrize(
        "overrides",
        [
            {},
            {"seeding_mode": "unseeded-random"},
            {"policy": SamplingPolicy.weighted()},
            {"partitions": 3},
            {"scaling": ScalingParam(600.0)},
        ],
    )
    def test_loop_and_array_engines_are_bit_identical(self, both_formats, dataset, overrides):
        config = small_config(both_formats, **overrides)
        a = run(config, dataset, engine="array")
        b = run(config, dataset, engine="loop")
        assert tally_key(a) == tally_key(b)

    def test_unknown_engine_rejected(self, both_formats, dataset):
        with pytest.raises(ValueError, match="engine"):
            run(small_config(both_formats), dataset, engine="quantum")


class TestReproducibility:
    def test_identical_rerun(self, both_formats, dataset):
        config = small_config(both_formats, iterations=5000)
        assert tally_key(run(config, dataset)) == tally_key(run(config, dataset))

    def test_chunk_size_cannot_change_results(self, both_formats, dataset, monkeypatch):
        config = small_config(both_formats)
        reference = tally_key(run(config, dataset))
        monkeypatch.setattr(mc, "_CHUNK", 517)
        assert tally_key(run(config, dataset)) == reference

    def test_partition_split_points_never_change_iterations(self, both_formats, dataset):
        # More partitions means different substreams, so equality is only
        # statistical; but any single partition layout must reproduce itself.
        config = small_config(both_formats, iterations=6000, partitions=4)
        assert tally_key(run(config, dataset)) == tally_key(run(config, dataset))

    def test_partition_counts_agree_within_noise(self, both_formats, dataset):
        n = 20_000
        one = run(small_config(both_formats, iterations=n, partitions=1), dataset)
        four = run(small_config(both_formats, iterations=n, partitions=4), dataset)
        for fmt in one.per_format:
            for name in ("Switzerland", "Hungary", "Scotland"):
                p1 = one.per_format[fmt].counts[name] / n
                p4 = four.per_format[fmt].counts[name] / n
                sigma = max((p1 * (1 - p1) / n) ** 0.5, 1e-4)
                assert abs(p1 - p4) < 4.5 * sigma * 2**0.5


def test_partition_bounds_cover_range_contiguously():
    assert partition_bounds(10, 3) == [(0, 4), (4, 7), (7, 10)]
    assert partition_bounds(6, 1) == [(0, 6)]
    bounds = partition_bounds(1_000_003, 7)
    assert bounds[0][0] == 0 and bounds[-1][1] == 1_000_003
    assert all(a[1] == b[0] for a, b in zip(bounds, bounds[1:]))


@pytest.fixture(scope="module")
def three_parts(both_formats, dataset):
    return [
        run(small_config(both_formats, iterations=1500, master_seed=s), dataset)
        for s in (1, 2, 3)
    ]


class TestTallies:
    def test_merge_is_associative(self, three_parts):
        a, b, c = three_parts
        left = a.merge(b).merge(c)
        right = a.merge(b.merge(c))
        assert tally_key(left) == tally_key(right)
        assert left.runs == 4500

    def test_merge_requires_matching_formats(self, three_parts, fmt_old, dataset):
        solo = run(small_config((fmt_old,), iterations=100), dataset)
        with pytest.raises(ValueError, match="different formats"):
            three_parts[0].merge(solo)

    def test_merge_refuses_convergence_series(self, both_formats, dataset):
        config = small_config(both_formats, iterations=2000)
        with_series = run(config, dataset, checkpoints=(1000,))
        plain = run(config, dataset)
        with pytest.raises(ValueError, match="convergence"):
            with_series.merge(plain)

    def test_turkey_always_qualifies_under_old_format(self, both_formats, dataset):
        tally = run(small_config(both_formats, iterations=2000), dataset)
        assert tally.per_format["pre2018"].counts["Turkey"] == 2000

    def test_joint_counts_bounded_and_positively_correlated(self, both_formats, dataset):
        n = 20_000
        tally = run(small_config(both_formats, iterations=n), dataset)
        old = tally.per_format["pre2018"].counts
        new = tally.per_format["post2018"].counts
        for name in ASSOCIATIONS:
            assert tally.joint_counts[name] <= min(old[name], new[name])
        # Common random numbers force strong positive coupling for teams
        # with meaningful probability under both formats.
        for name in ("Switzerland", "Scotland", "Netherlands"):
            p_joint = tally.joint_counts[name] / n
            assert p_joint > (old[name] / n) * (new[name] / n)

    def test_elo_accounting_is_exact_and_mergeable(self, three_parts):
        a, b = three_parts[0], three_parts[1]
        merged = a.merge(b)
        for fmt in merged.per_format:
            ta, tb, tm = a.per_format[fmt], b.per_format[fmt], merged.per_format[fmt]
            assert tm.elo_units == ta.elo_units + tb.elo_units
            assert tm.elo_sum_of_qualified == ta.elo_sum_of_qualified + tb.elo_sum_of_qualified
            assert 1000.0 < tm.average_elo_of_qualified() < 1800.0

    def test_meta_echoes_run_identity(self, both_formats, dataset):
        config = small_config(both_formats, iterations=1200, master_seed=77, partitions=2)
        tally = run(config, dataset)
        meta = tally.meta
        assert (meta.iterations, meta.master_seed, meta.partitions) == (1200, 77, 2)
        assert meta.scaling_s == 400.0
        assert meta.format_names == ("pre2018", "post2018")
        assert meta.season_weights == (0.2,) * 5
        assert meta.provenance


class TestConvergence:
    def test_series_matches_final_tally(self, both_formats, dataset):
        config = small_config(both_formats, iterations=10_000)
        tally = run(config, dataset, checkpoints=(2000, 10_000))
        for fmt, series in tally.convergence.items():
            assert [c for c, _ in series] == [2000, 10_000]
            assert series[-1][1] == pytest.approx(
                tally.per_format[fmt].average_elo_of_qualified(), abs=1e-12
            )

    def test_checkpoint_is_exact_prefix(self, both_formats, dataset):
        config = small_config(both_formats, iterations=10_000)
        tally = run(config, dataset, checkpoints=(2000,))
        prefix = run(small_config(both_formats, iterations=2000), dataset)
        for fmt, series in tally.convergence.items():
            assert series[0][1] == prefix.per_format[fmt].average_elo_of_qualified()

    def test_checkpoints_beyond_iterations_are_dropped(self, both_formats, dataset):
        series = convergence_series(
            small_config(both_formats, iterations=3000), dataset, checkpoints=(1000, 999_999)
        )
        for fmt in series:
            assert [c for c, _ in series[fmt]] == [1000]

    def test_default_checkpoint_ladder(self):
        assert DEFAULT_CHECKPOINTS[0] == 5000
        assert DEFAULT_CHECKPOINTS[-1] == 1_000_000
        assert list(DEFAULT_CHECKPOINTS) == sorted(DEFAULT_CHECKPOINTS)


def test_policy_weight_count_must_match_dataset(both_formats, dataset):
    config = small_config(both_formats, policy=SamplingPolicy.uniform(4))
    with pytest.raises(ValueError, match="season weights"):
        run(config, dataset)
