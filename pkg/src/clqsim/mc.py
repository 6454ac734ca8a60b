"""Monte-Carlo engine.

Each iteration draws a season, draws one coherent (coefficient, Elo) cell
per association, realizes one binary outcome matrix per tie kind, and feeds
the SAME draws to every configured format, so the per-association difference
between formats is a paired, common-random-numbers estimate.

Reproducibility contract
------------------------
Iterations are split into contiguous partitions.  Partition p consumes the
stream of a generator seeded from (master_seed, p), and every iteration
consumes a fixed number of uniforms in a fixed order:

    1 season | one per association (registry order) | one per two-leg pair
    (row-major, lower competitor index first) | one per one-leg pair | then
    per format in configured order, round by round: the pot bipartition
    uniforms (unseeded-random mode only, one per team), one matching uniform
    per unseeded slot, and a final-host uniform after a mini-knockout's
    matching uniforms.

Results are therefore bit-identical for a fixed (master_seed, partitions)
however the work is chunked, and identical between the two execution
engines: a readable per-iteration path built on the bracket module, and a
vectorized path that runs whole chunks through numpy.  Elo diagnostics
accumulate in integer units of 1/60000 rating point so summation order
cannot perturb them.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from decimal import Decimal, localcontext
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import bracket
from .bracket import EntryLists, OutcomeMatrices, SeasonDraw, build_entry_lists
from .data import DatasetBundle
from .elo import ScalingParam, pair_probabilities
from .model import ChampionProfile, FormatSpec, SeasonId

DEFAULT_CHECKPOINTS: tuple[int, ...] = (
    5_000, 10_000, 20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000
)

WEIGHTED_SEASON_WEIGHTS: tuple[float, ...] = (0.10, 0.15, 0.20, 0.25, 0.30)

_CHUNK = 2048

# Pot-ordering keys pack (draw coefficient, elo, association) into one int64;
# these bounds keep the fields from colliding.
_MAX_COEFF_MILLI = 1 << 21
_MAX_ELO_MILLI = 1 << 36
_MAX_ASSOCIATIONS = 64


@dataclass(frozen=True)
class SamplingPolicy:
    """How seasons and champion attributes are drawn.

    ``season_weights`` weight the five season tables for the ranking draw.
    Attribute cells are drawn uniformly per association over the seasons in
    which the association has data, independently across associations but
    coherently within one (coefficient and Elo always come from the same
    cell).  Kosovo therefore draws from its last three seasons only.
    """

    season_weights: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.season_weights):
            raise ValueError(f"season weights must be nonnegative: {self.season_weights}")
        total = sum(self.season_weights)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"season weights must sum to 1, got {total!r}")

    @classmethod
    def uniform(cls, n_seasons: int = 5) -> "SamplingPolicy":
        return cls(season_weights=(1.0 / n_seasons,) * n_seasons)

    @classmethod
    def weighted(cls) -> "SamplingPolicy":
        """Recency-weighted variant: later seasons count more."""
        return cls(season_weights=WEIGHTED_SEASON_WEIGHTS)


@dataclass(frozen=True)
class RunConfig:
    """Statistical identity of one simulation run."""

    iterations: int
    master_seed: int = 0
    partitions: int = 1
    scaling: ScalingParam = ScalingParam(400.0)
    seeding_mode: str = "seeded"
    policy: SamplingPolicy = SamplingPolicy()
    formats: tuple[FormatSpec, ...] = ()

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if self.partitions < 1:
            raise ValueError(f"partitions must be positive, got {self.partitions}")
        if self.seeding_mode not in ("seeded", "unseeded-random"):
            raise ValueError(f"unknown seeding mode: {self.seeding_mode!r}")
        if not self.formats:
            raise ValueError("at least one format is required")
        names = [f.name for f in self.formats]
        if len(set(names)) != len(names):
            raise ValueError(f"format names must be unique: {names}")
        if self.scaling_s <= 0:
            raise ValueError(f"scaling must be positive, got {self.scaling_s}")

    @property
    def scaling_s(self) -> float:
        if isinstance(self.scaling, ScalingParam):
            return self.scaling.s
        return float(self.scaling)


@dataclass
class FormatTally:
    """Per-format accumulator half of a QualificationTally.

    Each qualified slot contributes the qualifying association's mean Elo
    over the seasons it has data for, accumulated in ``elo_units`` as exact
    integer units of 1/60000 rating point (60 is divisible by every possible
    season count, so one- to five-season means carry no rounding error).
    """

    counts: dict[str, int]
    entered: dict[str, dict[str, int]]
    elo_units: int = 0
    qualified: int = 0

    @classmethod
    def empty(cls, names: Iterable[str], round_labels: Iterable[str]) -> "FormatTally":
        names = list(names)
        return cls(
            counts={n: 0 for n in names},
            entered={r: {n: 0 for n in names} for r in round_labels},
        )

    @property
    def elo_sum_of_qualified(self) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = 40
            return +(Decimal(self.elo_units) / 60000)

    def average_elo_of_qualified(self) -> float:
        if self.qualified == 0:
            return float("nan")
        return self.elo_units / 60000.0 / self.qualified

    def merged(self, other: "FormatTally") -> "FormatTally":
        return FormatTally(
            counts={n: c + other.counts[n] for n, c in self.counts.items()},
            entered={
                r: {n: c + other.entered[r][n] for n, c in per.items()}
                for r, per in self.entered.items()
            },
            elo_units=self.elo_units + other.elo_units,
            qualified=self.qualified + other.qualified,
        )


@dataclass(frozen=True)
class RunMeta:
    """Echo of the statistical identity a tally was produced under."""

    iterations: int
    master_seed: int
    partitions: int
    scaling_s: float
    seeding_mode: str
    season_weights: tuple[float, ...]
    format_names: tuple[str, ...]
    provenance: str = ""


@dataclass
class QualificationTally:
    """Qualification counts per format, mergeable across partitions."""

    runs: int
    per_format: dict[str, FormatTally]
    meta: "RunMeta | None" = None
    # iterations where the association qualified under both of the first two
    # configured formats at once; drives the paired-variance diagnostics
    joint_counts: "dict[str, int] | None" = None
    # format name -> [(iterations, average qualified Elo)], attached by run()
    convergence: "dict[str, list[tuple[int, float]]] | None" = None

    def merge(self, other: "QualificationTally") -> "QualificationTally":
        if set(self.per_format) != set(other.per_format):
            raise ValueError("cannot merge tallies over different formats")
        if self.convergence is not None or other.convergence is not None:
            raise ValueError("merge tallies before attaching convergence series")
        joint = None
        if self.joint_counts is not None and other.joint_counts is not None:
            joint = {n: c + other.joint_counts[n] for n, c in self.joint_counts.items()}
        return QualificationTally(
            runs=self.runs + other.runs,
            per_format={n: t.merged(other.per_format[n]) for n, t in self.per_format.items()},
            meta=self.meta,
            joint_counts=joint,
        )


def sample_season(rng: "bracket.UniformSource", policy: SamplingPolicy) -> SeasonId:
    """Draw one season label according to the policy weights."""
    from .model import SEASONS

    cum = np.cumsum(policy.season_weights).tolist()
    k = bisect.bisect_right(cum, rng.random())
    return SeasonId(SEASONS[min(k, len(SEASONS) - 1)])


def sample_profiles(
    rng: "bracket.UniformSource",
    policy: SamplingPolicy,
    dataset: DatasetBundle,
) -> dict[str, ChampionProfile]:
    """Draw one coherent attribute cell per association, independently.

    Each association picks uniformly among the seasons where it has data, so
    associations without early data are automatically restricted to their
    later seasons.  One uniform is consumed per association, in registry
    order.
    """
    tables = dataset.season_tables
    names: list[str] = []
    for table in tables:
        for name in table.profiles:
            if name not in names:
                names.append(name)
    from .model import ASSOCIATION_INDEX

    names.sort(key=lambda n: ASSOCIATION_INDEX.get(n, len(ASSOCIATION_INDEX)))
    out: dict[str, ChampionProfile] = {}
    for name in names:
        cells = [t.profiles[name] for t in tables if name in t.profiles]
        k = min(int(rng.random() * len(cells)), len(cells) - 1)
        out[name] = cells[k]
    return out


def generate_matrices(
    rng: "bracket.UniformSource | np.random.Generator",
    profiles: "Sequence[ChampionProfile] | Mapping[str, ChampionProfile]",
    scaling: "ScalingParam | float" = 400.0,
) -> OutcomeMatrices:
    """Realize one binary advance matrix per tie kind for all pairs.

    ``profiles`` fixes the competitor order (sequence position or mapping
    insertion order).  One uniform per unordered pair is consumed for the
    two-leg matrix, then one per pair for the one-leg matrix; anti-symmetry
    holds by construction.
    """
    if isinstance(profiles, Mapping):
        index: "dict | None" = {name: k for k, name in enumerate(profiles)}
        cells = list(profiles.values())
    else:
        index = None
        cells = list(profiles)
    n = len(cells)
    elo = np.array([float(c.elo) for c in cells])
    pair_i, pair_j = np.triu_indices(n, k=1)
    n_pairs = len(pair_i)

    def draw(n_draws: int) -> np.ndarray:
        if isinstance(rng, np.random.Generator):
            return rng.random(n_draws)
        return np.array([rng.random() for _ in range(n_draws)])

    out = []
    for sharpen in (True, False):
        p = pair_probabilities(elo, pair_i, pair_j, scaling, sharpen=sharpen)
        bits = (draw(n_pairs) < p).astype(np.uint8)
        m = np.zeros((n, n), dtype=np.uint8)
        m[pair_i, pair_j] = bits
        m[pair_j, pair_i] = 1 - bits
        out.append(m)
    return OutcomeMatrices(two_leg=out[0], one_leg=out[1], index=index)


# ---------------------------------------------------------------------------
# compiled runtime: everything the hot loop needs, as arrays


@dataclass
class _FormatSeason:
    direct_assoc: np.ndarray            # association indices, sampled direct qualifiers
    entrants_comp: list[np.ndarray]     # per round: competitor indices entering


@dataclass
class _RoundShape:
    label: str
    size: int
    one_leg: bool
    mini: bool
    real_draw: bool                     # pot values of carried slots: real, not carried


@dataclass
class _FormatRuntime:
    spec: FormatSpec
    rounds: list[_RoundShape]
    per_season: list[_FormatSeason]
    draw_offset: int                    # into the per-iteration uniform row
    draw_len: int

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass
class _Runtime:
    names: list[str]                    # sampled associations, registry order
    n_assoc: int
    season_labels: list[str]
    season_cum: np.ndarray              # cumulative season weights
    coeff_m: np.ndarray                 # (n_assoc, n_seasons) int64 millipoints
    elo_m: np.ndarray                   # (n_assoc, n_seasons) int64 millipoints
    avail_idx: np.ndarray               # (n_assoc, n_seasons) season cell table
    avail_n: np.ndarray                 # (n_assoc,) usable cell count
    comp_assoc: np.ndarray              # (n_seasons, n_comp) association index per competitor
    comp_index: list[dict[int, int]]    # per season: association index -> competitor index
    n_comp: int
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_pos: np.ndarray                # (n_comp, n_comp) pair slot of (i, j), i != j
    elo_stat_u: np.ndarray              # (n_assoc,) mean Elo over available cells, 1/60000 units
    formats: list[_FormatRuntime]
    stride: int
    unseeded: bool
    scale: float


def _prepare(config: RunConfig, dataset: DatasetBundle) -> _Runtime:
    from .model import ASSOCIATION_INDEX

    tables = dataset.season_tables
    n_seasons = len(tables)
    if len(config.policy.season_weights) != n_seasons:
        raise ValueError(
            f"policy has {len(config.policy.season_weights)} season weights "
            f"for {n_seasons} season tables"
        )
    sampled = sorted(
        {n for t in tables for n in t.profiles},
        key=lambda n: ASSOCIATION_INDEX.get(n, 10_000),
    )
    if len(set(sampled)) > _MAX_ASSOCIATIONS:
        raise ValueError(f"at most {_MAX_ASSOCIATIONS} associations supported")
    index = {n: k for k, n in enumerate(sampled)}
    n_assoc = len(sampled)

    exponents = [
        -p.coefficient.as_tuple().exponent
        for t in tables
        for p in t.profiles.values()
    ]
    digits = max(0, max(exponents, default=0))
    if digits > 3:
        raise ValueError(f"coefficients carry more than 3 fractional digits ({digits})")

    coeff_m = np.zeros((n_assoc, n_seasons), dtype=np.int64)
    elo_m = np.zeros((n_assoc, n_seasons), dtype=np.int64)
    present = np.zeros((n_assoc, n_seasons), dtype=bool)
    for si, t in enumerate(tables):
        for name, profile in t.profiles.items():
            a = index[name]
            coeff_m[a, si] = int(profile.coefficient.scaleb(3))
            elo_m[a, si] = int(round(float(profile.elo) * 1000))
            present[a, si] = True
    if coeff_m.max() >= _MAX_COEFF_MILLI:
        raise ValueError("coefficient too large for pot-key packing")
    if elo_m.max() >= _MAX_ELO_MILLI:
        raise ValueError("elo too large for pot-key packing")

    avail_n = present.sum(axis=1).astype(np.int64)
    if (avail_n == 0).any():
        bad = [sampled[a] for a in np.nonzero(avail_n == 0)[0]]
        raise ValueError(f"associations without any data cell: {bad}")
    avail_idx = np.zeros((n_assoc, n_seasons), dtype=np.int64)
    for a in range(n_assoc):
        cells = np.nonzero(present[a])[0]
        avail_idx[a, : len(cells)] = cells
    # absent cells hold zero, so the row sum is the available-cell sum;
    # 60 // n turns a millipoint sum over n cells into an exact mean in
    # 1/60000-point units for any n up to five
    elo_stat_u = elo_m.sum(axis=1) * (60 // avail_n)

    entries: dict[tuple[str, str], EntryLists] = {}
    for fmt in config.formats:
        for t in tables:
            entries[fmt.name, t.season] = build_entry_lists(fmt, t)

    comp_rows, comp_index = [], []
    n_comp = None
    for t in tables:
        union = set()
        for fmt in config.formats:
            union.update(entries[fmt.name, t.season].competitors)
        positions = t.effective_positions()
        ordered = sorted(union, key=positions.get)
        if n_comp is None:
            n_comp = len(ordered)
        elif len(ordered) != n_comp:
            raise ValueError(
                f"competitor count differs across seasons ({n_comp} vs {len(ordered)})"
            )
        comp_rows.append(np.array([index[n] for n in ordered], dtype=np.int64))
        comp_index.append({index[n]: c for c, n in enumerate(ordered)})

    pair_i, pair_j = np.triu_indices(n_comp, k=1)
    pair_pos = np.zeros((n_comp, n_comp), dtype=np.int64)
    pair_pos[pair_i, pair_j] = np.arange(len(pair_i))
    pair_pos[pair_j, pair_i] = np.arange(len(pair_i))

    unseeded = config.seeding_mode == "unseeded-random"
    offset = 1 + n_assoc + 2 * len(pair_i)
    formats = []
    for fmt in config.formats:
        sizes = fmt.round_sizes()
        rounds = [
            _RoundShape(
                label=r.label,
                size=sizes[r.label],
                one_leg=r.tie_kind == "one-leg",
                mini=r.structure == "mini-knockout",
                real_draw=r.draw_coefficients == "real",
            )
            for r in fmt.rounds
        ]
        draw_len = 0
        for shape in rounds:
            if unseeded:
                draw_len += shape.size
            draw_len += 2 + 1 if shape.mini else shape.size // 2
        per_season = []
        for si, t in enumerate(tables):
            e = entries[fmt.name, t.season]
            per_season.append(
                _FormatSeason(
                    direct_assoc=np.array([index[n] for n in e.direct], dtype=np.int64),
                    entrants_comp=[
                        np.array([comp_index[si][index[n]] for n in e.by_round[r.label]],
                                 dtype=np.int64)
                        for r in fmt.rounds
                    ],
                )
            )
        formats.append(
            _FormatRuntime(
                spec=fmt,
                rounds=rounds,
                per_season=per_season,
                draw_offset=offset,
                draw_len=draw_len,
            )
        )
        offset += draw_len

    return _Runtime(
        names=sampled,
        n_assoc=n_assoc,
        season_labels=[t.season for t in tables],
        season_cum=np.cumsum(config.policy.season_weights),
        coeff_m=coeff_m,
        elo_m=elo_m,
        avail_idx=avail_idx,
        avail_n=avail_n,
        comp_assoc=np.stack(comp_rows),
        comp_index=comp_index,
        n_comp=n_comp,
        pair_i=pair_i,
        pair_j=pair_j,
        pair_pos=pair_pos,
        elo_stat_u=elo_stat_u,
        formats=formats,
        stride=offset,
        unseeded=unseeded,
        scale=config.scaling_s,
    )


@dataclass
class _ChunkDraws:
    """Shared per-chunk precomputation both engines consume."""

    season: np.ndarray        # (B,) season index
    coeff: np.ndarray         # (B, n_assoc) drawn coefficient millipoints
    elo: np.ndarray           # (B, n_assoc) drawn elo millipoints
    bits2: np.ndarray         # (B, n_pairs) two-leg outcomes, 1 = lower index advances
    bits1: np.ndarray         # (B, n_pairs) one-leg outcomes
    draw_u: np.ndarray        # (B, stride) full uniform rows (for bracket draws)


def _draw_chunk(rt: _Runtime, u: np.ndarray) -> _ChunkDraws:
    b = u.shape[0]
    rows = np.arange(b)[:, None]
    season = np.minimum(
        np.searchsorted(rt.season_cum, u[:, 0], side="right"),
        len(rt.season_labels) - 1,
    )
    u_prof = u[:, 1 : 1 + rt.n_assoc]
    k = np.minimum((u_prof * rt.avail_n).astype(np.int64), rt.avail_n - 1)
    cell = rt.avail_idx[np.arange(rt.n_assoc), k]
    coeff = rt.coeff_m[np.arange(rt.n_assoc), cell]
    elo = rt.elo_m[np.arange(rt.n_assoc), cell]

    comp_assoc = rt.comp_assoc[season]                   # (B, n_comp)
    elo_comp = (elo[rows, comp_assoc] / 1000.0).astype(np.float64)
    base = 1 + rt.n_assoc
    n_pairs = len(rt.pair_i)
    p2 = pair_probabilities(elo_comp, rt.pair_i, rt.pair_j, rt.scale, sharpen=True)
    bits2 = (u[:, base : base + n_pairs] < p2).astype(np.uint8)
    p1 = pair_probabilities(elo_comp, rt.pair_i, rt.pair_j, rt.scale, sharpen=False)
    bits1 = (u[:, base + n_pairs : base + 2 * n_pairs] < p1).astype(np.uint8)
    return _ChunkDraws(season=season, coeff=coeff, elo=elo, bits2=bits2, bits1=bits1, draw_u=u)


class _Cursor:
    """Sequential uniform source over one iteration's pre-drawn row."""

    __slots__ = ("row", "pos", "end")

    def __init__(self, row, start: int, end: int):
        self.row = row
        self.pos = start
        self.end = end

    def random(self) -> float:
        if self.pos >= self.end:
            raise RuntimeError("uniform budget exceeded for this round block")
        v = self.row[self.pos]
        self.pos += 1
        return v


class _Acc:
    """Mutable partition accumulator both engines write into."""

    def __init__(self, rt: _Runtime):
        n = rt.n_assoc
        self.counts = {f.name: np.zeros(n, dtype=np.int64) for f in rt.formats}
        self.entered = {
            f.name: {r.label: np.zeros(n, dtype=np.int64) for r in f.rounds}
            for f in rt.formats
        }
        self.elo_units = {f.name: 0 for f in rt.formats}
        self.qualified = {f.name: 0 for f in rt.formats}
        self.joint = np.zeros(n, dtype=np.int64) if len(rt.formats) == 2 else None
        self.runs = 0

    def to_tally(self, rt: _Runtime) -> QualificationTally:
        per_format = {}
        for f in rt.formats:
            per_format[f.name] = FormatTally(
                counts={n: int(c) for n, c in zip(rt.names, self.counts[f.name])},
                entered={
                    r: {n: int(c) for n, c in zip(rt.names, vec)}
                    for r, vec in self.entered[f.name].items()
                },
                elo_units=self.elo_units[f.name],
                qualified=self.qualified[f.name],
            )
        joint = None
        if self.joint is not None:
            joint = {n: int(c) for n, c in zip(rt.names, self.joint)}
        return QualificationTally(runs=self.runs, per_format=per_format, joint_counts=joint)


def _run_chunk_loop(rt: _Runtime, draws: _ChunkDraws, acc: _Acc) -> None:
    """Reference engine: replay each iteration through the bracket module."""
    b = len(draws.season)
    mode = "unseeded-random" if rt.unseeded else "seeded"
    stat_u = rt.elo_stat_u.tolist()
    for it in range(b):
        si = int(draws.season[it])
        coeff_row = draws.coeff[it].tolist()
        elo_row = draws.elo[it].tolist()
        coeff_of = dict(enumerate(coeff_row))
        elo_of = dict(enumerate(elo_row))

        n = rt.n_comp
        m2 = np.zeros((n, n), dtype=np.uint8)
        m2[rt.pair_i, rt.pair_j] = draws.bits2[it]
        m2[rt.pair_j, rt.pair_i] = 1 - draws.bits2[it]
        m1 = np.zeros((n, n), dtype=np.uint8)
        m1[rt.pair_i, rt.pair_j] = draws.bits1[it]
        m1[rt.pair_j, rt.pair_i] = 1 - draws.bits1[it]
        matrices = OutcomeMatrices(two_leg=m2, one_leg=m1, index=rt.comp_index[si])

        row = draws.draw_u[it].tolist()
        qualified_sets = []
        for f in rt.formats:
            season_rt = f.per_season[si]
            entrants = {
                shape.label: tuple(int(rt.comp_assoc[si][c]) for c in comps)
                for shape, comps in zip(f.rounds, season_rt.entrants_comp)
            }
            draw = SeasonDraw(
                direct=tuple(int(a) for a in season_rt.direct_assoc),
                entrants=entrants,
                coefficient=coeff_of,
                elo=elo_of,
            )
            cursor = _Cursor(row, f.draw_offset, f.draw_offset + f.draw_len)
            counter = bracket.RoundCounter()
            qualified = bracket.run_format(
                f.spec, draw, matrices, seeding=mode, rng=cursor, counter=counter,
            )
            if cursor.pos != f.draw_offset + f.draw_len:
                raise RuntimeError(
                    f"format {f.name} consumed {cursor.pos - f.draw_offset} uniforms, "
                    f"expected {f.draw_len}"
                )
            counts = acc.counts[f.name]
            for a in qualified:
                counts[a] += 1
                acc.elo_units[f.name] += stat_u[a]
            acc.qualified[f.name] += len(qualified)
            for label, played in counter.played.items():
                per = acc.entered[f.name][label]
                for a in played:
                    per[a] += 1
            qualified_sets.append(qualified)
        if acc.joint is not None:
            for a in qualified_sets[0] & qualified_sets[1]:
                acc.joint[a] += 1
    acc.runs += b


def _run_chunk_array(rt: _Runtime, draws: _ChunkDraws, acc: _Acc) -> None:
    """Vectorized engine: run every iteration of a chunk in lockstep.

    Iterations are grouped by drawn season (entry lists are season shaped);
    inside a group every bracket operation is an array op over the whole
    group.  Pot order is obtained by sorting a packed integer key so it is
    exactly the (draw coefficient, Elo, occupant) order of the reference
    engine.
    """
    b_all = len(draws.season)
    qual_masks: list[np.ndarray] = []
    for f in rt.formats:
        fmt_qual = (
            np.zeros((b_all, rt.n_assoc), dtype=bool) if acc.joint is not None else None
        )
        for si in range(len(rt.season_labels)):
            idx = np.nonzero(draws.season == si)[0]
            if not len(idx):
                continue
            mask = _fmt_season_array(rt, f, si, idx, draws, acc)
            if fmt_qual is not None:
                fmt_qual[idx] = mask
        if fmt_qual is not None:
            qual_masks.append(fmt_qual)
    if acc.joint is not None:
        acc.joint += (qual_masks[0] & qual_masks[1]).sum(axis=0)
    acc.runs += b_all


def _fmt_season_array(
    rt: _Runtime,
    f: _FormatRuntime,
    si: int,
    idx: np.ndarray,
    draws: _ChunkDraws,
    acc: _Acc,
) -> "np.ndarray | None":
    b = len(idx)
    season_rt = f.per_season[si]
    ca = rt.comp_assoc[si]
    coeff = draws.coeff[idx]
    elo = draws.elo[idx]
    bits = {False: draws.bits2[idx], True: draws.bits1[idx]}
    u = draws.draw_u[idx]
    rows = np.arange(b)[:, None]
    pos = f.draw_offset

    def resolve(occ_a, occ_b, one_leg):
        # bit == 1 means the lower competitor index advances
        flip = occ_a > occ_b
        lo = np.minimum(occ_a, occ_b)
        hi = np.maximum(occ_a, occ_b)
        bit = bits[one_leg][rows, rt.pair_pos[lo, hi]]
        return (bit == 1) ^ flip

    carried_occ = np.empty((b, 0), dtype=np.int64)
    carried_draw = np.empty((b, 0), dtype=np.int64)
    for r_i, shape in enumerate(f.rounds):
        new = season_rt.entrants_comp[r_i]
        occ = np.concatenate(
            [carried_occ, np.broadcast_to(new, (b, len(new)))], axis=1
        )
        assoc = ca[occ]
        real = np.take_along_axis(coeff, assoc, axis=1)
        elo_s = np.take_along_axis(elo, assoc, axis=1)
        n_c = carried_occ.shape[1]
        lead = real[:, :n_c] if shape.real_draw else carried_draw
        draw_c = np.concatenate([lead, real[:, n_c:]], axis=1)
        acc.entered[f.name][shape.label] += np.bincount(
            assoc.ravel(), minlength=rt.n_assoc
        )

        k, half = shape.size, shape.size // 2
        if rt.unseeded:
            order = np.argsort(u[:, pos : pos + k], axis=1, kind="stable")
            pos += k
        else:
            key = (draw_c << 42) | (elo_s << 6) | (_MAX_ASSOCIATIONS - 1 - assoc)
            order = np.argsort(-key, axis=1, kind="stable")
        perm = np.argsort(u[:, pos : pos + half], axis=1, kind="stable")
        pos += half
        a_pos = order[:, :half]
        b_pos = np.take_along_axis(order[:, half:], perm, axis=1)
        occ_a = np.take_along_axis(occ, a_pos, axis=1)
        occ_b = np.take_along_axis(occ, b_pos, axis=1)
        real_a = np.take_along_axis(real, a_pos, axis=1)
        real_b = np.take_along_axis(real, b_pos, axis=1)

        if shape.mini:
            pos += 1  # final host draw, layout only
            a_wins = resolve(occ_a, occ_b, one_leg=True)
            w_occ = np.where(a_wins, occ_a, occ_b)
            w_real = np.where(a_wins, real_a, real_b)
            l_real = np.where(a_wins, real_b, real_a)
            f0_wins = resolve(w_occ[:, :1], w_occ[:, 1:], one_leg=True)[:, 0]
            champ = np.where(f0_wins, w_occ[:, 0], w_occ[:, 1])
            own = np.where(f0_wins, w_real[:, 0], w_real[:, 1])
            semi_loser = np.where(f0_wins, l_real[:, 0], l_real[:, 1])
            final_loser = np.where(f0_wins, w_real[:, 1], w_real[:, 0])
            carried_occ = champ[:, None]
            carried_draw = np.maximum(np.maximum(own, semi_loser), final_loser)[:, None]
        else:
            a_wins = resolve(occ_a, occ_b, one_leg=shape.one_leg)
            carried_occ = np.where(a_wins, occ_a, occ_b)
            carried_draw = np.maximum(real_a, real_b)
    if pos != f.draw_offset + f.draw_len:
        raise RuntimeError(
            f"format {f.name} consumed {pos - f.draw_offset} uniforms, "
            f"expected {f.draw_len}"
        )

    w_assoc = ca[carried_occ]
    direct = season_rt.direct_assoc
    acc.counts[f.name] += np.bincount(w_assoc.ravel(), minlength=rt.n_assoc)
    acc.counts[f.name][direct] += b
    acc.elo_units[f.name] += int(rt.elo_stat_u[w_assoc].sum())
    acc.elo_units[f.name] += b * int(rt.elo_stat_u[direct].sum())
    acc.qualified[f.name] += b * (w_assoc.shape[1] + len(direct))

    if acc.joint is None:
        return None
    mask = np.zeros((b, rt.n_assoc), dtype=bool)
    mask[np.arange(b)[:, None], w_assoc] = True
    mask[:, direct] = True
    return mask


_ENGINES = {"loop": _run_chunk_loop, "array": _run_chunk_array}

_MASK64 = (1 << 64) - 1


def partition_bounds(iterations: int, partitions: int) -> list[tuple[int, int]]:
    """Contiguous [start, stop) iteration ranges, one per partition."""
    base, rem = divmod(iterations, partitions)
    bounds, start = [], 0
    for p in range(partitions):
        n_p = base + (1 if p < rem else 0)
        bounds.append((start, start + n_p))
        start += n_p
    return bounds


def _run_partition(rt, config, p, start, stop, snap_at, engine_fn):
    """Run one partition, snapshotting cumulative sums at local positions.

    The uniform stream depends only on (master_seed, p), and each iteration
    consumes exactly ``rt.stride`` uniforms, so chunk sizes (and therefore
    snapshot positions) never change what any iteration sees.
    """
    seed = np.random.SeedSequence([config.master_seed & _MASK64, p])
    rng = np.random.default_rng(seed)
    acc = _Acc(rt)
    snaps: dict[int, dict[str, tuple[int, int]]] = {}
    boundaries = iter(sorted(snap_at))
    next_b = next(boundaries, None)
    done, n_p = 0, stop - start
    while done < n_p:
        limit = next_b if next_b is not None else n_p
        chunk = min(_CHUNK, limit - done)
        u = rng.random((chunk, rt.stride))
        engine_fn(rt, _draw_chunk(rt, u), acc)
        done += chunk
        if done == next_b:
            snaps[done] = {
                f.name: (acc.elo_units[f.name], acc.qualified[f.name])
                for f in rt.formats
            }
            next_b = next(boundaries, None)
    return acc, snaps


def run(
    config: RunConfig,
    dataset: DatasetBundle,
    engine: str = "array",
    checkpoints: "Sequence[int] | None" = None,
) -> QualificationTally:
    """Execute a configured run and return the merged tally.

    ``engine`` picks the execution path: "array" (vectorized, default) or
    "loop" (readable per-iteration reference); the two are bit-identical.
    ``checkpoints`` asks for the running average Elo of qualified slots
    (each weighted by its association's across-season mean rating) to be
    recorded per format at the given global iteration counts.
    """
    try:
        engine_fn = _ENGINES[engine]
    except KeyError:
        raise ValueError(f"unknown engine: {engine!r}") from None
    rt = _prepare(config, dataset)
    cps = sorted({int(c) for c in (checkpoints or ()) if 0 < c <= config.iterations})

    tally: "QualificationTally | None" = None
    partials = []
    for p, (start, stop) in enumerate(partition_bounds(config.iterations, config.partitions)):
        snap_at = {min(max(c - start, 0), stop - start) for c in cps}
        snap_at.discard(0)
        acc, snaps = _run_partition(rt, config, p, start, stop, snap_at, engine_fn)
        part = acc.to_tally(rt)
        tally = part if tally is None else tally.merge(part)
        partials.append((start, stop, snaps))

    assert tally is not None
    tally.meta = RunMeta(
        iterations=config.iterations,
        master_seed=config.master_seed,
        partitions=config.partitions,
        scaling_s=config.scaling_s,
        seeding_mode=config.seeding_mode,
        season_weights=config.policy.season_weights,
        format_names=tuple(f.name for f in config.formats),
        provenance=dataset.provenance,
    )
    if cps:
        series: dict[str, list[tuple[int, float]]] = {f.name: [] for f in rt.formats}
        for c in cps:
            for f in rt.formats:
                elo_total = qual_total = 0
                for start, stop, snaps in partials:
                    local = min(max(c - start, 0), stop - start)
                    if local:
                        e, q = snaps[local][f.name]
                        elo_total += e
                        qual_total += q
                avg = elo_total / 60000.0 / qual_total if qual_total else float("nan")
                series[f.name].append((c, avg))
        tally.convergence = series
    return tally


def convergence_series(
    config: RunConfig,
    dataset: DatasetBundle,
    checkpoints: "Sequence[int] | None" = None,
    engine: str = "array",
) -> dict[str, list[tuple[int, float]]]:
    """Running average Elo of qualified slots per format at checkpoints.

    Each qualified slot counts the qualifying association's mean rating
    over its available seasons, so the series converges to the
    qualification-probability-weighted mean of those per-association
    ratings.
    """
    cps = list(checkpoints) if checkpoints is not None else list(DEFAULT_CHECKPOINTS)
    tally = run(config, dataset, engine=engine, checkpoints=cps)
    assert tally.convergence is not None
    return tally.convergence
