"""Dataset loading: versioned CSV fixtures, qualifying-format config files,
and an optional Club Elo refresh that never touches the fixtures in place.

Interchange schemas
-------------------
ranks.csv         association,season,rank,participates
coefficients.csv  association,season,value
elo.csv           association,season,value

Coefficients and Elo values are carried as exact decimal strings end to end;
pot-assignment comparisons elsewhere rely on them never losing digits.
"""
from __future__ import annotations

import configparser
import csv
import datetime
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .model import (
    ChampionProfile,
    FormatSpec,
    NON_PARTICIPANT,
    RoundSpec,
    SEASONS,
    SeasonTable,
    validate_dataset,
)

CLUBELO_URL = "http://api.clubelo.com/{date}"

FIXTURE_FILES = ("ranks.csv", "coefficients.csv", "elo.csv")


class DatasetError(Exception):
    """Fixture files are missing, malformed, or fail validation."""


class FetchError(Exception):
    """A Club Elo snapshot could not be retrieved.

    ``retryable`` distinguishes transient transport failures from responses
    that are well-formed but unusable.
    """

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


@dataclass(frozen=True)
class DatasetBundle:
    """The five season tables plus a note on where they came from."""

    season_tables: tuple[SeasonTable, ...]
    provenance: str

    def table(self, season: str) -> SeasonTable:
        for t in self.season_tables:
            if t.season == season:
                return t
        raise KeyError(season)


def default_fixture_dir() -> Path:
    return Path(str(resources.files("clqsim") / "fixtures"))


def default_format_dir() -> Path:
    return Path(str(resources.files("clqsim") / "formats"))


def _read_rows(path: Path, expected_header: Sequence[str]) -> list[dict[str, str]]:
    if not path.is_file():
        raise DatasetError(f"missing file {path.name} in {path.parent}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path.name}: empty file") from None
        if header != list(expected_header):
            raise DatasetError(
                f"{path.name}: expected header {','.join(expected_header)}, got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DatasetError(
                    f"{path.name}: row {lineno}: expected {len(expected_header)} columns, got {len(row)}"
                )
            rows.append(dict(zip(expected_header, row)))
    return rows


def _parse_value(path_name: str, row_no: int, text: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        raise DatasetError(f"{path_name}: row {row_no}: bad decimal {text!r} in column value") from None


def load_fixtures(directory: "Path | str | None" = None) -> DatasetBundle:
    """Load ranks, coefficients and Elo fixtures into a validated bundle.

    With no directory, the packaged fixtures are used.
    """
    fixture_dir = Path(directory) if directory is not None else default_fixture_dir()

    rank_rows = _read_rows(fixture_dir / "ranks.csv", ["association", "season", "rank", "participates"])
    ranks: dict[str, dict[str, int]] = {s: {} for s in SEASONS}
    participates: dict[str, dict[str, bool]] = {s: {} for s in SEASONS}
    for i, row in enumerate(rank_rows, start=2):
        season = row["season"]
        if season not in ranks:
            raise DatasetError(f"ranks.csv: row {i}: unknown season {season!r}")
        try:
            rank = int(row["rank"])
        except ValueError:
            raise DatasetError(f"ranks.csv: row {i}: bad rank {row['rank']!r} in column rank") from None
        if row["participates"] not in ("true", "false"):
            raise DatasetError(
                f"ranks.csv: row {i}: participates must be true/false, got {row['participates']!r}"
            )
        name = row["association"]
        if name in ranks[season]:
            raise DatasetError(f"ranks.csv: row {i}: duplicate row for {name!r} {season}")
        ranks[season][name] = rank
        participates[season][name] = row["participates"] == "true"

    values: dict[str, dict[tuple[str, str], Decimal]] = {}
    for fname in ("coefficients.csv", "elo.csv"):
        cells: dict[tuple[str, str], Decimal] = {}
        for i, row in enumerate(_read_rows(fixture_dir / fname, ["association", "season", "value"]), start=2):
            key = (row["association"], row["season"])
            if key[1] not in SEASONS:
                raise DatasetError(f"{fname}: row {i}: unknown season {key[1]!r}")
            if key in cells:
                raise DatasetError(f"{fname}: row {i}: duplicate row for {key[0]!r} {key[1]}")
            cells[key] = _parse_value(fname, i, row["value"])
        values[fname] = cells

    coeff_keys = set(values["coefficients.csv"])
    elo_keys = set(values["elo.csv"])
    if coeff_keys != elo_keys:
        odd = sorted(coeff_keys ^ elo_keys)[:5]
        raise DatasetError(
            f"coefficients.csv and elo.csv cover different cells, e.g. {odd}"
        )

    tables = []
    for season in SEASONS:
        profiles = {
            name: ChampionProfile(coefficient=values["coefficients.csv"][(name, season)],
                                  elo=values["elo.csv"][(name, season)])
            for (name, s) in sorted(coeff_keys)
            if s == season
        }
        tables.append(
            SeasonTable(
                season=season,
                ranks=ranks[season],
                participates=participates[season],
                profiles=profiles,
            )
        )

    bundle = DatasetBundle(season_tables=tuple(tables), provenance=str(fixture_dir))
    report = validate_dataset(bundle.season_tables)
    if not report.ok:
        raise DatasetError(f"fixture validation failed:\n{report}")
    return bundle


def write_fixtures(bundle: DatasetBundle, directory: "Path | str") -> None:
    """Write a bundle back out in the fixture schemas, preserving decimals."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    names: list[str] = []
    for table in bundle.season_tables:
        for name in table.ranks:
            if name not in names:
                names.append(name)

    with open(out / "ranks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["association", "season", "rank", "participates"])
        for name in names:
            for table in bundle.season_tables:
                if name in table.ranks:
                    w.writerow([
                        name,
                        table.season,
                        table.ranks[name],
                        "true" if table.participates.get(name, False) else "false",
                    ])
    for fname, attr in [("coefficients.csv", "coefficient"), ("elo.csv", "elo")]:
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["association", "season", "value"])
            for name in names:
                for table in bundle.season_tables:
                    profile = table.profiles.get(name)
                    if profile is not None:
                        w.writerow([name, table.season, str(getattr(profile, attr))])


def _parse_ranks(text: str) -> frozenset[int]:
    ranks: set[int] = set()
    text = text.strip()
    if not text:
        return frozenset()
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            ranks.update(range(int(lo), int(hi) + 1))
        else:
            ranks.add(int(part))
    return frozenset(ranks)


def load_format(path: "Path | str") -> FormatSpec:
    """Parse one qualifying-format config file into a FormatSpec."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing format file {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise DatasetError(f"{path.name}: {exc}") from None
    if "format" not in parser:
        raise DatasetError(f"{path.name}: missing [format] section")
    fmt = parser["format"]
    try:
        rounds = []
        for section in parser.sections():
            if not section.startswith("round."):
                continue
            label = section.split(".", 1)[1]
            block = parser[section]
            rounds.append(
                RoundSpec(
                    label=label,
                    entry_ranks=_parse_ranks(block.get("entry_ranks", "")),
                    entrants=block.getint("entrants"),
                    tie_kind=block.get("tie_kind", "two-leg"),
                    structure=block.get("structure", "pairwise"),
                    draw_coefficients=block.get("draw_coefficients", "carried"),
                )
            )
        return FormatSpec(
            name=fmt.get("name", path.stem),
            direct_ranks=_parse_ranks(fmt.get("direct_ranks", "")),
            direct_count=fmt.getint("direct_count"),
            rounds=tuple(rounds),
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise DatasetError(f"{path.name}: {exc}") from None


def builtin_format(name: str) -> FormatSpec:
    """Load one of the shipped regime descriptions (pre2018, post2018)."""
    path = default_format_dir() / f"{name}.cfg"
    if not path.is_file():
        shipped = sorted(p.stem for p in default_format_dir().glob("*.cfg"))
        raise DatasetError(f"unknown format {name!r}; shipped formats: {shipped}")
    return load_format(path)


@dataclass(frozen=True)
class FetchReport:
    """Result of one Club Elo snapshot fetch."""

    rows: tuple[tuple[str, str, str], ...]
    missing: tuple[str, ...] = field(default_factory=tuple)
    url: str = ""


def _http_fetch(url: str) -> str:
    import requests

    try:
        response = requests.get(url, timeout=30)
        response.raise_for_status()
    except requests.RequestException as exc:
        raise FetchError(f"fetch failed: {exc}", retryable=True) from exc
    return response.text


def fetch_clubelo_snapshot(
    date: datetime.date,
    mapping: Mapping[str, str],
    season: str,
    out_path: "Path | str | None" = None,
    fetch_text: "Callable[[str], str] | None" = None,
) -> FetchReport:
    """Fetch the public per-date Elo table and emit rows in the elo.csv schema.

    ``mapping`` names the club whose rating stands for each association's
    champion.  Rows for unmapped or absent clubs are omitted and reported.
    Output goes to a new candidate file (if ``out_path`` is given); shipped
    fixtures are never modified.
    """
    if season not in SEASONS:
        raise ValueError(f"unknown season {season!r}")
    url = CLUBELO_URL.format(date=date.isoformat())
    text = (fetch_text or _http_fetch)(url)

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise FetchError("no rows in Club Elo response")
    reader = csv.DictReader(lines)
    fields = reader.fieldnames or []
    for needed in ("Club", "Elo"):
        if needed not in fields:
            raise FetchError(f"Club Elo response lacks column {needed!r}")
    by_club = {}
    for row in reader:
        by_club.setdefault(row["Club"], row["Elo"])
    if not by_club:
        raise FetchError("no rows in Club Elo response")

    rows: list[tuple[str, str, str]] = []
    missing: list[str] = []
    for association, club in mapping.items():
        if club in by_club:
            value = by_club[club]
            try:
                Decimal(value)
            except InvalidOperation:
                raise FetchError(f"bad Elo value {value!r} for club {club!r}") from None
            rows.append((association, season, value))
        else:
            missing.append(association)

    report = FetchReport(rows=tuple(rows), missing=tuple(missing), url=url)
    if out_path is not None:
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["association", "season", "value"])
            w.writerows(report.rows)
    return report
