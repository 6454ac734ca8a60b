"""Command-line front end: run experiments from manifests, emit charts.

An experiment manifest is a plain-text key-value file (``key = value`` per
line, ``#`` comments allowed) describing one experiment.  Parsed manifests
normalize to a canonical text form, so canonicalization is idempotent and
manifests can be diffed reliably.

Exit codes: 0 success, 2 invalid manifest or arguments, 3 data problems
(fixture validation, missing reports, failed fetches).

Determinism: all randomness flows from the manifest seed (or the --seed
override); report CSV/JSON bodies contain no timestamps, so re-running the
same manifest reproduces them byte for byte.  Wall-clock details live only
in the ``.meta.json`` sidecar.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

from . import __version__
from .analysis import (
    PrizeSchedule,
    ProbabilityReport,
    probabilities,
    seeding_contribution,
    sensitivity_sweep,
)
from .data import DatasetError, FetchError, builtin_format, fetch_clubelo_snapshot, load_fixtures, load_format
from .mc import DEFAULT_CHECKPOINTS, RunConfig, SamplingPolicy, run
from .elo import ScalingParam
from .model import FormatError, SEASONS

EXPERIMENT_KINDS = ("baseline", "weighted", "sensitivity", "seeding", "convergence")

# Canonical manifest key order; parsing accepts any order.
_MANIFEST_KEYS = (
    "kind", "iterations", "master_seed", "partitions", "scaling_s",
    "s_values", "seeding_mode", "season_weights", "formats", "checkpoints",
    "data", "out",
)


class ManifestError(ValueError):
    """An experiment manifest is malformed or inconsistent."""


@dataclass(frozen=True)
class ExperimentManifest:
    """One experiment: what to simulate and where to put the outputs.

    ``season_weights`` is either the name of a preset ("uniform" or
    "weighted") or five explicit weights.  The "weighted" experiment kind
    defaults to the weighted preset; every other kind defaults to uniform.
    ``formats`` entries name shipped regimes or point at .cfg files.
    """

    kind: str
    iterations: int = 1_000_000
    master_seed: int = 0
    partitions: int = 1
    scaling_s: float = 400.0
    s_values: tuple[float, ...] = (400.0, 600.0, 800.0)
    seeding_mode: str = "seeded"
    season_weights: str = "uniform"
    formats: tuple[str, ...] = ("pre2018", "post2018")
    checkpoints: tuple[int, ...] = DEFAULT_CHECKPOINTS
    data: str = ""
    out: str = ""

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ManifestError(
                f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}"
            )
        if self.iterations < 1:
            raise ManifestError(f"iterations must be positive, got {self.iterations}")
        if self.partitions < 1:
            raise ManifestError(f"partitions must be positive, got {self.partitions}")
        if self.scaling_s <= 0:
            raise ManifestError(f"scaling_s must be positive, got {self.scaling_s}")
        if any(s <= 0 for s in self.s_values):
            raise ManifestError(f"s_values must be positive, got {self.s_values}")
        if self.seeding_mode not in ("seeded", "unseeded-random"):
            raise ManifestError(f"unknown seeding_mode {self.seeding_mode!r}")
        if not self.formats:
            raise ManifestError("formats must not be empty")
        if any(c < 1 for c in self.checkpoints):
            raise ManifestError("checkpoints must be positive")
        self.policy()  # validates the weights token

    @classmethod
    def from_text(cls, text: str, source: str = "<manifest>") -> "ExperimentManifest":
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ManifestError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _MANIFEST_KEYS:
                raise ManifestError(f"{source}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ManifestError(f"{source}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
        if "kind" not in values:
            raise ManifestError(f"{source}: missing required key 'kind'")

        def _int(key: str, default: int) -> int:
            try:
                return int(values[key]) if key in values else default
            except ValueError:
                raise ManifestError(f"{source}: bad integer for {key!r}: {values[key]!r}") from None

        def _float(key: str, default: float) -> float:
            try:
                return float(values[key]) if key in values else default
            except ValueError:
                raise ManifestError(f"{source}: bad number for {key!r}: {values[key]!r}") from None

        def _floats(key: str, default: tuple[float, ...]) -> tuple[float, ...]:
            if key not in values:
                return default
            try:
                return tuple(float(tok) for tok in values[key].replace(",", " ").split())
            except ValueError:
                raise ManifestError(f"{source}: bad number list for {key!r}: {values[key]!r}") from None

        def _ints(key: str, default: tuple[int, ...]) -> tuple[int, ...]:
            if key not in values:
                return default
            try:
                return tuple(int(tok) for tok in values[key].replace(",", " ").split())
            except ValueError:
                raise ManifestError(f"{source}: bad integer list for {key!r}: {values[key]!r}") from None

        kind = values["kind"]
        weights_default = "weighted" if kind == "weighted" else "uniform"
        return cls(
            kind=kind,
            iterations=_int("iterations", 1_000_000),
            master_seed=_int("master_seed", 0),
            partitions=_int("partitions", 1),
            scaling_s=_float("scaling_s", 400.0),
            s_values=_floats("s_values", (400.0, 600.0, 800.0)),
            seeding_mode=values.get("seeding_mode", "seeded"),
            season_weights=values.get("season_weights", weights_default),
            formats=tuple(values["formats"].split()) if "formats" in values else ("pre2018", "post2018"),
            checkpoints=_ints("checkpoints", DEFAULT_CHECKPOINTS),
            data=values.get("data", ""),
            out=values.get("out", ""),
        )

    @classmethod
    def from_file(cls, path: "Path | str") -> "ExperimentManifest":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from None
        return cls.from_text(text, source=str(path))

    def canonical(self) -> str:
        rendered = {
            "kind": self.kind,
            "iterations": str(self.iterations),
            "master_seed": str(self.master_seed),
            "partitions": str(self.partitions),
            "scaling_s": repr(self.scaling_s),
            "s_values": " ".join(repr(s) for s in self.s_values),
            "seeding_mode": self.seeding_mode,
            "season_weights": self.season_weights,
            "formats": " ".join(self.formats),
            "checkpoints": " ".join(str(c) for c in self.checkpoints),
            "data": self.data,
            "out": self.out,
        }
        return "".join(f"{k} = {rendered[k]}\n" for k in _MANIFEST_KEYS)

    def policy(self) -> SamplingPolicy:
        token = self.season_weights
        if token == "uniform":
            return SamplingPolicy.uniform()
        if token == "weighted":
            return SamplingPolicy.weighted()
        try:
            weights = tuple(float(t) for t in token.replace(",", " ").split())
        except ValueError:
            raise ManifestError(f"bad season_weights: {token!r}") from None
        if len(weights) != len(SEASONS):
            raise ManifestError(
                f"bad season_weights: expected {len(SEASONS)} weights, got {len(weights)}"
            )
        try:
            return SamplingPolicy(season_weights=weights)
        except ValueError as exc:
            raise ManifestError(f"bad season_weights: {exc}") from None

    def load_formats(self):
        specs = []
        for token in self.formats:
            if token.endswith(".cfg") or "/" in token:
                specs.append(load_format(token))
            else:
                specs.append(builtin_format(token))
        return tuple(specs)

    def run_config(self) -> RunConfig:
        return RunConfig(
            iterations=self.iterations,
            master_seed=self.master_seed,
            partitions=self.partitions,
            scaling=ScalingParam(self.scaling_s),
            seeding_mode=self.seeding_mode,
            policy=self.policy(),
            formats=self.load_formats(),
        )


def package_version() -> str:
    """git-describe output when available, the package version otherwise."""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _write_meta(path: Path, manifest: ExperimentManifest, wall_seconds: float, provenance: str) -> None:
    meta = {
        "manifest": manifest.canonical(),
        "kind": manifest.kind,
        "iterations": manifest.iterations,
        "master_seed": manifest.master_seed,
        "partitions": manifest.partitions,
        "scaling_s": manifest.scaling_s,
        "seeding_mode": manifest.seeding_mode,
        "season_weights": manifest.season_weights,
        "formats": list(manifest.formats),
        "dataset": provenance,
        "version": package_version(),
        "wall_seconds": wall_seconds,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _write_report_files(stem: Path, report: ProbabilityReport, kind: str) -> None:
    with open(stem.with_suffix(".csv"), "w") as fh:
        report.write_csv(fh)
    doc = {"kind": kind} | report.to_json_dict()
    stem.with_suffix(".json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _run_baseline(manifest: ExperimentManifest, dataset, out_dir: Path) -> None:
    tally = run(manifest.run_config(), dataset)
    _write_report_files(out_dir / manifest.kind, probabilities(tally), manifest.kind)


def _run_sensitivity(manifest: ExperimentManifest, dataset, out_dir: Path) -> None:
    reports = sensitivity_sweep(manifest.run_config(), dataset, manifest.s_values)
    with open(out_dir / "sensitivity.csv", "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["s", "association", "p_old", "se_old", "p_new", "se_new", "delta",
             "relative_loss", "money_delta_eur",
             "fee_income_old_meur", "fee_income_new_meur"]
        )
        for s in manifest.s_values:
            for r in reports[float(s)].rows:
                writer.writerow(
                    [repr(float(s)), r.association, repr(r.p_old), repr(r.se_old),
                     repr(r.p_new), repr(r.se_new), repr(r.delta),
                     "" if r.relative_loss is None else repr(r.relative_loss),
                     repr(r.money_delta_eur), repr(r.fee_income_old),
                     repr(r.fee_income_new)]
                )
    doc = {
        "kind": "sensitivity",
        "reports": {repr(float(s)): reports[float(s)].to_json_dict() for s in manifest.s_values},
    }
    (out_dir / "sensitivity.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _run_seeding(manifest: ExperimentManifest, dataset, out_dir: Path) -> None:
    seeded_cfg = dataclasses.replace(manifest.run_config(), seeding_mode="seeded")
    unseeded_cfg = dataclasses.replace(seeded_cfg, seeding_mode="unseeded-random")
    tally_s = run(seeded_cfg, dataset)
    tally_u = run(unseeded_cfg, dataset)
    contribution = seeding_contribution(tally_s, tally_u)
    fmt = tally_s.meta.format_names[-1]
    s_fmt, u_fmt = tally_s.per_format[fmt], tally_u.per_format[fmt]
    with open(out_dir / "seeding.csv", "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["association", "format", "p_seeded", "p_unseeded", "contribution_pp"])
        for name, pp in contribution.items():
            writer.writerow(
                [name, fmt, repr(s_fmt.counts[name] / tally_s.runs),
                 repr(u_fmt.counts[name] / tally_u.runs), repr(pp)]
            )
    doc = {
        "kind": "seeding",
        "format": fmt,
        "runs": tally_s.runs,
        "contribution_pp": contribution,
        "p_seeded": {n: s_fmt.counts[n] / tally_s.runs for n in contribution},
        "p_unseeded": {n: u_fmt.counts[n] / tally_u.runs for n in contribution},
    }
    (out_dir / "seeding.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _run_convergence(manifest: ExperimentManifest, dataset, out_dir: Path) -> None:
    checkpoints = tuple(c for c in manifest.checkpoints if c <= manifest.iterations)
    tally = run(manifest.run_config(), dataset, checkpoints=checkpoints)
    series = tally.convergence or {}
    names = list(series)
    with open(out_dir / "convergence.csv", "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iterations"] + [f"avg_elo_{n}" for n in names])
        points = {c for n in names for c, _ in series[n]}
        for c in sorted(points):
            row = [str(c)]
            for n in names:
                vals = {it: v for it, v in series[n]}
                row.append(repr(vals[c]) if c in vals else "")
            writer.writerow(row)
    doc = {"kind": "convergence", "series": {n: [[c, v] for c, v in series[n]] for n in names}}
    (out_dir / "convergence.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


_RUNNERS = {
    "baseline": _run_baseline,
    "weighted": _run_baseline,
    "sensitivity": _run_sensitivity,
    "seeding": _run_seeding,
    "convergence": _run_convergence,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        manifest = ExperimentManifest.from_file(args.manifest)
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.iterations is not None:
            overrides["iterations"] = args.iterations
        if args.partitions is not None:
            overrides["partitions"] = args.partitions
        if args.data is not None:
            overrides["data"] = args.data
        if args.out is not None:
            overrides["out"] = args.out
        if overrides:
            manifest = dataclasses.replace(manifest, **overrides)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        dataset = load_fixtures(manifest.data or None)
        config_check = manifest.run_config()  # surfaces bad formats early
    except (DatasetError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    del config_check

    out_dir = Path(manifest.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    _RUNNERS[manifest.kind](manifest, dataset, out_dir)
    _write_meta(
        out_dir / f"{manifest.kind}.meta.json",
        manifest,
        wall_seconds=time.monotonic() - started,
        provenance=dataset.provenance,
    )
    return 0


def _chart_report(doc: dict, stem: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    assoc = doc["associations"]
    names = list(assoc)
    deltas = [100.0 * assoc[n]["delta"] for n in names]
    p_old = [assoc[n]["p_old"] for n in names]

    out = []
    fig, ax = plt.subplots(figsize=(14, 5))
    ax.bar(range(len(names)), deltas, color="#336699")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_ylabel("qualification probability change (pp)")
    ax.set_title("Reform impact per association")
    ax.axhline(0, color="black", linewidth=0.8)
    fig.tight_layout()
    path = stem.parent / f"{stem.name}_delta_bar.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    out.append(path)

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.scatter(p_old, deltas, s=18, color="#993333")
    ax.set_xlabel("baseline qualification probability")
    ax.set_ylabel("change (pp)")
    ax.set_title("Reform impact vs baseline probability")
    ax.axhline(0, color="black", linewidth=0.8)
    fig.tight_layout()
    path = stem.parent / f"{stem.name}_delta_vs_p_old.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    out.append(path)
    return out


def _chart_convergence(doc: dict, stem: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 5))
    for name, series in doc["series"].items():
        xs = [c for c, _ in series]
        ys = [v for _, v in series]
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("iterations")
    ax.set_ylabel("average Elo of qualified")
    ax.set_title("Convergence of the qualified-Elo average")
    ax.legend()
    fig.tight_layout()
    path = stem.parent / f"{stem.name}_convergence.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return [path]


def cmd_chart(args: argparse.Namespace) -> int:
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    produced: list[Path] = []
    for report_path in args.reports:
        path = Path(report_path)
        if not path.is_file():
            print(f"error: missing report {path}", file=sys.stderr)
            return 3
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return 3
        stem = out_dir / path.stem
        if "associations" in doc:
            if not doc["associations"]:
                print(f"error: {path}: empty report", file=sys.stderr)
                return 3
            produced += _chart_report(doc, stem)
        elif "series" in doc:
            if not doc["series"]:
                print(f"error: {path}: empty report", file=sys.stderr)
                return 3
            produced += _chart_convergence(doc, stem)
        elif "reports" in doc:
            for key, sub in doc["reports"].items():
                produced += _chart_report(sub, out_dir / f"{path.stem}_s{key}")
        else:
            print(f"error: {path}: unrecognized report shape", file=sys.stderr)
            return 3
    for p in produced:
        print(p)
    return 0


def cmd_fetch_elo(args: argparse.Namespace) -> int:
    try:
        date = datetime.date.fromisoformat(args.date)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    mapping = {}
    try:
        with open(args.mapping, newline="") as fh:
            for row in csv.DictReader(fh):
                mapping[row["association"]] = row["club"]
    except (OSError, KeyError) as exc:
        print(f"error: cannot read club mapping: {exc}", file=sys.stderr)
        return 2
    try:
        report = fetch_clubelo_snapshot(date, mapping, args.season, out_path=args.out)
    except (FetchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"fetched {len(report.rows)} rows from {report.url}")
    for name in report.missing:
        print(f"missing: {name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clqsim",
        description="Champions League qualifying format simulator",
    )
    parser.add_argument("--version", action="version", version=package_version())
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the experiment described by a manifest")
    sim.add_argument("--manifest", required=True, help="experiment manifest file")
    sim.add_argument("--data", help="fixture directory (overrides manifest)")
    sim.add_argument("--out", help="output directory (overrides manifest)")
    sim.add_argument("--seed", type=int, help="master seed (overrides manifest)")
    sim.add_argument("--partitions", type=int, help="partition count (overrides manifest)")
    sim.add_argument("--iterations", type=int, help="iteration count (overrides manifest)")
    sim.set_defaults(func=cmd_simulate)

    chart = sub.add_parser("chart", help="render SVG charts from report JSON files")
    chart.add_argument("reports", nargs="+", help="report .json files")
    chart.add_argument("--out", help="output directory")
    chart.set_defaults(func=cmd_chart)

    fetch = sub.add_parser("fetch-elo", help="fetch a Club Elo snapshot into a candidate fixture file")
    fetch.add_argument("--date", required=True, help="snapshot date, YYYY-MM-DD")
    fetch.add_argument("--season", required=True, help="season label the snapshot stands for")
    fetch.add_argument("--mapping", required=True, help="CSV with association,club columns")
    fetch.add_argument("--out", help="output file for the fetched rows")
    fetch.set_defaults(func=cmd_fetch_elo)
    return parser


def main(argv: "Sequence[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
