"""File formats: t-statistic files, run manifests, and sweep result tables.

All formats are plain text. CSV files open with a ``#``-prefixed comment
block that embeds the JSON manifest of the run that produced them, followed
by a fixed, documented header line. Reals are serialized with ``repr`` so
every value round-trips exactly and re-running a manifest reproduces the
data section byte for byte. ``results.json`` mirrors the three CSV tables
for programmatic consumers; there NOT_REACHED and UNDEFINED become nulls.

Writes are atomic (write to a temp file in the target directory, then
rename), so readers never observe a half-written file.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from varqual.metrics import MetricKind, Sidedness
from varqual.power import (
    DEFAULT_TARGET_POWERS,
    DEFAULT_THETAS,
    DEFAULT_TRIALS,
    FIRST_CROSSING,
    INTERP_MODES,
    EfficiencyEntry,
    PowerCurve,
    SampleComplexityResult,
    log_grid,
)
from varqual.simulate import (
    FAST,
    FULL,
    ExperimentConfig,
    SourceDistribution,
    Uniform,
    source_from_dict,
)

ARTIFACT_VERSION = "1"

NOT_REACHED = "NOT_REACHED"
UNDEFINED = "UNDEFINED"

TSTAT_HEADER = "experiment_id,t"
POWER_HEADER = "theta,metric,n,power,trials"
COMPLEXITY_HEADER = "metric,theta,target_power,n_required"
EFFICIENCY_HEADER = "metric_1,metric_2,theta,target_power,e12"
FIGURE1_HEADER = "metric,power,n"
FIGURE2_HEADER = "metric_1,metric_2,target_power,e12"

POWER_CSV = "power.csv"
COMPLEXITY_CSV = "complexity.csv"
EFFICIENCY_CSV = "efficiency.csv"
RESULTS_JSON = "results.json"


class ParseError(ValueError):
    """A file's content does not match its documented format."""


class ValidationError(ValueError):
    """A file parsed but carries values the format forbids."""


class DependencyError(RuntimeError):
    """A required input artifact is missing or incomplete."""


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fmt(value) -> str:
    """Shortest decimal form that parses back to the same value."""
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("booleans have no CSV serialization here")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write ``text`` to ``path`` via a same-directory temp file + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------------------
# Run manifests


@dataclass
class RunManifest:
    """Complete description of a sweep run, embedded in every output file.

    Re-running the same manifest reproduces the data sections of all output
    files byte-identically; only the timestamps differ. ``diagnostics`` is
    filled in after the run (degenerate-batch and NOT_REACHED counters).
    """

    seed: int = 0
    mode: str = FULL
    group_size: int = 1000
    source: dict = field(default_factory=lambda: Uniform().as_dict())
    alpha: float = 0.1
    ci_level: float = 0.90
    sidedness: str = Sidedness.TWO_SIDED.value
    thetas: tuple = DEFAULT_THETAS
    n_grid: tuple = ()
    trials: int = DEFAULT_TRIALS
    metrics: tuple = tuple(m.value for m in MetricKind)
    target_powers: tuple = DEFAULT_TARGET_POWERS
    interp: str = FIRST_CROSSING
    workers: int = 1
    artifact_version: str = ARTIFACT_VERSION
    started: str | None = None
    finished: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = tuple(float(t) for t in self.thetas)
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.metrics = tuple(MetricKind(m).value for m in self.metrics)
        self.target_powers = tuple(float(p) for p in self.target_powers)
        Sidedness(self.sidedness)
        if self.mode not in (FULL, FAST):
            raise ValidationError(f"mode must be '{FULL}' or '{FAST}', got {self.mode!r}")
        if self.interp not in INTERP_MODES:
            raise ValidationError(f"interp must be one of {INTERP_MODES}, got {self.interp!r}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        source_from_dict(self.source)

    def base_config(self) -> ExperimentConfig:
        """ExperimentConfig template for sweep cells (theta and n overridden per cell)."""
        n0 = self.n_grid[0] if self.n_grid else 2
        return ExperimentConfig(
            theta=0.0,
            n_tests=n0,
            group_size=self.group_size,
            source=source_from_dict(self.source),
            alpha=self.alpha,
            mode=self.mode,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("thetas", "n_grid", "metrics", "target_powers"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown manifest keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f"invalid manifest: {e}") from e

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"manifest is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise ParseError("manifest JSON must be an object")
        return cls.from_dict(d)


def default_sweep_manifest(**overrides) -> RunManifest:
    """Default sweep configuration: four noise levels, 30 log-spaced batch
    sizes from 100 to 10000, 500 trials per cell, full-sample simulation."""
    fields = dict(
        thetas=DEFAULT_THETAS,
        n_grid=tuple(int(n) for n in log_grid(100, 10_000, 30)),
        trials=DEFAULT_TRIALS,
        mode=FULL,
    )
    fields.update(overrides)
    return RunManifest(**fields)


def read_manifest_file(path: str | Path) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"manifest file not found: {path}")
    return RunManifest.from_json(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# TStatFile: one t-statistic per row, optional manifest comment block


@dataclass
class TStatData:
    """Parsed contents of a t-statistic file."""

    ids: list
    t: np.ndarray
    manifest: dict | None = None

    @property
    def n(self) -> int:
        return len(self.ids)


def _manifest_comment_lines(manifest: dict | None) -> list:
    lines = [f"# format: tstats/{ARTIFACT_VERSION}"]
    if manifest is not None:
        lines.append("# manifest: " + json.dumps(manifest, sort_keys=True, separators=(",", ":")))
    return lines


def write_tstats(path: str | Path, ids: Sequence[str], t, manifest: dict | None = None) -> Path:
    """Write a t-statistic file: ``#`` comment block, header, one row per value.

    Values are serialized with ``repr`` and parse back exactly. Ids must be
    non-empty and free of commas and line breaks (they are not quoted).
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or len(ids) != t.size:
        raise ValidationError(f"need one id per t value, got {len(ids)} ids for {t.size} values")
    if t.size and not np.all(np.isfinite(t)):
        bad = int(np.flatnonzero(~np.isfinite(t))[0])
        raise ValidationError(f"t values must be finite; row {bad + 1} is {t[bad]}")
    rows = []
    for i, (eid, value) in enumerate(zip(ids, t)):
        eid = str(eid)
        if not eid or "," in eid or "\n" in eid or "\r" in eid:
            raise ValidationError(f"invalid experiment id at row {i + 1}: {eid!r}")
        rows.append(f"{eid},{repr(float(value))}")
    lines = _manifest_comment_lines(manifest) + [TSTAT_HEADER] + rows
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_tstats(path: str | Path) -> TStatData:
    """Parse a t-statistic file.

    Raises ParseError (with the offending line number) for malformed rows,
    ValidationError for non-finite values or empty ids, DependencyError if
    the file does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"t-statistic file not found: {path}")
    manifest = None
    header_seen = False
    ids: list = []
    values: list = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("manifest:"):
                try:
                    manifest = json.loads(body[len("manifest:"):])
                except json.JSONDecodeError as e:
                    raise ParseError(f"{path}:{lineno}: bad manifest JSON: {e}") from e
            continue
        if not header_seen:
            if line != TSTAT_HEADER:
                raise ParseError(
                    f"{path}:{lineno}: expected header {TSTAT_HEADER!r}, got {line!r}"
                )
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'id,t', got {line!r}")
        eid, t_text = parts[0].strip(), parts[1].strip()
        if not eid:
            raise ValidationError(f"{path}:{lineno}: empty experiment id")
        try:
            value = float(t_text)
        except ValueError as e:
            raise ParseError(f"{path}:{lineno}: bad t value {t_text!r}") from e
        if not math.isfinite(value):
            raise ValidationError(f"{path}:{lineno}: t must be finite, got {t_text}")
        ids.append(eid)
        values.append(value)
    if not header_seen:
        raise ParseError(f"{path}: missing header line {TSTAT_HEADER!r}")
    return TStatData(ids=ids, t=np.array(values, dtype=float), manifest=manifest)


# ---------------------------------------------------------------------------
# Sweep result tables


def _csv_text(manifest: RunManifest, header: str, rows: Iterable[str]) -> str:
    comment = "# manifest: " + json.dumps(manifest.to_dict(), sort_keys=True, separators=(",", ":"))
    return "\n".join([comment, header, *rows]) + "\n"


def power_rows(curves: Sequence[PowerCurve]) -> list:
    return [
        {
            "theta": p.theta,
            "metric": p.metric.value,
            "n": p.n_tests,
            "power": p.power,
            "trials": p.trials,
        }
        for curve in curves
        for p in curve.points
    ]


def complexity_rows(results: Sequence[SampleComplexityResult]) -> list:
    return [
        {
            "metric": r.metric.value,
            "theta": r.theta,
            "target_power": r.target_power,
            "n_required": r.n_required,
            "interpolated": r.interpolated,
        }
        for r in results
    ]


def efficiency_rows(entries: Sequence[EfficiencyEntry]) -> list:
    return [
        {
            "metric_1": e.metric_1.value,
            "metric_2": e.metric_2.value,
            "theta": e.theta,
            "target_power": e.target_power,
            "e12": e.e12,
        }
        for e in entries
    ]


def write_sweep_results(
    out_dir: str | Path,
    curves: Sequence[PowerCurve],
    complexity: Sequence[SampleComplexityResult],
    efficiency: Sequence[EfficiencyEntry],
    manifest: RunManifest,
) -> dict:
    """Write power.csv, complexity.csv, efficiency.csv, and results.json.

    Every file embeds the manifest; the JSON mirror holds the same rows with
    NOT_REACHED/UNDEFINED as nulls. Returns {name: Path} of written files.
    """
    out_dir = Path(out_dir)
    p_rows = power_rows(curves)
    c_rows = complexity_rows(complexity)
    e_rows = efficiency_rows(efficiency)

    power_lines = [
        ",".join([_fmt(r["theta"]), r["metric"], _fmt(r["n"]), _fmt(r["power"]), _fmt(r["trials"])])
        for r in p_rows
    ]
    complexity_lines = [
        ",".join(
            [
                r["metric"],
                _fmt(r["theta"]),
                _fmt(r["target_power"]),
                NOT_REACHED if r["n_required"] is None else _fmt(r["n_required"]),
            ]
        )
        for r in c_rows
    ]
    efficiency_lines = [
        ",".join(
            [
                r["metric_1"],
                r["metric_2"],
                _fmt(r["theta"]),
                _fmt(r["target_power"]),
                UNDEFINED if r["e12"] is None else _fmt(r["e12"]),
            ]
        )
        for r in e_rows
    ]

    paths = {
        POWER_CSV: atomic_write_text(
            out_dir / POWER_CSV, _csv_text(manifest, POWER_HEADER, power_lines)
        ),
        COMPLEXITY_CSV: atomic_write_text(
            out_dir / COMPLEXITY_CSV, _csv_text(manifest, COMPLEXITY_HEADER, complexity_lines)
        ),
        EFFICIENCY_CSV: atomic_write_text(
            out_dir / EFFICIENCY_CSV, _csv_text(manifest, EFFICIENCY_HEADER, efficiency_lines)
        ),
        RESULTS_JSON: atomic_write_text(
            out_dir / RESULTS_JSON,
            json.dumps(
                {
                    "manifest": manifest.to_dict(),
                    "power": p_rows,
                    "complexity": c_rows,
                    "efficiency": e_rows,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
        ),
    }
    return paths


def _read_table(path: Path, expected_header: str) -> tuple:
    """Read a manifest-commented CSV; returns (rows as string lists, manifest dict|None)."""
    if not path.exists():
        raise DependencyError(f"required sweep output not found: {path}")
    manifest = None
    header_seen = False
    rows = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("manifest:"):
                try:
                    manifest = json.loads(body[len("manifest:"):])
                except json.JSONDecodeError as e:
                    raise ParseError(f"{path}:{lineno}: bad manifest JSON: {e}") from e
            continue
        if not header_seen:
            if line != expected_header:
                raise ParseError(
                    f"{path}:{lineno}: expected header {expected_header!r}, got {line!r}"
                )
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != len(expected_header.split(",")):
            raise ParseError(f"{path}:{lineno}: wrong column count in {line!r}")
        rows.append(parts)
    if not header_seen:
        raise ParseError(f"{path}: missing header line {expected_header!r}")
    return rows, manifest


def read_power_table(path: str | Path) -> tuple:
    """Rows of power.csv as dicts (types restored), plus the embedded manifest."""
    rows, manifest = _read_table(Path(path), POWER_HEADER)
    out = []
    for parts in rows:
        out.append(
            {
                "theta": float(parts[0]),
                "metric": parts[1],
                "n": int(parts[2]),
                "power": float(parts[3]),
                "trials": int(parts[4]),
            }
        )
    return out, manifest


def read_efficiency_table(path: str | Path) -> tuple:
    """Rows of efficiency.csv as dicts (UNDEFINED -> None), plus the manifest."""
    rows, manifest = _read_table(Path(path), EFFICIENCY_HEADER)
    out = []
    for parts in rows:
        out.append(
            {
                "metric_1": parts[0],
                "metric_2": parts[1],
                "theta": float(parts[2]),
                "target_power": float(parts[3]),
                "e12": None if parts[4] == UNDEFINED else float(parts[4]),
            }
        )
    return out, manifest


def read_complexity_table(path: str | Path) -> tuple:
    """Rows of complexity.csv as dicts (NOT_REACHED -> None), plus the manifest."""
    rows, manifest = _read_table(Path(path), COMPLEXITY_HEADER)
    out = []
    for parts in rows:
        out.append(
            {
                "metric": parts[0],
                "theta": float(parts[1]),
                "target_power": float(parts[2]),
                "n_required": None if parts[3] == NOT_REACHED else float(parts[3]),
            }
        )
    return out, manifest


# ---------------------------------------------------------------------------
# Plot-ready series files (Figure 1 / Figure 2 data layout)


def _theta_tag(theta: float) -> str:
    return _fmt(theta)


def write_plotdata(out_dir: str | Path, sweep_dir: str | Path) -> dict:
    """Emit per-theta series CSVs from a sweep's output directory.

    ``figure1_theta_T.csv`` holds (metric, power, n) rows — each metric's
    attained power against the batch size that attained it. ``figure2_theta_T.csv``
    holds (metric_1, metric_2, target_power, e12) rows; UNDEFINED entries are
    omitted from the series and counted. Returns
    {"figure1": [paths], "figure2": [paths], "omitted_undefined": int}.
    """
    sweep_dir = Path(sweep_dir)
    out_dir = Path(out_dir)
    power, p_manifest = read_power_table(sweep_dir / POWER_CSV)
    efficiency, e_manifest = read_efficiency_table(sweep_dir / EFFICIENCY_CSV)
    manifest_comment = None
    for m in (p_manifest, e_manifest):
        if m is not None:
            manifest_comment = "# manifest: " + json.dumps(m, sort_keys=True, separators=(",", ":"))
            break

    def emit(name: str, header: str, lines: list) -> Path:
        head = [manifest_comment] if manifest_comment else []
        return atomic_write_text(out_dir / name, "\n".join([*head, header, *lines]) + "\n")

    fig1_paths = []
    thetas = sorted({r["theta"] for r in power})
    for theta in thetas:
        lines = [
            ",".join([r["metric"], _fmt(r["power"]), _fmt(r["n"])])
            for r in power
            if r["theta"] == theta
        ]
        fig1_paths.append(emit(f"figure1_theta_{_theta_tag(theta)}.csv", FIGURE1_HEADER, lines))

    fig2_paths = []
    omitted = 0
    for theta in sorted({r["theta"] for r in efficiency}):
        lines = []
        for r in efficiency:
            if r["theta"] != theta:
                continue
            if r["e12"] is None:
                omitted += 1
                continue
            lines.append(
                ",".join([r["metric_1"], r["metric_2"], _fmt(r["target_power"]), _fmt(r["e12"])])
            )
        fig2_paths.append(emit(f"figure2_theta_{_theta_tag(theta)}.csv", FIGURE2_HEADER, lines))

    return {"figure1": fig1_paths, "figure2": fig2_paths, "omitted_undefined": omitted}


def render_svg(out_dir: str | Path, sweep_dir: str | Path) -> list:
    """Best-effort SVG renderings of the two figures; needs matplotlib."""
    try:
        import matplotlib
    except ImportError as e:
        raise DependencyError("SVG rendering requires matplotlib") from e
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    sweep_dir = Path(sweep_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    power, _ = read_power_table(sweep_dir / POWER_CSV)
    efficiency, _ = read_efficiency_table(sweep_dir / EFFICIENCY_CSV)
    paths = []

    thetas = sorted({r["theta"] for r in power})
    fig, axes = plt.subplots(1, len(thetas), figsize=(4 * len(thetas), 3.5), squeeze=False)
    for ax, theta in zip(axes[0], thetas):
        for metric in sorted({r["metric"] for r in power}):
            pts = [(r["power"], r["n"]) for r in power if r["theta"] == theta and r["metric"] == metric]
            ax.plot([p for p, _ in pts], [n for _, n in pts], marker=".", label=metric)
        ax.set_yscale("log")
        ax.set_xlabel("power")
        ax.set_ylabel("number of A/A tests")
        ax.set_title(f"theta = {theta}")
        ax.legend()
    fig.tight_layout()
    fig1 = out_dir / "figure1.svg"
    fig.savefig(fig1)
    plt.close(fig)
    paths.append(fig1)

    thetas = sorted({r["theta"] for r in efficiency})
    if thetas:
        fig, axes = plt.subplots(1, len(thetas), figsize=(4 * len(thetas), 3.5), squeeze=False)
        for ax, theta in zip(axes[0], thetas):
            pairs = sorted({(r["metric_1"], r["metric_2"]) for r in efficiency})
            for m1, m2 in pairs:
                pts = [
                    (r["target_power"], r["e12"])
                    for r in efficiency
                    if r["theta"] == theta and r["metric_1"] == m1 and r["metric_2"] == m2
                    and r["e12"] is not None
                ]
                if pts:
                    ax.plot([t for t, _ in pts], [e for _, e in pts], marker=".", label=f"{m1} vs {m2}")
            ax.axhline(1.0, color="gray", lw=0.8, ls="--")
            ax.set_xlabel("target power")
            ax.set_ylabel("relative efficiency")
            ax.set_title(f"theta = {theta}")
            ax.legend(fontsize="x-small")
        fig.tight_layout()
        fig2 = out_dir / "figure2.svg"
        fig.savefig(fig2)
        plt.close(fig)
        paths.append(fig2)
    return paths
