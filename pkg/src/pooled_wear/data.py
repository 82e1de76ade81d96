"""Grouped roughness datasets: CSV ingestion, input scaling, holdout splits, file formats.

A dataset is a collection of (sliding distance, roughness) observations
partitioned by tool. Sliding distance is min-max scaled to [0, 1] at load
time so that unit-scale priors are weakly informative; the raw values and
the scale factors are retained for reporting in original units.
"""

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CSV_HEADER = ("tool_id", "sliding_distance", "roughness_ra")

# Full round-trip precision for float64.
_FLOAT_FMT = ".17g"


class DataError(ValueError):
    """Malformed input data or an invalid dataset operation."""


def format_float(value: float) -> str:
    return format(float(value), _FLOAT_FMT)


@dataclass(frozen=True)
class RawRecord:
    """One row of an input file: tool label plus raw-unit measurements."""

    tool_id: str
    sliding_distance: float
    roughness_ra: float

    def __post_init__(self):
        if not self.tool_id:
            raise DataError("tool_id must be non-empty")
        if not np.isfinite(self.sliding_distance) or self.sliding_distance < 0:
            raise DataError(f"sliding_distance must be finite and >= 0, got {self.sliding_distance}")
        if not np.isfinite(self.roughness_ra) or self.roughness_ra < 0:
            raise DataError(f"roughness_ra must be finite and >= 0, got {self.roughness_ra}")


@dataclass(frozen=True)
class Observation:
    """A single (scaled sliding distance, roughness in micrometers) pair."""

    x: float
    y: float

    def __post_init__(self):
        if not np.isfinite(self.x) or not np.isfinite(self.y):
            raise DataError(f"observation must be finite, got ({self.x}, {self.y})")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Observations partitioned by tool, with shared min-max x scaling.

    ``x`` holds the scaled inputs used by the models; ``x_raw`` the original
    sliding distances. ``x_offset``/``x_span`` back-transform scaled values:
    ``raw = x_offset + x_span * scaled``.
    """

    labels: tuple[str, ...]
    x_raw: tuple[np.ndarray, ...]
    y: tuple[np.ndarray, ...]
    x: tuple[np.ndarray, ...]
    x_offset: float
    x_span: float

    @classmethod
    def from_groups(
        cls,
        labels: Sequence[str],
        x_raw: Sequence[np.ndarray],
        y: Sequence[np.ndarray],
    ) -> "GroupedDataset":
        """Build a dataset, deriving the min-max scaling from the data itself."""
        labels = tuple(str(lab) for lab in labels)
        _check_groups(labels, x_raw, y)
        all_x = np.concatenate([np.asarray(g, dtype=float) for g in x_raw if len(g)])
        if all_x.size == 0:
            raise DataError("dataset has no observations")
        offset = float(all_x.min())
        span = float(all_x.max()) - offset
        if span <= 0:
            raise DataError("all sliding distances are identical; min-max scale is degenerate")
        return cls._with_scale(labels, x_raw, y, offset, span)

    @classmethod
    def _with_scale(
        cls,
        labels: Sequence[str],
        x_raw: Sequence[np.ndarray],
        y: Sequence[np.ndarray],
        x_offset: float,
        x_span: float,
    ) -> "GroupedDataset":
        labels = tuple(str(lab) for lab in labels)
        _check_groups(labels, x_raw, y)
        if x_span <= 0:
            raise DataError("x_span must be positive")
        raw = tuple(_freeze(g) for g in x_raw)
        scaled = tuple(_freeze((g - x_offset) / x_span) for g in raw)
        return cls(
            labels=labels,
            x_raw=raw,
            y=tuple(_freeze(g) for g in y),
            x=scaled,
            x_offset=float(x_offset),
            x_span=float(x_span),
        )

    @property
    def n_groups(self) -> int:
        return len(self.labels)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.y)

    @property
    def n_total(self) -> int:
        return sum(self.counts)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"unknown tool label {label!r}") from None

    def observations(self, label: str) -> list[Observation]:
        k = self.index(label)
        return [Observation(float(a), float(b)) for a, b in zip(self.x[k], self.y[k])]

    def scale_x(self, x_raw) -> np.ndarray:
        """Map raw sliding distances into the dataset's scaled coordinates."""
        return (np.asarray(x_raw, dtype=float) - self.x_offset) / self.x_span

    def unscale_x(self, x_scaled) -> np.ndarray:
        return self.x_offset + self.x_span * np.asarray(x_scaled, dtype=float)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupedDataset):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.x_offset == other.x_offset
            and self.x_span == other.x_span
            and all(np.array_equal(a, b) for a, b in zip(self.x_raw, other.x_raw))
            and all(np.array_equal(a, b) for a, b in zip(self.y, other.y))
        )


def _check_groups(labels, x_raw, y):
    if len(labels) < 1:
        raise DataError("dataset must contain at least one group")
    if len(set(labels)) != len(labels):
        raise DataError("group labels must be unique")
    if not (len(labels) == len(x_raw) == len(y)):
        raise DataError("labels, x, and y must have one entry per group")
    for lab, gx, gy in zip(labels, x_raw, y):
        if len(gx) != len(gy):
            raise DataError(f"group {lab!r} has mismatched x/y lengths")


def dataset_from_records(records: Iterable[RawRecord]) -> GroupedDataset:
    """Group records by tool label in order of first appearance."""
    order: list[str] = []
    xs: dict[str, list[float]] = {}
    ys: dict[str, list[float]] = {}
    for rec in records:
        if rec.tool_id not in xs:
            order.append(rec.tool_id)
            xs[rec.tool_id] = []
            ys[rec.tool_id] = []
        xs[rec.tool_id].append(rec.sliding_distance)
        ys[rec.tool_id].append(rec.roughness_ra)
    if not order:
        raise DataError("no data records")
    return GroupedDataset.from_groups(
        order,
        [np.array(xs[lab]) for lab in order],
        [np.array(ys[lab]) for lab in order],
    )


def load_csv(path) -> GroupedDataset:
    """Read a ``tool_id,sliding_distance,roughness_ra`` file into a dataset.

    Groups are ordered by first appearance; x is min-max scaled to [0, 1].
    Raises DataError naming the offending line for any malformed content.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: file is empty")
    if tuple(rows[0]) != CSV_HEADER:
        raise DataError(
            f"{path}: line 1: header must be exactly {','.join(CSV_HEADER)!r}, got {','.join(rows[0])!r}"
        )
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
        tool_id, x_text, y_text = row
        if tool_id == CSV_HEADER[0]:
            raise DataError(f"{path}: line {lineno}: duplicate header row")
        try:
            x_val = float(x_text)
            y_val = float(y_text)
        except ValueError:
            raise DataError(f"{path}: line {lineno}: non-numeric value in {row!r}") from None
        try:
            records.append(RawRecord(tool_id, x_val, y_val))
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    if not records:
        raise DataError(f"{path}: no data rows")
    return dataset_from_records(records)


def save_csv(dataset: GroupedDataset, path) -> None:
    """Write a dataset back to the input CSV format in raw units."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for lab, gx, gy in zip(dataset.labels, dataset.x_raw, dataset.y):
            for xv, yv in zip(gx, gy):
                fh.write(f"{lab},{format_float(xv)},{format_float(yv)}\n")


def split_paper_experiment(
    data: GroupedDataset,
    sparse_labels: Sequence[str],
    n_visible: int = 5,
) -> tuple[GroupedDataset, GroupedDataset]:
    """Split into (train, holdout) by hiding all but the earliest points of sparse tools.

    Non-sparse tools go to train in full. For each sparse tool only the
    ``n_visible`` smallest sliding distances are visible; the rest form the
    holdout. Both children keep the parent's K groups and x scaling, so
    holdout groups of non-sparse tools are simply empty.
    """
    sparse = {str(lab) for lab in sparse_labels}
    unknown = sparse - set(data.labels)
    if unknown:
        raise DataError(f"sparse labels not in dataset: {sorted(unknown)}")
    if n_visible < 1:
        raise DataError("n_visible must be >= 1")
    train_x, train_y, hold_x, hold_y = [], [], [], []
    for lab, gx, gy in zip(data.labels, data.x_raw, data.y):
        if lab in sparse:
            if len(gx) <= n_visible:
                raise DataError(
                    f"sparse tool {lab!r} has {len(gx)} observations; needs more than n_visible={n_visible}"
                )
            order = np.argsort(gx, kind="stable")
            vis, hid = order[:n_visible], order[n_visible:]
            train_x.append(gx[vis])
            train_y.append(gy[vis])
            hold_x.append(gx[hid])
            hold_y.append(gy[hid])
        else:
            train_x.append(gx)
            train_y.append(gy)
            hold_x.append(np.empty(0))
            hold_y.append(np.empty(0))
    train = GroupedDataset._with_scale(data.labels, train_x, train_y, data.x_offset, data.x_span)
    hold = GroupedDataset._with_scale(data.labels, hold_x, hold_y, data.x_offset, data.x_span)
    return train, hold


def merge_splits(train: GroupedDataset, holdout: GroupedDataset) -> GroupedDataset:
    """Recombine a (train, holdout) pair, ordering each group by sliding distance."""
    if train.labels != holdout.labels:
        raise DataError("train and holdout have different group labels")
    if (train.x_offset, train.x_span) != (holdout.x_offset, holdout.x_span):
        raise DataError("train and holdout have different x scalings")
    xs, ys = [], []
    for k in range(train.n_groups):
        gx = np.concatenate([train.x_raw[k], holdout.x_raw[k]])
        gy = np.concatenate([train.y[k], holdout.y[k]])
        order = np.argsort(gx, kind="stable")
        xs.append(gx[order])
        ys.append(gy[order])
    return GroupedDataset._with_scale(train.labels, xs, ys, train.x_offset, train.x_span)


# ---------------------------------------------------------------------------
# Output file formats. Writers are duck-typed over the result objects so this
# module stays import-light; all files are UTF-8 with LF endings and floats
# at full round-trip precision.


def _fmt_opt(value) -> str:
    return "" if value is None else format_float(value)


def save_draws_csv(samples, path) -> None:
    """Write posterior draws as ``chain,iteration,<parameter names>`` rows."""
    names = samples.names
    draws = samples.draws
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("chain,iteration," + ",".join(names) + "\n")
        for c in range(draws.shape[0]):
            for i in range(draws.shape[1]):
                vals = ",".join(format_float(v) for v in draws[c, i])
                fh.write(f"{c},{i},{vals}\n")


def save_summary_csv(summaries, path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("name,mean,median,q025,q25,q75,q975,rhat,ess_bulk\n")
        for s in summaries:
            fields = [s.name] + [
                format_float(v)
                for v in (s.mean, s.median, s.q025, s.q25, s.q75, s.q975, s.rhat, s.ess_bulk)
            ]
            fh.write(",".join(fields) + "\n")


def quantile_column(level: float) -> str:
    """Column name for a quantile level: 0.025 -> ``q025``, 0.25 -> ``q25``."""
    text = format(level, ".10g")
    if not text.startswith("0."):
        raise ValueError(f"quantile level must be in (0, 1), got {level}")
    return "q" + text[2:]


def save_band_csv(bands, path, kind: str = "predictive") -> None:
    """Write plot-ready band curves, one row per (tool, grid point)."""
    bands = list(bands)
    if not bands:
        raise ValueError("no bands to write")
    levels = bands[0].levels
    cols = ["tool_id", "x", "center"] + [quantile_column(lv) for lv in levels]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for band in bands:
            if band.levels != levels:
                raise ValueError("all bands in one file must share quantile levels")
            curves = band.quantiles if kind == "predictive" else band.location_quantiles
            for j, xv in enumerate(band.x):
                row = [band.tool_id, format_float(xv), format_float(band.center[j])]
                row += [format_float(curves[lv][j]) for lv in levels]
                fh.write(",".join(row) + "\n")


def save_holdout_report_csv(report, path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("tool_id,n_train,n_holdout,mae,coverage_95,band_width,nlpd\n")
        for row in list(report.per_tool) + [report.aggregate]:
            fields = [
                row.tool_id,
                str(row.n_train),
                str(row.n_holdout),
                _fmt_opt(row.mae),
                _fmt_opt(row.coverage_95),
                _fmt_opt(row.band_width),
                _fmt_opt(row.nlpd),
            ]
            fh.write(",".join(fields) + "\n")


def save_comparison_csv(table, path) -> None:
    cols = [
        "tool_id",
        "sparse",
        "n_train",
        "n_holdout",
        "mae_independent",
        "mae_hierarchical",
        "mae_delta",
        "coverage_independent",
        "coverage_hierarchical",
        "coverage_delta",
        "width_independent",
        "width_hierarchical",
        "width_delta",
        "width_ratio",
        "nlpd_independent",
        "nlpd_hierarchical",
        "nlpd_delta",
    ]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in table.rows:
            fields = [
                row.tool_id,
                "1" if row.sparse else "0",
                str(row.n_train),
                str(row.n_holdout),
                _fmt_opt(row.mae_independent),
                _fmt_opt(row.mae_hierarchical),
                _fmt_opt(row.mae_delta),
                _fmt_opt(row.coverage_independent),
                _fmt_opt(row.coverage_hierarchical),
                _fmt_opt(row.coverage_delta),
                _fmt_opt(row.width_independent),
                _fmt_opt(row.width_hierarchical),
                _fmt_opt(row.width_delta),
                _fmt_opt(row.width_ratio),
                _fmt_opt(row.nlpd_independent),
                _fmt_opt(row.nlpd_hierarchical),
                _fmt_opt(row.nlpd_delta),
            ]
            fh.write(",".join(fields) + "\n")
