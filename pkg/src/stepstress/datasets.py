"""Bundled one-shot device test datasets and ingestion helpers.

Three step-stress accelerated life tests ship with the package, each as a
plain-text file under ``stepstress/data/``:

``solar``
    35 solar light prototypes under a two-step thermal test (293K then
    353K), times in hundreds of hours, six inspection times.
``transistor``
    31 medium-power silicon bipolar transistors across ten temperature
    steps of 168 h each; right-censored units were removed at the source,
    leaving 27 interval failures. Shipped pre-binned.
``led``
    27 LED units across four temperature steps, inspected at the times of
    stress change, terminated at 720 h.

File format
-----------
Header lines start with ``#`` and hold ``key: value`` pairs; the body is
one number per line. Two kinds of body are supported: ``kind: times`` (one
failure time per line) and ``kind: counts`` (one count per interval cell,
the final line being the survivor cell). Required keys: ``name``, ``kind``,
``n_total``, ``time_unit``, ``stress_unit``, ``stress_levels``,
``change_times``, ``inspection_times``, ``use_stress``, ``normalization``,
``analysis``. Optional repeated keys: ``note`` (free text) and ``correct``
(``printed -> value | reason`` — replaces a recorded body token while
keeping the original visible in the file).

``normalization`` selects how physical stress maps to the unitless scale
used for fitting:

* ``minmax`` — lowest tested level to 0, highest to 1;
* ``use-anchored`` — use-condition stress to 0, lowest tested level to 1
  (tested levels then sit at or above 1).

``analysis`` selects the analysis-ready counts: ``as-recorded`` keeps the
binned table; ``drop-censored`` zeroes the survivor cell and reduces the
device total accordingly, mirroring how the source studies treated these
tests. The faithful binned table remains available via ``binned()``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CensoringWarning, DataError
from .model import IntervalData, StressPlan

BUNDLED_DATASETS = ("solar", "transistor", "led")

_REQUIRED_KEYS = (
    "name",
    "kind",
    "n_total",
    "time_unit",
    "stress_unit",
    "stress_levels",
    "change_times",
    "inspection_times",
    "use_stress",
    "normalization",
    "analysis",
)


@dataclass(frozen=True)
class RawLifetimeData:
    """Failure times from a step-stress test, in physical units.

    ``plan_raw`` carries the stress levels as temperatures (or whatever the
    physical stress is); ``n_total`` counts every device put on test, so
    ``n_total - len(failure_times)`` units survived past termination.
    """

    failure_times: np.ndarray
    n_total: int
    plan_raw: StressPlan
    censored_note: str = ""

    def __post_init__(self):
        times = np.sort(np.asarray(self.failure_times, dtype=float))
        if times.ndim != 1 or times.size == 0:
            raise DataError("failure_times must be a non-empty vector")
        if np.any(times <= 0):
            raise DataError("failure times must be positive")
        if len(times) > self.n_total:
            raise DataError(
                f"{len(times)} failure times recorded for only "
                f"{self.n_total} devices"
            )
        object.__setattr__(self, "failure_times", times)
        object.__setattr__(self, "n_total", int(self.n_total))

    @property
    def n_survivors(self) -> int:
        return self.n_total - len(self.failure_times)


@dataclass(frozen=True)
class NormalizationMap:
    """Affine map of physical stress to the unitless fitting scale.

    Maps ``x`` to ``(x - x_min) / (x_max - x_min)``; the two reference
    stresses need not be tested levels, which is how the use-anchored
    convention is expressed (x_min = use stress, x_max = lowest tested
    level).
    """

    x_min: float
    x_max: float

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    def __call__(self, x):
        out = (np.asarray(x, dtype=float) - self.x_min) / (self.x_max - self.x_min)
        return float(out) if out.ndim == 0 else out

    def invert(self, z):
        out = self.x_min + np.asarray(z, dtype=float) * (self.x_max - self.x_min)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DatasetBundle:
    """An analysis-ready dataset: normalized plan, counts, and provenance.

    ``data`` follows the dataset's ``analysis`` directive; when the source
    recorded raw failure times they are kept in ``raw`` and the faithful
    binned table (survivors included) is available via :meth:`binned`.
    """

    name: str
    description: str
    time_unit: str
    stress_unit: str
    raw: RawLifetimeData | None
    plan: StressPlan
    data: IntervalData
    stress_map: NormalizationMap
    x0: float
    x0_physical: float
    n_removed: int
    notes: tuple[str, ...] = ()

    def binned(self) -> IntervalData:
        """Interval counts with survivors kept, rebinned from raw times."""
        if self.raw is None:
            if self.n_removed:
                raise DataError(
                    f"{self.name} was pre-binned at the source; the "
                    "censored units it removed cannot be restored"
                )
            return self.data
        return bin_failures(self.raw, self.plan.inspection_times)


def bin_failures(raw: RawLifetimeData, inspection_times) -> IntervalData:
    """Count failures per inspection interval (t_{j-1}, t_j].

    Failure times beyond the final inspection are counted as survivors,
    with a warning: the test would have ended before observing them.
    """
    t = np.asarray(inspection_times, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise DataError("inspection times must be positive and increasing")
    times = raw.failure_times
    beyond = times > t[-1]
    if np.any(beyond):
        warnings.warn(
            f"{int(beyond.sum())} failure time(s) exceed the final "
            f"inspection at {t[-1]:g}; counted as survivors",
            CensoringWarning,
            stacklevel=2,
        )
    idx = np.searchsorted(t, times[~beyond], side="left")
    counts = np.bincount(idx, minlength=len(t))
    survivors = raw.n_total - int(counts.sum())
    return IntervalData(np.append(counts, survivors), raw.n_total)


def normalize_stress(plan_raw: StressPlan, x0_physical: float):
    """Min-max normalize a physical-stress plan; returns (plan, x0).

    The lowest tested level maps to 0 and the highest to 1; the use
    stress is pushed through the same affine map and may land outside
    [0, 1] when it was not a tested level.
    """
    levels = np.asarray(plan_raw.stress_levels, dtype=float)
    if len(np.unique(levels)) < 2:
        raise DataError("at least two distinct stress levels are required")
    mapping = NormalizationMap(float(levels.min()), float(levels.max()))
    plan = StressPlan(
        mapping(levels), plan_raw.change_times, plan_raw.inspection_times
    )
    return plan, mapping(float(x0_physical))


def available_datasets() -> tuple[str, ...]:
    """Names accepted by :func:`load_dataset` for the bundled data."""
    return BUNDLED_DATASETS


def load_dataset(name_or_path: str | Path) -> DatasetBundle:
    """Load a bundled dataset by name, or any dataset file by path."""
    name = str(name_or_path)
    if name in BUNDLED_DATASETS:
        text = (
            resources.files("stepstress")
            .joinpath("data", f"{name}.txt")
            .read_text(encoding="utf-8")
        )
        origin = f"bundled dataset {name!r}"
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise DataError(
                f"no bundled dataset or file named {name!r}; bundled names "
                f"are {', '.join(BUNDLED_DATASETS)}"
            )
        text = path.read_text(encoding="utf-8")
        origin = str(path)
    return _build_bundle(*_parse_dataset_text(text, origin), origin=origin)


def _parse_dataset_text(text: str, origin: str):
    header: dict[str, str] = {}
    notes: list[str] = []
    corrections: dict[str, tuple[float, str]] = {}
    tokens: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if ":" not in body:
                continue  # banner/comment line
            key, _, value = body.partition(":")
            key, value = key.strip().lower(), value.strip()
            if key == "note":
                notes.append(value)
            elif key == "correct":
                printed, arrow, rest = value.partition("->")
                used, _, reason = rest.partition("|")
                if not arrow or not used.strip():
                    raise DataError(
                        f"{origin}, line {lineno}: correction must read "
                        "'printed -> value | reason'"
                    )
                corrections[printed.strip()] = (
                    float(used),
                    reason.strip(),
                )
            else:
                header[key] = value
        else:
            tokens.extend(stripped.split())
    missing = [k for k in _REQUIRED_KEYS if k not in header]
    if missing:
        raise DataError(f"{origin}: missing header keys: {', '.join(missing)}")
    return header, notes, corrections, tokens


def _vector_field(header, key, origin):
    try:
        return np.array([float(v) for v in header[key].split()])
    except ValueError as exc:
        raise DataError(f"{origin}: bad numeric list for {key!r}") from exc


def _build_bundle(header, notes, corrections, tokens, *, origin):
    kind = header["kind"]
    if kind not in ("times", "counts"):
        raise DataError(f"{origin}: kind must be 'times' or 'counts', got {kind!r}")
    analysis = header["analysis"]
    if analysis not in ("as-recorded", "drop-censored"):
        raise DataError(
            f"{origin}: analysis must be 'as-recorded' or 'drop-censored'"
        )
    n_total = int(header["n_total"])
    levels = _vector_field(header, "stress_levels", origin)
    change_times = _vector_field(header, "change_times", origin)
    inspection_times = _vector_field(header, "inspection_times", origin)
    use_stress = float(header["use_stress"])
    plan_raw = StressPlan(levels, change_times, inspection_times)

    convention = header["normalization"]
    if convention == "minmax":
        mapping = NormalizationMap(float(levels.min()), float(levels.max()))
    elif convention == "use-anchored":
        mapping = NormalizationMap(use_stress, float(levels.min()))
    else:
        raise DataError(
            f"{origin}: normalization must be 'minmax' or 'use-anchored', "
            f"got {convention!r}"
        )
    plan = StressPlan(mapping(levels), change_times, inspection_times)

    used_values = []
    for token in tokens:
        if token in corrections:
            value, reason = corrections[token]
            notes = list(notes) + [f"recorded value {token} read as {value:g}: {reason}"]
            used_values.append(value)
        else:
            used_values.append(float(token))

    raw = None
    n_removed = 0
    if kind == "times":
        raw = RawLifetimeData(
            used_values,
            n_total,
            plan_raw,
            censored_note=header.get("censored_note", ""),
        )
        data = bin_failures(raw, inspection_times)
        if analysis == "drop-censored":
            survivors = int(round(data.counts[-1]))
            counts = data.counts.copy()
            counts[-1] = 0
            data = IntervalData(counts, n_total - survivors)
            n_removed = survivors
    else:
        counts = np.array([float(v) for v in used_values])
        if len(counts) != plan.n_cells:
            raise DataError(
                f"{origin}: {len(counts)} counts for a plan with "
                f"{plan.n_cells} cells (survivor cell included)"
            )
        if abs(counts.sum() - n_total) > 1e-9:
            raise DataError(
                f"{origin}: counts sum to {counts.sum():g}, header says "
                f"n_total {n_total}"
            )
        data = IntervalData(counts, n_total)
        if analysis == "drop-censored":
            survivors = int(round(counts[-1]))
            counts = counts.copy()
            counts[-1] = 0
            data = IntervalData(counts, n_total - survivors)
            n_removed = survivors

    return DatasetBundle(
        name=header["name"],
        description=header.get("description", ""),
        time_unit=header["time_unit"],
        stress_unit=header["stress_unit"],
        raw=raw,
        plan=plan,
        data=data,
        stress_map=mapping,
        x0=mapping(use_stress),
        x0_physical=use_stress,
        n_removed=n_removed,
        notes=tuple(notes),
    )
