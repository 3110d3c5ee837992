"""Replicated simulation studies: data generation, contamination, metrics.

A scenario draws multinomial interval counts from a (possibly
cell-contaminated) step-stress model, fits the estimator family across a
beta grid on every replication, and aggregates per-beta metrics:

* RMSE of the parameter estimates (per component and overall Euclidean);
* MSE of the reliability at a reference time and of the mean lifetime,
  both under a normal-use stress level;
* empirical coverage of the direct and transformed confidence intervals
  for those two characteristics;
* empirical rejection rate of the Wald test of the stress slope, reported
  as level when the generating slope satisfies the null and as power
  otherwise (the other column is NaN).

Each replication derives its random stream from (seed, replication
index), so serial and parallel runs produce byte-identical tables.
Replications whose fit fails are excluded and counted; a per-beta failure
rate above 5% flags the row as unreliable.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from configparser import ConfigParser, Error as ConfigError
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, StepStressError
from .estimation import FitConfig, fit_proportions
from .lifetime import characteristic_ci, mean_lifetime, reliability
from .model import IntervalData, ModelParams, StressPlan, cdf, cell_probabilities
from .wald import linear_constraint, wald_statistic

FAILURE_RATE_LIMIT = 0.05

#: names accepted by load_scenario in place of a file path
BUNDLED_SCENARIOS = (
    "clean",
    "contaminated_a0",
    "contaminated_a1",
    "contaminated_eta",
    "power_a1",
)

#: CSV column order; every metric column is followed by its Monte Carlo
#: standard error column ("*_se") where one is defined.
METRIC_COLUMNS = (
    "beta",
    "n_used",
    "n_failed",
    "failure_rate",
    "unreliable",
    "rmse_a0",
    "rmse_a1",
    "rmse_eta",
    "rmse_overall",
    "rmse_overall_se",
    "mse_reliability",
    "mse_reliability_se",
    "mse_mean",
    "mse_mean_se",
    "coverage_reliability_direct",
    "coverage_reliability_direct_se",
    "coverage_reliability_transformed",
    "coverage_reliability_transformed_se",
    "coverage_mean_direct",
    "coverage_mean_direct_se",
    "coverage_mean_transformed",
    "coverage_mean_transformed_se",
    "level",
    "level_se",
    "power",
    "power_se",
)


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario: design, truth, contamination, run size."""

    plan: StressPlan
    theta_true: ModelParams
    replications: int
    seed: int
    n_devices: int = 200
    beta_grid: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    theta_tilde: ModelParams | None = None
    contaminated_cell: int | None = None
    null_slope: float = -0.05
    x0: float = 20.0
    t_eval: float = 40.0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n_devices < 1:
            raise ValueError("n_devices must be at least 1")
        if (self.theta_tilde is None) != (self.contaminated_cell is None):
            raise ValueError(
                "theta_tilde and contaminated_cell must be given together"
            )
        grid = tuple(float(b) for b in np.atleast_1d(self.beta_grid))
        if not grid or any(b < 0.0 for b in grid):
            raise ValueError("beta_grid must be non-empty with beta >= 0")
        object.__setattr__(self, "beta_grid", grid)

    @property
    def is_null_scenario(self) -> bool:
        """Whether the generating slope satisfies the tested null."""
        return self.theta_true.a1 == self.null_slope

    def generating_probabilities(self) -> np.ndarray:
        """Cell probabilities the replications draw from."""
        pi = cell_probabilities(self.theta_true, self.plan)
        if self.theta_tilde is None:
            return pi
        return contaminate(
            pi, self.theta_tilde, self.plan, self.contaminated_cell
        )


@dataclass(frozen=True)
class MetricsTable:
    """Per-beta metric rows in the fixed METRIC_COLUMNS order."""

    columns: tuple = field(default=METRIC_COLUMNS)
    rows: np.ndarray = field(default=None, repr=False)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def row(self, beta: float) -> dict:
        idx = np.nonzero(np.isclose(self.column("beta"), beta))[0]
        if idx.size == 0:
            raise KeyError(f"no row for beta={beta}")
        return dict(zip(self.columns, self.rows[idx[0]]))

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def contaminate(
    pi: np.ndarray, params_tilde: ModelParams, plan: StressPlan, cell: int
) -> np.ndarray:
    """Replace one cell's mass with its value under a perturbed parameter.

    The contaminated cell probability is the failure mass the perturbed
    model puts on the same inspection interval; the full vector is then
    renormalized to sum to one.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (plan.n_cells,):
        raise DataError(
            f"pi has {pi.shape} cells, plan implies ({plan.n_cells},)"
        )
    cell = int(cell)
    if not 1 <= cell <= plan.n_cells:
        raise ValueError(
            f"cell must be a 1-based index in [1, {plan.n_cells}], got {cell}"
        )
    if not 2 <= cell <= plan.n_cells - 1:
        warnings.warn(
            "contaminating a boundary cell (first or survivor); the usual "
            "studies perturb interior inspection intervals",
            UserWarning,
            stacklevel=2,
        )
    times = plan.inspection_times
    upper = times[cell - 1] if cell <= len(times) else np.inf
    lower = times[cell - 2] if cell >= 2 else 0.0
    if np.isinf(upper):
        mass = 1.0 - float(cdf(params_tilde, plan, times[-1]))
    else:
        lo = float(cdf(params_tilde, plan, lower)) if lower > 0.0 else 0.0
        mass = float(cdf(params_tilde, plan, upper)) - lo
    out = pi.copy()
    out[cell - 1] = mass
    total = out.sum()
    assert np.all(out >= 0.0) and total > 0.0
    return out / total


def simulate_counts(pi: np.ndarray, n_devices: int, rng) -> IntervalData:
    """One multinomial draw of the interval counts."""
    pi = np.asarray(pi, dtype=float)
    counts = rng.multinomial(int(n_devices), pi)
    return IntervalData(counts, int(n_devices))


# per-replication record layout (one block of _REP_COLS per beta)
_REP_COLS = 15
_OK, _A0, _A1, _ETA, _REL = 0, 1, 2, 3, 4
_RD_LO, _RD_HI, _RT_LO, _RT_HI = 5, 6, 7, 8
_MEAN, _MD_LO, _MD_HI, _MT_LO, _MT_HI = 9, 10, 11, 12, 13
_REJ = 14


def _replicate(spec: ScenarioSpec, pi_gen: np.ndarray, rep: int) -> np.ndarray:
    """Fit every beta on one replication; one _REP_COLS block per beta."""
    rng = np.random.default_rng([spec.seed, rep])
    counts = rng.multinomial(spec.n_devices, pi_gen)
    p_hat = counts / spec.n_devices
    constraint = linear_constraint([0.0, 1.0, 0.0], spec.null_slope)
    out = np.zeros((len(spec.beta_grid), _REP_COLS))
    for b, beta in enumerate(spec.beta_grid):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = fit_proportions(
                    spec.plan,
                    p_hat,
                    spec.n_devices,
                    FitConfig(beta=beta, multistart=1),
                )
                if not result.converged:
                    continue
                rel = characteristic_ci(
                    result, spec.plan, spec.x0, "reliability", spec.t_eval
                )
                mean = characteristic_ci(result, spec.plan, spec.x0, "mean")
                test = wald_statistic(result, spec.plan, constraint)
        except StepStressError:
            continue
        theta = result.params.as_array()
        out[b, _OK] = 1.0
        out[b, _A0 : _ETA + 1] = theta
        out[b, _REL] = rel.value
        out[b, _RD_LO], out[b, _RD_HI] = rel.ci_direct
        out[b, _RT_LO], out[b, _RT_HI] = rel.ci_transformed
        out[b, _MEAN] = mean.value
        out[b, _MD_LO], out[b, _MD_HI] = mean.ci_direct
        out[b, _MT_LO], out[b, _MT_HI] = mean.ci_transformed
        out[b, _REJ] = float(test.reject_at(0.05))
    return out


def _coverage(lo: np.ndarray, hi: np.ndarray, true_value: float) -> np.ndarray:
    return ((lo <= true_value) & (true_value <= hi)).astype(float)


def _proportion_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n)) if n > 0 else np.nan


def run_scenario(spec: ScenarioSpec, n_jobs: int = 1) -> MetricsTable:
    """Run all replications and aggregate the per-beta metric rows.

    Replications are independent; with ``n_jobs > 1`` they run in worker
    processes. Aggregation always proceeds in replication order, so the
    resulting table is identical for any job count.
    """
    pi_gen = spec.generating_probabilities()
    reps = range(spec.replications)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(
                pool.map(
                    _replicate,
                    [spec] * spec.replications,
                    [pi_gen] * spec.replications,
                    reps,
                    chunksize=max(1, spec.replications // (4 * n_jobs)),
                )
            )
    else:
        records = [_replicate(spec, pi_gen, rep) for rep in reps]
    stacked = np.stack(records)  # (R, n_beta, _REP_COLS)

    theta_true = spec.theta_true.as_array()
    rel_true = reliability(spec.theta_true, spec.x0, spec.t_eval)
    mean_true = mean_lifetime(spec.theta_true, spec.x0)
    is_null = spec.is_null_scenario

    rows = np.empty((len(spec.beta_grid), len(METRIC_COLUMNS)))
    for b, beta in enumerate(spec.beta_grid):
        block = stacked[:, b, :]
        ok = block[:, _OK] == 1.0
        used = block[ok]
        n_used = int(ok.sum())
        n_failed = spec.replications - n_used
        rate = n_failed / spec.replications
        if n_used == 0:
            rows[b] = np.nan
            rows[b, :5] = (beta, 0, n_failed, rate, 1.0)
            continue

        err = used[:, _A0 : _ETA + 1] - theta_true
        sq_comp = err**2
        rmse_comp = np.sqrt(sq_comp.mean(axis=0))
        sq_all = sq_comp.sum(axis=1)
        rmse_all = float(np.sqrt(sq_all.mean()))
        # delta method: se(sqrt(m)) = se(m) / (2 sqrt(m))
        rmse_all_se = (
            float(np.std(sq_all, ddof=1) / np.sqrt(n_used) / (2.0 * rmse_all))
            if n_used > 1 and rmse_all > 0.0
            else np.nan
        )

        sq_rel = (used[:, _REL] - rel_true) ** 2
        sq_mean = (used[:, _MEAN] - mean_true) ** 2
        mse_rel = float(sq_rel.mean())
        mse_mean = float(sq_mean.mean())
        mse_rel_se = (
            float(np.std(sq_rel, ddof=1) / np.sqrt(n_used)) if n_used > 1 else np.nan
        )
        mse_mean_se = (
            float(np.std(sq_mean, ddof=1) / np.sqrt(n_used)) if n_used > 1 else np.nan
        )

        cov_rd = float(_coverage(used[:, _RD_LO], used[:, _RD_HI], rel_true).mean())
        cov_rt = float(_coverage(used[:, _RT_LO], used[:, _RT_HI], rel_true).mean())
        cov_md = float(_coverage(used[:, _MD_LO], used[:, _MD_HI], mean_true).mean())
        cov_mt = float(_coverage(used[:, _MT_LO], used[:, _MT_HI], mean_true).mean())

        reject = float(used[:, _REJ].mean())
        level = reject if is_null else np.nan
        level_se = _proportion_se(reject, n_used) if is_null else np.nan
        power = np.nan if is_null else reject
        power_se = np.nan if is_null else _proportion_se(reject, n_used)

        rows[b] = (
            beta,
            n_used,
            n_failed,
            rate,
            float(rate > FAILURE_RATE_LIMIT),
            rmse_comp[0],
            rmse_comp[1],
            rmse_comp[2],
            rmse_all,
            rmse_all_se,
            mse_rel,
            mse_rel_se,
            mse_mean,
            mse_mean_se,
            cov_rd,
            _proportion_se(cov_rd, n_used),
            cov_rt,
            _proportion_se(cov_rt, n_used),
            cov_md,
            _proportion_se(cov_md, n_used),
            cov_mt,
            _proportion_se(cov_mt, n_used),
            level,
            level_se,
            power,
            power_se,
        )
    return MetricsTable(rows=rows)


def _parse_vector(raw: str) -> np.ndarray:
    return np.array([float(v) for v in raw.replace(",", " ").split()])


def load_scenario(name_or_path) -> ScenarioSpec:
    """Read a ScenarioSpec from a bundled scenario name or an INI file.

    Sections: [design] stress_levels/change_times/inspection_times;
    [truth] a0/a1/eta; optional [contamination] a0/a1/eta/cell;
    [run] replications/devices/seed/beta_grid and optional null_slope;
    optional [evaluate] x0/t.
    """
    name = str(name_or_path)
    if name in BUNDLED_SCENARIOS:
        text = (
            resources.files("stepstress")
            .joinpath("data", "scenarios", f"{name}.ini")
            .read_text(encoding="utf-8")
        )
        origin = f"bundled scenario {name!r}"
    else:
        path = Path(name)
        if not path.is_file():
            raise DataError(
                f"no scenario file at {path} and no bundled scenario "
                f"named {name!r} (bundled: {', '.join(BUNDLED_SCENARIOS)})"
            )
        text = path.read_text(encoding="utf-8")
        origin = str(path)
    parser = ConfigParser()
    try:
        parser.read_string(text)
    except ConfigError as exc:
        raise DataError(f"invalid scenario file {origin}: {exc}") from exc
    try:
        design = parser["design"]
        plan = StressPlan(
            _parse_vector(design["stress_levels"]),
            _parse_vector(design["change_times"]),
            _parse_vector(design["inspection_times"]),
        )
        truth = parser["truth"]
        theta = ModelParams(
            float(truth["a0"]), float(truth["a1"]), float(truth["eta"])
        )
        run = parser["run"]
        kwargs = {
            "plan": plan,
            "theta_true": theta,
            "replications": int(run["replications"]),
            "seed": int(run["seed"]),
            "n_devices": int(run.get("devices", "200")),
            "beta_grid": tuple(_parse_vector(run["beta_grid"])),
            "null_slope": float(run.get("null_slope", "-0.05")),
        }
        if parser.has_section("contamination"):
            cont = parser["contamination"]
            kwargs["theta_tilde"] = ModelParams(
                float(cont.get("a0", truth["a0"])),
                float(cont.get("a1", truth["a1"])),
                float(cont.get("eta", truth["eta"])),
            )
            kwargs["contaminated_cell"] = int(cont["cell"])
        if parser.has_section("evaluate"):
            ev = parser["evaluate"]
            kwargs["x0"] = float(ev.get("x0", "20"))
            kwargs["t_eval"] = float(ev.get("t", "40"))
    except (KeyError, ValueError) as exc:
        raise DataError(f"invalid scenario file {origin}: {exc}") from exc
    return ScenarioSpec(**kwargs)
