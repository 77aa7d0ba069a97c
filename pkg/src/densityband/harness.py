"""Experiment harness: seeded replications, parallel execution, CSV reports.

One replication: generate -> split -> fit the density model and auxiliaries
on the training half -> build partitions -> calibrate on the other half ->
predict on a fresh test set -> score every metric against the scenario
oracle. Replications own independent hash-derived RNG streams, so results
are byte-identical for any thread count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import conformal, metrics, partition as part
from .cde import (
    DEFAULT_GRID_SIZE,
    DEFAULT_Z_SIZE,
    FittedCDE,
    OracleCDE,
    Z_HEADROOM,
    _invert_level_cdf,
    _pmf_level_values,
    batch_level_outputs,
    fit_knn_kernel,
)
from .conformal import PredictionRegion, threshold_region
from .datasets import Dataset, Scenario, generate, split_data
from .errors import ConfigurationError
from .scores import BaselineAux, baseline_scores_batch, cd_scores_batch, pmf_scores_batch

METHOD_KINDS = ("cd", "hpd", "dist", "reg", "local-reg", "quantile", "probability")

RAW_COLUMNS = (
    "replication,method,n,d,J,marginal_coverage,cond_cov_abs_dev,"
    "mean_region_size,sscv,mean_sym_diff,flags"
)


@dataclass(frozen=True)
class MethodSpec:
    """One method entry of an experiment; ``label`` names its raw.csv rows."""

    kind: str
    label: str
    partition: str = "profile-voronoi"
    J: int | None = None  # None -> ceil(n / 100)
    k: int | None = None  # auxiliary-estimator neighbour count override

    def resolved_J(self, n: int) -> int | None:
        if self.kind != "cd":
            return None
        return self.J if self.J is not None else math.ceil(n / 100)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    methods: tuple[MethodSpec, ...]
    n_values: tuple[int, ...] = (2000,)
    alpha: float = 0.1
    replications: int = 200
    seed: int = 0
    test_size: int = 500
    calibration_fraction: float = 0.5
    grid_size: int = DEFAULT_GRID_SIZE
    z_grid_size: int = DEFAULT_Z_SIZE
    sscv_bins: int = 5
    threads: int = 1
    output_dir: str = "out"
    cde: dict = field(default_factory=lambda: {"kind": "knn-kernel", "k": 100, "bandwidth": 0.3})

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if not self.methods:
            raise ConfigurationError("config lists no methods")
        if self.cde.get("kind", "knn-kernel") not in ("knn-kernel", "oracle"):
            raise ConfigurationError(f"unknown cde kind {self.cde.get('kind')!r}")


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a JSON-shaped dict into an ExperimentConfig."""
    raw = dict(raw)
    sc = raw.pop("scenario", None)
    if not isinstance(sc, dict) or "kind" not in sc:
        raise ConfigurationError('config needs a scenario object with a "kind"')
    scenario = Scenario(sc["kind"], d=int(sc.get("d", 20)), params=sc.get("params", {}))
    meths = raw.pop("methods", None)
    if not meths:
        raise ConfigurationError("config lists no methods")
    specs = []
    seen = set()
    for m in meths:
        if isinstance(m, str):
            m = {"kind": m}
        kind = m.get("kind")
        if kind not in METHOD_KINDS:
            raise ConfigurationError(
                f"unknown method {kind!r}; choose from {', '.join(METHOD_KINDS)}"
            )
        pkind = m.get("partition", "profile-voronoi")
        if pkind not in part.PARTITION_KINDS:
            raise ConfigurationError(f"unknown partition kind {pkind!r}")
        label = m.get("label") or (f"cd-{pkind}" if kind == "cd" else kind)
        base = label
        i = 2
        while label in seen:
            label = f"{base}#{i}"
            i += 1
        seen.add(label)
        specs.append(
            MethodSpec(
                kind=kind,
                label=label,
                partition=pkind,
                J=(int(m["J"]) if m.get("J") is not None else None),
                k=(int(m["k"]) if m.get("k") is not None else None),
            )
        )
    n_values = raw.pop("n_values", None) or [raw.pop("n", 2000)]
    kwargs = {}
    for key in (
        "alpha",
        "replications",
        "seed",
        "test_size",
        "calibration_fraction",
        "grid_size",
        "z_grid_size",
        "sscv_bins",
        "threads",
        "output_dir",
        "cde",
    ):
        if key in raw:
            kwargs[key] = raw.pop(key)
    if raw:
        raise ConfigurationError(f"unknown config keys: {sorted(raw)}")
    return ExperimentConfig(
        scenario=scenario,
        methods=tuple(specs),
        n_values=tuple(int(n) for n in n_values),
        **kwargs,
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["scenario"] = {
        "kind": config.scenario.kind,
        "d": config.scenario.d,
        "params": config.scenario.params,
    }
    d["methods"] = [asdict(m) for m in config.methods]
    return d


# -- one replication ----------------------------------------------------------


class MethodRunner:
    """Shared fitted state for running several methods on one data split.

    Level quantities (density rows, level quantiles, profiles) are computed
    once per (train/calib/test) role and reused by every method.
    """

    def __init__(
        self,
        train: Dataset,
        calib: Dataset,
        test: Dataset,
        model: FittedCDE,
        alpha: float,
        seed,
        aux_kinds: tuple[str, ...] = (),
        aux_k: int = 100,
        z_grid_size: int = DEFAULT_Z_SIZE,
    ):
        self.train = train
        self.calib = calib
        self.test = test
        self.model = model
        self.alpha = alpha
        self.seed = seed
        self.aux_kinds = aux_kinds
        self.aux_k = aux_k
        self.z_grid_size = z_grid_size
        self.discrete = model.is_discrete
        self._rows: dict[str, np.ndarray] = {}
        self._level: dict[str, dict] = {}
        self._aux: BaselineAux | None = None
        self._z_grid: np.ndarray | None = None

    def rows(self, role: str) -> np.ndarray:
        if role not in self._rows:
            X = {"train": self.train.X, "calib": self.calib.X, "test": self.test.X}[role]
            self._rows[role] = self.model.evaluate_batch(X)
        return self._rows[role]

    @property
    def z_grid(self) -> np.ndarray:
        # shared level grid anchored on the training half, like the partition
        if self._z_grid is None:
            peak = float(self.rows("train").max())
            self._z_grid = np.linspace(0.0, Z_HEADROOM * peak, self.z_grid_size)
        return self._z_grid

    def level(self, role: str, profiles=False, qhat=False, hpd=False) -> dict:
        # building the per-row level function dominates the cost, so the
        # first touch of a role computes every output the methods may need
        have = self._level.setdefault(role, {})
        if (profiles or qhat or hpd) and not have:
            ys = {"train": self.train.y, "calib": self.calib.y, "test": self.test.y}[role]
            have.update(
                batch_level_outputs(
                    self.model.grid,
                    self.rows(role),
                    ys=ys,
                    alpha=self.alpha,
                    z_grid=self.z_grid,
                )
            )
        return have

    def pmf_profiles(self, role: str) -> np.ndarray:
        have = self._level.setdefault(role, {})
        if "profiles" not in have:
            rows = self.rows(role)
            have["profiles"] = np.stack([_pmf_level_values(p, self.z_grid) for p in rows])
        return have["profiles"]

    def aux(self) -> BaselineAux:
        if self._aux is None:
            self._aux = BaselineAux(
                self.train,
                k=self.aux_k,
                alpha=self.alpha,
                cde=self.model if not self.discrete else None,
                kinds=self.aux_kinds or ("reg", "local-reg", "quantile", "dist"),
            )
        return self._aux

    # -- partitions -------------------------------------------------------

    def _build_cd_partition(self, spec: MethodSpec, J: int):
        """Returns (partition, calib assignments, test queries or None)."""
        seed = self.seed
        if spec.partition == "unitary" or J == 1:
            return part.unitary_partition(), np.zeros(len(self.calib), dtype=int), None
        if spec.partition == "euclidean-voronoi":
            model = part.build_euclidean_partition(self.train.X, J, seed=seed)
            return model, part.assign_batch(model, self.calib.X), self.test.X
        if self.discrete:
            prof = {role: self.pmf_profiles(role) for role in ("train", "calib", "test")}
            if spec.partition == "profile-voronoi":
                model = part.build_profile_partition(prof["train"], self.z_grid, J, seed=seed)
                return model, part.assign_batch(model, prof["calib"]), prof["test"]
            qs = {
                role: _invert_rows(self.z_grid, prof[role], self.alpha)
                for role in ("train", "calib", "test")
            }
            mode = "quantile" if spec.partition == "threshold-quantile" else "kmeans1d"
            model = part.build_threshold_partition(qs["train"], J, mode=mode, seed=seed)
            return model, part.assign_batch(model, qs["calib"]), qs["test"]
        if spec.partition == "profile-voronoi":
            profs = {role: self.level(role, profiles=True)["profiles"] for role in ("train", "calib", "test")}
            model = part.build_profile_partition(profs["train"], self.z_grid, J, seed=seed)
            return model, part.assign_batch(model, profs["calib"]), profs["test"]
        mode = "quantile" if spec.partition == "threshold-quantile" else "kmeans1d"
        qs = {role: self.level(role, qhat=True)["quantiles"] for role in ("train", "calib", "test")}
        model = part.build_threshold_partition(qs["train"], J, mode=mode, seed=seed)
        return model, part.assign_batch(model, qs["calib"]), qs["test"]

    # -- methods ------------------------------------------------------------

    def run(self, spec: MethodSpec):
        """Regions for the test points plus (flags, J) bookkeeping."""
        if self.discrete:
            return self._run_discrete(spec)
        return self._run_continuous(spec)

    def _run_continuous(self, spec: MethodSpec):
        grid = self.model.grid
        test_rows = self.rows("test")
        alpha = self.alpha
        flags: list[str] = []
        if spec.kind == "cd":
            J = spec.resolved_J(len(self.train))
            pmodel, calib_elems, test_query = self._build_cd_partition(spec, J)
            flags += list(pmodel.flags)
            sc = cd_scores_batch(grid, self.rows("calib"), self.calib.y)
            table = conformal.calibrate(
                sc, alpha, calib_elems, n_elements=pmodel.J, kind="cd", partition=pmodel
            )
            flags += list(table.flags)
            elems = (
                np.zeros(len(test_rows), dtype=int)
                if test_query is None
                else part.assign_batch(pmodel, test_query)
            )
            regions = [
                threshold_region(grid, test_rows[i], table.cutoff(elems[i]))
                for i in range(len(test_rows))
            ]
            return regions, flags, pmodel.J
        if spec.kind == "hpd":
            sc = self.level("calib", hpd=True)["hpd_scores"]
            table = conformal.calibrate(sc, alpha, kind="hpd")
            flags += list(table.flags)
            cutoff = table.cutoff()
            if cutoff == conformal.NEG_INF:
                z_stars = np.full(len(test_rows), -np.inf)
            else:
                z_stars = batch_level_outputs(
                    grid, test_rows, alpha=min(max(cutoff, 1e-12), 1.0)
                )["quantiles"]
                z_stars = np.minimum(z_stars, test_rows.max(axis=1))
            regions = [
                threshold_region(grid, test_rows[i], z_stars[i]) for i in range(len(test_rows))
            ]
            return regions, flags, None
        if spec.kind == "probability":
            raise ConfigurationError("probability method is defined for discrete targets only")
        aux = self.aux()
        rows_c = self.rows("calib") if spec.kind == "dist" else None
        sc = baseline_scores_batch(spec.kind, aux, self.calib.X, self.calib.y, rows=rows_c)
        table = conformal.calibrate(sc, alpha, kind=spec.kind)
        flags += list(table.flags)
        cutoff = table.cutoff()
        regions = self._baseline_regions(spec.kind, aux, cutoff)
        return regions, flags, None

    def _baseline_regions(self, kind: str, aux: BaselineAux, cutoff: float):
        """Interval regions for the whole test block in one auxiliary pass."""
        X = self.test.X
        c = -cutoff
        if kind == "reg":
            r = aux.regressor.predict(X)
            return [conformal._interval_region(ri - c, ri + c) for ri in r]
        if kind == "local-reg":
            r = aux.regressor.predict(X)
            rho = aux.scale.predict(X)
            return [conformal._interval_region(ri - c * si, ri + c * si) for ri, si in zip(r, rho)]
        if kind == "quantile":
            lo, hi = aux.quantiles.predict(X)
            return [conformal._interval_region(l - c, h + c) for l, h in zip(lo, hi)]
        return [
            conformal.predict_region_baseline("dist", aux, x, cutoff, row=row)
            for x, row in zip(X, self.rows("test"))
        ]

    def _run_discrete(self, spec: MethodSpec):
        if spec.kind in ("dist", "reg", "local-reg", "quantile"):
            raise ConfigurationError(f"{spec.kind} is defined for continuous targets only")
        pmf_calib = self.rows("calib")
        pmf_test = self.rows("test")
        alpha = self.alpha
        flags: list[str] = []
        if spec.kind == "cd":
            J = spec.resolved_J(len(self.train))
            pmodel, calib_elems, test_query = self._build_cd_partition(spec, J)
            flags += list(pmodel.flags)
            sc = pmf_scores_batch(pmf_calib, self.calib.y, "cd")
            table = conformal.calibrate(
                sc, alpha, calib_elems, n_elements=pmodel.J, kind="cd", partition=pmodel
            )
            flags += list(table.flags)
            elems = (
                np.zeros(len(pmf_test), dtype=int)
                if test_query is None
                else part.assign_batch(pmodel, test_query)
            )
            regions = [
                conformal._label_region(pmf_test[i], "cd", table.cutoff(elems[i]))
                for i in range(len(pmf_test))
            ]
            return regions, flags, pmodel.J
        kind = "hpd" if spec.kind == "hpd" else "cd"
        sc = pmf_scores_batch(pmf_calib, self.calib.y, kind)
        table = conformal.calibrate(sc, alpha, kind=spec.kind)
        flags += list(table.flags)
        regions = [
            conformal._label_region(pmf_test[i], kind, table.cutoff()) for i in range(len(pmf_test))
        ]
        return regions, flags, None


class _Replication:
    """One simulated replication: data, fitted state, and oracle caches."""

    def __init__(self, config: ExperimentConfig, n: int, rep: int):
        self.config = config
        self.scenario = config.scenario
        self.n = n
        self.rep = rep
        data = generate(self.scenario, n, seed=(config.seed, n, rep, 0))
        test = generate(self.scenario, config.test_size, seed=(config.seed, n, rep, 1))
        train, calib = split_data(data, config.calibration_fraction, seed=(config.seed, n, rep, 2))
        cde_cfg = config.cde
        if cde_cfg.get("kind", "knn-kernel") == "oracle":
            model = OracleCDE(self.scenario, grid_size=config.grid_size)
        else:
            model = fit_knn_kernel(
                train,
                k=int(cde_cfg.get("k", 100)),
                bandwidth=float(cde_cfg.get("bandwidth", 0.3)),
                grid_size=config.grid_size,
            )
        self.runner = MethodRunner(
            train,
            calib,
            test,
            model,
            alpha=config.alpha,
            seed=(config.seed, n, rep, 3),
            aux_kinds=tuple(m.kind for m in config.methods),
            aux_k=int(cde_cfg.get("k", 100)),
            z_grid_size=config.z_grid_size,
        )
        self._oracle_rows = None
        self._oracle_hpd = None

    def oracle_rows(self):
        """(cumulative-mass rows, grid, density rows) at the test points."""
        if self._oracle_rows is None:
            grid = self.scenario.default_grid(self.config.grid_size)
            test = self.runner.test
            rows = np.empty((len(test), len(grid)))
            for i, x in enumerate(test.X):
                rows[i] = self.scenario.density_values(x, grid)
            rows /= np.trapezoid(rows, grid, axis=1)[:, None]
            steps = 0.5 * np.diff(grid) * (rows[:, :-1] + rows[:, 1:])
            cum = np.concatenate([np.zeros((len(rows), 1)), np.cumsum(steps, axis=1)], axis=1)
            cum /= cum[:, -1:]
            self._oracle_rows = (cum, grid, rows)
        return self._oracle_rows

    def oracle_hpd_regions(self):
        if self._oracle_hpd is None:
            cum, grid, rows = self.oracle_rows()
            qs = batch_level_outputs(grid, rows, alpha=self.config.alpha)["quantiles"]
            self._oracle_hpd = [threshold_region(grid, rows[i], qs[i]) for i in range(len(rows))]
        return self._oracle_hpd

    def run_method(self, spec: MethodSpec) -> dict:
        regions, flags, J = self.runner.run(spec)
        return self._metrics_row(spec, regions, flags, J)

    def _metrics_row(self, spec: MethodSpec, regions, flags: list[str], J) -> dict:
        alpha = self.config.alpha
        test = self.runner.test
        cover = metrics.marginal_coverage(regions, test.y)
        sizes = [r.size() for r in regions]
        sv = metrics.sscv(regions, test.y, self.config.sscv_bins, alpha)
        for r in regions:
            flags += list(r.flags)
        if self.runner.discrete:
            probs = self.scenario.label_probs(test.X[:, 0])
            cond = np.array(
                [p[list(r.labels)].sum() if r.labels else 0.0 for p, r in zip(probs, regions)]
            )
            sym = None
        else:
            cum, ogrid, _ = self.oracle_rows()
            cond = np.empty(len(regions))
            for i, r in enumerate(regions):
                mass = 0.0
                for lo, hi in r.intervals:
                    lo_c, hi_c = max(lo, ogrid[0]), min(hi, ogrid[-1])
                    if lo_c < hi_c:
                        mass += np.interp(hi_c, ogrid, cum[i]) - np.interp(lo_c, ogrid, cum[i])
                cond[i] = mass
            stars = self.oracle_hpd_regions()
            sym = float(
                np.mean(
                    [_sym_diff_measure(r.intervals, s.intervals) for r, s in zip(regions, stars)]
                )
            )
        dev = float(np.mean(np.abs(cond - (1.0 - alpha))))
        counts: dict[str, int] = {}
        for f in flags:
            counts[f] = counts.get(f, 0) + 1
        return {
            "replication": self.rep,
            "method": spec.label,
            "n": self.n,
            "d": self.scenario.d,
            "J": J,
            "marginal_coverage": cover,
            "cond_cov_abs_dev": dev,
            "mean_region_size": float(np.mean(sizes)),
            "sscv": sv,
            "mean_sym_diff": sym,
            "flags": "|".join(f"{k}:{v}" for k, v in sorted(counts.items())),
        }


def _invert_rows(zg: np.ndarray, profile_rows: np.ndarray, alpha: float) -> np.ndarray:
    return np.array([_invert_level_cdf(zg, row, alpha) for row in profile_rows])


def _sym_diff_measure(a, b) -> float:
    inter = metrics.interval_intersection(a, b)
    return metrics._measure(a) + metrics._measure(b) - 2.0 * metrics._measure(inter)


# -- experiment loop ----------------------------------------------------------


def run_replication(config: ExperimentConfig, n: int, rep: int) -> list[dict]:
    """All method rows for one replication; errors become flagged rows."""
    try:
        ctx = _Replication(config, n, rep)
    except Exception as e:  # noqa: BLE001 - flagged, not silenced
        return [_error_row(config, spec, n, rep, e) for spec in config.methods]
    rows = []
    for spec in config.methods:
        try:
            rows.append(ctx.run_method(spec))
        except Exception as e:  # noqa: BLE001
            rows.append(_error_row(config, spec, n, rep, e))
    return rows


def _error_row(config, spec: MethodSpec, n: int, rep: int, err: Exception) -> dict:
    return {
        "replication": rep,
        "method": spec.label,
        "n": n,
        "d": config.scenario.d,
        "J": None,
        "marginal_coverage": None,
        "cond_cov_abs_dev": None,
        "mean_region_size": None,
        "sscv": None,
        "mean_sym_diff": None,
        "flags": f"error:{type(err).__name__}",
    }


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every (n, replication) cell and write raw.csv / summary.csv /
    config_echo.json under ``config.output_dir``.

    Returns {"rows": raw rows, "summary": summary rows, "failed_fraction"}.
    """
    cells = [(n, r) for n in config.n_values for r in range(config.replications)]
    results: dict[tuple[int, int], list[dict]] = {}
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futures = {cell: pool.submit(run_replication, config, *cell) for cell in cells}
            for cell, fut in futures.items():
                results[cell] = fut.result()
    else:
        for cell in cells:
            results[cell] = run_replication(config, *cell)
    rows = [row for cell in cells for row in results[cell]]
    failed = sum(1 for row in rows if row["flags"].startswith("error:"))
    summary = summarize(rows)
    os.makedirs(config.output_dir, exist_ok=True)
    _write_raw(os.path.join(config.output_dir, "raw.csv"), rows)
    _write_summary(os.path.join(config.output_dir, "summary.csv"), summary)
    with open(os.path.join(config.output_dir, "config_echo.json"), "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"rows": rows, "summary": summary, "failed_fraction": failed / max(len(rows), 1)}


_METRIC_COLS = ("marginal_coverage", "cond_cov_abs_dev", "mean_region_size", "sscv", "mean_sym_diff")


def summarize(rows: list[dict]) -> list[dict]:
    """Long-format mean/standard-error rows grouped by (method, n, d, J)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["flags"].startswith("error:"):
            continue
        groups.setdefault((row["method"], row["n"], row["d"], row["J"]), []).append(row)
    out = []
    for (label, n, d, J), grp in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        for metric in _METRIC_COLS:
            vals = np.array([g[metric] for g in grp if g[metric] is not None], dtype=float)
            if len(vals) == 0:
                continue
            se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else None
            out.append(
                {
                    "method": label,
                    "n": n,
                    "d": d,
                    "J": J,
                    "metric": metric,
                    "mean": float(vals.mean()),
                    "se": se,
                }
            )
    return out


# -- fit/predict on external data ----------------------------------------------


def serialize_region(region: PredictionRegion, label_names=None) -> str:
    """'lo:hi;lo:hi' for interval unions, 'a;b' for label sets, '' if empty."""
    if region.is_discrete:
        labels = sorted(region.labels)
        if label_names:
            return ";".join(str(label_names[j]) for j in labels)
        return ";".join(str(j) for j in labels)
    return ";".join(f"{lo:.10g}:{hi:.10g}" for lo, hi in region.intervals)


def parse_region(text: str, discrete: bool = False) -> PredictionRegion:
    text = text.strip()
    if discrete:
        labels = frozenset(int(t) for t in text.split(";") if t != "")
        return PredictionRegion(labels=labels)
    if not text:
        return PredictionRegion(intervals=())
    intervals = []
    for chunk in text.split(";"):
        lo, hi = chunk.split(":")
        intervals.append((float(lo), float(hi)))
    return PredictionRegion(intervals=tuple(sorted(intervals)))


def fit_and_predict(
    train_data: Dataset,
    query_X: np.ndarray,
    method: MethodSpec,
    alpha: float = 0.1,
    k: int = 100,
    bandwidth: float = 0.3,
    calibration_fraction: float = 0.5,
    seed: int = 0,
    grid_size: int = DEFAULT_GRID_SIZE,
    z_grid_size: int = DEFAULT_Z_SIZE,
) -> list[PredictionRegion]:
    """Split/fit/calibrate on a dataset, then predict regions for queries."""
    query_X = np.atleast_2d(np.asarray(query_X, dtype=float))
    train, calib = split_data(train_data, calibration_fraction, seed=(seed, 2))
    model = fit_knn_kernel(train, k=k, bandwidth=bandwidth, grid_size=grid_size)
    dummy_y = np.zeros(len(query_X), dtype=train_data.y.dtype)
    runner = MethodRunner(
        train,
        calib,
        Dataset(query_X, dummy_y, train_data.task),
        model,
        alpha=alpha,
        seed=(seed, 3),
        aux_kinds=(method.kind,),
        aux_k=k,
        z_grid_size=z_grid_size,
    )
    regions, _, _ = runner.run(method)
    return regions


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_raw(path: str, rows: list[dict]) -> None:
    cols = RAW_COLUMNS.split(",")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RAW_COLUMNS + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _write_summary(path: str, summary: list[dict]) -> None:
    cols = ["method", "n", "d", "J", "metric", "mean", "se"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in summary:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
