"""Monte Carlo harness: MSE tables, rate slope and normality diagnostics.

Replication ``r`` of an experiment with master seed ``s`` draws the signal
from stream ``(s, r, 0)`` and the noise from ``(s, r, 1)``. Replications may
run in worker processes; results are reduced in replication order so the
report does not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DeconvError, DomainError
from .estimator import (
    EstimatorConfig,
    default_bandwidth,
    estimate_density,
    finite_variance_factor,
    log_kde,
    variance_bounds,
)
from .kernel import make_kernel
from .mellin import ErrorDensity, decay_constants
from .processes import (
    CirParams,
    MDependentParams,
    NoiseSpec,
    contaminate,
    gamma_invariant_params,
    gamma_pdf,
    simulate_cir,
    simulate_m_dependent,
    simulate_noise,
    weibull_pdf,
)

__all__ = [
    "ExperimentSpec",
    "ExperimentError",
    "ReportFormatError",
    "MseReport",
    "SlopeReport",
    "NormalityReport",
    "replication_seeds",
    "run_mse_experiment",
    "rate_check",
    "normality_check",
    "persist_report",
    "load_report",
    "write_report_csv",
    "read_report_csv",
    "load_preset",
    "PRESETS",
    "NOISE_FAMILIES",
    "resolve_workers",
]

THREADS_ENV = "MELLIN_DECONV_THREADS"
PRESETS = ("table1", "table2")
NOISE_FAMILIES = ("u01", "u0515", "b12", "b21", "b22")
CSV_COLUMNS = ("x", "noise_family", "n", "replications", "mse", "bias", "variance")


class ExperimentError(DeconvError):
    """A replication failed; the message carries the replication index."""


class ReportFormatError(DomainError):
    """A persisted report or spec could not be parsed."""


Process = Union[CirParams, MDependentParams]


@dataclass(frozen=True)
class ExperimentSpec:
    process: Process
    noise: NoiseSpec
    n: int = 2000
    replications: int = 50
    x_grid: Sequence[float] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5)
    kernel_order: int = 2
    bandwidth_rule: Union[str, float] = "default"
    smoothness_s: float = 2.0
    quad_p_max: float = 10.0
    quad_step: Optional[float] = None
    clamp_nonnegative: bool = False
    master_seed: int = 7

    def __post_init__(self):
        grid = tuple(float(v) for v in self.x_grid)
        object.__setattr__(self, "x_grid", grid)
        if not grid or any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("x_grid must be nonempty, positive and strictly ascending")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigurationError("replications must be a positive integer")
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError("n must be an integer >= 2")
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ConfigurationError("master_seed must be a nonnegative integer")
        if isinstance(self.bandwidth_rule, str):
            if self.bandwidth_rule == "default_formula":
                object.__setattr__(self, "bandwidth_rule", "default")
            elif self.bandwidth_rule != "default":
                raise ConfigurationError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        elif not self.bandwidth_rule > 0:
            raise ConfigurationError("a fixed bandwidth must be positive")
        make_kernel(self.kernel_order)

    @property
    def bandwidth(self) -> float:
        if self.bandwidth_rule == "default":
            return default_bandwidth(self.n, self.noise.family.kappa, self.smoothness_s)
        return float(self.bandwidth_rule)

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            bandwidth=self.bandwidth,
            smoothness_s=self.smoothness_s,
            quad_p_max=self.quad_p_max,
            quad_step=self.quad_step,
            clamp_nonnegative=self.clamp_nonnegative,
        )

    def true_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if isinstance(self.process, CirParams):
            shape, rate = gamma_invariant_params(self.process)
            return gamma_pdf(x, shape, rate)
        return weibull_pdf(x, self.process.shape, self.process.scale)

    def with_(self, **changes) -> "ExperimentSpec":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return ExperimentSpec(**data)

    # -- (de)serialisation ------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        if isinstance(self.process, CirParams):
            proc = {"kind": "cir", "theta1": self.process.theta1, "theta2": self.process.theta2,
                    "theta3": self.process.theta3, "delta": self.process.delta}
        else:
            p = self.process
            proc = {"kind": "m_dependent", "m_dep": p.m_dep, "shape": p.shape, "scale": p.scale,
                    "recycle_prob": p.recycle_prob, "scheme": p.scheme}
        g = self.noise.family
        noise = {"family": g.family, "params": list(g.params), "kappa": g.kappa,
                 "dependence": self.noise.dependence}
        if self.noise.dependence == "m_dependent":
            noise.update(m_dep=self.noise.m_dep, recycle_prob=self.noise.recycle_prob)
        return {
            "process": proc,
            "noise": noise,
            "n": int(self.n),
            "replications": int(self.replications),
            "x_grid": list(self.x_grid),
            "kernel_order": int(self.kernel_order),
            "bandwidth_rule": self.bandwidth_rule,
            "smoothness_s": self.smoothness_s,
            "quad_p_max": self.quad_p_max,
            "quad_step": self.quad_step,
            "clamp_nonnegative": self.clamp_nonnegative,
            "master_seed": int(self.master_seed),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentSpec":
        """Strict parse; unknown keys anywhere raise :class:`ConfigurationError`."""
        data = dict(data)
        _reject_unknown(data, {f.name for f in fields(cls)}, "experiment spec")
        for key in ("process", "noise"):
            if key not in data:
                raise ConfigurationError(f"experiment spec is missing {key!r}")
        data["process"] = _process_from_dict(data["process"])
        data["noise"] = _noise_from_dict(data["noise"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None


def _reject_unknown(data: Dict[str, Any], allowed, where: str):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _process_from_dict(d: Dict[str, Any]) -> Process:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "cir":
        _reject_unknown(d, {"theta1", "theta2", "theta3", "delta"}, "process")
        return CirParams(**d)
    if kind == "m_dependent":
        _reject_unknown(d, {"m_dep", "shape", "scale", "recycle_prob", "scheme"}, "process")
        return MDependentParams(**d)
    raise ConfigurationError(f"process kind must be 'cir' or 'm_dependent', got {kind!r}")


def _noise_from_dict(d: Dict[str, Any]) -> NoiseSpec:
    d = dict(d)
    _reject_unknown(d, {"family", "params", "kappa", "dependence", "m_dep", "recycle_prob"}, "noise")
    family = d.pop("family", None)
    if family is None:
        raise ConfigurationError("noise spec is missing 'family'")
    params = d.pop("params", None)
    kappa = d.pop("kappa", None)
    if params is None:
        g = ErrorDensity.from_name(family, kappa=kappa)
    else:
        g = ErrorDensity(family, tuple(params), kappa)
    return NoiseSpec(g, **d)


def load_preset(name: str, noise: Optional[str] = None) -> ExperimentSpec:
    """Bundled experiment settings (``table1`` CIR study, ``table2`` m-dependent study)."""
    data = preset_data(name)
    data.pop("reference_mse", None)
    data.pop("version", None)
    data.pop("name", None)
    if noise is not None:
        data["noise"] = {**data["noise"], "family": noise}
        data["noise"].pop("params", None)
    return ExperimentSpec.from_dict(data)


def preset_data(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("mellin_deconv.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def reference_mse(name: str, noise: str) -> List[float]:
    return list(preset_data(name)["reference_mse"][noise])


def replication_seeds(master_seed: int, r: int):
    """``(signal, noise)`` seed streams for replication ``r``."""
    return (int(master_seed), int(r), 0), (int(master_seed), int(r), 1)


def simulate_observations(spec: ExperimentSpec, r: int):
    x_seed, u_seed = replication_seeds(spec.master_seed, r)
    assert x_seed != u_seed
    if isinstance(spec.process, CirParams):
        X = simulate_cir(spec.process, spec.n, x_seed)
    else:
        X = simulate_m_dependent(spec.process, spec.n, x_seed)
    U = simulate_noise(spec.noise, spec.n, u_seed)
    return contaminate(X, U)


def _run_replication(args):
    spec, r = args
    try:
        Y = simulate_observations(spec, r)
        cfg = spec.estimator_config()
        est = estimate_density(Y, spec.noise.family, make_kernel(spec.kernel_order), cfg, spec.x_grid)
        fy = log_kde(Y, spec.x_grid, cfg.bandwidth)
    except DeconvError as exc:
        raise ExperimentError(f"replication {r}: {exc}") from exc
    return est.values, fy, est.imag_residual


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else 1
    if workers < 1:
        raise ConfigurationError("worker count must be positive")
    return int(workers)


def _map_replications(spec: ExperimentSpec, workers: Optional[int]):
    workers = resolve_workers(workers)
    jobs = [(spec, r) for r in range(spec.replications)]
    if workers == 1 or spec.replications == 1:
        return [_run_replication(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, spec.replications)) as pool:
        return list(pool.map(_run_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass
class MseReport:
    """Per-x Monte Carlo summary of an experiment.

    ``mse`` is the mean squared error against the true invariant density,
    ``bias`` the mean error and ``variance`` the (ddof=0) spread of the
    estimates, so ``mse = bias**2 + variance`` up to rounding.
    """

    spec: Dict[str, Any]
    noise_family: str
    n: int
    replications: int
    bandwidth: float
    x_grid: List[float]
    true_values: List[float]
    mean_estimate: List[float]
    bias: List[float]
    variance: List[float]
    mse: List[float]
    fy_plugin: List[float] = field(default_factory=list)
    max_imag_residual: float = 0.0
    estimates: List[List[float]] = field(default_factory=list)

    @classmethod
    def empty(cls) -> "MseReport":
        return cls({}, "", 0, 0, 0.0, [], [], [], [], [], [])

    def rows(self):
        for i, x in enumerate(self.x_grid):
            yield {
                "x": x,
                "noise_family": self.noise_family,
                "n": self.n,
                "replications": self.replications,
                "mse": self.mse[i],
                "bias": self.bias[i],
                "variance": self.variance[i],
            }


def run_mse_experiment(spec: ExperimentSpec, workers: Optional[int] = None,
                       keep_estimates: bool = True) -> MseReport:
    results = _map_replications(spec, workers)
    est = np.array([r[0] for r in results])
    fy = np.array([r[1] for r in results])
    truth = spec.true_density(spec.x_grid)
    err = est - truth
    mean_est = est.mean(axis=0)
    bias = err.mean(axis=0)
    variance = ((est - mean_est) ** 2).mean(axis=0)
    mse = (err**2).mean(axis=0)
    return MseReport(
        spec=spec.to_dict(),
        noise_family=spec.noise.family.name,
        n=int(spec.n),
        replications=int(spec.replications),
        bandwidth=spec.bandwidth,
        x_grid=list(spec.x_grid),
        true_values=truth.tolist(),
        mean_estimate=mean_est.tolist(),
        bias=bias.tolist(),
        variance=variance.tolist(),
        mse=mse.tolist(),
        fy_plugin=fy.mean(axis=0).tolist(),
        max_imag_residual=float(max(r[2] for r in results)),
        estimates=est.tolist() if keep_estimates else [],
    )


@dataclass
class SlopeReport:
    n_list: List[int]
    x_star: float
    mse: List[float]
    slope: float
    intercept: float
    target: float

    @property
    def deviation(self) -> float:
        return self.slope - self.target


def rate_check(template: ExperimentSpec, n_list: Sequence[int], x_star: float = 1.0,
               workers: Optional[int] = None) -> SlopeReport:
    """Least-squares slope of ``log MSE(x_star)`` against ``log n``.

    The target is ``-2 s / (1 + 2 kappa + 2 s)``; each ``n`` uses the default
    bandwidth rule.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise DomainError("n_list must hold at least three ascending sizes")
    kappa = template.noise.family.kappa
    s = template.smoothness_s
    mses = []
    for n in n_list:
        spec = template.with_(n=n, x_grid=(float(x_star),), bandwidth_rule="default")
        mses.append(run_mse_experiment(spec, workers, keep_estimates=False).mse[0])
    slope, intercept = np.polyfit(np.log(n_list), np.log(mses), 1)
    return SlopeReport(n_list, float(x_star), mses, float(slope), float(intercept),
                       -2.0 * s / (1.0 + 2.0 * kappa + 2.0 * s))


@dataclass
class NormalityReport:
    x_star: float
    n: int
    replications: int
    bandwidth: float
    z: List[float]
    sample_variance: float
    sigma1_sq: float
    sigma2_sq: float
    finite_b_variance: float
    fy_plugin: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float

    @property
    def envelope_mid(self) -> float:
        return 0.5 * (self.sigma1_sq + self.sigma2_sq)

    @property
    def variance_ratio(self) -> float:
        return self.sample_variance / self.envelope_mid


def normality_check(spec: ExperimentSpec, x_star: float = 1.0, workers: Optional[int] = None,
                    u_max: float = 1000.0) -> NormalityReport:
    """Standardised spread ``sqrt(n) b**(1/2 + kappa) (f_hat - mean f_hat)`` at ``x_star``.

    The variance envelope uses the decay constants of the error law and a
    plug-in log-space KDE of ``f_Y`` averaged over replications.
    """
    if spec.replications < 200:
        raise DomainError("normality diagnostics need at least 200 replications")
    spec = spec.with_(x_grid=(float(x_star),))
    report = run_mse_experiment(spec, workers)
    g = spec.noise.family
    K = make_kernel(spec.kernel_order)
    b = spec.bandwidth
    kappa = g.kappa
    vals = np.array(report.estimates)[:, 0]
    z = math.sqrt(spec.n) * b ** (0.5 + kappa) * (vals - vals.mean())
    C1, C2 = decay_constants(g, u_max) if kappa > 0 else (1.0, 1.0)
    fy = report.fy_plugin[0]
    vb = variance_bounds(g, K, fy, x_star, C1, C2)
    sigma1, sigma2 = float(vb.sigma1_sq), float(vb.sigma2_sq)
    mid = 0.5 * (sigma1 + sigma2)
    finite = fy / (2.0 * math.pi * x_star) * finite_variance_factor(g, K, b)
    return NormalityReport(
        x_star=float(x_star),
        n=int(spec.n),
        replications=int(spec.replications),
        bandwidth=b,
        z=z.tolist(),
        sample_variance=float(np.var(z, ddof=1)),
        sigma1_sq=sigma1,
        sigma2_sq=sigma2,
        finite_b_variance=float(finite),
        fy_plugin=float(fy),
        skewness=float(stats.skew(z)),
        excess_kurtosis=float(stats.kurtosis(z)),
        ks_distance=float(stats.kstest(z, "norm", args=(0.0, math.sqrt(mid))).statistic),
    )


# -- persistence -----------------------------------------------------------

_REPORT_FIELDS = [f.name for f in fields(MseReport)]


def persist_report(report, path) -> Path:
    """Write a report as JSON (``.json``) or as the flat CSV table (``.csv``)."""
    path = Path(path)
    try:
        if path.suffix == ".csv":
            write_report_csv(report, path)
        else:
            payload = {"format": "mellin_deconv.mse_report", "version": 1,
                       "report": {name: getattr(report, name) for name in _REPORT_FIELDS}}
            path.write_text(json.dumps(payload, indent=1, allow_nan=False) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report to {path}: {exc.strerror}") from exc
    return path


def load_report(path) -> MseReport:
    """Inverse of :func:`persist_report` for JSON reports.

    Raises
    ------
    ReportFormatError
        With the line number for syntax errors, or the field name for a
        missing or mistyped field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read report {path}: {exc.strerror}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(payload, dict) or not isinstance(payload.get("report"), dict):
        raise ReportFormatError(f"{path}: field 'report' missing or not an object")
    body = payload["report"]
    _expected = {
        "spec": dict, "noise_family": str, "n": int, "replications": int, "bandwidth": (int, float),
        "x_grid": list, "true_values": list, "mean_estimate": list, "bias": list,
        "variance": list, "mse": list, "fy_plugin": list, "max_imag_residual": (int, float),
        "estimates": list,
    }
    _reject_unknown_report(body, path)
    for name, typ in _expected.items():
        if name not in body:
            raise ReportFormatError(f"{path}: field {name!r} is missing")
        if not isinstance(body[name], typ) or isinstance(body[name], bool):
            raise ReportFormatError(f"{path}: field {name!r} has type {type(body[name]).__name__}")
    for name in ("bandwidth", "max_imag_residual"):
        body[name] = float(body[name])
    return MseReport(**body)


def _reject_unknown_report(body, path):
    unknown = sorted(set(body) - set(_REPORT_FIELDS))
    if unknown:
        raise ReportFormatError(f"{path}: unknown field(s) {', '.join(unknown)}")


def write_report_csv(report: MseReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in report.rows():
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def read_report_csv(path) -> List[Dict[str, Any]]:
    """Parse the flat CSV table; errors name the offending line and column."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ReportFormatError(f"{path}: line 1: expected columns {','.join(CSV_COLUMNS)}")
        for line_no, raw in enumerate(reader, start=2):
            row: Dict[str, Any] = {}
            for col in CSV_COLUMNS:
                val = raw.get(col)
                if val is None:
                    raise ReportFormatError(f"{path}: line {line_no}: field {col!r} missing")
                try:
                    if col == "noise_family":
                        row[col] = val
                    elif col in ("n", "replications"):
                        row[col] = int(val)
                    else:
                        row[col] = float(val)
                except ValueError:
                    raise ReportFormatError(f"{path}: line {line_no}: field {col!r}: cannot parse {val!r}") from None
            rows.append(row)
    return rows
