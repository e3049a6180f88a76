"""Experiment orchestration: single runs, Q/R scaling grids, and Q0 scenario suites.

Every result is a deterministic function of ``(config, seed)``. Within one
seed all grid cells consume the same truth and measurement sequence.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from akf import batch
from akf.adaptive import AdaptationError, AdaptiveConfig, adaptive_cycle
from akf.filter import (
    DIVERGENCE_BOUND,
    PSD_TOL,
    DivergenceError,
    FilterOptions,
    SystemModel,
    cycle,
    init,
)
from akf.models import (
    DEFAULT_P_MECH,
    Disturbance,
    LinearModelParams,
    MachineParams,
    linear_model,
    machine_model,
    simulate_linear_truth,
    simulate_machine_truth,
)
from akf.numerics import is_psd, solve_spd

DEFAULT_SCALES = (0.01, 0.1, 1.0, 10.0, 100.0)
MACHINE_R0 = np.diag([0.04**2, 0.04**2])
FILTERS = ("cekf", "aekf")


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    """A run failed for numerical reasons; the message names where."""

    def __init__(self, where: str, cause: BaseException):
        self.where = where
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")


NUMERICAL_ERRORS = (np.linalg.LinAlgError, FloatingPointError, AdaptationError, ArithmeticError)


def expand_seeds(master_seed: int, n: int) -> list[int]:
    """Derive ``n`` run seeds from a master seed with numpy's SeedSequence spawning."""
    if n < 1:
        raise ConfigError("need at least one seed")
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


@dataclass(frozen=True)
class CovSpec:
    """Initial covariance: a multiple of the base matrix, an explicit matrix,
    or the seed-mean final AEKF Q of an earlier scenario."""

    kind: Literal["scale", "matrix", "adapted-final"] = "scale"
    value: float | tuple | str = 1.0

    @classmethod
    def parse(cls, obj) -> "CovSpec":
        if isinstance(obj, CovSpec):
            return obj
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls("scale", float(obj))
        if isinstance(obj, str):
            if obj.startswith("adapted-final:"):
                return cls("adapted-final", obj.split(":", 1)[1])
            raise ConfigError(f"cannot parse covariance spec {obj!r}")
        if isinstance(obj, dict):
            unknown = set(obj) - {"scale", "matrix", "diag", "adapted_final"}
            if unknown or len(obj) != 1:
                raise ConfigError(f"covariance spec needs exactly one of scale/matrix/diag/adapted_final, got {sorted(obj)}")
            (key, val), = obj.items()
            if key == "scale":
                return cls("scale", float(val))
            if key == "adapted_final":
                return cls("adapted-final", str(val))
            mat = np.diag(np.asarray(val, dtype=float)) if key == "diag" else np.asarray(val, dtype=float)
            return cls("matrix", _as_rows(mat))
        if isinstance(obj, (list, tuple, np.ndarray)):
            return cls("matrix", _as_rows(np.asarray(obj, dtype=float)))
        raise ConfigError(f"cannot parse covariance spec {obj!r}")

    def to_json(self):
        if self.kind == "scale":
            return {"scale": self.value}
        if self.kind == "matrix":
            return {"matrix": [list(r) for r in self.value]}
        return {"adapted_final": self.value}

    def resolve(self, base: np.ndarray, adapted: dict[str, np.ndarray] | None = None) -> np.ndarray:
        """Materialise the matrix; raises ConfigError unless it is finite, symmetric and PSD."""
        return _checked_cov(self._resolve(base, adapted), self)

    def _resolve(self, base, adapted):
        if self.kind == "scale":
            return self.value * base
        if self.kind == "matrix":
            m = np.array(self.value, dtype=float)
            if m.shape != base.shape:
                raise ConfigError(f"covariance matrix has shape {m.shape}, expected {base.shape}")
            return m
        if not adapted or self.value not in adapted:
            raise ConfigError(f"unresolved adapted-final reference to scenario {self.value!r}")
        return adapted[self.value]


def _as_rows(m: np.ndarray) -> tuple:
    return tuple(tuple(float(v) for v in row) for row in np.atleast_2d(m))


def _checked_cov(m: np.ndarray, spec) -> np.ndarray:
    if not np.isfinite(m).all():
        raise ConfigError(f"covariance {spec} has non-finite entries")
    if not np.array_equal(m, m.T) and not np.allclose(m, m.T, rtol=1e-12, atol=0.0):
        raise ConfigError(f"covariance {spec} is not symmetric")
    if not is_psd(0.5 * (m + m.T), PSD_TOL):
        raise ConfigError(f"covariance {spec} is not positive semidefinite")
    return m


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "run"
    model: Literal["linear", "machine"] = "linear"
    filter: Literal["cekf", "aekf", "both"] = "both"
    Q0: CovSpec = CovSpec()
    R0: CovSpec = CovSpec()
    steps: int = 100
    seeds: tuple[int, ...] = (0,)
    alpha: float = 0.3
    adapt_q: bool = True
    adapt_r: bool = True
    residual_cov: Literal["prior", "posterior"] = "posterior"
    psd_repair: Literal["clip", "reject"] = "clip"
    linear: LinearModelParams = LinearModelParams()
    machine: MachineParams = MachineParams()
    disturbance: Disturbance = Disturbance("bus_dip", 1.0, 1.1, 0.5)
    sim_dt: float = 0.001
    p_mech: float = DEFAULT_P_MECH
    jacobians: Literal["fd", "analytic"] = "analytic"
    joseph: bool = False
    divergence_bound: float = DIVERGENCE_BOUND
    skip_first: int = 0
    x0: tuple[float, ...] | None = None  # linear model only; default starts at rest

    def __post_init__(self):
        if self.model not in ("linear", "machine"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.filter not in ("cekf", "aekf", "both"):
            raise ConfigError(f"unknown filter {self.filter!r}")
        if self.steps < 1:
            raise ConfigError("steps must be at least 1")
        if len(self.seeds) < 1:
            raise ConfigError("at least one seed is required")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 0 <= self.skip_first < self.steps:
            raise ConfigError("skip_first must lie in [0, steps)")
        if self.x0 is not None and (self.model != "linear" or len(self.x0) != 2):
            raise ConfigError("x0 override needs the linear model and two entries")
        try:
            self.adaptive_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def filters(self) -> tuple[str, ...]:
        return FILTERS if self.filter == "both" else (self.filter,)

    def adaptive_config(self) -> AdaptiveConfig:
        return AdaptiveConfig(
            alpha=self.alpha,
            adapt_q=self.adapt_q,
            adapt_r=self.adapt_r,
            psd_repair=self.psd_repair,
            residual_cov=self.residual_cov,
        )

    def options(self) -> FilterOptions:
        return FilterOptions(joseph=self.joseph, divergence_bound=self.divergence_bound)

    def base_covariances(self) -> tuple[np.ndarray, np.ndarray]:
        if self.model == "linear":
            return self.linear.Q_true, self.linear.R_true
        return np.eye(4), MACHINE_R0

    def build_model(self) -> SystemModel:
        if self.model == "linear":
            return linear_model(self.linear)
        return machine_model(self.machine, self.jacobians)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        """Build from a JSON-style mapping, rejecting unknown keys."""
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            for key in ("Q0", "R0"):
                if key in kw:
                    kw[key] = CovSpec.parse(kw[key])
            if "seeds" in kw:
                kw["seeds"] = tuple(int(s) for s in kw["seeds"])
            if kw.get("x0") is not None:
                kw["x0"] = tuple(float(v) for v in kw["x0"])
            for key, typ in (("linear", LinearModelParams), ("machine", MachineParams), ("disturbance", Disturbance)):
                if key in kw and isinstance(kw[key], dict):
                    kw[key] = _dataclass_from_dict(typ, kw[key])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, CovSpec):
                v = v.to_json()
            elif dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _dataclass_from_dict(typ, d: dict):
    names = {f.name for f in dataclasses.fields(typ)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {typ.__name__} keys: {sorted(unknown)}")
    return typ(**d)


# --------------------------------------------------------------------------
# Truth data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Track:
    """Filter-facing data for one seed; row ``k`` belongs to step ``k+1``."""

    x0: np.ndarray
    truth: np.ndarray
    measurements: np.ndarray
    u_prev: np.ndarray
    u: np.ndarray


def make_track(cfg: ScenarioConfig, seed: int) -> Track:
    if cfg.model == "linear":
        tr = simulate_linear_truth(cfg.linear, cfg.steps, seed, cfg.x0)
        empty = np.zeros((cfg.steps, 0))
        return Track(tr.states[0], tr.states[1:], tr.measurements, empty, empty)
    tr = simulate_machine_truth(
        cfg.machine,
        cfg.disturbance,
        sim_dt=cfg.sim_dt,
        duration=cfg.steps * cfg.machine.dt,
        seed=seed,
        p_mech=cfg.p_mech,
    )
    return Track(tr.states[0], tr.states[1:], tr.measurements[1:], tr.inputs[:-1], tr.inputs[1:])


# --------------------------------------------------------------------------
# Single runs
# --------------------------------------------------------------------------


def compute_mse(estimates, truth, skip_first: int = 0) -> np.ndarray:
    """Per-state mean of squared estimation error over all (kept) steps."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {tru.shape}")
    if est.ndim == 1:
        est, tru = est[:, None], tru[:, None]
    if est.shape[0] - skip_first < 1:
        raise ValueError("no steps left to average")
    err = est[skip_first:] - tru[skip_first:]
    return np.mean(err * err, axis=0)


@dataclass
class RunResult:
    filter: str
    seed: int
    estimates: np.ndarray
    truth: np.ndarray
    diverged: bool
    diverged_step: int
    final_Q: np.ndarray
    final_R: np.ndarray
    mse: np.ndarray
    nis: np.ndarray
    psd_violations: int
    innovation_r_nonpsd: int
    jitter_events: int


def _capped_mse(est, truth, diverged: bool, cfg: ScenarioConfig) -> np.ndarray:
    if diverged:
        return np.full(truth.shape[1], cfg.divergence_bound**2)
    return compute_mse(est, truth, cfg.skip_first)


def _min_eigs(stack: np.ndarray) -> np.ndarray:
    if stack.shape[-1] == 1:
        return stack[:, 0, 0]
    return np.linalg.eigvalsh(stack)[:, 0]


def run_filter(
    cfg: ScenarioConfig,
    seed: int,
    filter_kind: str | None = None,
    track: Track | None = None,
    Q0: np.ndarray | None = None,
    R0: np.ndarray | None = None,
) -> RunResult:
    """Filter one seed's data starting from the true ``x_0`` with ``P_0 = 0``.

    ``Q0``/``R0`` override the scenario's covariance specs when given.
    Divergence is reported in the result rather than raised.
    """
    kind = filter_kind or cfg.filters[0]
    if kind not in FILTERS:
        raise ConfigError(f"unknown filter {kind!r}")
    track = track if track is not None else make_track(cfg, seed)
    model = cfg.build_model()
    qb, rb = cfg.base_covariances()
    Q0 = cfg.Q0.resolve(qb) if Q0 is None else Q0
    R0 = cfg.R0.resolve(rb) if R0 is None else R0
    n = track.x0.size
    fs = init(track.x0, np.zeros((n, n)), Q0, R0)
    opts = cfg.options()
    acfg = cfg.adaptive_config()

    T = track.truth.shape[0]
    est = np.empty((T, n))
    nis = np.full(T, np.nan)
    Ps, Qs, Rs = [], [], []
    diverged, div_step = False, -1
    r_nonpsd = jitter = 0
    s_emp = None
    for k in range(T):
        try:
            if kind == "cekf":
                fs, _, corr = cycle(fs, track.measurements[k], model, track.u_prev[k], track.u[k], opts)
            else:
                fs, _, corr, diag = adaptive_cycle(
                    fs, track.measurements[k], model, acfg, track.u_prev[k], track.u[k], s_emp, opts
                )
                s_emp = diag.innovation_cov_ema
                r_nonpsd += not diag.innovation_r_psd
        except DivergenceError as exc:
            diverged, div_step = True, exc.step
            est[k:] = fs.x
            break
        jitter += corr.jittered
        d = corr.innovation
        nis[k] = float(d @ solve_spd(corr.S, d)[0])
        est[k] = fs.x
        Ps.append(fs.P)
        Qs.append(fs.Q)
        Rs.append(fs.R)

    violations = 0
    for stack in (Ps, Qs, Rs):
        if stack:
            violations += int(np.sum(~(_min_eigs(np.array(stack)) >= -PSD_TOL)))
    return RunResult(
        filter=kind,
        seed=seed,
        estimates=est,
        truth=track.truth,
        diverged=diverged,
        diverged_step=div_step,
        final_Q=fs.Q,
        final_R=fs.R,
        mse=_capped_mse(est, track.truth, diverged, cfg),
        nis=nis,
        psd_violations=violations,
        innovation_r_nonpsd=r_nonpsd,
        jitter_events=jitter,
    )


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------


def mean_and_stderr(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error along ``axis``; fixed reduction order."""
    v = np.asarray(values, dtype=float)
    n = v.shape[axis]
    mean = np.mean(v, axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, np.std(v, axis=axis, ddof=1) / math.sqrt(n)


@dataclass
class MseGrid:
    """Per-cell MSE statistics; cell ``[i, j]`` uses ``r_scales[i]`` and ``q_scales[j]``."""

    filter: str
    q_scales: tuple[float, ...]
    r_scales: tuple[float, ...]
    seeds: tuple[int, ...]
    per_seed: np.ndarray  # (n_r, n_q, n_seeds, n_states)
    divergences: np.ndarray
    psd_violations: np.ndarray
    innovation_r_nonpsd: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        return mean_and_stderr(self.per_seed, axis=2)[0]

    @property
    def stderr(self) -> np.ndarray:
        return mean_and_stderr(self.per_seed, axis=2)[1]

    def position_mean(self) -> np.ndarray:
        return self.mean[..., 0]

    def cell(self, r_scale: float, q_scale: float) -> np.ndarray:
        """Per-seed MSE array ``(n_seeds, n_states)`` for one cell."""
        return self.per_seed[self.r_scales.index(r_scale), self.q_scales.index(q_scale)]


def _grid_cell_configs(base: ScenarioConfig, q_scales, r_scales):
    qb, rb = base.base_covariances()
    if min(q_scales + r_scales) < 0 or not np.isfinite(q_scales + r_scales).all():
        raise ConfigError("grid scales must be finite and non-negative")
    for i, rs in enumerate(r_scales):
        for j, qs in enumerate(q_scales):
            yield i, j, qs * qb, rs * rb


def run_mse_grid(
    filter_kind: str,
    base: ScenarioConfig,
    seeds: Sequence[int] | None = None,
    q_scales: Sequence[float] = DEFAULT_SCALES,
    r_scales: Sequence[float] = DEFAULT_SCALES,
    engine: Literal["auto", "batch", "generic"] = "auto",
) -> MseGrid:
    """Run every (R-scale, Q-scale) cell over all seeds on shared truth data.

    ``engine="batch"`` evaluates all seeds of a cell in lock step and needs
    a model with constant Jacobians (the linear model); ``"generic"`` runs
    seed by seed through :func:`run_filter`.
    """
    if filter_kind not in FILTERS:
        raise ConfigError(f"unknown filter {filter_kind!r}")
    seeds = tuple(base.seeds if seeds is None else seeds)
    q_scales, r_scales = tuple(map(float, q_scales)), tuple(map(float, r_scales))
    if engine == "auto":
        engine = "batch" if base.model == "linear" else "generic"
    if engine == "batch" and base.model != "linear":
        raise ConfigError("the batch engine only supports the linear model")

    tracks = [make_track(base, s) for s in seeds]
    n = tracks[0].x0.size
    shape = (len(r_scales), len(q_scales))
    per_seed = np.empty(shape + (len(seeds), n))
    divs = np.zeros(shape, dtype=int)
    psd = np.zeros(shape, dtype=int)
    r_np = np.zeros(shape, dtype=int)
    acfg = base.adaptive_config() if filter_kind == "aekf" else None

    if engine == "batch":
        p = base.linear
        Z = np.stack([t.measurements for t in tracks])
        X0 = np.stack([t.x0 for t in tracks])
        truth = np.stack([t.truth for t in tracks])
        for i, j, Q0, R0 in _grid_cell_configs(base, q_scales, r_scales):
            try:
                res = batch.run_lti_batch(
                    p.A, p.H, X0, np.zeros((n, n)), Q0, R0, Z, acfg, base.joseph, base.divergence_bound
                )
            except NUMERICAL_ERRORS + (RuntimeError,) as exc:
                run = getattr(exc, "run", None)
                seed = "unknown" if run is None else seeds[run]
                raise NumericalFailure(f"{filter_kind} cell (r={r_scales[i]:g}, q={q_scales[j]:g}), seed {seed}", exc) from exc
            err = res.estimates[:, base.skip_first:] - truth[:, base.skip_first:]
            mse = np.mean(err * err, axis=1)
            mse[res.diverged] = base.divergence_bound**2
            per_seed[i, j] = mse
            divs[i, j] = int(res.diverged.sum())
            psd[i, j] = int(sum(np.sum(~(e >= -PSD_TOL)) for e in (res.min_eig_P, res.min_eig_Q, res.min_eig_R)))
            r_np[i, j] = int(res.innovation_r_nonpsd.sum())
    else:
        for i, j, Q0, R0 in _grid_cell_configs(base, q_scales, r_scales):
            for s_idx, (seed, tr) in enumerate(zip(seeds, tracks)):
                try:
                    rr = run_filter(base, seed, filter_kind, tr, Q0, R0)
                except NUMERICAL_ERRORS as exc:
                    raise NumericalFailure(
                        f"{filter_kind} cell (r={r_scales[i]:g}, q={q_scales[j]:g}), seed {seed}", exc
                    ) from exc
                per_seed[i, j, s_idx] = rr.mse
                divs[i, j] += rr.diverged
                psd[i, j] += rr.psd_violations
                r_np[i, j] += rr.innovation_r_nonpsd

    return MseGrid(
        filter=filter_kind,
        q_scales=q_scales,
        r_scales=r_scales,
        seeds=seeds,
        per_seed=per_seed,
        divergences=divs,
        psd_violations=psd,
        innovation_r_nonpsd=r_np,
        metadata={"engine": engine, "steps": base.steps, "alpha": base.alpha},
    )


# --------------------------------------------------------------------------
# Scenario suites
# --------------------------------------------------------------------------


@dataclass
class FilterSummary:
    filter: str
    mean: np.ndarray
    stderr: np.ndarray
    divergences: int
    psd_violations: int
    runs: list[RunResult]

    def mean_final_Q(self) -> np.ndarray:
        return np.mean([r.final_Q for r in self.runs], axis=0)

    def envelope(self, percentiles=(5.0, 50.0, 95.0)) -> np.ndarray:
        """Per-step percentiles of estimation error across seeds: ``(len(p), T, n)``."""
        err = np.stack([r.estimates - r.truth for r in self.runs])
        return np.percentile(err, percentiles, axis=0)


@dataclass
class ScenarioOutcome:
    config: ScenarioConfig
    Q0: np.ndarray
    R0: np.ndarray
    filters: dict[str, FilterSummary]


@dataclass
class ScenarioReport:
    outcomes: list[ScenarioOutcome]

    def __getitem__(self, name: str) -> ScenarioOutcome:
        for o in self.outcomes:
            if o.config.name == name:
                return o
        raise KeyError(name)


def check_references(suite: Sequence[ScenarioConfig]) -> None:
    """Raise ConfigError if an adapted-final reference points forward or nowhere."""
    seen: set[str] = set()
    for cfg in suite:
        for spec in (cfg.Q0, cfg.R0):
            if spec.kind == "adapted-final":
                if spec.value not in seen:
                    raise ConfigError(
                        f"scenario {cfg.name!r} references {spec.value!r}, which does not run before it"
                    )
        seen.add(cfg.name)


def worker_count() -> int:
    """Parallelism cap from ``AKF_THREADS`` (default 1, i.e. serial)."""
    raw = os.environ.get("AKF_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"AKF_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _seed_runs(args) -> list[RunResult]:
    cfg, seed, Q0, R0 = args
    try:
        track = make_track(cfg, seed)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(f"scenario {cfg.name!r} truth, seed {seed}", exc) from exc
    out = []
    for f in cfg.filters:
        try:
            out.append(run_filter(cfg, seed, f, track, Q0, R0))
        except NUMERICAL_ERRORS as exc:
            raise NumericalFailure(f"scenario {cfg.name!r} {f}, seed {seed}", exc) from exc
    return out


def run_scenario(
    cfg: ScenarioConfig, adapted: dict[str, np.ndarray] | None = None, workers: int | None = None
) -> ScenarioOutcome:
    qb, rb = cfg.base_covariances()
    Q0 = cfg.Q0.resolve(qb, adapted)
    R0 = cfg.R0.resolve(rb, adapted)
    workers = worker_count() if workers is None else workers
    tasks = [(cfg, s, Q0, R0) for s in cfg.seeds]
    if workers > 1 and len(tasks) > 1:
        # map() yields in submission order, so the reduction order is fixed
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_seed = list(ex.map(_seed_runs, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        per_seed = [_seed_runs(t) for t in tasks]
    runs: dict[str, list[RunResult]] = {f: [] for f in cfg.filters}
    for results in per_seed:
        for f, rr in zip(cfg.filters, results):
            runs[f].append(rr)
    summaries = {}
    for f, rs in runs.items():
        mean, se = mean_and_stderr(np.array([r.mse for r in rs]))
        summaries[f] = FilterSummary(
            filter=f,
            mean=mean,
            stderr=se,
            divergences=sum(r.diverged for r in rs),
            psd_violations=sum(r.psd_violations for r in rs),
            runs=rs,
        )
    return ScenarioOutcome(config=cfg, Q0=Q0, R0=R0, filters=summaries)


def run_scenarios(suite: Sequence[ScenarioConfig], workers: int | None = None) -> ScenarioReport:
    """Run scenarios in order. ``adapted-final`` specs take the seed-mean
    final AEKF Q of the named earlier scenario."""
    if not suite:
        raise ConfigError("scenario suite is empty")
    check_references(suite)
    adapted: dict[str, np.ndarray] = {}
    outcomes = []
    for cfg in suite:
        out = run_scenario(cfg, adapted, workers)
        if "aekf" in out.filters:
            adapted[cfg.name] = out.filters["aekf"].mean_final_Q()
        outcomes.append(out)
    return ScenarioReport(outcomes)


def default_suite(seeds: Sequence[int], mc_seeds: Sequence[int] | None = None,
                  base: ScenarioConfig | None = None) -> list[ScenarioConfig]:
    """Machine Q0-robustness suite: tiny Q0, huge Q0, Q0 taken from #2's AEKF, Monte Carlo of #1."""
    base = base or ScenarioConfig(model="machine", steps=250, seeds=tuple(seeds))
    seeds = tuple(seeds)
    return [
        base.replace(name="s1", Q0=CovSpec("scale", 1e-8), seeds=seeds),
        base.replace(name="s2", Q0=CovSpec("scale", 1000.0), seeds=seeds),
        base.replace(name="s3", Q0=CovSpec("adapted-final", "s2"), seeds=seeds),
        base.replace(name="s4", Q0=CovSpec("scale", 1e-8), seeds=tuple(mc_seeds or seeds)),
    ]
