"""Batch pipeline: ingestion, calibration, worst-case stress and reporting."""

from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
import pandas as pd

from . import homogeneous as hg
from .credit_pricing import CdsPosition, CdsQuote, equivalent_spread, pnl_weights
from .factor_model import (BetaDistribution, DistanceMatrixSet, build_distances,
                           estimate_beta_distribution, factor_correlation, rolling_calibration)
from .numerics import chi_square_quantile, normal_quantile, student_t_quantile
from .portfolio_risk import (PortfolioWeights, covariance, fit_t_nu, horizon_vol, mixing_quantile,
                             var_joint_stress, var_normal, var_t)
from .scenario import AnnealingConfig, stationarity_check, worst_case_search

logger = logging.getLogger(__name__)

FACTOR_COLUMNS = ("isCDX", "isIG", "maturity_years", "series", "isIndex")
BINARY_COLUMNS = ("isCDX", "isIG", "isIndex")
TRANCHE_COLUMNS = ("upfront", "running", "base_corr_k1", "base_corr_k2")


class InputError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
        raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _parse_bool(v: str | bool) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_floats(v: str | Sequence[float]) -> tuple[float, ...]:
    if isinstance(v, str):
        return tuple(float(x) for x in v.replace(" ", "").split(",") if x)
    return tuple(float(x) for x in v)


def _parse_strs(v: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(v, str):
        return tuple(x.strip() for x in v.split(",") if x.strip())
    return tuple(v)


def _parse_nu(v: str | float | None) -> float | None:
    if v is None:
        return None
    if isinstance(v, str) and v.strip().lower() in ("fit", "", "none"):
        return None
    return float(v)


@dataclass
class RunConfig:
    instruments: str = ""
    spreads: str = ""
    positions: str = ""
    output_dir: str = "."
    window: int = 250
    factors: tuple[str, ...] = FACTOR_COLUMNS
    normalise: bool = True
    clip_eps: float = 0.01
    alpha: float = 0.99
    quantiles: tuple[float, ...] = (0.7, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999)
    nu: float | None = None
    seed: int = 12345
    restarts: int = 20
    cooling: float = 0.95
    steps_per_temperature: int = 400
    n_temperatures: int = 60
    horizon_days: int = 250
    min_valid_frac: float = 0.8
    recovery: float = 0.4
    rate: float = 0.0
    spreads_in_bps: bool = False
    log_returns: bool = False
    unconstrained: bool = True

    @classmethod
    def field_types(cls) -> dict[str, Any]:
        return {
            "instruments": str, "spreads": str, "positions": str, "output_dir": str,
            "window": int, "factors": _parse_strs, "normalise": _parse_bool,
            "clip_eps": float, "alpha": float, "quantiles": _parse_floats, "nu": _parse_nu,
            "seed": int, "restarts": int, "cooling": float, "steps_per_temperature": int,
            "n_temperatures": int, "horizon_days": int, "min_valid_frac": float,
            "recovery": float, "rate": float, "spreads_in_bps": _parse_bool,
            "log_returns": _parse_bool, "unconstrained": _parse_bool,
        }

    @classmethod
    def from_mapping(cls, values: dict[str, Any], base: "RunConfig | None" = None) -> "RunConfig":
        cfg = dataclasses.replace(base) if base is not None else cls()
        types = cls.field_types()
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in types:
                raise InputError(f"unknown configuration key {key!r}")
            try:
                setattr(cfg, key, types[key](raw))
            except (TypeError, ValueError) as exc:
                raise InputError(f"bad value for {key}: {raw!r} ({exc})") from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | os.PathLike, overrides: dict[str, Any] | None = None) -> "RunConfig":
        return cls.from_mapping({**read_key_values(path), **(overrides or {})})

    def validate(self) -> None:
        for q in (self.alpha, *self.quantiles):
            if not 0.0 < q < 1.0:
                raise InputError(f"confidence levels must lie in (0, 1), got {q}")
        if self.nu is not None and self.nu <= 2:
            raise InputError("nu must exceed 2")
        if self.window < 2:
            raise InputError("window too short")

    def check_files(self, *names: str) -> None:
        for name in names:
            path = getattr(self, name)
            if not path or not Path(path).is_file():
                raise InputError(f"{name} file not found: {path!r}")

    def annealing(self) -> AnnealingConfig:
        return AnnealingConfig(seed=self.seed, restarts=self.restarts, cooling=self.cooling,
                               steps_per_temperature=self.steps_per_temperature,
                               n_temperatures=self.n_temperatures)


def read_key_values(path: str | os.PathLike) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def load_instruments(path: str | os.PathLike, factors: Sequence[str] = FACTOR_COLUMNS) -> pd.DataFrame:
    """Instrument table indexed by id with one float column per factor."""
    df = pd.read_csv(path, dtype=str, skipinitialspace=True)
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in ("id", *factors) if c not in df.columns]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
    dup = df["id"][df["id"].duplicated()]
    if len(dup):
        raise InputError(f"{path}: duplicate instrument id {dup.iloc[0]!r}")
    out = pd.DataFrame(index=pd.Index(df["id"].str.strip(), name="id"))
    for col in factors:
        try:
            vals = df[col].astype(float).to_numpy()
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric value in column {col}: {exc}") from exc
        if col in BINARY_COLUMNS:
            bad = ~np.isin(vals, (0.0, 1.0))
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise InputError(f"{path}: row {row + 2}: {col} must be 0 or 1, got {df[col].iloc[row]!r}")
        if not np.all(np.isfinite(vals)):
            raise InputError(f"{path}: non-finite value in column {col}")
        out[col] = vals
    return out


def load_positions(path: str | os.PathLike) -> list[CdsPosition]:
    df = pd.read_csv(path, dtype=str, skipinitialspace=True)
    df.columns = [c.strip() for c in df.columns]
    for col in ("id", "net_notional", "side"):
        if col not in df.columns:
            raise InputError(f"{path}: missing column {col}")
    out = []
    for i, row in enumerate(df.itertuples(index=False), start=2):
        try:
            out.append(CdsPosition.from_side(row.id.strip(), float(row.net_notional), row.side))
        except (ValueError, AttributeError) as exc:
            raise InputError(f"{path}: row {i}: {exc}") from exc
    ids = [p.id for p in out]
    if len(set(ids)) != len(ids):
        raise InputError(f"{path}: duplicate position id")
    return out


@dataclass
class SpreadPanel:
    spreads: pd.DataFrame
    returns: pd.DataFrame
    gaps: list[tuple[pd.Timestamp, str]] = field(default_factory=list)


def _is_blank(v: Any) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v)) or (isinstance(v, str) and not v.strip())


def load_spread_panel(
    path: str | os.PathLike,
    instruments: pd.DataFrame | None = None,
    bps: bool = False,
    log_returns: bool = False,
    recovery: float = 0.4,
    rate: float = 0.0,
) -> SpreadPanel:
    """Read long-format spreads (``date,id,spread``) into a wide panel.

    Tranche rows leave ``spread`` empty and carry ``upfront,running`` (plus
    base correlations); they are converted to equivalent running spreads,
    which needs the instrument maturity from ``instruments``. Returns are
    ``ds/s`` between consecutive available dates of each instrument.
    """
    df = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False)
    df.columns = [c.strip() for c in df.columns]
    for col in ("date", "id"):
        if col not in df.columns:
            raise InputError(f"{path}: missing column {col}")
    has_spread = "spread" in df.columns
    has_tranche = all(c in df.columns for c in ("upfront", "running"))
    if not has_spread and not has_tranche:
        raise InputError(f"{path}: need a spread column or upfront/running tranche columns")
    scale = 1e-4 if bps else 1.0
    records = []
    for i, row in enumerate(df.to_dict("records"), start=2):
        try:
            date = pd.Timestamp(row["date"].strip())
        except (ValueError, TypeError) as exc:
            raise InputError(f"{path}: row {i}: unparseable date {row['date']!r}") from exc
        ident = row["id"].strip()
        try:
            if has_spread and not _is_blank(row.get("spread")):
                value = float(row["spread"]) * scale
            elif has_tranche and not _is_blank(row.get("upfront")):
                if instruments is None or ident not in instruments.index:
                    raise InputError(f"{path}: row {i}: tranche {ident!r} needs a known maturity")
                value = equivalent_spread(float(row["upfront"]), float(row["running"]) * scale,
                                          float(instruments.loc[ident, "maturity_years"]),
                                          recovery, rate)
            else:
                raise InputError(f"{path}: row {i}: no spread or tranche quote")
        except InputError:
            raise
        except ValueError as exc:
            raise InputError(f"{path}: row {i}: unparseable number ({exc})") from exc
        if not value > 0:
            logger.warning("%s: row %d: nonpositive spread %g for %s excluded", path, i, value, ident)
            continue
        records.append((date, ident, value))
    if not records:
        raise InputError(f"{path}: no usable spread rows")
    long = pd.DataFrame(records, columns=["date", "id", "spread"])
    dup = long.duplicated(["date", "id"])
    if dup.any():
        d = long[dup].iloc[0]
        raise InputError(f"{path}: duplicate quote for {d['id']} on {d['date'].date()}")
    wide = long.pivot(index="date", columns="id", values="spread").sort_index()
    wide.columns.name = None
    returns = pd.DataFrame(index=wide.index, columns=wide.columns, dtype=float)
    gaps: list[tuple[pd.Timestamp, str]] = []
    pos = pd.Series(np.arange(len(wide.index)), index=wide.index)
    for col in wide.columns:
        s = wide[col].dropna()
        r = np.log(s).diff() if log_returns else s.pct_change()
        returns.loc[s.index, col] = r
        steps = pos.loc[s.index].diff()
        for date in steps.index[steps > 1]:
            gaps.append((date, col))
    if gaps:
        logger.info("%d returns computed across date gaps", len(gaps))
    return SpreadPanel(wide, returns.iloc[1:], gaps)


# ---------------------------------------------------------------------------
# Calibration and stress
# ---------------------------------------------------------------------------


@dataclass
class Calibration:
    instruments: pd.DataFrame
    panel: SpreadPanel
    distances: DistanceMatrixSet
    betas: pd.DataFrame
    distribution: BetaDistribution


def run_calibration(config: RunConfig) -> Calibration:
    with stage("load"):
        config.check_files("instruments", "spreads")
        inst = load_instruments(config.instruments, config.factors)
        panel = load_spread_panel(config.spreads, inst, bps=config.spreads_in_bps,
                                  log_returns=config.log_returns, recovery=config.recovery,
                                  rate=config.rate)
        unknown = [c for c in panel.returns.columns if c not in inst.index]
        if unknown:
            raise InputError(f"spreads for unknown instrument(s): {', '.join(unknown[:5])}")
        ids = [i for i in inst.index if i in panel.returns.columns]
        if len(ids) < len(inst):
            logger.warning("%d instrument(s) without spread data ignored", len(inst) - len(ids))
        inst = inst.loc[ids]
    with stage("calibration"):
        distances = build_distances(inst[list(config.factors)].to_numpy(), config.normalise,
                                    names=config.factors)
        betas = rolling_calibration(panel.returns[ids], distances, config.window, config.clip_eps,
                                    config.min_valid_frac)
        dist = estimate_beta_distribution(betas)
    return Calibration(inst, panel, distances, betas, dist)


@dataclass
class StressReport:
    data: dict[str, Any]

    def table(self) -> pd.DataFrame:
        d = self.data
        rows = [{"quantile": "base case", "var": d["base"]["var"], "t_var": d["base"]["t_var"],
                 "change_pct": None, "joint_t_var": d["base"]["t_var"], "joint_change_pct": None}]
        for r in d["rows"]:
            rows.append({k: r[k] for k in ("quantile", "var", "t_var", "change_pct",
                                           "joint_t_var", "joint_change_pct")})
        return pd.DataFrame(rows)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _pct(value: float, base: float) -> float:
    return 100.0 * (value / base - 1.0)


def run_stress(config: RunConfig, write: bool = True) -> StressReport:
    """Calibrate, search worst-case scenarios per quantile and write
    ``report.json`` and ``report_table.csv`` to ``config.output_dir``."""
    cal = run_calibration(config)
    with stage("portfolio"):
        config.check_files("positions")
        positions = load_positions(config.positions)
        as_of = cal.betas.index[-1]
        t = cal.panel.returns.index.get_loc(as_of)
        ids = list(cal.instruments.index)
        window = cal.panel.returns[ids].iloc[t - config.window:t]
        min_obs = int(math.ceil(config.min_valid_frac * config.window))
        usable = set(window.columns[(window.notna().sum() >= min_obs) & (window.std() > 0)])
        kept = [p for p in positions if p.id in usable]
        dropped = [p.id for p in positions if p.id not in usable]
        if dropped:
            logger.warning("positions without sufficient history dropped: %s", ", ".join(dropped))
        if not kept:
            raise InputError("no position has sufficient return history")
        prev_date = cal.panel.spreads.index[cal.panel.spreads.index.get_loc(as_of) - 1]
        quotes = []
        for p in kept:
            s = cal.panel.spreads[p.id].loc[:prev_date].dropna()
            quotes.append(CdsQuote(float(s.iloc[-1]), float(cal.instruments.loc[p.id, "maturity_years"]),
                                   config.recovery, config.rate))
        value, w = pnl_weights(kept, quotes)
        weights = PortfolioWeights(w, value)
        idx = [ids.index(p.id) for p in kept]
        distances = cal.distances.subset(idx)
        rets = window[[p.id for p in kept]]
        vols = rets.std().to_numpy()
    with stage("tails"):
        if config.nu is None:
            fit = fit_t_nu(rets.to_numpy())
            nu, nu_moment = fit.nu, fit.nu_moment
        else:
            nu, nu_moment = float(config.nu), None
    dist = cal.distribution
    alpha = config.alpha
    m = dist.dim
    with stage("base"):
        base_cov = covariance(factor_correlation(dist.mean, distances), vols)
        base_var = var_normal(weights, base_cov, alpha)
        base_tvar = var_t(weights, base_cov, alpha, nu)
    rows = []
    annealing = config.annealing()
    names = list(cal.betas.columns)
    levels: list[tuple[float | str, float, float]] = [
        (q, chi_square_quantile(q, m), q) for q in sorted(config.quantiles)]
    if config.unconstrained:
        levels.append(("unconstrained", math.inf, max(config.quantiles)))
    previous: list[np.ndarray] = []
    with stage("search"):
        for q, h, vol_alpha in levels:
            sc = worst_case_search(weights, distances, vols, dist, h, annealing, alpha=alpha,
                                   quantile=q if isinstance(q, float) else None,
                                   initial_points=previous if not math.isinf(h) else (),
                                   label=str(q))
            previous = [sc.beta]
            cov = covariance(factor_correlation(sc.beta, distances), vols)
            v = var_normal(weights, cov, alpha)
            tv = var_t(weights, cov, alpha, nu)
            jv = var_joint_stress(weights, cov, alpha, nu, vol_alpha)
            stat = stationarity_check(sc, weights, distances, vols, dist)
            rows.append({
                "quantile": q, "h": None if math.isinf(h) else h, "vol_alpha": vol_alpha,
                "beta": dict(zip(names, map(float, sc.beta))), "mahalanobis": sc.mahalanobis,
                "var": v, "t_var": tv, "change_pct": _pct(v, base_var),
                "joint_t_var": jv, "joint_change_pct": _pct(jv, base_tvar),
                "on_boundary": sc.on_boundary, "converged": sc.converged,
                "restart_spread": sc.restart_spread,
                "stationarity": ({"skipped": True, "notice": stat.notice} if stat.skipped else
                                 {"skipped": False, "relative_gradient": stat.relative_gradient,
                                  "lagrange_multiplier": stat.lagrange_multiplier}),
            })
    data = {
        "as_of": str(as_of.date()),
        "alpha": alpha,
        "nu": nu,
        "nu_fitted": config.nu is None,
        "nu_moment_start": nu_moment,
        "window": config.window,
        "portfolio_value": value,
        "positions": [p.id for p in kept],
        "dropped_positions": dropped,
        "beta_bar": dict(zip(names, map(float, dist.mean))),
        "beta_change_cov": dist.cov.tolist(),
        "sigma_beta": dist.sigma_beta,
        "rho_beta": dist.rho_beta,
        "beta_distribution_degenerate": dist.degenerate,
        "base": {"var": base_var, "t_var": base_tvar},
        "rows": rows,
        "diagnostics": {
            "calibration_dates": len(cal.betas),
            "return_gaps": len(cal.panel.gaps),
            "all_searches_converged": all(r["converged"] for r in rows),
        },
    }
    report = StressReport(data)
    if write:
        with stage("write"):
            out = Path(config.output_dir)
            table = report.table().to_csv(index=False, float_format="%.10g", lineterminator="\n")
            text = report.to_json()
            _atomic_write(out / "report_table.csv", table)
            _atomic_write(out / "report.json", text)
    return report


def write_calibration(cal: Calibration, output_dir: str | os.PathLike) -> list[Path]:
    out = Path(output_dir)
    betas_path = out / "betas.csv"
    dist_path = out / "beta_distribution.json"
    d = cal.distribution
    payload = {"as_of": str(cal.betas.index[-1].date()), "names": list(cal.betas.columns),
               "beta_bar": d.mean.tolist(), "beta_change_cov": d.cov.tolist(),
               "sigma_beta": d.sigma_beta, "rho_beta": d.rho_beta, "degenerate": d.degenerate}
    _atomic_write(betas_path, cal.betas.to_csv(index_label="date", float_format="%.12g",
                                               lineterminator="\n"))
    _atomic_write(dist_path, json.dumps(payload, indent=2))
    return [betas_path, dist_path]


# ---------------------------------------------------------------------------
# Chart grids from the homogeneous closed forms
# ---------------------------------------------------------------------------


GRID_NAMES = (
    "var_by_factor_count", "var_change_common_shift", "var_change_core_count",
    "var_change_core_rho_beta", "worst_case_var_by_factor_count", "worst_case_change_by_setup",
    "joint_stress_by_nu", "worst_case_var_by_quantile",
)


@dataclass
class FigureConfig:
    output_dir: str = "."
    sigma: float = 0.25
    trading_days: int = 250
    alpha: float = 0.99
    rho_bar: float = 0.3
    rho_bar_list: tuple[float, ...] = (0.1, 0.3, 0.5)
    m_values: tuple[int, ...] = tuple(range(1, 11))
    m_stress: int = 5
    delta_rel: tuple[float, ...] = tuple(np.round(np.linspace(-1.0, 1.0, 41), 10))
    rho_beta_core: float = 0.5
    rho_beta_list: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75)
    sigma_beta: float = 0.1428
    rho_beta: float = 0.1972
    worst_quantile: float = 0.95
    setups: tuple[tuple[float, float], ...] = ((0.1428, 0.0), (0.1428, 0.1972), (0.1428, 0.5),
                                              (0.2, 0.1972))
    nu_values: tuple[float, ...] = tuple(float(v) for v in np.arange(3.0, 30.5, 0.5))
    quantile_values: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999)


def _homog_var(sigma: float, m: int, betas, alpha: float) -> float:
    spec = hg.HomogeneousSpec(m=m, sigma=sigma, beta=tuple(np.broadcast_to(betas, (m,))))
    return normal_quantile(alpha) * math.sqrt(hg.homog_variance(spec))


def figure_grids(cfg: FigureConfig) -> dict[str, pd.DataFrame]:
    """Long-format ``(x, series, y)`` chart grids for the homogeneous portfolio.

    VaR values are fractions of the position value; changes are percent.
    """
    sig = float(horizon_vol(cfg.sigma, 1.0, cfg.trading_days))
    z = normal_quantile(cfg.alpha)
    if not cfg.m_values or not cfg.delta_rel or not cfg.nu_values or not cfg.quantile_values:
        raise InputError("figure parameter ranges must be nonempty")
    grids: dict[str, list[tuple[float, str, float]]] = {k: [] for k in GRID_NAMES}

    for m in cfg.m_values:
        b = hg.calibrate_homog_beta(m, cfg.rho_bar)
        grids["var_by_factor_count"].append((m, f"rho_bar={cfg.rho_bar}", _homog_var(sig, m, b, cfg.alpha)))

    m = cfg.m_stress
    for rho in cfg.rho_bar_list:
        b = hg.calibrate_homog_beta(m, rho)
        base = _homog_var(sig, m, b, cfg.alpha)
        for d in cfg.delta_rel:
            v = _homog_var(sig, m, b * (1.0 + d), cfg.alpha)
            grids["var_change_common_shift"].append((d * 100.0, f"rho_bar={rho}", _pct(v, base)))

    b = hg.calibrate_homog_beta(m, cfg.rho_bar)
    base = _homog_var(sig, m, b, cfg.alpha)

    def core_change(j: int, rho_beta: float, rel: float) -> float:
        spec = hg.HomogeneousSpec(m=m, sigma=sig, beta=b, rho_beta=rho_beta)
        return _pct(z * math.sqrt(hg.stressed_variance(spec, j, b * rel)), base)

    for j in range(1, m + 1):
        for d in cfg.delta_rel:
            grids["var_change_core_count"].append((d * 100.0, f"j={j}", core_change(j, cfg.rho_beta_core, d)))
    for rho_beta in cfg.rho_beta_list:
        for d in cfg.delta_rel:
            grids["var_change_core_rho_beta"].append((d * 100.0, f"rho_beta={rho_beta}", core_change(1, rho_beta, d)))

    def worst(m: int, sigma_beta: float, rho_beta: float, q: float) -> tuple[float, float]:
        b = hg.calibrate_homog_beta(m, cfg.rho_bar)
        h = chi_square_quantile(q, m)
        shift = hg.homog_worst_case_shift(m, sigma_beta, rho_beta, h)
        return _homog_var(sig, m, b, cfg.alpha), _homog_var(sig, m, max(b - shift, 0.0), cfg.alpha)

    for m in cfg.m_values:
        v0, v1 = worst(m, cfg.sigma_beta, cfg.rho_beta, cfg.worst_quantile)
        grids["worst_case_var_by_factor_count"].append((m, "initial", v0))
        grids["worst_case_var_by_factor_count"].append((m, "worst_case", v1))
        for sb, rb in cfg.setups:
            v0, v1 = worst(m, sb, rb, cfg.worst_quantile)
            grids["worst_case_change_by_setup"].append((m, f"sigma_beta={sb},rho_beta={rb}", _pct(v1, v0)))

    m = cfg.m_stress
    v0, v1 = worst(m, cfg.sigma_beta, cfg.rho_beta, cfg.worst_quantile)
    for nu in cfg.nu_values:
        t_base = student_t_quantile(cfg.alpha, nu) * math.sqrt((nu - 2.0) / nu) * v0 / z
        mix = math.sqrt(mixing_quantile(cfg.alpha, nu) * (nu - 2.0) / nu)
        grids["joint_stress_by_nu"].append((nu, "t_var", t_base))
        grids["joint_stress_by_nu"].append((nu, "volatility_stress", v0 * mix))
        grids["joint_stress_by_nu"].append((nu, "joint_stress", v1 * mix))
        grids["joint_stress_by_nu"].append((nu, "volatility_stress_change_pct", _pct(v0 * mix, t_base)))
        grids["joint_stress_by_nu"].append((nu, "joint_stress_change_pct", _pct(v1 * mix, t_base)))
    for q in cfg.quantile_values:
        _, v1 = worst(m, cfg.sigma_beta, cfg.rho_beta, q)
        grids["worst_case_var_by_quantile"].append((q, f"m={m}", v1))

    return {k: pd.DataFrame(v, columns=["x", "series", "y"]) for k, v in grids.items()}


def emit_figure_data(cfg: FigureConfig) -> list[Path]:
    out = Path(cfg.output_dir)
    paths = []
    for name, df in figure_grids(cfg).items():
        path = out / f"{name}.csv"
        _atomic_write(path, df.to_csv(index=False, float_format="%.12g", lineterminator="\n"))
        paths.append(path)
    return paths
