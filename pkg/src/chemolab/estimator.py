"""scikit-learn style front end: one estimator instance is one configured run."""

from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import (
    AnalysisError,
    MomentConfig,
    check_blowup_hypotheses,
    check_window,
    classify,
    empirical_window_time,
    gamma_constants,
    largest_passing_r_star,
    moment_y,
    odi_residual,
    riccati_rate,
)
from .config import SCHEMA, RunConfig
from .grid import RadialGrid, lp_norm, unit_ball_volume
from .model import (
    ModelError,
    ModelParams,
    Prototype,
    PurePower,
    Source,
    blowup_exponent,
    build_initial_data,
    load_profile_csv,
    regime_label,
)
from .solver import Scheme, StepControl, initial_state, run

log = logging.getLogger(__name__)


def collapse_time(n: int, chi: float, mu: float, radius: float) -> float:
    """Time for chemotactic drift to cross a ball of the given radius holding mass mu."""
    return n * unit_ball_volume(n) * radius**n / (chi * mu)


class ChemotaxisSimulator(BaseEstimator):
    """Simulate the radial attraction-consumption system and classify the run.

    Every constructor argument is a configuration key (see :mod:`chemolab.config`).
    ``fit`` integrates the system; ``predict`` returns the verdict
    (``Bounded``, ``BlowupSuspected`` or ``Inconclusive``); ``transform``
    returns the sampled time series.

    Fitted attributes: ``grid_``, ``params_``, ``initial_data_``, ``report_``,
    ``classification_``, ``r_star_`` and ``analysis_`` (a dict, empty unless
    ``analysis=True``).
    """

    def __init__(
        self,
        n=2, kappa=0, chi=5.0, R=1.0, diffusion="prototype", m=0.5, coeff=1.0, m_bar=None,
        source="zero", source_amplitude=0.0, source_radius=0.5, source_omega=0.0,
        mu=1.0, alpha=1.0, beta=1.0, profile="bump", r_star=0.4, r_star_auto=False,
        w_profile="uniform", v0=0.0, u_csv=None, noise=0.0, seed=0,
        cells=512, grid="uniform", h0=None, h0_factor=1e-5,
        t_end=10.0, time_unit="absolute", dt_init=1e-4, dt_min=1e-12, dt_max=1e-2,
        safety=0.9, growth=1.25, u_cap=None, u_cap_factor=1e6, max_rel_change=0.5,
        max_steps=None,
        chemotaxis_flux="upwind", face_average="arithmetic", picard_iterations=1, picard_tol=1e-8,
        analysis=False, epsilon=0.1, eta=0.2, lam=0.1, p=None,
        cadence=0.1, every_steps=0, snapshot_times=(), keep_states=False,
    ):
        self.n = n
        self.kappa = kappa
        self.chi = chi
        self.R = R
        self.diffusion = diffusion
        self.m = m
        self.coeff = coeff
        self.m_bar = m_bar
        self.source = source
        self.source_amplitude = source_amplitude
        self.source_radius = source_radius
        self.source_omega = source_omega
        self.mu = mu
        self.alpha = alpha
        self.beta = beta
        self.profile = profile
        self.r_star = r_star
        self.r_star_auto = r_star_auto
        self.w_profile = w_profile
        self.v0 = v0
        self.u_csv = u_csv
        self.noise = noise
        self.seed = seed
        self.cells = cells
        self.grid = grid
        self.h0 = h0
        self.h0_factor = h0_factor
        self.t_end = t_end
        self.time_unit = time_unit
        self.dt_init = dt_init
        self.dt_min = dt_min
        self.dt_max = dt_max
        self.safety = safety
        self.growth = growth
        self.u_cap = u_cap
        self.u_cap_factor = u_cap_factor
        self.max_rel_change = max_rel_change
        self.max_steps = max_steps
        self.chemotaxis_flux = chemotaxis_flux
        self.face_average = face_average
        self.picard_iterations = picard_iterations
        self.picard_tol = picard_tol
        self.analysis = analysis
        self.epsilon = epsilon
        self.eta = eta
        self.lam = lam
        self.p = p
        self.cadence = cadence
        self.every_steps = every_steps
        self.snapshot_times = snapshot_times
        self.keep_states = keep_states

    # ------------------------------------------------------------ config glue

    @classmethod
    def from_config(cls, config: RunConfig) -> "ChemotaxisSimulator":
        return cls(**config.values)

    def to_config(self) -> RunConfig:
        values = self.get_params()
        values["snapshot_times"] = list(values["snapshot_times"] or [])
        return RunConfig.from_flat(values)

    # ------------------------------------------------------------ building

    def _model(self, cfg) -> ModelParams:
        if cfg["diffusion"] == "prototype":
            law = Prototype(cfg["m"])
        else:
            law = PurePower(cfg["m"], cfg["coeff"])
        src = Source(cfg["source"], cfg["source_amplitude"], cfg["source_radius"], cfg["source_omega"])
        return ModelParams(cfg["n"], cfg["kappa"], cfg["chi"], law, phi_star=src.sup, R=cfg["R"]), src

    def _moment_config(self, cfg, params: ModelParams):
        m_eff, K_D = blowup_exponent(params.diffusion, cfg["m_bar"])
        try:
            mc = MomentConfig(cfg["n"], m_eff, cfg["epsilon"], cfg["eta"], cfg["lam"], cfg["p"])
            note = ""
        except AnalysisError as exc:
            mc = MomentConfig.default(cfg["n"], m_eff, cfg["epsilon"])
            note = f"requested moment parameters inadmissible ({exc}); using eta={mc.eta:g}, lam={mc.lam:g}"
        return mc, K_D, note

    def _grid(self, cfg, r_star: Optional[float]) -> RadialGrid:
        if cfg["grid"] == "uniform":
            return RadialGrid.uniform(cfg["n"], cfg["R"], cfg["cells"])
        h0 = cfg["h0"]
        if h0 is None:
            h0 = cfg["h0_factor"] * (r_star if r_star is not None else cfg["R"])
        return RadialGrid.geometric(cfg["n"], cfg["R"], cfg["cells"], h0)

    def _initial(self, cfg, params, grid, r_star, u_values):
        if u_values is None and cfg["u_csv"]:
            u_values = load_profile_csv(cfg["u_csv"], grid.centers)
        return build_initial_data(
            params, grid, cfg["mu"], cfg["alpha"], cfg["beta"], r_star=r_star,
            profile_kind=cfg["profile"], w_kind=cfg["w_profile"], v0_level=cfg["v0"],
            u_values=u_values, noise=cfg["noise"], seed=cfg["seed"],
        )

    def _auto_r_star(self, cfg, params, mc, K_D, u_values):
        """Largest r_star passing the smallness conditions, iterating the ||v||_p pilot."""
        if params.kappa != 0:
            raise ModelError("r_star_auto needs kappa = 0")
        mu, a, b, R = cfg["mu"], cfg["alpha"], cfg["beta"], cfg["R"]
        T_cap = 1.0 / (4 * (2 * b + 1))
        K = mu
        r_star = None
        for _ in range(3):
            g = gamma_constants(mu, a, b, mc, R, [K])
            r_star = largest_passing_r_star(R, mu, a, b, mc, g, params.chi, K_D, T_cap)
            grid = self._grid(cfg, r_star)
            data = self._initial(cfg, params, grid, r_star, u_values)
            K_new = lp_norm(grid, initial_state(data, params).v, mc.p)
            if math.isclose(K_new, K, rel_tol=1e-6):
                break
            K = K_new
        return r_star

    # ------------------------------------------------------------ fit

    def fit(self, X=None, y=None):
        """Run the simulation. ``X``, if given, is one row of initial u cell values."""
        cfg = self.to_config().values
        u_values = None
        if X is not None:
            X = check_array(X, ensure_2d=True)
            if X.shape[0] != 1:
                raise ValueError("fit takes a single initial profile (one row)")
            if X.shape[1] != cfg["cells"]:
                raise ValueError(f"X has {X.shape[1]} columns, expected cells={cfg['cells']}")
            u_values = X[0]
        params, src = self._model(cfg)

        analysing = cfg["analysis"] or cfg["r_star_auto"]
        mc = K_D = None
        notes = []
        if analysing:
            try:
                mc, K_D, note = self._moment_config(cfg, params)
                if note:
                    notes.append(note)
            except (ModelError, AnalysisError) as exc:
                if cfg["r_star_auto"]:
                    raise
                notes.append(f"analysis not applicable: {exc}")

        r_star = cfg["r_star"]
        if cfg["r_star_auto"]:
            r_star = self._auto_r_star(cfg, params, mc, K_D, u_values)
        custom = u_values is not None or bool(cfg["u_csv"])
        if not cfg["r_star_auto"] and (custom or cfg["profile"] == "uniform"):
            # only the bump and gaussian shapes are built around a concentration radius
            r_star = None
        grid = self._grid(cfg, r_star)
        data = self._initial(cfg, params, grid, r_star, u_values)
        state0 = initial_state(data, params)

        scale = 1.0
        if cfg["time_unit"] == "collapse":
            radius = (r_star if r_star is not None else cfg["R"]) / 4
            scale = collapse_time(cfg["n"], cfg["chi"], cfg["mu"], radius)
        control = StepControl(
            dt_init=cfg["dt_init"] * scale, dt_min=cfg["dt_min"] * scale, dt_max=cfg["dt_max"] * scale,
            safety=cfg["safety"], u_cap=cfg["u_cap"], u_cap_factor=cfg["u_cap_factor"],
            growth=cfg["growth"], max_rel_change=cfg["max_rel_change"], max_steps=cfg["max_steps"],
        )
        scheme = Scheme(cfg["chemotaxis_flux"], cfg["face_average"], cfg["picard_iterations"], cfg["picard_tol"])
        report = run(
            grid, state0, params, src, control, cfg["t_end"],
            scheme=scheme, cadence=cfg["cadence"] or None, every_steps=cfg["every_steps"],
            snapshot_times=cfg["snapshot_times"], keep_states=cfg["keep_states"] or mc is not None,
        )
        log.info("run finished: %s (%s), %d steps", report.status, report.reason, report.n_steps)

        self.grid_ = grid
        self.params_ = params
        self.source_ = src
        self.initial_data_ = data
        self.r_star_ = r_star
        self.time_scale_ = scale
        self.report_ = report
        self.classification_ = classify(report, params)
        self.analysis_ = {}
        if cfg["analysis"]:
            self.analysis_ = {"applicable": mc is not None, "notes": notes}
            if mc is not None:
                self.analysis_.update(self._analyse(cfg, params, mc, K_D, r_star))
        return self

    def _analyse(self, cfg, params, mc, K_D, r_star) -> dict:
        grid, report = self.grid_, self.report_
        mu, a, b, chi = cfg["mu"], cfg["alpha"], cfg["beta"], params.chi
        states = report.states
        vp = [lp_norm(grid, s.v, mc.p) for s in states]
        gam = gamma_constants(mu, a, b, mc, params.R, vp)
        T_star = empirical_window_time(grid, states, mu, a, b, mc.p, gam.K)
        out = {
            "m_effective": mc.m, "K_D": K_D, "epsilon": mc.epsilon, "eta": mc.eta,
            "lam": mc.lam, "p": mc.p, "xi": mc.xi, "K": gam.K,
            "gamma1": gam.gamma1, "gamma2": gam.gamma2, "gamma3": gam.gamma3,
            "T_star": T_star, "r_star": r_star,
        }
        if r_star is None:
            return out
        hyp = check_blowup_hypotheses(r_star, mu, a, b, mc, gam, chi, K_D, T_star)
        c = riccati_rate(mc, gam, chi, r_star)
        y0 = moment_y(grid, states[0].u, r_star, mc.eta)
        out["hypotheses"] = hyp.as_dict()
        out["riccati_rate"] = c
        out["y0"] = y0
        out["riccati_bound"] = 1.0 / (c * y0) if c * y0 > 0 else math.inf
        residuals = []
        inside = [check_window(grid, s, mu, a, b, mc.p, gam.K).ok and s.t <= T_star for s in states]
        for i in range(len(states) - 1):
            if inside[i] and inside[i + 1] and states[i + 1].t > states[i].t:
                residuals.append(odi_residual(grid, states[i], states[i + 1], r_star, mc, gam, chi, K_D))
        out["odi_samples"] = len(residuals)
        out["odi_holding"] = float(np.mean([r.holds() for r in residuals])) if residuals else math.nan
        out["odi_min_relative_residual"] = min((r.residual / r.scale for r in residuals), default=math.nan)
        return out

    # ------------------------------------------------------------ outputs

    def predict(self, X=None):
        """Verdict for the fitted run, or one verdict per row of initial profiles in X."""
        if X is None:
            check_is_fitted(self, "classification_")
            return np.array([self.classification_.verdict])
        X = check_array(X, ensure_2d=True)
        return np.array([clone(self).fit(row[None, :]).classification_.verdict for row in X])

    def transform(self, X=None):
        """Sampled time series as an array whose columns are ``report_.columns``."""
        check_is_fitted(self, "report_")
        rep = self.report_
        return np.array([[row[c] for c in rep.columns] for row in rep.samples], dtype=float)

    def fit_transform(self, X=None, y=None):
        return self.fit(X).transform()

    def score(self, X=None, y=None):
        """Fraction of the requested horizon that was integrated."""
        check_is_fitted(self, "report_")
        return self.report_.final.t / self.t_end if self.t_end > 0 else 1.0


# ---------------------------------------------------------------- sweeps


def _sweep_cell(base: ChemotaxisSimulator, index: int, replicate: int, overrides: dict) -> dict:
    row = {"cell": index, "replicate": replicate, **overrides}
    est = clone(base).set_params(**overrides)
    if replicate:
        est.set_params(seed=est.seed + replicate)
    try:
        est.fit()
        cl = est.classification_
        row.update(
            regime=cl.regime, verdict=cl.verdict, status=est.report_.status,
            t_final=cl.t_final, t_detect=cl.t_detect, t_estimate=cl.t_estimate,
            sup_u_inf=cl.sup_u_inf, growth=cl.growth, steps=est.report_.n_steps, error="",
        )
    except Exception as exc:  # a failed cell is recorded, the sweep continues
        params = {**base.get_params(), **overrides}
        try:
            regime = regime_label(params["n"], params["kappa"], params["m"])
        except ModelError:
            regime = ""
        row.update(
            regime=regime, verdict="Error", status="Error", t_final=None, t_detect=None,
            t_estimate=None, sup_u_inf=None, growth=None, steps=0, error=f"{type(exc).__name__}: {exc}",
        )
    return row


def sweep(base: ChemotaxisSimulator, cells: list, replicates: int = 1, n_jobs: Optional[int] = None) -> list:
    """Run every (cell, replicate) pair; rows come back in input order whatever n_jobs is."""
    tasks = [(i, r, c) for i, c in enumerate(cells) for r in range(replicates)]
    return Parallel(n_jobs=n_jobs)(delayed(_sweep_cell)(base, i, r, c) for i, r, c in tasks)


PARAM_NAMES = sorted(k for keys in SCHEMA.values() for k in keys)
