"""Time loops, convergence tables, adaptive stepping and G comparisons."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import __version__
from .config import Adaptive, RunConfig
from .diagnostics import DiagRecord, audit_monotone, needs_history, record
from .errors import ConfigError, GSAVError, RunFailed, StallError
from .initial import ManufacturedAC, make_initial
from .io import DiagWriter, write_manifest, write_snapshot
from .newton import NewtonConfig
from .schemes import SchemeState, init_state, step

OUTPUT_ROOT_ENV = "GSAV_OUTPUT_ROOT"


@dataclass
class RunResult:
    state: SchemeState
    records: list[DiagRecord] = field(default_factory=list)
    out_dir: Path | None = None
    accepted: int = 0
    rejected: int = 0
    xi_max_dev: float = 0.0

    @property
    def modified_energy(self) -> list[float]:
        return [r.E_modified for r in self.records]

    @property
    def original_energy(self) -> list[float]:
        return [r.E_original for r in self.records]


def output_dir(cfg: RunConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    return root / str(cfg.section("output")["dir"])


def _setup(cfg: RunConfig):
    ctx = cfg.context()
    model = cfg.model
    init = cfg.section("initial")
    kind = str(init["kind"])
    extra = {k: float(init[k]) for k in ("mean", "amp") if k in init}
    phi0 = make_initial(kind, cfg.grid, cfg.seed, **extra)
    forcing = ManufacturedAC(ctx, model) if kind == "manufactured" else None
    return ctx, model, phi0, forcing


def fixed_steps(T: float, dt: float) -> int:
    n = round(T / dt)
    if abs(n * dt - T) > 1e-9 * max(T, dt):
        raise ConfigError(f"dt={dt} does not divide T={T}")
    return n


@dataclass(frozen=True)
class AdaptDecision:
    dt: float
    accept: bool
    error: float


def error_indicator(prev: SchemeState, trial: SchemeState) -> float:
    """Relative distance of ``trial`` from the linear extrapolation of ``prev``.

    The predictor ``φⁿ + (δt/δt_prev)(φⁿ - φⁿ⁻¹)`` reduces to ``2φⁿ - φⁿ⁻¹``
    at constant steps.  Returns ``nan`` when ``prev`` has no history.
    """
    if prev.phi_prev is None or prev.dt is None:
        return math.nan
    pred = prev.phi + (trial.dt / prev.dt) * (prev.phi - prev.phi_prev)
    return float(np.linalg.norm(trial.phi - pred) / max(np.linalg.norm(trial.phi), 1e-14))


def adapt_dt(prev: SchemeState, trial: SchemeState, tol: float, rho: float, bounds) -> AdaptDecision:
    """Accept/reject ``trial`` and propose the next step size.

    ``δt_new = clamp(ρ·sqrt(tol/e)·δt, δt_min, δt_max)``; the step is
    rejected when ``e > tol``.  Without history the trial is accepted and the
    step size kept.
    """
    if not tol > 0 or not 0 < rho <= 1:
        raise ConfigError("need tol > 0 and 0 < rho <= 1")
    lo, hi = bounds
    dt = trial.dt
    e = error_indicator(prev, trial)
    if math.isnan(e):
        return AdaptDecision(min(max(dt, lo), hi), True, e)
    grow = math.inf if e == 0.0 else rho * math.sqrt(tol / e)
    return AdaptDecision(min(max(grow * dt, lo), hi), e <= tol, e)


def simulate(
    cfg: RunConfig,
    out_dir: Path | None = None,
    diagnostics: bool = True,
    newton: NewtonConfig | None = None,
) -> RunResult:
    """Run ``cfg`` to ``T``; write ``diag.csv``/snapshots/manifest when ``out_dir`` is given."""
    ctx, model, phi0, forcing = _setup(cfg)
    gs, kind, grid = cfg.g_list, cfg.kind, cfg.grid
    out = cfg.section("output")
    diag_every, snap_every = int(out["diag_every"]), int(out["snapshot_every"])
    state = init_state(ctx, model, gs, phi0)
    result = RunResult(state, out_dir=out_dir)
    writer = None
    manifest = {
        "config": cfg.raw,
        "seed": cfg.seed,
        "scheme": kind.label,
        "g": [g.spec() for g in gs],
        "version": __version__,
        "rng": "numpy Philox (counter-based, 64-bit key)",
        "status": "running",
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "snapshots").mkdir(exist_ok=True)
        write_manifest(out_dir / "run_manifest.json", manifest)
        writer = DiagWriter(out_dir / "diag.csv", model.n_components, len(gs))

    def emit(st, final=False):
        if diagnostics and (st.step % diag_every == 0 or final):
            rec = record(st, model, gs, kind, ctx)
            result.records.append(rec)
            if writer is not None:
                writer.write(rec)
        if out_dir is not None and snap_every and (st.step % snap_every == 0 or final):
            for c, comp in enumerate(st.phi):
                write_snapshot(out_dir / "snapshots" / f"snap_{st.step:07d}_c{c}.bin", grid, comp, st.t, c)

    def track_xi(st):
        # The startup step of a two-level scheme is first order; leave it out.
        if st.xi_last is not None and not (kind.two_level and st.step == 1):
            result.xi_max_dev = max(result.xi_max_dev, float(np.max(np.abs(st.xi_last - 1.0))))

    def advance(st, dt):
        try:
            return step(st, model, gs, ctx, kind, dt, forcing=forcing, newton=newton)
        except (GSAVError, ArithmeticError, ValueError) as exc:
            raise RunFailed(f"step {st.step + 1} (t={st.t:.6g}): {type(exc).__name__}: {exc}", st.step + 1, exc) from exc

    T = cfg.T
    try:
        emit(state, final=T == 0)
        adaptive = cfg.adaptive
        if T == 0:
            pass
        elif adaptive is None:
            dt = cfg.dt
            n = fixed_steps(T, dt)
            for k in range(1, n + 1):
                state = advance(state, dt)
                state.t = k * dt
                track_xi(state)
                result.accepted += 1
                emit(state, final=k == n)
        else:
            state = _adaptive_loop(state, cfg.dt, T, adaptive, advance, track_xi, emit, result)
        manifest["status"] = "ok"
    except GSAVError as exc:
        manifest["status"] = f"failed: {exc}"
        raise
    finally:
        if writer is not None:
            writer.close()
            manifest.update(steps=state.step, t_final=state.t, accepted=result.accepted, rejected=result.rejected)
            write_manifest(out_dir / "run_manifest.json", manifest)
    result.state = state
    return result


def _adaptive_loop(state, dt0, T, ad: Adaptive, advance, track_xi, emit, result):
    dt = min(max(dt0, ad.dt_min), ad.dt_max)
    stalls = 0
    end = T * (1.0 - 1e-12)
    while state.t < end:
        h = min(dt, T - state.t)
        trial = advance(state, h)
        dec = adapt_dt(state, trial, ad.tol, ad.rho, (ad.dt_min, ad.dt_max))
        if not dec.accept:
            result.rejected += 1
            if h <= ad.dt_min * (1.0 + 1e-12):
                stalls += 1
                if stalls >= 10:
                    raise StallError(f"error {dec.error:.3e} > tol at dt_min={ad.dt_min} (t={state.t:.6g})")
            dt = dec.dt
            continue
        stalls = 0
        state = trial
        dt = dec.dt
        track_xi(state)
        result.accepted += 1
        emit(state, final=state.t >= end)
    return state


def run(cfg: RunConfig, out_dir: Path | None = None) -> RunResult:
    """Run with file output under ``$GSAV_OUTPUT_ROOT/<output.dir>`` (or ``out_dir``)."""
    return simulate(cfg, out_dir=out_dir or output_dir(cfg))


@dataclass(frozen=True)
class ConvergenceRow:
    dt: float
    error: float
    order: float | None
    xi_max_dev: float


def _check_ladder(dt_list, T):
    dts = [float(d) for d in dt_list]
    if not dts:
        raise ConfigError("empty dt list")
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ConfigError("dt list must be strictly decreasing")
    for d in dts:
        fixed_steps(T, d)
    return dts


def measure_convergence(cfg: RunConfig, dt_list, reference: str = "exact") -> list[ConvergenceRow]:
    """L∞ error of φ(T) for each step size and the observed orders.

    ``reference="exact"`` compares with the manufactured solution (the
    config's initial kind must be ``manufactured``); ``"fine"`` compares with
    a run at a quarter of the smallest step.
    """
    T = cfg.T
    dts = _check_ladder(dt_list, T)
    if reference == "exact":
        if cfg.section("initial")["kind"] != "manufactured":
            raise ConfigError("exact reference needs initial.kind = 'manufactured'")
        ref = ManufacturedAC.exact_on(cfg.grid, T)[None]
    elif reference == "fine":
        ref = simulate(cfg.with_overrides({"time.dt": dts[-1] / 4}), diagnostics=False).state.phi
    else:
        raise ConfigError(f"unknown reference {reference!r}")
    runs = [simulate(cfg.with_overrides({"time.dt": d}), diagnostics=False) for d in dts]
    errors = [float(np.max(np.abs(r.state.phi - ref))) for r in runs]
    rows = []
    for i, (d, e, r) in enumerate(zip(dts, errors, runs)):
        order = None
        if i > 0 and e > 0 and errors[i - 1] > 0:
            order = math.log(errors[i - 1] / e) / math.log(dts[i - 1] / d)
        rows.append(ConvergenceRow(d, e, order, r.xi_max_dev))
    return rows


@dataclass
class GComparison:
    specs: list[str]
    pairwise_l2: dict
    energy_spread: float
    monotone: dict
    results: dict = field(default_factory=dict, repr=False)

    @property
    def max_pairwise(self) -> float:
        return max(self.pairwise_l2.values(), default=0.0)


def compare_g_variants(cfg: RunConfig, g_list) -> GComparison:
    """Run ``cfg`` once per G spec (shared seed and δt) and compare the outcomes."""
    results = {}
    for spec in g_list:
        results[spec] = simulate(cfg.with_overrides({"scheme.g": spec}))
    pairs = {}
    for a, b in combinations(g_list, 2):
        pa, pb = results[a].state.phi, results[b].state.phi
        denom = max(np.linalg.norm(pa), np.linalg.norm(pb), 1e-300)
        pairs[(a, b)] = float(np.linalg.norm(pa - pb) / denom)
    E = np.array([results[s].original_energy for s in g_list])
    spread = float(np.max((E.max(axis=0) - E.min(axis=0)) / np.maximum(np.abs(E).max(axis=0), 1e-300)))
    kind = cfg.kind
    mono = {}
    for s in g_list:
        series = results[s].modified_energy
        if needs_history(kind):
            series = series[1:]
        mono[s] = len(series) < 2 or not audit_monotone(series, 1e-9)
    return GComparison(list(g_list), pairs, spread, mono, results)
