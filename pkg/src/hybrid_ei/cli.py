"""Command line entry point: simulate, verify, zeno, compare, sweep.

Exit status: 0 success, 2 config error, 3 runtime error, 4 zeno-guard termination.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from . import artifacts
from .analysis import (
    compare_to_oracle,
    decay_fit,
    zeno_recursion_oracle,
    zeno_report,
)
from .certificates import CertificateError, CertificateReport, certify, select_parameters
from .config import ConfigError, RunConfig, convert_value, parse_config, validate
from .controller import FEEDBACK, IMPULSE, SimResult, run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ZENO = 0, 2, 3, 4


@dataclass(frozen=True)
class RunArtifacts:
    trajectory_csv: Path
    events_csv: Path
    report_json: Path
    summary_json: Path
    plot_svg: Optional[Path] = None
    result: Optional[SimResult] = None


@dataclass(frozen=True)
class VerifyOutcome:
    configured: CertificateReport
    selected: CertificateReport

    def to_dict(self) -> dict:
        return {"configured": self.configured.to_dict(), "selected": self.selected.to_dict()}


def simulate(cfg: RunConfig, mode: Optional[str] = None, horizon: Optional[float] = None) -> SimResult:
    mode = mode or cfg.mode
    # open loop means u1 = beta = 0
    model = cfg.model_obj(impulses=mode in ("impulsive_only", "hybrid"))
    return run_simulation(model, cfg.rule(), cfg.controller_mode(mode), cfg.solver(horizon),
                          phi=cfg.phi, zeno_cap=cfg.zeno_cap)


def run_summary(cfg: RunConfig, sim: SimResult) -> dict:
    fit = decay_fit(sim.trajectory, sim.t0)
    return {
        "model": cfg.model,
        "mode": sim.mode.kind.value,
        "h": sim.mode.h,
        "termination": sim.termination,
        "message": sim.message,
        "final_time": sim.final_time,
        "events": len(sim.events),
        "feedback_updates": sim.events.count(FEEDBACK),
        "impulses": sim.events.count(IMPULSE),
        "samples": len(sim.trajectory),
        "lambda_fit": fit.lambda_fit,
        "random_free": cfg.random_free,
        "constants": {"b": cfg.b, "k": cfg.k, "r": cfg.r, "phi": cfg.phi, "beta": cfg.beta,
                      "sigma": cfg.trigger_sigma, "dt": cfg.dt, "T": cfg.T, "tol_event": cfg.tol_event},
    }


def _configured_report(cfg: RunConfig, mode: str = "full") -> CertificateReport:
    rho = (1.0 + cfg.beta) ** 2
    return certify(cfg.b, cfg.k, cfg.q, cfg.h, rho, cfg.sigma0, mode)


def simulate_command(cfg: RunConfig, out_dir: str | Path = ".") -> RunArtifacts:
    out = Path(out_dir)
    sim = simulate(cfg)
    cbar_mode = "impulsive_only" if cfg.mode == "impulsive_only" else "full"
    try:
        report = _configured_report(cfg, cbar_mode).to_dict()
    except (CertificateError, ValueError) as exc:
        report = {"error": str(exc)}
    paths = dict(
        trajectory_csv=artifacts.write_atomic(out / cfg.trajectory_csv, artifacts.trajectory_csv(sim)),
        events_csv=artifacts.write_atomic(out / cfg.events_csv, artifacts.events_csv(sim)),
        report_json=artifacts.write_atomic(out / cfg.report_json,
                                           artifacts.to_json(report)),
        summary_json=artifacts.write_atomic(out / cfg.summary_json, artifacts.to_json(run_summary(cfg, sim))),
    )
    svg = None
    if cfg.plot_svg:
        svg = artifacts.write_atomic(out / cfg.plot_svg, artifacts.svg_chart(sim, title=cfg.mode))
    return RunArtifacts(plot_svg=svg, result=sim, **paths)


def verify_command(cfg: RunConfig, out_dir: Optional[str | Path] = None) -> VerifyOutcome:
    _, selected = select_parameters(cfg.b, cfg.k, target_h=cfg.h, sigma0=cfg.sigma0, r=cfg.r)
    outcome = VerifyOutcome(configured=_configured_report(cfg), selected=selected)
    if out_dir is not None:
        artifacts.write_atomic(Path(out_dir) / cfg.report_json, artifacts.to_json(outcome.to_dict()))
    return outcome


def zeno_command(cfg: RunConfig, out_dir: Optional[str | Path] = None):
    sim = simulate(cfg, mode="event_only")
    report = zeno_report(sim, tol=cfg.tol_event)
    t_max = min(cfg.T, cfg.t0 + cfg.r)
    payload = report.to_dict()
    if cfg.b < 0 and cfg.k < 0 and cfg.phi > 0 and cfg.chi_exponent == cfg.alpha1_exponent == 2:
        oracle = zeno_recursion_oracle(cfg.phi, cfg.b, cfg.k, cfg.trigger_sigma, t_max, t0=cfg.t0)
        dev = compare_to_oracle(sim, oracle, n=10)
        payload["oracle"] = {
            "accumulation_time": oracle.accumulation_time,
            "first_events": oracle.events[:10],
            "max_time_dev": dev.max_time_dev,
            "max_state_dev": dev.max_state_dev,
            "n_compared": dev.n_compared,
        }
    if out_dir is not None:
        out = Path(out_dir)
        artifacts.write_atomic(out / cfg.events_csv, artifacts.events_csv(sim))
        artifacts.write_atomic(out / cfg.trajectory_csv, artifacts.trajectory_csv(sim))
        artifacts.write_atomic(out / cfg.summary_json, artifacts.to_json(payload))
    return report, payload


COMPARE_HEADER = ["mode", "feedback_updates", "impulses", "total_updates", "lambda_fit", "termination"]


def compare_command(cfg: RunConfig, out_dir: Optional[str | Path] = None) -> list[list]:
    rows = []
    for mode in ("hybrid", "impulsive_only"):
        sim = simulate(cfg, mode=mode)
        fit = decay_fit(sim.trajectory, sim.t0)
        rows.append([mode, sim.events.count(FEEDBACK), sim.events.count(IMPULSE), len(sim.events),
                     fit.lambda_fit, sim.termination])
    if out_dir is not None:
        artifacts.write_atomic(Path(out_dir) / "compare.csv", artifacts.table_csv(COMPARE_HEADER, rows))
    return rows


def _sweep_one(cfg: RunConfig) -> list:
    sim = simulate(cfg)
    s = run_summary(cfg, sim)
    return [s["termination"], s["events"], s["feedback_updates"], s["impulses"], s["lambda_fit"]]


def sweep_command(cfg: RunConfig, param: str, values: Sequence[str], out_dir: str | Path = ".",
                  jobs: int = 1) -> list[list]:
    """Run ``simulate`` once per value of ``param``; rows keep the order of ``values``."""
    if param not in cfg.__dataclass_fields__ or param == "random_free":
        raise ConfigError(f"unknown key {param!r}", key=param)
    configs = []
    for v in values:
        c = replace(cfg, **{param: convert_value(param, v)})
        validate(c)
        configs.append(c)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, configs))
    else:
        results = [_sweep_one(c) for c in configs]
    rows = [[param, v] + res for v, res in zip(values, results)]
    header = ["param", "value", "termination", "events", "feedback_updates", "impulses", "lambda_fit"]
    artifacts.write_atomic(Path(out_dir) / "sweep.csv", artifacts.table_csv(header, rows))
    return rows


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybrid-ei", description="Hybrid event-triggered/impulsive control of delay systems")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify", "zeno", "compare", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--quiet", action="store_true")
        if name == "sweep":
            sp.add_argument("--param", required=True)
            sp.add_argument("--values", required=True, help="comma-separated values")
            sp.add_argument("--jobs", type=int, default=1)
    return p


def _error(kind: str, message: str, **extra) -> None:
    rec = {"error": kind, "message": message}
    rec.update(extra)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    say = (lambda *a: None) if args.quiet else print
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, args.set)
    except ConfigError as exc:
        print(json.dumps(exc.record(), sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        _error("config", str(exc))
        return EXIT_CONFIG

    try:
        if args.command == "simulate":
            arts = simulate_command(cfg, args.out)
            sim = arts.result
            say(f"{cfg.mode}: {len(sim.events)} events, termination={sim.termination}, "
                f"t_final={sim.final_time:.6g} -> {arts.trajectory_csv}")
            if sim.zeno_flagged:
                _error("zeno_guard", sim.message)
                return EXIT_ZENO
        elif args.command == "verify":
            outcome = verify_command(cfg, args.out)
            c, s = outcome.configured, outcome.selected
            say(f"h_max={c.h_max:.6g} q*={c.q_star:.6g} q1={c.q1:.6g} q2={c.q2:.6g} "
                f"rho in ({c.rho_lo:.6g}, {c.rho_hi:.6g})")
            for line in c.narrative:
                say("configured: " + line)
            say(f"selected: h={s.h:.6g} rho={s.rho:.6g} beta={s.beta:.6g} q={s.q:.6g}")
            for line in s.narrative:
                say("selected: " + line)
        elif args.command == "zeno":
            report, payload = zeno_command(cfg, args.out)
            say(f"verdict={report.verdict} events={report.event_count} "
                f"last_event={report.last_event_time:.10g} guard={report.guard_tripped}")
        elif args.command == "compare":
            rows = compare_command(cfg, args.out)
            say(",".join(COMPARE_HEADER))
            for row in rows:
                say(",".join(artifacts.fmt(v) if isinstance(v, float) else str(v) for v in row))
        elif args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            rows = sweep_command(cfg, args.param, values, args.out, args.jobs)
            for row in rows:
                say(",".join(str(v) for v in row))
    except ConfigError as exc:
        print(json.dumps(exc.record(), sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime error record
        _error("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
