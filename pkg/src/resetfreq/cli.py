"""Command-line front end: config ingestion, analysis commands, CSV output.

Commands: ``bode``, ``predict``, ``simulate``, ``validate``, ``tune``.
Configs are YAML documents; frequencies there are Hz, output angles are in
degrees, times in seconds.  Exit codes: 0 ok, 2 config error, 3 analytic
failure, 4 simulation failure.
"""

import argparse
import csv
import math
import os
import sys

import numpy as np
import yaml

from . import closedloop, elements, harmonics, ltisys, metrics
from .errors import (AnalyticError, ConfigError, ResetFreqError,
                     SimulationError)
from .sim import (SignalSpec, SimOptions, simulate,
                  write_events_csv, write_signals_csv)

EXIT_CONFIG = 2
EXIT_ANALYTIC = 3
EXIT_SIMULATION = 4

_SCHEMA = {
    "plant": {"preset", "num", "den"},
    "controller": {"pid", "lead2", "num", "den"},
    "reset": {"kind", "gamma", "wr_hz", "alpha", "wf_hz"},
    "loop": {"k", "k_num", "k_den", "tau", "tau_mode"},
    "analysis": {"band_hz", "points", "n_max", "methods"},
    "sim": {"steps_per_period", "max_periods", "ss_tol", "event_tol"},
}
_PID_KEYS = {"kp", "wi_hz", "wc_hz", "beta"}
_LEAD2_KEYS = {"kp", "wc_hz", "beta"}


def _check_keys(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


class ResolvedConfig:
    """A parsed config: the LoopConfig plus analysis/sim settings."""

    def __init__(self, loop_cfg, tau_mode, analysis, sim_options, effective):
        self.loop = loop_cfg
        self.tau_mode = tau_mode            # None when a literal tau is set
        self.analysis = analysis
        self.sim_options = sim_options
        self.effective = effective          # dict, dumpable as YAML

    def loop_at(self, freq_hz):
        """LoopConfig with the tau window resolved for one frequency."""
        if self.tau_mode is None:
            return self.loop
        w = 2.0 * math.pi * freq_hz
        return self.loop.with_tau(
            elements.resolve_tau(self.tau_mode, wc_hz=self.loop.wc_hz, w=w))


def load_config(path, tau_override=None):
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _check_keys(raw, set(_SCHEMA), "config")
    for section, allowed in _SCHEMA.items():
        if section in raw and isinstance(raw[section], dict):
            _check_keys(raw[section], allowed, section)
    return _resolve(raw, tau_override)


def _resolve(raw, tau_override=None):
    plant_raw = raw.get("plant", {"preset": "paper-stage"})
    if "preset" in plant_raw:
        if plant_raw["preset"] != "paper-stage":
            raise ConfigError(f"unknown plant preset {plant_raw['preset']!r}")
        plant = elements.stage_plant()
    else:
        try:
            plant = ltisys.tf(plant_raw["num"], plant_raw["den"])
        except KeyError as exc:
            raise ConfigError(f"plant needs num/den or preset: {exc}")

    reset_raw = raw.get("reset")
    if not reset_raw or "kind" not in reset_raw:
        raise ConfigError("reset section with a 'kind' is required")
    kind = reset_raw["kind"]
    gamma = float(reset_raw.get("gamma", 0.0))
    if kind == "gci":
        R = elements.make_gci(gamma)
    elif kind == "gfore":
        R = elements.make_gfore(float(reset_raw["wr_hz"]), gamma)
    elif kind == "cglp":
        tuning = elements.CgLpTuning(
            gamma=gamma, wr_hz=float(reset_raw["wr_hz"]),
            alpha=float(reset_raw.get("alpha", 1.0)),
            beta=2.0,  # placeholder; the PID owns the actual lead ratio
            wf_hz=float(reset_raw.get("wf_hz", 500.0)))
        R = elements.make_cglp(tuning)
    else:
        raise ConfigError(f"unknown reset kind {kind!r}")

    ctl_raw = raw.get("controller", {})
    wc_hz = None
    tuned_kp = None
    if "pid" in ctl_raw:
        pid = dict(ctl_raw["pid"])
        _check_keys(pid, _PID_KEYS, "controller.pid")
        wc_hz = float(pid.get("wc_hz", 100.0))
        kp = pid.get("kp")
        C = elements.make_pid(1.0 if kp is None else float(kp),
                              float(pid.get("wi_hz", 10.0)), wc_hz,
                              float(pid.get("beta", 2.0)))
    elif "lead2" in ctl_raw:
        lead = dict(ctl_raw["lead2"])
        _check_keys(lead, _LEAD2_KEYS, "controller.lead2")
        wc_hz = float(lead.get("wc_hz", 100.0))
        kp = lead.get("kp")
        C = elements.make_lead_squared(1.0 if kp is None else float(kp),
                                       wc_hz, float(lead.get("beta", 2.0)))
    elif "num" in ctl_raw:
        kp = 1.0
        C = ltisys.tf(ctl_raw["num"], ctl_raw["den"])
    else:
        kp = 1.0
        C = ltisys.gain(1.0)

    loop_raw = raw.get("loop", {})
    if "k_num" in loop_raw:
        K = ltisys.tf(loop_raw["k_num"], loop_raw["k_den"])
    else:
        K = ltisys.gain(float(loop_raw.get("k", 1.0)))

    cfg = elements.LoopConfig(K=K, R=R, C=C, P=plant, tau=0.0, wc_hz=wc_hz)
    if kp is None:
        if wc_hz is None:
            raise ConfigError("gain tuning needs the bandwidth wc_hz")
        tuned_kp = elements.tune_gain(cfg, wc_hz)
        cfg = elements.apply_gain(cfg, tuned_kp)
    tau_mode = None
    tau_raw = tau_override if tau_override is not None \
        else loop_raw.get("tau_mode", loop_raw.get("tau", 0.0))
    if isinstance(tau_raw, str):
        if tau_raw not in ("none", "optimal", "full"):
            raise ConfigError(f"unknown tau mode {tau_raw!r}")
        if tau_raw == "none":
            cfg = cfg.with_tau(0.0)
        elif tau_raw == "optimal":
            cfg = cfg.with_tau(elements.resolve_tau("optimal",
                                                    wc_hz=cfg.wc_hz))
        else:
            tau_mode = "full"       # resolved per analyzed frequency
    else:
        cfg = cfg.with_tau(float(tau_raw))

    ana_raw = raw.get("analysis", {})
    analysis = {
        "band_hz": [float(v) for v in ana_raw.get("band_hz", [1.0, 100.0])],
        "points": int(ana_raw.get("points", 15)),
        "n_max": int(ana_raw.get("n_max", 1000)),
        "methods": list(ana_raw.get("methods", list(metrics.METHODS))),
    }
    for m in analysis["methods"]:
        if m not in metrics.METHODS:
            raise ConfigError(f"unknown method {m!r}")

    sim_raw = raw.get("sim", {})
    sim_options = SimOptions(
        steps_per_period=int(sim_raw.get("steps_per_period", 2000)),
        max_periods=int(sim_raw.get("max_periods", 200)),
        ss_tol=float(sim_raw.get("ss_tol", 1e-8)),
        event_tol=sim_raw.get("event_tol"))

    effective = {k: v for k, v in raw.items()}
    if tuned_kp is not None:
        effective = dict(effective)
        ctl = dict(effective.get("controller", {}))
        sub = "pid" if "pid" in ctl else "lead2"
        stage = dict(ctl[sub])
        stage["kp"] = float(tuned_kp)
        ctl[sub] = stage
        effective["controller"] = ctl
    return ResolvedConfig(cfg, tau_mode, analysis, sim_options, effective)


def _dump_config(resolved, path):
    with open(path, "w") as fh:
        yaml.safe_dump(resolved.effective, fh, sort_keys=False)


def _db(x):
    return 20.0 * math.log10(abs(x)) if abs(x) > 0 else -math.inf


def _deg(x):
    return math.degrees(np.angle(x))


def cmd_bode(args):
    resolved = load_config(args.config)
    cfg = resolved.loop
    band = args.band or resolved.analysis["band_hz"]
    points = args.points or max(resolved.analysis["points"], 200)
    freqs = np.logspace(math.log10(band[0]), math.log10(band[1]), points)
    bls = cfg.bls_open_loop()
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "freq_hz",
            "plant_db", "plant_deg",
            "rl_db", "rl_deg",
            "rdf1_db", "rdf1_deg",
            "bls_loop_db", "bls_loop_deg",
            "df_loop_db", "df_loop_deg",
        ])
        for f in freqs:
            w = 2.0 * math.pi * f
            p = ltisys.freq_response_scalar(cfg.P, w)
            rl = ltisys.freq_response_scalar(cfg.R.base, w)
            rdf = harmonics.hosidf(cfg.R, w, 1)
            lb = ltisys.freq_response_scalar(bls, w)
            ldf = elements.df_open_loop_response(cfg, w)
            writer.writerow([f"{f:.8g}"] + [
                f"{v:.8g}" for v in (
                    _db(p), _deg(p), _db(rl), _deg(rl), _db(rdf), _deg(rdf),
                    _db(lb), _deg(lb), _db(ldf), _deg(ldf))])
    if args.dump_config:
        _dump_config(resolved, args.dump_config)
    return 0


def cmd_tune(args):
    resolved = load_config(args.config)
    cfg = resolved.loop
    report = elements.phase_margin_bls(cfg)
    lines = [
        ("pm_bls_deg", report.pm_bls_deg),
        ("crossover_bls_hz", report.crossover_bls_hz),
        ("pm_df_deg", report.pm_df_deg),
        ("crossover_df_hz", report.crossover_df_hz),
        ("phi_rc_deg", report.phi_rc_deg),
    ]
    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    try:
        writer = csv.writer(out)
        writer.writerow(["quantity", "value"])
        for name, value in lines:
            writer.writerow([name, f"{value:.8g}"])
    finally:
        if args.out is not None:
            out.close()
    if args.dump_config:
        _dump_config(resolved, args.dump_config)
    return 0


def cmd_predict(args):
    resolved = load_config(args.config, tau_override=args.tau)
    cfg = resolved.loop_at(args.freq)
    w = 2.0 * math.pi * args.freq
    n_max = args.n_max or resolved.analysis["n_max"]
    method = args.method
    report = None
    if method == "delta-cl":
        result = closedloop.delta_cl(cfg, w, n_max, r_i=args.amplitude)
        spec = result.E
        report = closedloop.assumption_check(cfg, w, result)
    else:
        spec = closedloop.predicted_error_spectrum(cfg, w, n_max, method,
                                                   r_i=args.amplitude)
    period = 2.0 * math.pi / w
    t = np.linspace(0.0, period, args.samples + 1)
    e_pred = closedloop.time_reconstruct(spec, w, t)
    with open(f"{args.out}_time.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "e_pred"])
        for k in range(t.size):
            writer.writerow([f"{t[k]:.10g}", f"{e_pred[k]:.10g}"])
    with open(f"{args.out}_harmonics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "magnitude", "phase_deg"])
        for n in spec.orders():
            v = spec.amplitude(n)
            writer.writerow([n, f"{abs(v):.10g}", f"{_deg(v):.10g}"])
    with open(f"{args.out}_assumptions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["flag", "value"])
        writer.writerow(["method", method])
        if report is not None:
            writer.writerow(["reset_instant_exists", report.ass3_ok])
            writer.writerow(["arcsine_argument",
                             f"{report.arcsine_argument:.8g}"])
            writer.writerow(["phi_rad", f"{report.phi:.8g}"])
            writer.writerow(["phi_small", report.phi_small])
            writer.writerow(["crossing_direction_ok", report.direction_ok])
    if args.dump_config:
        _dump_config(resolved, args.dump_config)
    return 0


def cmd_simulate(args):
    resolved = load_config(args.config, tau_override=args.tau)
    cfg = resolved.loop_at(args.freq)
    res = simulate(cfg, SignalSpec.sine(args.amplitude, args.freq),
                   resolved.sim_options)
    if not res.converged:
        raise SimulationError("simulation did not reach steady state")
    write_signals_csv(res, f"{args.out}_signals.csv")
    write_events_csv(res, f"{args.out}_events.csv")
    if args.dump_config:
        _dump_config(resolved, args.dump_config)
    return 0


def cmd_validate(args):
    any_sim_failure = False
    orderings_ok = True
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    for path in args.configs:
        resolved = load_config(path)
        tau_mode = args.tau
        ana = resolved.analysis
        report = metrics.sweep(resolved.loop, tuple(ana["band_hz"]),
                               ana["points"], tuple(ana["methods"]),
                               tau_mode, ana["n_max"],
                               options=resolved.sim_options)
        stem = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        out = f"{args.out}/{stem}_sweep.csv" if args.out else None
        if out:
            metrics.write_sweep_csv(report, out)
        if report.failures():
            any_sim_failure = True
        if set(ana["methods"]) >= {"delta-cl", "cl-df", "df"}:
            avg = {m: report.aggregate(m, "ise")["avg"]
                   for m in ("delta-cl", "cl-df", "df")}
            row_ok = avg["delta-cl"] < avg["cl-df"] < avg["df"]
            orderings_ok = orderings_ok and row_ok
            print(f"{stem}: avg ISE delta-cl={avg['delta-cl']:.4g} "
                  f"cl-df={avg['cl-df']:.4g} df={avg['df']:.4g} "
                  f"ordering_ok={row_ok}")
    if any_sim_failure:
        raise SimulationError("one or more sweep points failed to simulate")
    return 0 if orderings_ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="resetfreq",
        description="frequency-domain analysis of SISO reset control loops")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--dump-config", default=None,
                       help="write the effective config (with tuned gain)")

    p = sub.add_parser("bode", help="emit element/loop frequency responses")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--band", nargs=2, type=float, default=None)
    p.add_argument("--points", type=int, default=None)
    add_common(p)
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("predict", help="analytical error prediction")
    p.add_argument("config")
    p.add_argument("--freq", type=float, required=True, help="Hz")
    p.add_argument("--method", choices=list(metrics.METHODS),
                   default="delta-cl")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output file prefix")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--tau", default=None,
                   help="override: none|optimal|full or seconds")
    add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="raw hybrid simulation export")
    p.add_argument("config")
    p.add_argument("--freq", type=float, required=True, help="Hz")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output file prefix")
    p.add_argument("--tau", default=None)
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="sweep predictors vs simulation")
    p.add_argument("configs", nargs="*")
    p.add_argument("--tau", choices=list(metrics.TAU_MODES),
                   default="optimal")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("tune", help="gain tuning and phase margin report")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    add_common(p)
    p.set_defaults(func=cmd_tune)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    tau = getattr(args, "tau", None)
    if tau is not None and args.command in ("predict", "simulate"):
        if tau not in ("none", "optimal", "full"):
            try:
                args.tau = float(tau)
            except ValueError:
                print(f"reason=config error=unknown tau {tau!r}",
                      file=sys.stderr)
                return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, yaml.YAMLError, KeyError) as exc:
        print(f"reason=config error={exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AnalyticError as exc:
        kind = "convergence" if "converge" in str(exc).lower() \
            or "stable" in str(exc).lower() else "analytic"
        print(f"reason={kind} error={exc}", file=sys.stderr)
        return EXIT_ANALYTIC
    except SimulationError as exc:
        print(f"reason=simulation error={exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except ResetFreqError as exc:
        print(f"reason=error error={exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
