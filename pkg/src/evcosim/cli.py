"""Command-line face of the testbed.

Subcommands: ``run`` a scenario file, ``gen-fleet`` to sample a day of
charging demand, ``attack-demo`` for the canned demonstration, ``plot``
to render telemetry, and ``app`` to drive a live CMS over HTTP.

Exit codes: 0 success, 1 run or request failure, 2 configuration error
(argparse uses 2 for usage errors as well).  Set ``EVCOSIM_LOG`` to
DEBUG/INFO/WARNING to control diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

log = logging.getLogger("evcosim")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _print_summary(result) -> None:
    print(f"scenario      {result.scenario_name}")
    print(f"simulated     {result.duration_s:g} s at dt={result.dt_s:g} s "
          f"({result.steps} steps, {result.wall_seconds:.2f} s wall)")
    print(f"peak |f-60|   {result.peak_abs_dev_hz:.4f} Hz "
          f"(range {result.f_min_hz:.4f} .. {result.f_max_hz:.4f})")
    if result.trips:
        first = result.trips[0]
        print(f"relay trips   {len(result.trips)}, first g{first.machine + 1} "
              f"{first.side} at t={first.t:.3f} s "
              f"({first.threshold_hz:g} Hz)")
    else:
        print("relay trips   none")
    print(f"blackout      {'yes' if result.blackout else 'no'}")
    if result.attack_edges:
        print(f"attack edges  {result.attack_edges}")
    if result.app_latency_count:
        print(f"app latency   mean {result.app_latency_mean_s * 1000:.2f} ms, "
              f"max {result.app_latency_max_s * 1000:.2f} ms "
              f"over {result.app_latency_count} starts")
    if result.divergence is not None:
        d = result.divergence
        print(f"divergence    flagged at t={d.t_s:.3f} s "
              f"(onset {d.onset_s:.3f} s, worst {d.worst_mw:.1f} MW, "
              f"buses {list(d.buses)})")
    if result.mode == "realtime":
        print(f"pacing        {result.pacing_overruns} overruns, "
              f"max lag {result.pacing_max_lag_s * 1000:.2f} ms")
    print(f"artifacts     {os.path.dirname(result.files['telemetry'])}")


def _cmd_run(args) -> int:
    from .harness import ScenarioError, load_scenario, run_scenario

    try:
        scenario = load_scenario(args.scenario)
    except FileNotFoundError:
        print(f"error: scenario file not found: {args.scenario}",
              file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as exc:
        print(f"error: invalid scenario ({len(exc.violations)} problems):",
              file=sys.stderr)
        for violation in exc.violations:
            print(f"  - {violation}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or scenario.name + "-out"
    try:
        if scenario.grid.mode == "realtime":
            from .net import run_realtime

            result = run_realtime(scenario, out)
        else:
            result = run_scenario(scenario, out)
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        log.exception("run failed")
        print(f"error: run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    _print_summary(result)
    return EXIT_OK


def _cmd_gen_fleet(args) -> int:
    from .fleet import FleetConfig, HourlyParams, default_params, generate_day

    if args.params == "default":
        params = default_params()
    else:
        try:
            params = HourlyParams.from_csv(args.params)
        except FileNotFoundError:
            print(f"error: params file not found: {args.params}",
                  file=sys.stderr)
            return EXIT_CONFIG
        except ValueError as exc:
            print(f"error: bad params file: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    config = FleetConfig()
    profile, sample = generate_day(config, params, args.seed)
    path = os.path.join(out, f"fleet-profile-seed{args.seed}.csv")
    profile.to_csv(path)
    total_mw = profile.total_p_mw()
    counts = profile.total_counts()
    occupancy = float(counts.mean()) / config.total_evcs
    peak_minute = int(total_mw.argmax())
    print(f"sessions      {len(sample.events)} accepted, "
          f"{sum(sample.blocked.values())} blocked")
    print(f"occupancy     mean {occupancy:.4f} of {config.total_evcs} plugs")
    print(f"peak load     {float(total_mw.max()):.1f} MW at minute "
          f"{peak_minute} ({peak_minute // 60:02d}:{peak_minute % 60:02d})")
    print(f"profile       {path}")
    return EXIT_OK


def _cmd_attack_demo(args) -> int:
    from .harness import load_builtin, run_scenario
    from .harness import plots

    name = "attack-demo" if args.mode == "botnet" else "attack-demo-mitm"
    scenario = load_builtin(name)
    out = args.out or name + "-out"
    try:
        result = run_scenario(scenario, out)
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        log.exception("demo failed")
        print(f"error: demo failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    _print_summary(result)
    freq = plots.plot_frequency(result.files["telemetry"],
                                os.path.join(out, "frequency.png"),
                                over_hz=scenario.grid.over_hz,
                                under_hz=scenario.grid.under_hz)
    load = plots.plot_ev_load(
        result.files["telemetry"], os.path.join(out, "ev-load.png"),
        reference_mw=scenario.attack.waveform.magnitude_mw)
    print(f"plots         {freq}, {load}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .harness import plots

    try:
        cols = plots.read_telemetry(args.telemetry)
    except FileNotFoundError:
        print(f"error: telemetry file not found: {args.telemetry}",
              file=sys.stderr)
        return EXIT_CONFIG
    if not cols.get("t_s"):
        print("error: telemetry file has no data rows", file=sys.stderr)
        return EXIT_FAILURE
    out = args.out or os.path.dirname(os.path.abspath(args.telemetry))
    os.makedirs(out, exist_ok=True)
    freq = plots.plot_frequency(args.telemetry,
                                os.path.join(out, "frequency.png"),
                                over_hz=args.over_hz, under_hz=args.under_hz)
    load = plots.plot_ev_load(args.telemetry,
                              os.path.join(out, "ev-load.png"),
                              reference_mw=args.reference_mw)
    print(freq)
    print(load)
    return EXIT_OK


def _cmd_app(args) -> int:
    import httpx

    base = args.url.rstrip("/")
    try:
        if args.verb == "start":
            resp = httpx.post(f"{base}/api/v1/start",
                              json={"evcsId": args.evcs_id,
                                    "count": args.count,
                                    "idTag": args.id_tag},
                              timeout=args.timeout)
        elif args.verb == "stop":
            resp = httpx.post(f"{base}/api/v1/stop",
                              json={"evcsId": args.evcs_id},
                              timeout=args.timeout)
        else:
            resp = httpx.get(f"{base}/api/v1/status/{args.evcs_id}",
                             timeout=args.timeout)
    except httpx.HTTPError as exc:
        print(f"error: CMS unreachable at {base}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        body = resp.json()
    except ValueError:
        body = {"raw": resp.text}
    print(json.dumps(body, separators=(",", ":"), sort_keys=True))
    return EXIT_OK if resp.status_code < 400 else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evcosim",
        description="EV-charging / grid co-simulation testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario", help="scenario YAML path")
    p_run.add_argument("-o", "--out", default=None,
                       help="artifact directory (default <name>-out)")
    p_run.set_defaults(fn=_cmd_run)

    p_fleet = sub.add_parser(
        "gen-fleet", help="sample one day of fleet charging demand")
    p_fleet.add_argument("params",
                         help="hourly params CSV, or 'default'")
    p_fleet.add_argument("seed", type=int, help="RNG seed")
    p_fleet.add_argument("-o", "--out", default=None,
                         help="output directory (default .)")
    p_fleet.set_defaults(fn=_cmd_gen_fleet)

    p_demo = sub.add_parser(
        "attack-demo", help="run the canned 90 MW square-wave attack demo")
    p_demo.add_argument("--mode", choices=("botnet", "mitm"),
                        default="botnet")
    p_demo.add_argument("-o", "--out", default=None,
                        help="artifact directory")
    p_demo.set_defaults(fn=_cmd_attack_demo)

    p_plot = sub.add_parser("plot", help="render plots from telemetry CSV")
    p_plot.add_argument("telemetry", help="telemetry CSV path")
    p_plot.add_argument("-o", "--out", default=None,
                        help="output directory (default alongside input)")
    p_plot.add_argument("--over-hz", type=float, default=61.5)
    p_plot.add_argument("--under-hz", type=float, default=58.5)
    p_plot.add_argument("--reference-mw", type=float, default=90.0)
    p_plot.set_defaults(fn=_cmd_plot)

    p_app = sub.add_parser("app",
                           help="drive a running CMS like the mobile app")
    p_app.add_argument("verb", choices=("start", "stop", "status"))
    p_app.add_argument("evcs_id", help="charge point id")
    p_app.add_argument("count", type=int, nargs="?", default=1,
                       help="EV count for start (default 1)")
    p_app.add_argument("--url", default="http://127.0.0.1:8080",
                       help="CMS base URL")
    p_app.add_argument("--id-tag", default="app")
    p_app.add_argument("--timeout", type=float, default=10.0)
    p_app.set_defaults(fn=_cmd_app)
    return parser


def main(argv: list[str] | None = None) -> int:
    level_name = os.environ.get("EVCOSIM_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
