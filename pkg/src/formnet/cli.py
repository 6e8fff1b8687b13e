"""Command-line driver: ``formnet {simulate,certify,sweep,print-config}``.

Data and output paths go to stdout; diagnostics go to stderr.  Exit codes:
0 on success, 1 when a certificate or sweep fails, 2 for configuration
and usage errors, 3 when a simulation aborts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

from .controller import certify_contractivity
from .config import bundled_config_path, dump_scenario, load_scenario
from .errors import ConfigurationError, FormnetError, SimulationAbort
from .pde import SweepError, build_pde_coefficients, certify_temporal_stability, sas_sweep
from .simulator import simulate

log = logging.getLogger("formnet")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


class _UsageError(Exception):
    pass


def _scenario(args):
    path = args.config or args.config_pos or bundled_config_path()
    scenario = load_scenario(path)
    changes = {}
    for attr, key in (("dt", "dt"), ("t_end", "t_end"), ("seed", "seed"), ("accel_mode", "accel_mode")):
        val = getattr(args, attr, None)
        if val is not None:
            changes[key] = "fd-accel" if val == "fd" else val
    if changes:
        try:
            scenario = scenario.with_sim(**changes)
        except ConfigurationError as exc:
            raise ConfigurationError(f"[sim] {exc}") from None
    return scenario


def _parse_sizes(text):
    """``"2,5,10"`` -> chains; ``"3x2,4x4"`` -> 2-D meshes."""
    if text is None or not text.strip():
        raise _UsageError("--sizes needs at least one size, e.g. --sizes 2,5,10 or 3x2,4x4")
    sizes = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            ext = [int(r) for r in item.lower().split("x")]
        except ValueError:
            raise _UsageError(f"cannot parse size {item!r}") from None
        if any(r < 1 for r in ext):
            raise _UsageError(f"size {item!r} has a non-positive extent")
        sizes.append(ext)
    if not sizes:
        raise _UsageError("--sizes needs at least one size")
    return sizes


def cmd_simulate(args) -> int:
    scenario = _scenario(args)
    graph, formation, plant, gains = scenario.build()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    traj = simulate(scenario.sim, graph, formation, gains, plant,
                    metadata={"scenario": scenario.to_sections()})
    log.info("simulated %d steps in %.2f s", len(traj.times) - 1, time.perf_counter() - t0)
    paths = {
        "trajectory": out / "trajectory.csv",
        "summary": out / "summary.json",
        "error_norms": out / "error_norms.csv",
    }
    traj.to_csv(paths["trajectory"])
    traj.write_summary(paths["summary"])
    traj.error_norms_to_csv(paths["error_norms"])
    for name, p in paths.items():
        print(f"{name}: {p}")
    print(f"max_final_error: {traj.summary()['max_final_error']:.6e}")
    return EXIT_OK


def cmd_certify(args) -> int:
    scenario = _scenario(args)
    graph, formation, plant, gains = scenario.build()
    contraction = certify_contractivity(gains, plant)
    extents = [r for r in scenario.extents if r > 1] or [2]
    coeffs = build_pde_coefficients(gains, plant, extents)
    temporal = certify_temporal_stability(coeffs, gains, plant)
    report = {"contractivity": contraction.to_dict(), "temporal": temporal.to_dict(),
              "certified": contraction.certified and temporal.certified}
    text = json.dumps(report, indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certificate.json").write_text(text + "\n")
        print(f"certificate: {out / 'certificate.json'}")
    else:
        print(text)
    if not report["certified"]:
        if not contraction.certified:
            print("contractivity certificate failed", file=sys.stderr)
        if not temporal.certified:
            print("temporal stability certificate failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_sweep(args) -> int:
    sizes = _parse_sizes(args.sizes)
    scenario = _scenario(args)
    _, formation, plant, gains = scenario.build()
    result = sas_sweep(sizes, gains, plant, formation, scenario.sim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "sweep.csv")
    result.write_json(out / "sweep.json")
    print(f"sweep_csv: {out / 'sweep.csv'}")
    print(f"sweep_json: {out / 'sweep.json'}")
    if not result.sas_pass:
        for r in result.reasons:
            print(f"SAS check failed: {r}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_print_config(args) -> int:
    sys.stdout.write(dump_scenario(_scenario(args)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sim_flags=True):
        p.add_argument("config_pos", nargs="?", metavar="CONFIG",
                       help="scenario file (default: bundled sff_meo.cfg)")
        p.add_argument("--config", help="scenario file (same as the positional argument)")
        if sim_flags:
            p.add_argument("--dt", type=float)
            p.add_argument("--t-end", dest="t_end", type=float)
            p.add_argument("--seed", type=int)
            p.add_argument("--accel-mode", dest="accel_mode", choices=["exact", "fd", "fd-accel"])

    p = sub.add_parser("simulate", help="integrate the scenario and write CSV/JSON")
    common(p)
    p.add_argument("--out", default="formnet_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="contractivity and temporal stability certificates")
    common(p, sim_flags=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="scalability sweep over network sizes")
    common(p)
    p.add_argument("--sizes", required=True, help="comma list: 2,5,10 or 3x2,4x4")
    p.add_argument("--out", default="formnet_sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("print-config", help="print the fully resolved scenario")
    common(p)
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"formnet: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"formnet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SweepError as exc:
        print(f"formnet: sweep failed: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except SimulationAbort as exc:
        print(f"formnet: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except FormnetError as exc:
        print(f"formnet: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
