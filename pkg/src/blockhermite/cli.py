"""Command-line front end.

``run``    one simulation (generated Plummer sphere or a snapshot)
``bench``  sweep over N, one CSV row per N plus power-law refits
``model``  analytic performance-model predictions

Exit status: 0 success, 1 runtime failure, 2 usage error.  Settings come
from built-in defaults, then ``--config`` (flat ``key = value``), then flags.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import perfmodel
from .config import read_flat_config
from .core import Backend, SimConfig, SingularityError, TimestepUnderflowError, read_snapshot, write_snapshot
from .diagnostics import RunStatistics, fit_power_law, measure_run
from .integrator import initialize, run
from .plummer import PlummerParams, generate_plummer

log = logging.getLogger("blockhermite")

STATS_COLUMNS = [
    "impl", "N", "wall_seconds", "wall_seconds_x4", "n_steps", "mean_block_size",
    "pairwise_interactions", "bytes_sent", "bytes_received", "energy_error",
]
MODEL_COLUMNS = [
    "profile", "scenario", "N", "n_block", "n_steps", "t_pred_corr", "t_force", "t_comm",
    "t_step", "total_seconds", "measured_x4", "status",
]
FIT_COLUMNS = ["quantity", "prefactor", "exponent", "n_points", "max_abs_log_residual"]
DEFAULT_N_LIST = [256, 512, 1024, 2048, 4096]
TABLE_N_GRID = [256 * 2**k for k in range(12)]

# key -> (converter, default); flags and config keys share these names
SIM_KEYS = {
    "n": (int, 256),
    "seed": (int, 1),
    "backend": (str, "ref64"),
    "sorted_accumulation": (lambda s: str(s).lower() in ("1", "true", "yes", "on"), False),
    "eps": (float, 1.0 / 256.0),
    "eta": (float, 0.02),
    "dt_max": (float, 0.125),
    "t_end": (float, 0.5),
    "measure_from": (float, 0.25),
}


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).replace(" ", "").split(",") if x]


def impl_label(cfg: SimConfig) -> str:
    return cfg.backend.value + ("-sorted" if cfg.sorted_accumulation else "")


def stats_row(impl: str, st: RunStatistics) -> dict:
    return {
        "impl": impl,
        "N": st.n_particles,
        "wall_seconds": repr(st.wall_seconds),
        "wall_seconds_x4": repr(4.0 * st.wall_seconds),
        "n_steps": st.n_steps_total,
        "mean_block_size": repr(st.mean_block_size),
        "pairwise_interactions": st.pairwise_interactions,
        "bytes_sent": st.bytes_sent,
        "bytes_received": st.bytes_received,
        "energy_error": repr(st.energy_error),
    }


def _resolve(args: argparse.Namespace, keys) -> dict:
    conf = read_flat_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, (conv, default) in keys.items():
        value = getattr(args, key, None)
        if value is None:
            value = conf.get(key, default)
        try:
            out[key] = conv(value)
        except (TypeError, ValueError):
            raise UsageError(f"bad value for {key}: {value!r}") from None
    extra = set(conf) - set(keys) - {"n_list", "snapshot", "out", "profile", "scenario"}
    if extra:
        raise UsageError(f"unknown config keys: {', '.join(sorted(extra))}")
    for key in ("n_list", "snapshot", "out", "profile", "scenario"):
        value = getattr(args, key, None)
        out[key] = value if value is not None else conf.get(key)
    return out


def _sim_config(opts: dict) -> SimConfig:
    try:
        return SimConfig(
            eps=opts["eps"], eta=opts["eta"], dt_max=opts["dt_max"], t_end=opts["t_end"],
            measure_from=opts["measure_from"], seed=opts["seed"], backend=Backend(opts["backend"]),
            sorted_accumulation=opts["sorted_accumulation"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_run(args) -> int:
    opts = _resolve(args, SIM_KEYS)
    cfg = _sim_config(opts)
    if opts["snapshot"] is None and opts["n"] < 2:
        raise UsageError(f"--n must be >= 2, got {opts['n']}")
    out = Path(opts["out"] or "run_out")
    if opts["snapshot"]:
        sys_ = read_snapshot(opts["snapshot"])
    else:
        sys_ = generate_plummer(PlummerParams(opts["n"], opts["seed"]))
    if cfg.t_end > sys_.t_global:
        initialize(sys_, cfg)
    stats = run(sys_, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(sys_, out / "final_snapshot.txt")
    _write_csv(out / "run_stats.csv", STATS_COLUMNS, [stats_row(impl_label(cfg), stats)])
    print(f"N={sys_.n} t={sys_.t_global} energy_error={stats.energy_error:.3e} "
          f"wall_seconds={stats.wall_seconds:.3f}")
    return 0


def cmd_bench(args) -> int:
    opts = _resolve(args, SIM_KEYS)
    cfg = _sim_config(opts)
    n_list = _int_list(opts["n_list"]) if opts["n_list"] else DEFAULT_N_LIST
    if not n_list or any(n < 2 for n in n_list) or n_list != sorted(n_list):
        raise UsageError("--n-list must be a nonempty ascending list of values >= 2")
    out = Path(opts["out"] or "bench.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    samples = []
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STATS_COLUMNS, lineterminator="\n")
        w.writeheader()
        for n in n_list:
            st = measure_run(cfg, PlummerParams(n, cfg.seed))
            w.writerow(stats_row(impl_label(cfg), st))
            fh.flush()
            samples.append((n, st.mean_block_size, st.steps_per_time_unit))
            print(f"N={n} steps={st.n_steps_total} mean_block={st.mean_block_size:.2f} "
                  f"energy_error={st.energy_error:.3e} wall_seconds={st.wall_seconds:.3f}")
    fits = []
    if len(samples) >= 3:
        for name, col in (("n_block", 1), ("n_steps", 2)):
            f = fit_power_law([(s[0], s[col]) for s in samples])
            fits.append({"quantity": name, "prefactor": repr(f.prefactor), "exponent": repr(f.exponent),
                         "n_points": len(samples), "max_abs_log_residual": repr(float(abs(f.residuals).max()))})
            print(f"{name} ~ {f.prefactor:.4g} N^{f.exponent:.3f}")
    else:
        log.warning("fewer than 3 N values; skipping power-law fits")
    _write_csv(out.with_name(out.stem + "_fits.csv"), FIT_COLUMNS, fits)
    return 0


def _profiles(spec: str | None) -> list[perfmodel.HardwareProfile]:
    if not spec or spec == "all":
        return perfmodel.builtin_profiles()
    result = []
    for item in spec.split(","):
        item = item.strip()
        if Path(item).is_file():
            result.append(perfmodel.load_profile(item))
            continue
        try:
            result.append(perfmodel.get_profile(item))
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    return result


def model_rows(profiles, n_values, scenario: perfmodel.ScenarioFlags) -> list[dict]:
    rows = []
    for prof in profiles:
        for n in n_values:
            measured = perfmodel.measured_seconds(prof.name, n) if scenario.label == "baseline" else None
            row = dict.fromkeys(MODEL_COLUMNS, "")
            row.update(profile=prof.name, scenario=scenario.label, N=n,
                       measured_x4=repr(measured) if measured is not None else "")
            try:
                pred = perfmodel.predict(prof, n, scenario)
            except perfmodel.CapacityExceeded:
                row["status"] = "capacity_exceeded"
            else:
                for key in MODEL_COLUMNS[3:10]:
                    row[key] = repr(getattr(pred, key))
                row["status"] = "ok"
            rows.append(row)
    return rows


def cmd_model(args) -> int:
    conf = read_flat_config(args.config) if args.config else {}
    profile = args.profile if args.profile is not None else conf.get("profile")
    scen_text = args.scenario if args.scenario is not None else conf.get("scenario")
    n_text = args.n if args.n is not None else args.n_list if args.n_list is not None else conf.get("n", conf.get("n_list"))
    try:
        scenario = perfmodel.ScenarioFlags.parse(scen_text)
        n_values = _int_list(n_text) if n_text is not None else TABLE_N_GRID
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not n_values or any(n < 2 for n in n_values):
        raise UsageError("N values must be >= 2")
    rows = model_rows(_profiles(profile), n_values, scenario)
    out = args.out if args.out is not None else conf.get("out", "-")
    if out == "-":
        w = csv.DictWriter(sys.stdout, fieldnames=MODEL_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    else:
        _write_csv(out, MODEL_COLUMNS, rows)
    return 0


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=[b.value for b in Backend])
    p.add_argument("--sorted-accumulation", dest="sorted_accumulation", action="store_const", const=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--dt-max", dest="dt_max", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--measure-from", dest="measure_from", type=float)
    p.add_argument("--config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockhermite", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("--n", type=int)
    p.add_argument("--snapshot", help="start from this snapshot instead of a Plummer sphere")
    p.add_argument("--out", help="output directory (default run_out)")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="sweep over N")
    p.add_argument("--n-list", dest="n_list")
    p.add_argument("--out", help="CSV path (default bench.csv); fits go to <stem>_fits.csv")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("model", help="performance-model predictions")
    p.add_argument("--profile", help="comma list of profile names or profile files, or 'all'")
    p.add_argument("--n")
    p.add_argument("--n-list", dest="n_list")
    p.add_argument("--scenario", help="comma list of block-only, host-free, fe1")
    p.add_argument("--out", help="CSV path, '-' for stdout (default)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (TimestepUnderflowError, SingularityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
