"""Command-line entry point.

Settings come from (lowest to highest precedence) built-in defaults, a
``key = value`` file given with ``--config``, and ``--set key=value`` or the
dedicated flags. The resolved settings are written to ``config.resolved`` in
every output directory; feeding that file back with ``--config`` reproduces
the run.

Exit status: 0 ok, 2 usage, 3 invalid input data, 4 numerical failure,
5 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .exceptions import ConfigError, NumericalError, PanelError

log = logging.getLogger("longbet")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v: str):
    return None if str(v).strip().lower() in ("none", "") else float(v)


def _keys() -> dict:
    """Every addressable setting: key -> (parser, default)."""
    from .dgp import ScenarioConfig
    from .forest import ForestParams
    from .model import LongBetConfig

    keys = {
        "seed": (int, 0),
        "workers": (int, 1),
        "level": (float, 0.95),
        "scenario": (str, "parallel-homogeneous"),
        "horizon": (int, 4),
        "reps": (int, 20),
        "scenarios": (str, "all"),
    }
    sc = ScenarioConfig()
    for f in fields(ScenarioConfig):
        if f.name in ("seed", "cohort_effects", "prognostic", "effect"):
            continue
        keys[f.name] = (type(getattr(sc, f.name)), getattr(sc, f.name))
    mc = LongBetConfig()
    for f in fields(LongBetConfig):
        if f.name in ("seed", "forest_params_pr", "forest_params_trt"):
            continue
        v = getattr(mc, f.name)
        parse = _bool if isinstance(v, bool) else _opt_float if v is None else type(v)
        keys[f.name] = (parse, v)
    fp = ForestParams()
    for prefix in ("forest_pr", "forest_trt"):
        for f in fields(ForestParams):
            if f.name == "num_trees":  # set through num_trees_pr / num_trees_trt
                continue
            v = getattr(fp, f.name)
            keys[f"{prefix}.{f.name}"] = (_opt_float if v is None else type(v), v)
    return keys


KEYS_BY_COMMAND = {
    "simulate": ("seed", "scenario", "n_units", "T", "treat_start", "noise_sd", "horizon"),
    "fit": ("seed", "level"),
    "att": ("level",),
    "forecast": ("seed", "level", "horizon"),
    "benchmark": ("seed", "workers", "level", "reps", "scenarios", "n_units", "T", "treat_start", "noise_sd"),
    "validate": (),
}
MODEL_COMMANDS = ("fit", "benchmark")


def parse_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from exc
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def resolve(command: str, file_values: dict, overrides: dict) -> dict:
    """Merge defaults, file and flag values; unknown keys are an error."""
    keys = _keys()
    raw = {**file_values, **overrides}
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    wanted = set(KEYS_BY_COMMAND[command])
    if command in MODEL_COMMANDS:
        wanted |= {k for k in keys if k in _model_keys(keys)}
    out = {}
    for k in sorted(wanted):
        parse, default = keys[k]
        if k in raw and raw[k] is not None:
            try:
                out[k] = parse(raw[k]) if isinstance(raw[k], str) else raw[k]
            except ValueError as exc:
                raise UsageError(f"bad value for {k}: {raw[k]!r}") from exc
        else:
            out[k] = default
    return out


def _model_keys(keys: dict) -> set:
    from .model import LongBetConfig

    names = {f.name for f in fields(LongBetConfig)}
    return {k for k in keys if k in names or k.startswith("forest_")}


def write_resolved(cfg: dict, out_dir: Path) -> None:
    with open(out_dir / "config.resolved", "w") as fh:
        for k in sorted(cfg):
            fh.write(f"{k} = {cfg[k]}\n")


def model_config(cfg: dict):
    from .forest import ForestParams
    from .model import LongBetConfig

    forest = {}
    for prefix in ("forest_pr", "forest_trt"):
        kw = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith(prefix + ".")}
        forest[prefix] = ForestParams(**kw)
    plain = {f.name: cfg[f.name] for f in fields(LongBetConfig)
             if f.name in cfg and f.name not in ("forest_params_pr", "forest_params_trt")}
    return LongBetConfig(forest_params_pr=forest["forest_pr"], forest_params_trt=forest["forest_trt"], **plain)


def scenario_config(cfg: dict, name: str | None = None):
    from .dgp import ScenarioConfig

    kw = {k: cfg[k] for k in ("n_units", "T", "treat_start", "noise_sd") if k in cfg}
    return ScenarioConfig.from_name(name or cfg["scenario"], seed=cfg.get("seed", 0), **kw)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# commands


def cmd_simulate(cfg: dict, args, out: Path) -> None:
    from . import dgp
    from .panel import write_panel_csv

    try:
        sc = scenario_config(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    gen = dgp.generate(sc)
    write_panel_csv(gen.panel, out / "panel.csv")
    n, T = gen.tau_true.shape
    _write_rows(out / "tau_true.csv", ["unit", "time", "tau_true"],
                ([gen.panel.unit_ids[i], gen.panel.t0 + k, repr(float(gen.tau_true[i, k]))]
                 for i in range(n) for k in range(T)))
    _write_rows(out / "att_true.csv", ["cohort", "time", "att_true"],
                ([e, t, repr(v)] for (e, t), v in sorted(gen.att_true.items())))
    if cfg["horizon"] > 0:
        future = dgp.future_att_truth(gen, cfg["horizon"])
        _write_rows(out / "att_future_true.csv", ["cohort", "time", "horizon_step", "att_true"],
                    ([e, t, t - gen.panel.t1, repr(v)] for (e, t), v in sorted(future.items())))
    log.info("simulated %s: %d units, %d cohort-time cells", sc.name, n, len(gen.att_true))


def _load(path):
    from .panel import derive_exposure, load_panel

    panel = load_panel(path)
    return panel, derive_exposure(panel)


def _write_tables(fit, panel, view, level: float, out: Path) -> None:
    from .model import att_from_catt, catt_table

    catt = catt_table(fit, panel, view, level)
    catt.to_csv(out / "catt.csv")
    att_from_catt(catt, view, level, simultaneous=False).to_csv(out / "att_pointwise.csv")
    att_from_catt(catt, view, level, simultaneous=True).to_csv(out / "att_simultaneous.csv")


def cmd_fit(cfg: dict, args, out: Path) -> None:
    from .model import fit

    panel, view = _load(args.panel)
    mc = model_config(cfg)
    result = fit(panel, view, mc)
    result.save(out / "fit.json")
    _write_tables(result, panel, view, cfg["level"], out)
    log.info("fit %d draws; sigma2 posterior mean %.4f", result.n_draws, float(result.sigma2.mean()))


def cmd_att(cfg: dict, args, out: Path) -> None:
    from .model import LongBetFit

    panel, view = _load(args.panel)
    result = LongBetFit.load(args.fit)
    _write_tables(result, panel, view, cfg["level"], out)


def cmd_forecast(cfg: dict, args, out: Path) -> None:
    from .gp import forecast_att
    from .model import LongBetFit

    if cfg["horizon"] < 1:
        raise UsageError("horizon must be at least 1")
    panel, view = _load(args.panel)
    result = LongBetFit.load(args.fit)
    table = forecast_att(result, panel, view, cfg["horizon"], cfg["level"], seed=cfg["seed"])
    table.to_csv(out / "forecast.csv")


def cmd_benchmark(cfg: dict, args, out: Path) -> None:
    from .dgp import SCENARIOS
    from .metrics import monte_carlo, write_detail, write_results

    names = SCENARIOS if cfg["scenarios"] == "all" else tuple(s.strip() for s in cfg["scenarios"].split(","))
    try:
        scenarios = [scenario_config(cfg, name) for name in names]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg["reps"] < 1:
        raise UsageError("reps must be at least 1")
    mc = model_config(cfg)
    studies = []
    for sc in scenarios:
        st = monte_carlo(sc, cfg["reps"], mc, master_seed=cfg["seed"], workers=cfg["workers"], level=cfg["level"])
        write_detail(st, out / f"detail_{sc.name}.csv")
        studies.append(st)
        log.info("%s: %s", sc.name, {k: round(v, 4) for k, v in st.averaged().metrics().items()})
    write_results(studies, out / "results.csv")


def cmd_validate(cfg: dict, args, out: Path) -> None:
    from .panel import cohorts

    panel, view = _load(args.panel)
    groups = {e: len(u) for e, u in sorted(cohorts(view).items())}
    print(f"ok: {panel.n_units} units, periods {panel.t0}..{panel.t1}, {panel.p} covariates")
    print(f"cohorts: {groups if groups else 'none (no treated units)'}")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "att": cmd_att,
    "forecast": cmd_forecast,
    "benchmark": cmd_benchmark,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--out-dir", default=".", help="output directory (default: current)")
    common.add_argument("--workers", type=int, help="parallel processes for benchmark")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any setting; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="longbet", description="Staggered-adoption effect estimation with tree ensembles.",
                                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a benchmark panel with ground truth")
    s.add_argument("--scenario")
    s.add_argument("--n-units", type=int, dest="n_units")
    s.add_argument("--horizon", type=int, help="also write future ATT truth for this many periods")

    f = sub.add_parser("fit", parents=[common], help="fit the model and export effect tables")
    f.add_argument("panel")
    f.add_argument("--num-sweeps", type=int, dest="num_sweeps")
    f.add_argument("--num-burnin", type=int, dest="num_burnin")
    f.add_argument("--level", type=float)

    a = sub.add_parser("att", parents=[common], help="effect tables from a saved fit")
    a.add_argument("fit")
    a.add_argument("--panel", required=True)
    a.add_argument("--level", type=float)

    fc = sub.add_parser("forecast", parents=[common], help="cohort effects beyond the last period")
    fc.add_argument("fit")
    fc.add_argument("--panel", required=True)
    fc.add_argument("--horizon", type=int)
    fc.add_argument("--level", type=float)

    b = sub.add_parser("benchmark", parents=[common], help="Monte Carlo study over the four scenarios")
    b.add_argument("--reps", type=int)
    b.add_argument("--scenarios", help="comma-separated names (default all)")
    b.add_argument("--n-units", type=int, dest="n_units")
    b.add_argument("--num-sweeps", type=int, dest="num_sweeps")
    b.add_argument("--num-burnin", type=int, dest="num_burnin")

    v = sub.add_parser("validate", parents=[common], help="check a panel file")
    v.add_argument("panel")
    return p


FLAG_KEYS = ("seed", "workers", "scenario", "n_units", "horizon", "num_sweeps", "num_burnin", "level",
             "reps", "scenarios")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        for k in FLAG_KEYS:
            if getattr(args, k, None) is not None:
                overrides[k] = getattr(args, k)
        cfg = resolve(args.command, file_values, overrides)
        if args.command in MODEL_COMMANDS:
            model_config(cfg)  # validate before any work
        out = Path(args.out_dir)
        if args.command != "validate":  # validate writes nothing
            out.mkdir(parents=True, exist_ok=True)
            write_resolved(cfg, out)
        COMMANDS[args.command](cfg, args, out)
    except (UsageError, ConfigError) as exc:
        print(f"longbet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PanelError as exc:
        print(f"longbet: invalid panel: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"longbet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"longbet: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"longbet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
