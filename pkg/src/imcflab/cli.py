"""Command line entry points.

imcflab run CONFIG.toml   drive one experiment from a config file
imcflab suite [-o FILE]   run the built-in identity battery
imcflab version           print the package version

Exit codes: 0 all checks passed, 1 a numerical assertion failed,
2 bad usage or an invalid config file.
"""

from __future__ import annotations

import argparse
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__

# (section, key in file) -> ExperimentConfig field
_CONFIG_KEYS = {
    ("experiment", "scenario"): "scenario",
    ("experiment", "out_dir"): "out_dir",
    ("experiment", "jobs"): "jobs",
    ("experiment", "label"): "label",
    ("ambient", "kind"): "ambient_kind",
    ("ambient", "mass"): "mass",
    ("ambient", "eps"): "ambient_eps",
    ("ambient", "l"): "ambient_l",
    ("ambient", "m"): "ambient_m",
    ("ambient", "r_in"): "r_in",
    ("ambient", "r_out"): "r_out",
    ("flow", "s0"): "s0",
    ("flow", "t_final"): "t_final",
    ("flow", "n_out"): "n_out",
    ("flow", "mode"): "mode",
    ("flow", "n_theta"): "n_theta",
    ("flow", "n_phi"): "n_phi",
    ("flow", "max_rel_move"): "max_rel_move",
    ("flow", "cfl_safety"): "cfl_safety",
    ("family", "count"): "family_count",
    ("family", "base"): "family_base",
    ("family", "l"): "family_l",
    ("family", "m"): "family_m",
}


class ConfigError(Exception):
    pass


def load_config(path: str):
    """Parse a TOML experiment file into an ExperimentConfig."""
    from .experiments import ExperimentConfig

    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML: {err}") from err

    kwargs = {}
    for section, table in raw.items():
        if not isinstance(table, dict):
            raise ConfigError(f"top-level entry {section!r} must be a table")
        for key, value in table.items():
            field = _CONFIG_KEYS.get((section, key))
            if field is None:
                raise ConfigError(f"unknown config key [{section}] {key}")
            kwargs[field] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def _cmd_run(args) -> int:
    from .experiments import run_experiment

    cfg = load_config(args.config)
    report = run_experiment(cfg)
    print("\n".join(report.lines))
    print(f"outputs in {cfg.out_dir}")
    return 0 if report.passed else 1


def _cmd_suite(args) -> int:
    from .experiments import identity_suite

    lines, ok = identity_suite(out_path=args.out)
    print("\n".join(lines))
    return 0 if ok else 1


def _cmd_version(args) -> int:
    print(f"imcflab {__version__}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imcflab",
        description="inverse mean curvature flow laboratory",
    )
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="drive one experiment from a TOML config")
    p_run.add_argument("config", help="path to the experiment config file")
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="run the built-in identity battery")
    p_suite.add_argument("-o", "--out", default=None, help="also write the report here")
    p_suite.set_defaults(func=_cmd_suite)

    p_version = sub.add_parser("version", help="print the package version")
    p_version.set_defaults(func=_cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
