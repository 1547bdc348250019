"""Command line interface: subcommands, config parsing, exit codes."""

import pytest

import imcflab
from imcflab import cli
from imcflab.cli import ConfigError, load_config, main


def _write(tmp_path, text):
    path = tmp_path / "exp.toml"
    path.write_text(text)
    return str(path)


_TINY = """
[experiment]
scenario = "pmt_stability"
out_dir = "{out}"

[flow]
s0 = 1.0
t_final = 0.5
n_out = 11
mode = "ode"

[family]
count = 3
base = 0.1
"""


def test_version_command(capsys):
    assert main(["version"]) == 0
    out = capsys.readouterr().out
    assert imcflab.__version__ in out


def test_no_subcommand_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().out.lower()


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2
    assert "config error" in capsys.readouterr().err


def test_invalid_toml(tmp_path, capsys):
    path = _write(tmp_path, "this is not toml [")
    assert main(["run", path]) == 2
    assert "invalid TOML" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path):
    path = _write(tmp_path, "[flow]\nwarp_factor = 9\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_value_rejected(tmp_path):
    path = _write(tmp_path, '[experiment]\nscenario = "other"\n')
    with pytest.raises(ConfigError):
        load_config(path)


def test_top_level_key_rejected(tmp_path):
    path = _write(tmp_path, 'scenario = "single_run"\n')
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_maps_sections(tmp_path):
    path = _write(tmp_path, _TINY.format(out=tmp_path / "out"))
    cfg = load_config(path)
    assert cfg.scenario == "pmt_stability"
    assert cfg.n_out == 11
    assert cfg.family_count == 3
    assert cfg.family_base == 0.1


def test_run_command_end_to_end(tmp_path, capsys):
    out_dir = tmp_path / "out"
    path = _write(tmp_path, _TINY.format(out=out_dir))
    assert main(["run", path]) == 0
    assert (out_dir / "summary.csv").exists()
    assert "PASS" in capsys.readouterr().out


def test_suite_exit_codes(monkeypatch, capsys):
    import imcflab.experiments as experiments

    monkeypatch.setattr(experiments, "identity_suite", lambda out_path=None: (["all good"], True))
    assert main(["suite"]) == 0
    assert "all good" in capsys.readouterr().out

    monkeypatch.setattr(experiments, "identity_suite", lambda out_path=None: (["broken"], False))
    assert main(["suite"]) == 1


def test_parser_has_all_subcommands():
    parser = cli.build_parser()
    text = parser.format_help()
    for name in ("run", "suite", "version"):
        assert name in text
