import pytest

from so2rl.config import (
    REGISTRY,
    ConfigError,
    output_dir,
    parse_config_file,
    parse_hidden,
    registry_check,
    resolve,
    so2_config,
    write_snapshot,
)


def test_registry_covers_every_trainer_tunable():
    registry_check()  # raises if any So2Config field is unreachable


def test_defaults_resolve_completely():
    resolved = resolve()
    assert set(resolved) == set(REGISTRY)
    assert resolved["so2.sigma"] == 0.3
    assert resolved["so2.n_upc"] == 10
    assert resolved["run.env"] == "point-mass"


def test_precedence_defaults_file_cli():
    file_values = {"so2.sigma": "0.5", "so2.n_upc": "3"}
    cli_values = {"so2.sigma": 0.7}
    resolved = resolve(file_values, cli_values)
    assert resolved["so2.sigma"] == 0.7       # cli beats file
    assert resolved["so2.n_upc"] == 3         # file beats default
    assert resolved["so2.clip"] == 0.6        # default survives


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown option"):
        resolve(cli_values={"so2.learning_momentum": 1.0})


def test_type_coercion_and_bad_values():
    resolved = resolve(cli_values={"run.seed": "17", "run.from_scratch": "yes"})
    assert resolved["run.seed"] == 17
    assert resolved["run.from_scratch"] is True
    with pytest.raises(ConfigError):
        resolve(cli_values={"run.seed": "seventeen"})
    with pytest.raises(ConfigError):
        resolve(cli_values={"run.from_scratch": "maybe"})


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment\n"
        "\n"
        "so2.sigma = 0.1\n"
        "run.env = pendulum\n")
    values = parse_config_file(path)
    assert values == {"so2.sigma": 0.1, "run.env": "pendulum"}


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("so2.sigma 0.1\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_file(bad)
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text("so2.mystery = 1\n")
    with pytest.raises(ConfigError, match="unknown option"):
        parse_config_file(unknown)


def test_snapshot_round_trip(tmp_path):
    resolved = resolve(cli_values={"so2.sigma": 0.12, "run.seed": 9})
    path = write_snapshot(resolved, tmp_path)
    assert path.name == "resolved_config.txt"
    reparsed = parse_config_file(path)
    rere = resolve(file_values=reparsed)
    assert rere == resolved


def test_snapshot_rejects_incomplete():
    with pytest.raises(ConfigError, match="incomplete"):
        write_snapshot({"so2.sigma": 0.3}, "/tmp")


def test_parse_hidden():
    assert parse_hidden("256,256") == (256, 256)
    assert parse_hidden("32") == (32,)
    assert parse_hidden("8, 16") == (8, 16)
    with pytest.raises(ConfigError):
        parse_hidden("256,big")


def test_so2_config_construction_and_policy_upc_sentinel():
    cfg = so2_config(resolve(cli_values={"so2.n_upc": 7}))
    assert cfg.n_upc == 7
    assert cfg.policy_upc == 7      # -1 sentinel follows n_upc
    cfg2 = so2_config(resolve(cli_values={"so2.n_upc": 7, "so2.policy_upc": 1}))
    assert cfg2.policy_upc == 1
    assert cfg.hidden == (256, 256)


def test_output_dir_env_var(tmp_path, monkeypatch):
    resolved = resolve(cli_values={"run.env": "pendulum", "run.seed": 3})
    monkeypatch.setenv("SO2RL_OUTPUT_ROOT", str(tmp_path / "root"))
    assert output_dir(resolved) == tmp_path / "root" / "pendulum-seed3"
    explicit = resolve(cli_values={"run.output_dir": str(tmp_path / "exact")})
    assert output_dir(explicit) == tmp_path / "exact"
