"""Config parsing: strict keys, defaults, resolved-JSON round trips, CLI codes."""

import json

import pytest

from fedsmell.cli import main
from fedsmell.config import ExperimentConfig, parse_config, validate_config
from fedsmell.errors import ConfigError, ParseError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


MINIMAL = """\
[experiment]
kind = centralized
datasets = a.csv
"""


def test_minimal_config_resolves_defaults(tmp_path):
    cfg = parse_config(write(tmp_path / "c.ini", MINIMAL))
    assert cfg.kind == "centralized"
    assert cfg.datasets == ("a.csv",)
    assert cfg.rounds == 100
    assert cfg.client_fraction == 1.0
    assert cfg.reducer_mode == "plain"
    assert cfg.learning_rate == 0.001
    assert cfg.batch_size == 32
    assert cfg.local_epochs == 1
    assert cfg.rebalance == "oversample"
    assert cfg.test_fraction == 0.3
    assert cfg.seed == 0


def test_unknown_key_is_named(tmp_path):
    text = MINIMAL + "\n[training]\nmomentum = 0.9\n"
    with pytest.raises(ConfigError, match="momentum"):
        parse_config(write(tmp_path / "c.ini", text))


def test_unknown_section_is_named(tmp_path):
    text = MINIMAL + "\n[cluster]\nnodes = 3\n"
    with pytest.raises(ConfigError, match="cluster"):
        parse_config(write(tmp_path / "c.ini", text))


def test_bad_value_reports_key(tmp_path):
    text = MINIMAL + "\n[training]\nbatch_size = many\n"
    with pytest.raises(ParseError, match="batch_size"):
        parse_config(write(tmp_path / "c.ini", text))


def test_missing_mandatory_keys(tmp_path):
    with pytest.raises(ConfigError, match="kind"):
        parse_config(write(tmp_path / "a.ini", "[experiment]\ndatasets = x.csv\n"))
    with pytest.raises(ConfigError, match="datasets"):
        parse_config(write(tmp_path / "b.ini", "[experiment]\nkind = centralized\n"))


def test_kind_verb_reconciliation(tmp_path):
    path = write(tmp_path / "c.ini", "[experiment]\ndatasets = x.csv\n")
    cfg = parse_config(path, kind="centralized")
    assert cfg.kind == "centralized"
    full = write(tmp_path / "d.ini", MINIMAL)
    with pytest.raises(ConfigError, match="does not match"):
        parse_config(full, kind="federated")


def test_federated_defaults_for_three_datasets(tmp_path):
    text = "[experiment]\nkind = federated\ndatasets = a.csv, b.csv, c.csv\n"
    cfg = parse_config(write(tmp_path / "c.ini", text))
    assert cfg.chunks == (5, 1, 4)
    assert cfg.combiner_clients == (5, 5)


def test_federated_chunk_and_combiner_validation(tmp_path):
    text = ("[experiment]\nkind = federated\ndatasets = a.csv, b.csv\n"
            "[data]\nchunks = 2, 2\n[topology]\ncombiner_clients = 3, 2\n")
    with pytest.raises(ConfigError, match="combiner_clients"):
        parse_config(write(tmp_path / "c.ini", text))


def test_cross_eval_requires_three_datasets(tmp_path):
    text = "[experiment]\nkind = cross_eval\ndatasets = a.csv, b.csv\n"
    with pytest.raises(ConfigError, match="3 datasets"):
        parse_config(write(tmp_path / "c.ini", text))


def test_out_of_range_values_rejected(tmp_path):
    text = MINIMAL + "\n[data]\ntest_fraction = 1.5\n"
    with pytest.raises(ConfigError, match="test_fraction"):
        parse_config(write(tmp_path / "c.ini", text))
    text = MINIMAL + "\n[federation]\nclient_fraction = 0\n"
    with pytest.raises(ConfigError, match="client_fraction"):
        parse_config(write(tmp_path / "c2.ini", text))


def test_resolved_json_roundtrip(tmp_path):
    text = ("[experiment]\nkind = federated\ndatasets = a.csv, b.csv, c.csv\nseed = 9\n"
            "[federation]\nrounds = 7\nreducer_mode = smoothed\n")
    cfg = parse_config(write(tmp_path / "c.ini", text))
    resolved = tmp_path / "config.resolved.json"
    resolved.write_text(json.dumps(cfg.to_resolved_dict()), encoding="utf-8")
    assert parse_config(resolved) == cfg


def test_resolved_json_unknown_key_rejected(tmp_path):
    payload = {"kind": "centralized", "datasets": ["a.csv"], "nonsense": 1}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ConfigError, match="nonsense"):
        parse_config(path)


def test_validate_config_direct_construction():
    cfg = ExperimentConfig(kind="federated", datasets=("a", "b", "c"))
    resolved = validate_config(cfg)
    assert resolved.chunks == (5, 1, 4)
    with pytest.raises(ConfigError):
        validate_config(ExperimentConfig(kind="bogus", datasets=("a",)))


# ----------------------------------------------------------------- CLI codes

def test_cli_config_error_exits_2(tmp_path, capsys):
    bad = write(tmp_path / "bad.ini", MINIMAL + "\n[training]\nmomentum = 1\n")
    code = main(["centralized", "--config", str(bad)])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("CONFIG_ERROR:")
    assert "\n" not in err.strip()


def test_cli_missing_dataset_exits_3(tmp_path, capsys):
    cfg = write(tmp_path / "c.ini", MINIMAL)
    code = main(["centralized", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert code == 3
    assert capsys.readouterr().err.startswith("DATA_ERROR:")


def test_cli_missing_config_file_exits_2(tmp_path, capsys):
    code = main(["centralized", "--config", str(tmp_path / "ghost.ini")])
    assert code == 2
    assert capsys.readouterr().err.startswith("CONFIG_ERROR:")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_numeric_error_exits_4(tmp_path, capsys):
    # A constant 1e308 column overflows the normalizer mean to infinity;
    # the normalized dataset then fails its finiteness invariant.
    from fedsmell.data import FEATURE_NAMES, LABEL_COLUMN
    header = ",".join(list(FEATURE_NAMES) + [LABEL_COLUMN])
    rows = [",".join(["1e308"] * 16 + [str(i % 2)]) for i in range(8)]
    csv_path = write(tmp_path / "huge.csv", header + "\n" + "\n".join(rows) + "\n")
    cfg = write(tmp_path / "c.ini",
                f"[experiment]\nkind = centralized\ndatasets = {csv_path}\n")
    code = main(["centralized", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert code == 4
    assert capsys.readouterr().err.startswith("NUMERIC_ERROR:")
