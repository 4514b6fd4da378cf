import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdiqkd.decoy import CLASS_LABELS, ClassCounts, FluctuationModel, ObservedStatistics
from mdiqkd.io import (
    ConfigError,
    FormatError,
    bundled,
    config_from_dict,
    emit_counts,
    load_config,
    parse_counts,
    parse_counts_text,
    read_csv,
    write_csv,
)

FIXTURES = ["table_s_28db.counts", "table_s_36db.counts"]
CONFIGS = ["table_s_28db.toml", "table_s_36db.toml", "calibrated_28db.toml",
           "calibrated_36db.toml", "fibre_27db.toml", "curve.toml", "align.toml"]


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_round_trip_is_byte_identical(name):
    path = bundled(name)
    assert emit_counts(parse_counts(path)) == path.read_text()


def test_fixture_values():
    t28 = parse_counts(bundled("table_s_28db.counts"))
    assert t28.n_pairs == 30_000_000_000_000
    assert t28.total("ss") == 67610084 and t28.errors("ss") == 1851744
    assert t28.classes["mumu"].errors is None
    t36 = parse_counts(bundled("table_s_36db.counts"))
    assert t36.total("nunu") == 388040
    assert t36.total("00") == 0


@pytest.mark.parametrize("name", CONFIGS)
def test_bundled_configs_validate(name):
    load_config(bundled(name))


counts = st.integers(0, 10 ** 15)


@given(st.integers(1, 10 ** 16), st.lists(st.tuples(counts, counts, st.booleans()), min_size=6, max_size=6))
def test_emit_parse_round_trip(n_pairs, rows):
    classes = {}
    for label, (a, b, has_err) in zip(CLASS_LABELS, rows):
        total = min(max(a, b), n_pairs)
        classes[label] = ClassCounts(total, min(a, b, total) if has_err else None)
    obs = ObservedStatistics(n_pairs, classes)
    text = emit_counts(obs)
    again = parse_counts_text(text)
    assert again == obs
    assert emit_counts(again) == text


def _text(**overrides):
    base = parse_counts(bundled("table_s_28db.counts"))
    classes = dict(base.classes)
    classes.update(overrides)
    return emit_counts(ObservedStatistics(base.n_pairs, classes))


def test_errors_above_total_name_the_class():
    text = _text().replace("total = 606196\nerrors = 160177", "total = 606196\nerrors = 906196")
    with pytest.raises(FormatError, match="nunu"):
        parse_counts_text(text)


@pytest.mark.parametrize("edit, match", [
    (lambda t: t.replace("[mu0]", "[mu1]"), "mu1"),
    (lambda t: t.replace("total = 6\n", "total = 6.5\n"), r"\[00\] total"),
    (lambda t: t.replace("total = 6\n", "total = -6\n"), r"\[00\] total"),
    (lambda t: t.replace("n_pairs = 30000000000000\n", ""), "n_pairs"),
    (lambda t: t.replace("total = 258557\n", "totl = 258557\n"), "mumu"),
    (lambda t: t + "[ss\n", "line"),
])
def test_malformed_counts(edit, match):
    with pytest.raises(FormatError, match=match):
        parse_counts_text(edit(_text()))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        parse_counts("/nonexistent/file.counts")


def test_emit_rejects_fractional_counts():
    obs = ObservedStatistics(100.0, {k: ClassCounts(1.5, 0.5) for k in CLASS_LABELS})
    with pytest.raises(ValueError):
        emit_counts(obs)


def test_config_defaults_and_channel_forms():
    cfg = config_from_dict({"channel": {"distance_km": 140.0}})
    assert cfg.channel.total_db == pytest.approx(28.0)
    cfg = config_from_dict({"channel": {"distance_km": [60.0, 80.0]}, "system": {"fiber_loss_coeff": 0.18}})
    assert cfg.channel.loss_alice_db == pytest.approx(10.8)
    cfg = config_from_dict({"channel": {"loss_alice_db": 10.0, "loss_bob_db": 12.0}})
    assert cfg.channel.total_db == 22.0
    assert cfg.fluctuation.model is FluctuationModel.GAUSSIAN_JOINT
    assert cfg.protocol is None


@pytest.mark.parametrize("doc, match", [
    ({"sytem": {}}, "sytem"),
    ({"system": {"detector_eff": 0.5}}, "detector_eff"),
    ({"system": {"f_e": 0.5}}, "f_e"),
    ({"system": {"f_e": "high"}}, "system.f_e"),
    ({"protocol": {"s": 0.3}}, "missing"),
    ({"protocol": {"optimize": True, "s": 0.3}}, "excludes"),
    ({"protocol": {"s": 0.1, "mu": 0.2, "nu": 0.05, "p_s": 0.5, "p_mu": 0.1, "p_nu": 0.3}}, "protocol"),
    ({"fluctuation": {"model": "poisson"}}, "poisson"),
    ({"fluctuation": {"epsilon": 2.0}}, "epsilon"),
    ({"channel": {"loss_db": 28.0, "distance_km": 140.0}}, "exactly one"),
    ({"channel": {"loss_alice_db": 3.0}}, "together"),
    ({"run": {"seed": -1}}, "run.seed"),
    ({"run": {"loss_grid": 5}}, "loss_grid"),
    ({"align": {"target_qber": 0.3}}, "target_qber"),
])
def test_config_rejections(doc, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(doc)


def test_csv_round_trip_is_bit_exact(tmp_path):
    values = [0.1, 1 / 3, 2.0 ** -1074, 1.7976931348623157e308, 123456789.123456789, 0.0]
    path = tmp_path / "x.csv"
    write_csv(path, ["i", "value", "flag"], [[i, v, i % 2 == 0] for i, v in enumerate(values)])
    header, rows = read_csv(path)
    assert header == ["i", "value", "flag"]
    assert [r["value"] for r in rows] == values
    assert rows[0]["flag"] == "true"
