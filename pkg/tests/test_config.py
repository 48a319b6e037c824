import pytest

from ucbench.config import KINDS, ConfigError, load_config, parse_config


def test_minimal_defaults():
    cfg = parse_config("experiment = carleman-sweep\n")
    assert cfg.kind == "carleman-sweep"
    assert cfg["gamma"] == [1.0, 2.0, 4.0] and cfg["s"] == [8.0, 16.0, 32.0, 64.0]
    assert (cfg["Nr"], cfg["Ntheta"], cfg["seed"]) == (65, 128, 42)


def test_interp_grid_defaults():
    cfg = parse_config("experiment = interp-norms")
    assert (cfg["Nr"], cfg["Ntheta"]) == (33, 64)
    assert parse_config("experiment = interp-norms\nNr = 17")["Nr"] == 17


def test_comments_lists_and_types():
    cfg = parse_config(
        "# header\nexperiment = stability-run  # trailing\n\ndelta = 1e-2, 1e-3 ,1e-4,1e-5\neta = 0.5\nseed=7\n"
    )
    assert cfg["delta"] == [1e-2, 1e-3, 1e-4, 1e-5] and cfg["eta"] == 0.5 and cfg["seed"] == 7
    assert cfg.lines == {"experiment": 2, "delta": 4, "eta": 5, "seed": 6}
    assert cfg.echo()["experiment"] == "stability-run"


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "missing required key 'experiment'"),
        ("experiment = nope", "unknown kind"),
        ("experiment = stability-run\neta = 2.5", "0 <= eta < 2"),
        ("experiment = stability-run\neta = -1", "0 <= eta < 2"),
        ("experiment = interp-norms\neta = 0.5, 2", "0 <= eta < 2"),
        ("experiment = validate-weight\ngamma = 2", "unknown key 'gamma'"),
        ("experiment = validate-weight\nr0 = 1\nr0 = 2", "duplicate key 'r0'"),
        ("experiment = validate-weight\njunk line", "expected 'key = value'"),
        ("experiment = carleman-sweep\ns =", "must not be empty"),
        ("experiment = carleman-sweep\ns = 8, -1", "positive"),
        ("experiment = carleman-sweep\nNr = many", "key 'Nr'"),
        ("experiment = carleman-sweep\nadversarial = maybe", "boolean"),
        ("experiment = validate-weight\nr0 = 3", "r0 < R1"),
    ],
)
def test_errors_carry_context(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "run.cfg")
    assert fragment in str(exc.value) and str(exc.value).startswith("run.cfg")


def test_error_line_number():
    with pytest.raises(ConfigError, match=r"run.cfg:3: key 'eta'"):
        parse_config("experiment = stability-run\n\neta = 2.5\n", "run.cfg")


def test_every_kind_parses_bare():
    for kind in KINDS:
        assert parse_config(f"experiment = {kind}").kind == kind


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")
