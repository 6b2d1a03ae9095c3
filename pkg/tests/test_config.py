import dataclasses

import pytest

from gfk.config import CHECKS, ConfigError, RunConfig, as_dict, parse_config, serialize


def test_defaults():
    c = RunConfig()
    assert (c.scenario, c.d, c.q, c.M, c.N_steps, c.seed) == ("heat", 1, 2.0, 200_000, 100, 0)
    assert (c.dx, c.dt_fd, c.L_fd) == (0.01, 0.001, 10.0)
    assert c.truncation == ("auto",)


def test_round_trip():
    c = RunConfig(scenario="allen-cahn", M=1000, truncation=("1", "2.5"), checks=CHECKS,
                  transform=True, sandwich_window=(0.1, 9.0))
    assert parse_config(serialize(c)) == c
    assert serialize(parse_config(serialize(c))) == serialize(c)


def test_parse_comments_and_types():
    text = """
    # a comment
    scenario = allen-cahn-tanh   # trailing comment
    M = 10_000
    q = 3
    transform = yes
    checks = validate_conditions, flow_identity
    """
    c = parse_config(text)
    assert c.scenario == "allen-cahn-tanh" and c.M == 10_000 and c.q == 3.0
    assert c.transform is True
    assert c.checks == ("validate_conditions", "flow_identity")


def test_q_follows_d():
    assert parse_config("d = 2").q == 3.0
    assert parse_config("d = 2\nq = 4.5").q == 4.5


@pytest.mark.parametrize("text, message", [
    ("nonsense = 1", "unknown key"),
    ("M = 1\nM = 2", "duplicate"),
    ("M = many", "integer"),
    ("q = x", "number"),
    ("fd = maybe", "true or false"),
    ("just words", "key = value"),
    ("scenario = nope", "unknown scenario"),
    ("d = 2\nq = 2", "q must exceed d"),
    ("t = 1\nT = 1", "t < T"),
    ("M = 0", "M must be"),
    ("resamples = -1", "resamples"),
    ("basis_kind = splines", "basis_kind"),
    ("theta = 0", "theta"),
    ("truncation = -1", "truncation"),
    ("checks = everything", "unknown checks"),
    ("sandwich_window = 2, 1", "sandwich_window"),
    ("fd_slices = 1", "fd_slices"),
    ("dx = 0", "dx must be positive"),
])
def test_rejections(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_frozen_and_dict():
    c = RunConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        c.M = 5
    d = as_dict(c)
    assert d["truncation"] == ["auto"] and d["sandwich_window"] == [0.2, 5.0]
    assert set(d) == {f.name for f in dataclasses.fields(RunConfig)}
