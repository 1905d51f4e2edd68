import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfheat.config import (
    Section,
    bundled_names,
    bundled_text,
    load_scenario,
    parse_list,
    parse_number,
    parse_scenario,
)
from rfheat.errors import ConfigError


def test_parse_number():
    assert parse_number("pi/4") == pytest.approx(math.pi / 4)
    assert parse_number(" -2*pi ") == pytest.approx(-2 * math.pi)
    assert parse_number("1e-3") == 1e-3
    assert parse_number("2**3") == 8.0
    for bad in ("__import__('os')", "x", "1 +", "abs(1)"):
        with pytest.raises(ValueError):
            parse_number(bad)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_parse_number_roundtrip(x):
    assert parse_number(repr(x)) == x


def test_parse_list():
    assert parse_list("1, 2; pi") == [1.0, 2.0, pytest.approx(math.pi)]
    assert parse_list("") == []


def test_section_accessors():
    import configparser

    cp = configparser.ConfigParser()
    cp.read_string("[s]\na = 3\nb = 2.5\nc = yes\nd = 1, 2\ne = maybe\n")
    sec = Section("s", cp["s"])
    assert sec.int("a") == 3 and sec.num("b") == 2.5 and sec.flag("c")
    assert sec.nums("d") == [1.0, 2.0] and sec.flag("zz", True)
    assert sec.num("zz", 7.0) == 7.0
    with pytest.raises(ConfigError, match=r"\[s\] b: expected an integer"):
        sec.int("b")
    with pytest.raises(ConfigError, match=r"\[s\] zz: missing"):
        sec.num("zz")
    with pytest.raises(ConfigError, match=r"\[s\] e"):
        sec.flag("e")


def test_bundled_catalogue():
    names = bundled_names()
    assert len(names) >= 8
    for name in names:
        sc = parse_scenario(bundled_text(name), f"{name}.cfg")
        assert sc.name == name and sc.description


def test_load_by_name_and_path(tmp_path):
    assert load_scenario("sphere_global").name == "sphere_global"
    assert load_scenario("sphere_global.cfg").name == "sphere_global"
    path = tmp_path / "mine.cfg"
    path.write_text("[checks]\nrun =\n")
    sc = load_scenario(str(path))
    assert sc.name == "mine" and sc.checks == [] and sc.model is None
    with pytest.raises(ConfigError):
        load_scenario("no_such_scenario")


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_scenario("not an ini file")
    with pytest.raises(ConfigError, match=r"\[model\]"):
        parse_scenario("[model]\nkind = klein_bottle\n")
    with pytest.raises(ConfigError, match=r"\[model\] grid"):
        parse_scenario("[model]\nkind = round_sphere\ngrid = many\n")
    with pytest.raises(ConfigError, match=r"check.cutoff"):
        parse_scenario("[checks]\nrun = square_completion\n[check.cutoff]\nrho = 1\n")
