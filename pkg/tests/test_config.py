import math

import pytest

from sps2cs.config import (
    TIERS,
    ConfigError,
    apply_overrides,
    load_preset,
    parse_number,
    parse_preset,
    preset_hash,
    resolve_preset,
)
from sps2cs.device import get_path

from conftest import MHZ

MINIMAL = """\
n = 2
omega_eg_ghz = 8
omega_fe_ghz = 12
omega_fg_ghz = 20
omega_c.c1_ghz = 5
Delta.c2_mhz = -250
Delta_p.c1p_mhz = -125
Delta_p.c2p_mhz = 125
g.c2_mhz = 12.03
mu_rule = match
g_tilde_mhz = 24.1
Delta_tilde_mhz = 160
Omega_p_mhz = 0.454
"""


def test_parse_number():
    assert parse_number("1/sqrt(2)") == pytest.approx(1 / math.sqrt(2))
    assert parse_number("2*pi") == pytest.approx(2 * math.pi)
    assert parse_number("-1e-3") == -1e-3
    assert parse_number("1+2j") == 1 + 2j
    with pytest.raises(ValueError):
        parse_number("__import__('os')")


def test_minimal_preset():
    p = parse_preset(MINIMAL)
    assert p.Omega_p / MHZ == pytest.approx(0.454)
    assert p.omega_c["c2"] / MHZ == pytest.approx(20250)
    assert p.g_r == 0.0


def test_unknown_key_reports_position():
    with pytest.raises(ConfigError) as exc:
        parse_preset(MINIMAL + "  bogus_mhz = 3\n", "x.preset")
    assert exc.value.line == 14 and exc.value.col == 3
    assert str(exc.value).startswith("x.preset:14:3:")


def test_duplicate_and_bad_value():
    with pytest.raises(ConfigError) as exc:
        parse_preset(MINIMAL + "n = 3\n")
    assert exc.value.line == 14
    with pytest.raises(ConfigError) as exc:
        parse_preset(MINIMAL.replace("g_tilde_mhz = 24.1", "g_tilde_mhz = 24.1.2"))
    assert exc.value.line == 11


def test_missing_required():
    with pytest.raises(ConfigError):
        parse_preset("n = 2\n")


def test_inconsistent_detuning():
    with pytest.raises(ConfigError):
        parse_preset(MINIMAL + "omega_c.c2_ghz = 20.3\n")


def test_shipped_presets():
    p = load_preset(resolve_preset("paper_sec4"))
    assert p.kappa["c1"] == pytest.approx(1e4)
    assert p.gamma_fg == pytest.approx(1 / 15e-6)
    r = load_preset(resolve_preset("paper_sec4_realism"))
    assert r.tau_d == pytest.approx(2e-9) and r.tau_c == pytest.approx(3e-9)
    assert len(preset_hash(resolve_preset("paper_sec4"))) == 64


def test_overrides(preset):
    p = apply_overrides(preset, ["g.c2_mhz=10", "kappa_inv.all_us=50", "T_us=30", "alpha=1.2"])
    assert get_path(p, "g.c2") == pytest.approx(10 * MHZ)
    assert p.kappa["c2p"] == pytest.approx(2e4)
    assert p.gamma_fg == pytest.approx(1 / 30e-6)
    assert p.alpha == 1.2
    p = apply_overrides(preset, ["Omega_p_mhz=0.454"])
    assert p.Omega_p_rule == "explicit" and p.Omega_p / MHZ == pytest.approx(0.454)
    with pytest.raises(ConfigError):
        apply_overrides(preset, ["nonsense"])
    with pytest.raises(ConfigError):
        apply_overrides(preset, ["g.c9_mhz=1"])


def test_tiers():
    assert TIERS["A"].space().dim == 3 * 3 * 3 * 18 * 12
    assert TIERS["B"].alpha == 1.86 and TIERS["B"].n_trajectories >= 500
