import math
import os

import pytest

from sps2cs.config import TIERS, load_preset, resolve_preset
from sps2cs.device import DeviceParams, set_path

MHZ = 2 * math.pi * 1e6
GHZ = 2 * math.pi * 1e9


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SPS2CS_STRETCH") == "1":
        return
    skip = pytest.mark.skip(reason="stretch run; set SPS2CS_STRETCH=1")
    for item in items:
        if "stretch" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def preset():
    return load_preset(resolve_preset("paper_sec4"))


@pytest.fixture(scope="session")
def preset_a(preset):
    return set_path(preset, "alpha", TIERS["A"].alpha)


def make_params(n: int, alpha: float = 1.0, **kw) -> DeviceParams:
    """Device with the reference frequencies generalised to n cavity pairs."""
    oc = {"c1": 5 * GHZ}
    for j in range(2, n + 1):
        oc[f"c{j}"] = 20 * GHZ + 250 * MHZ
    for j in range(1, n + 1):
        oc[f"c{j}p"] = 12 * GHZ + (125 if j % 2 else -125) * MHZ
    lam = (12.03 * MHZ) ** 2 / (250 * MHZ)
    args = dict(n=n, omega_eg=8 * GHZ, omega_fe=12 * GHZ, omega_fg=20 * GHZ, omega_c=oc, g_r=50 * MHZ,
                g={f"c{j}": 12.03 * MHZ for j in range(2, n + 1)},
                mu={f"c{j}p": math.sqrt(lam * 125 * MHZ) for j in range(1, n + 1)},
                g_tilde=24.1 * MHZ, Delta_tilde=160 * MHZ, Omega_p=0.0, Omega_p_rule="match",
                alpha=alpha)
    args.update(kw)
    return DeviceParams(**args)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
