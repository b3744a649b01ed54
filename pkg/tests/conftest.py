import numpy as np
import pytest

from binarycal import calibration as cal
from binarycal import discrepancy as disc
from binarycal import emulator as emu
from binarycal import lpca
from binarycal import synthetic as syn


@pytest.fixture(scope="session")
def small_cfg():
    # 5x5 lattice over a 12x12 grid: same simulator, cheap enough for unit tests
    return syn.SyntheticConfig(grid_shape=(12, 12), lattice=(5, 5), range=0.1, seed=3)


@pytest.fixture(scope="session")
def small_pipeline(small_cfg):
    ens = syn.synth_ensemble(small_cfg)
    obs, noise = syn.make_observation(small_cfg)
    model = lpca.fit(ens, 3, max_iter=300)
    em = emu.fit_emulator(model, ens.design, restarts=2, seed=0)
    basis = disc.build_basis(disc.mismatch_proportions(ens, obs))
    prob = cal.CalibrationProblem(obs, model, em.gps, basis, cal.PriorConfig.unit(2))
    return {"ens": ens, "obs": obs, "noise": noise, "lpca": model, "emu": em,
            "basis": basis, "prob": prob}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
