import numpy as np
import pytest
from hypothesis import strategies as st

from rosdyn.market import Beta, Fixed, ItemSpec, MarketInstance, TieBreak

NAMES = [f"b{k}" for k in range(5)]

finite = st.floats(min_value=0.0, max_value=50.0, allow_nan=False, allow_infinity=False)


@st.composite
def fixed_items(draw, bidders):
    chosen = draw(st.lists(st.sampled_from(bidders), min_size=1, max_size=len(bidders), unique=True))
    values = {b: Fixed(draw(st.floats(min_value=0.01, max_value=20.0))) for b in chosen}
    tie = draw(st.sampled_from(["uniform", "favor", "disfavor"]))
    tb = TieBreak() if tie == "uniform" else TieBreak(tie, draw(st.sampled_from(chosen)))
    return ItemSpec(values, reserve=draw(st.sampled_from([0.0, 0.5, 2.0])), tie_break=tb,
                    copies=draw(st.sampled_from([1.0, 2.0, 0.25])))


@st.composite
def beta_items(draw, bidders, min_bidders=1):
    chosen = draw(st.lists(st.sampled_from(bidders), min_size=min_bidders, max_size=len(bidders), unique=True))
    return ItemSpec({b: Beta(draw(st.integers(1, 15)), draw(st.integers(1, 15)),
                             draw(st.floats(min_value=0.2, max_value=3.0))) for b in chosen})


@st.composite
def instances(draw):
    n = draw(st.integers(1, 5))
    bidders = NAMES[:n]
    items = draw(st.lists(st.one_of(fixed_items(bidders), beta_items(bidders)), max_size=6))
    lam = draw(st.floats(min_value=0.0, max_value=1.0))
    bounds = {}
    if draw(st.booleans()):
        lo = draw(st.floats(min_value=0.0, max_value=2.0))
        bounds = {bidders[0]: (lo, lo + draw(st.floats(min_value=0.0, max_value=2.0)))}
    return MarketInstance(tuple(bidders), tuple(items), lam, bounds)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def gallery(tmp_path_factory):
    """One gallery run through the CLI, shared by every test that inspects it."""
    from rosdyn import cli, gallery as gallery_mod

    out = tmp_path_factory.mktemp("gallery")
    captured = {}
    real = gallery_mod.run_gallery

    def spy(out_dir, seed=0):
        captured.update(real(out_dir, seed))
        return captured

    cli.run_gallery = spy
    try:
        status = cli.main(["gallery", "--out", str(out), "--seed", "0"])
    finally:
        cli.run_gallery = real
    captured["status"] = status
    captured["out"] = out
    return captured


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line for a numbered criterion."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line, flush=True)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
