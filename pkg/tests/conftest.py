import pytest

from edgerestore.cli import main

SMALL_CONFIG = """\
# tiny end-to-end configuration for tests
n_train = 6
n_test = 2
image_size = 64
base_width = 2
iterations = 20
batch_size = 4
calib_images = 2
ft_iterations = 20
ft_batch_size = 4
ft_crop = 32
bench_images = 1
bench_repetitions = 2
bench_warmup = 1
"""


def write_small_config(directory):
    path = directory / "small.cfg"
    path.write_text(SMALL_CONFIG)
    return path


def run_small_pipeline(directory, seed=0):
    """Full synth -> train -> convert -> train-finetune -> eval run via the CLI."""
    cfg = write_small_config(directory)
    out = directory / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", str(seed)]) == 0
    return cfg, out


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    return run_small_pipeline(tmp_path_factory.mktemp("small"))


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion, printed again in the terminal summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
