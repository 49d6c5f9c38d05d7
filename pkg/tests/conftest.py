import numpy as np
import pytest

from f2p.datagen import DatasetConfig, generate_dataset, load_split
from f2p.facegen import default_schema


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def layout(schema):
    return schema.layout()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory, schema):
    """60 samples split 40/10/10, shared by the fast tests."""
    out = tmp_path_factory.mktemp("corpus")
    config = DatasetConfig(sample_count=60, seed=3, output_dir=str(out / "data"), split_fractions=(2 / 3, 1 / 6, 1 / 6))
    manifest = generate_dataset(config, schema)
    data = {s: load_split(manifest, s) for s in ("train", "val", "eval")}
    return manifest, data


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the run summary prints them all in criterion order."""
    table = request.config.stash.setdefault(VERDICTS, {})

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        table[number] = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(VERDICTS, {})
    if table:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(table):
            terminalreporter.write_line(table[number])
