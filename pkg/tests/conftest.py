import os
from pathlib import Path

import numpy as np
import pytest

from metagnn.data import load_planetoid

from synthetic import CORA_LIKE, make_citation_files

REPO = Path(__file__).resolve().parents[1]
DATA_DIR = Path(os.environ.get("METAGNN_DATA_DIR", REPO / "data"))


def dataset_files(name: str) -> tuple[Path, Path] | None:
    content, cites = DATA_DIR / f"{name}.content", DATA_DIR / f"{name}.cites"
    if content.is_file() and cites.is_file():
        return content, cites
    return None


@pytest.fixture(scope="session")
def cora_files():
    files = dataset_files("cora")
    if files is None:
        pytest.skip(f"Cora files not found in {DATA_DIR} (set METAGNN_DATA_DIR)")
    return files


@pytest.fixture(scope="session")
def cora(cora_files):
    return load_planetoid(*cora_files, name="cora")


@pytest.fixture(scope="session")
def citeseer_files():
    files = dataset_files("citeseer")
    if files is None:
        pytest.skip(f"Citeseer files not found in {DATA_DIR} (set METAGNN_DATA_DIR)")
    return files


@pytest.fixture(scope="session")
def citeseer(citeseer_files):
    return load_planetoid(*citeseer_files, name="citeseer")


@pytest.fixture(scope="session")
def coralike_files(tmp_path_factory):
    return make_citation_files(tmp_path_factory.mktemp("coralike"), name="coralike",
                               seed=1, **CORA_LIKE)


@pytest.fixture(scope="session")
def coralike(coralike_files):
    return load_planetoid(*coralike_files, name="coralike")


@pytest.fixture(scope="session")
def small_files(tmp_path_factory):
    return make_citation_files(tmp_path_factory.mktemp("small"), name="small", seed=3)


@pytest.fixture(scope="session")
def small(small_files):
    return load_planetoid(*small_files, name="small")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance report: one line per criterion in the terminal summary

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        number = lambda line: int(line.split("criterion ")[1].split(":")[0])
        for line in sorted(ACCEPTANCE_LINES, key=number):
            terminalreporter.write_line(line)
