from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
DATA = ROOT / "data"


@pytest.fixture(scope="session")
def pool():
    from slotie import TripletPool

    return TripletPool.from_tsv(DATA / "pool_en.tsv")


@pytest.fixture(scope="session")
def imojie_fixture_path():
    return FIXTURES / "imojie_100.jsonl"


@pytest.fixture(scope="session")
def lsoie_fixture_path():
    return FIXTURES / "lsoie_sample.conll"


@pytest.fixture(scope="session")
def sample_gold_path():
    return DATA / "sample_gold.tsv"


@pytest.fixture(scope="session")
def sample_pred_path():
    return DATA / "sample_pred.tsv"
