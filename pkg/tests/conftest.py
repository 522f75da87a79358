import numpy as np
import pytest

from text2scene.corpus import CorpusConfig, generate_corpus, read_corpus
from text2scene.schema import ObjectSpec, SceneLayout


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus") / "tiny"
    cfg = CorpusConfig.from_totals("static", 7, 60, 12, 12)
    generate_corpus(cfg, out)
    return out


@pytest.fixture(scope="session")
def tiny_corpus(tiny_corpus_dir):
    return read_corpus(tiny_corpus_dir / "train.jsonl")


@pytest.fixture
def static_layout():
    return SceneLayout(objects=(
        ObjectSpec("cube", "red", "large", "metal"),
        ObjectSpec("sphere", "blue", "small", "rubber"),
        ObjectSpec("cylinder", "yellow", "large", "metal"),
    ), kind="static")


@pytest.fixture
def animated_layout():
    return SceneLayout(objects=(
        ObjectSpec("cube", "red", "large", "metal", "spin"),
        ObjectSpec("sphere", "blue", "small", "rubber", "bounce"),
        ObjectSpec("cylinder", "green", "large", "rubber", "rest"),
    ), kind="animated")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
