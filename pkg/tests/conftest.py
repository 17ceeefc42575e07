import pytest

from clav.corpus import IngestOptions, ingest_corpus
from clav.textprep import NormalizationConfig, Normalizer


@pytest.fixture
def plain_norm():
    """No stopwords, no stemming: normalized form is just the lowercase surface."""
    return Normalizer(NormalizationConfig(stem=False, min_len=1))


@pytest.fixture
def corpus_dir(tmp_path):
    """Two small paged documents with known page/paragraph structure."""
    src = tmp_path / "contracts"
    src.mkdir()
    (src / "alpha.txt").write_text(
        "Semesteravdrag sker med 4,6 % av månadslönen per dag.\n"
        "\n"
        "Sjuklönen utges under de första fjorton dagarna.\x0c"
        "Övertidsarbete ersätts med tillägg enligt tabellen nedan.",
        encoding="utf-8",
    )
    (src / "beta.txt").write_text(
        "För varje uttagen obetald semesterdag görs avdrag med 4,6 %.\n"
        "\n"
        "Arbetstiden är 40 timmar per vecka i genomsnitt.\x0c"
        "Sjukavdrag beräknas på den aktuella månadslönen.\n"
        "\n"
        "Restid utanför ordinarie arbetstid ersätts särskilt.",
        encoding="utf-8",
    )
    return src


@pytest.fixture
def small_corpus(corpus_dir):
    return ingest_corpus(corpus_dir, IngestOptions(min_chars=1))
