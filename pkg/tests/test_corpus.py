import numpy as np
import pytest

from taskspec.corpus import CorpusSpec, DomainGenerator, domain_vocabularies, gen_corpus, shared_count


def test_record_count_and_labels():
    records, gens = gen_corpus(CorpusSpec(k_domains=4, docs_per_domain=1000, seed=0))
    assert len(records) == 4000 and len(gens) == 4
    assert np.bincount([r.true_label for r in records]).tolist() == [1000] * 4


def test_zero_overlap_disjoint():
    vocabs = domain_vocabularies(CorpusSpec(overlap_fraction=0.0))
    for i in range(len(vocabs)):
        for j in range(i + 1, len(vocabs)):
            assert not set(vocabs[i]) & set(vocabs[j])


def test_overlap_fraction_shared_words():
    spec = CorpusSpec(overlap_fraction=0.1, vocab_per_domain=50)
    vocabs = domain_vocabularies(spec)
    common = set.intersection(*map(set, vocabs))
    assert len(common) == shared_count(spec) == 5
    assert all(len(set(v)) == 50 for v in vocabs)


def test_determinism():
    spec = CorpusSpec(docs_per_domain=50, seed=9)
    assert gen_corpus(spec)[0] == gen_corpus(spec)[0]
    assert gen_corpus(spec)[0] != gen_corpus(CorpusSpec(docs_per_domain=50, seed=10))[0]


def test_documents_use_own_vocabulary():
    spec = CorpusSpec(docs_per_domain=20, seed=1)
    records, _ = gen_corpus(spec)
    vocabs = domain_vocabularies(spec)
    for r in records:
        words = r.input.split()
        assert spec.min_len <= len(words) <= spec.max_len
        assert set(words) <= set(vocabs[r.true_label])


def test_generator_distributions_valid():
    gen = DomainGenerator(0, [f"w{i}" for i in range(12)], order=3, seed=0, branching=4, mix=0.6)
    for hist in ([], [3], [3, 7], [1, 2, 3, 4]):
        d = gen.distribution(hist)
        assert (d >= 0).all() and d.sum() == pytest.approx(1.0)
        assert (d > 0).sum() <= 8


@pytest.mark.parametrize("kwargs", [dict(k_domains=0), dict(overlap_fraction=1.5),
                                    dict(vocab_per_domain=3), dict(min_len=10, max_len=5),
                                    dict(generator_order=0)])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        CorpusSpec(**kwargs)


def test_vocab_too_small_message():
    with pytest.raises(ValueError, match="too small for order"):
        CorpusSpec(vocab_per_domain=4, generator_order=5, branching=2)
