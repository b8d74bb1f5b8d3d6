import json

import pytest

from sentgraph.corpus import (DataError, Sentence, SentimentTuple, Span, canonical_tuples, generate_synthetic,
                              load_dataset, read_dataset, save_corpus, to_public_json, tokenize)
from sentgraph.labeling import encode_essential

MOSCOW = "Moscow government has expressed the wish to import the Mongolian meat ."


def _write(tmp_path, records, name="data.json"):
    path = tmp_path / name
    path.write_text(json.dumps(records), encoding="utf-8")
    return path


def _opinion(text, expression, source=None, target=None, polarity="Neutral"):
    def ann(phrase):
        if phrase is None:
            return [[], []]
        b = text.index(phrase)
        return [[phrase], [f"{b}:{b + len(phrase)}"]]

    return {"Source": ann(source), "Target": ann(target), "Polar_expression": ann(expression),
            "Polarity": polarity, "Intensity": "Standard"}


def test_tokenize_examples():
    assert [t for t, _, _ in tokenize("meat.")] == ["meat", "."]
    assert tokenize("Moscow government") == [("Moscow", 0, 6), ("government", 7, 17)]
    assert tokenize("") == []


def test_public_record_spans(tmp_path):
    record = {"sent_id": "s1", "text": MOSCOW,
              "opinions": [_opinion(MOSCOW, "expressed the wish", "Moscow government", "import the Mongolian meat")]}
    (s,) = load_dataset(_write(tmp_path, [record]))
    assert s.tokens[3:6] == ["expressed", "the", "wish"]
    (t,) = s.gold
    assert t.expression == Span(3, 5)
    assert t.holder == Span(0, 1)
    assert t.target == Span(7, 10)
    assert t.polarity == "Neutral"


def test_empty_source_and_no_opinions(tmp_path):
    records = [
        {"sent_id": "a", "text": MOSCOW, "opinions": [_opinion(MOSCOW, "wish")]},
        {"sent_id": "b", "text": "Nothing here .", "opinions": []},
    ]
    a, b = load_dataset(_write(tmp_path, records))
    assert a.gold[0].holder is None and a.gold[0].target is None
    assert b.gold == []


def test_strict_and_lenient(tmp_path):
    records = [
        {"sent_id": "good", "text": MOSCOW, "opinions": [_opinion(MOSCOW, "wish")]},
        {"sent_id": "bad", "text": MOSCOW, "opinions": [_opinion(MOSCOW, "wish", polarity="Sarcastic")]},
        {"sent_id": "off", "text": "short", "opinions": [{"Source": [[], []], "Target": [[], []],
                                                          "Polar_expression": [["x"], ["40:45"]],
                                                          "Polarity": "Positive"}]},
    ]
    path = _write(tmp_path, records)
    with pytest.raises(DataError) as info:
        read_dataset(path, strict=True)
    assert info.value.sent_id == "bad"
    result = read_dataset(path, strict=False)
    assert [s.sent_id for s in result.sentences] == ["good"]
    assert result.skipped == 2
    assert {e.sent_id for e in result.errors} == {"bad", "off"}


def test_polarity_map(tmp_path):
    record = {"sent_id": "m", "text": MOSCOW, "opinions": [_opinion(MOSCOW, "wish", polarity="Strong-Pos")]}
    (s,) = load_dataset(_write(tmp_path, [record]), polarity_map={"Strong-Pos": "Positive"})
    assert s.gold[0].polarity == "Positive"
    with pytest.raises(ValueError):
        load_dataset(_write(tmp_path, [record]), polarity_map={"Strong-Pos": "Great"})


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("[{", encoding="utf-8")
    with pytest.raises(DataError):
        read_dataset(path, strict=False)


def test_discontinuous_annotation_collapses(tmp_path):
    text = "the food and the very nice service"
    record = {"sent_id": "d", "text": text, "opinions": [{
        "Source": [[], []], "Target": [[], []],
        "Polar_expression": [["the", "nice"], ["0:3", "22:26"]], "Polarity": "Positive"}]}
    (s,) = load_dataset(_write(tmp_path, [record]))
    assert s.gold[0].expression == Span(0, 5)


def test_canonical_round_trip(tmp_path):
    sentences = generate_synthetic(count=20, seed=4)
    path = tmp_path / "corpus.json"
    save_corpus(path, sentences)
    again = load_dataset(path)
    assert [s.to_json() for s in again] == [s.to_json() for s in sentences]


def test_public_layout_round_trip(tmp_path):
    sentences = generate_synthetic(count=20, seed=5)
    path = _write(tmp_path, [to_public_json(s) for s in sentences])
    again = load_dataset(path)
    for a, b in zip(sentences, again):
        assert a.tokens == b.tokens
        assert canonical_tuples(a.gold) == canonical_tuples(b.gold)


def test_sentence_validation():
    with pytest.raises(DataError):
        Sentence("x", [])
    with pytest.raises(DataError):
        Sentence("x", ["a", "b"], gold=[SentimentTuple(None, Span(1, 2), None, "Positive")])
    with pytest.raises(ValueError):
        Span(3, 2)
    with pytest.raises(ValueError):
        SentimentTuple(None, Span(0, 0), None, "Mixed")


def test_synthetic_examples():
    assert generate_synthetic(count=0) == []
    a = generate_synthetic(count=32, seed=9)
    b = generate_synthetic(count=32, seed=9)
    assert [s.to_json() for s in a] == [s.to_json() for s in b]


def test_synthetic_overlap_fraction():
    sentences = generate_synthetic(count=100, seed=0, overlap_fraction=0.5)
    multi = sum(1 for s in sentences if encode_essential(s).multi_label_cells())
    assert multi >= 45


def test_synthetic_coverage():
    sentences = generate_synthetic(count=300, seed=1)
    tuples = [t for s in sentences for t in s.gold]
    assert any(t.holder is None for t in tuples)
    assert any(t.target is None for t in tuples)
    assert any(len(t.expression) == 1 for t in tuples)
    assert any(len(span) >= 4 for t in tuples for span in (t.holder, t.expression, t.target) if span)
    assert {t.polarity for t in tuples} == {"Positive", "Neutral", "Negative"}
