import logging
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from selective_asr.confidence import ConfidenceLevel
from selective_asr.corpus import Utterance
from selective_asr.engine import BaseModelOutput
from selective_asr.labeling import (
    DECISION_TOKENS,
    EmptyClassError,
    InvocationLabel,
    IntervalPolicy,
    LabelRecord,
    MissingOutputError,
    UnknownLanguageError,
    assign_label,
    balance_manifest,
    build_record,
    build_records,
    format_example,
)
from selective_asr.text_metrics import word_errors

NO, YES, UNC = InvocationLabel.NO, InvocationLabel.YES, InvocationLabel.UNCERTAIN
FR = IntervalPolicy(mode="specific", centers={"fr": 5.45})


class TestAssignLabel:
    @pytest.mark.parametrize("wer,label", [
        (0.0, NO), (1.5, NO), (2.0, NO), (2.01, UNC), (5.0, UNC),
        (10.0, UNC), (10.01, YES), (12.0, YES),
    ])
    def test_agnostic(self, wer, label):
        assert assign_label(wer, "xx", IntervalPolicy()) is label

    @pytest.mark.parametrize("wer,label", [
        (2.95, NO), (2.9500001, UNC), (5.0, UNC), (7.95, UNC), (7.9500001, YES),
    ])
    def test_specific_edges(self, wer, label):
        assert assign_label(wer, "fr", FR) is label

    def test_unknown_language_named(self):
        with pytest.raises(UnknownLanguageError, match="'de'"):
            assign_label(3.0, "de", FR)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            assign_label(-1.0, "fr", IntervalPolicy())

    @given(wer=st.floats(0, 500), lo=st.floats(0, 50), gap=st.floats(0.01, 50),
           center=st.floats(0, 50), half=st.floats(0.01, 10))
    def test_partitions_half_open(self, wer, lo, gap, center, half):
        for policy, lang in ((IntervalPolicy(no_upper=lo, yes_lower=lo + gap), "x"),
                             (IntervalPolicy(mode="specific", centers={"x": center}, half_width=half), "x")):
            a, b = policy.bounds(lang)
            expected = NO if wer <= a else UNC if wer <= b else YES
            assert assign_label(wer, lang, policy) is expected


def _utt(uid="u1", lang="en", text="the cat sat on the mat"):
    return Utterance(uid, lang, text)


def _out(uid="u1", lang="en", conf=0.99, hyp="the cat sat on the mat", decision="no"):
    return BaseModelOutput(uid, lang, conf, decision, hypothesis=hyp)


class TestBuildRecord:
    def test_identity(self):
        r = build_record(_utt(), _out())
        assert (r.wer, r.label, r.confidence_level) == (0.0, NO, ConfidenceLevel.A)

    def test_wrong_lid_is_d(self):
        r = build_record(_utt(), _out(lang="de", conf=0.999))
        assert r.confidence_level is ConfidenceLevel.D
        assert r.language_pseudo == "de"

    def test_scorer_cannot_lift_wrong_lid(self):
        r = build_record(_utt(), _out(lang="de"), scorer=lambda *a: ConfidenceLevel.A)
        assert r.confidence_level is ConfidenceLevel.D
        r = build_record(_utt(), _out(), scorer=lambda *a: ConfidenceLevel.C)
        assert r.confidence_level is ConfidenceLevel.C

    def test_twelve_percent_is_yes(self):
        ref = " ".join(f"w{i}" for i in range(25))
        hyp = ref.replace("w3 ", "x ", 1).replace("w7 ", "y ", 1).replace("w9 ", "z ", 1)
        assert word_errors(ref.split(), hyp.split()).wer == 12.0
        r = build_record(_utt(text=ref), _out(hyp=hyp))
        assert r.wer == 12.0 and r.label is YES

    def test_missing_reference_skipped(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert build_record(_utt(text=None), _out()) is None
        assert "missing reference" in caplog.text

    def test_missing_outputs_listed(self):
        with pytest.raises(MissingOutputError) as e:
            build_records([_utt("a"), _utt("b")], {"a": _out("a")})
        assert e.value.missing == ["b"]

    def test_parallel_matches_serial(self):
        utts = [_utt(f"u{i}") for i in range(30)]
        outs = {u.utterance_id: _out(u.utterance_id, hyp="the cat sat" if i % 2 else "a")
                for i, u in enumerate(utts)}
        assert build_records(utts, outs, workers=4) == build_records(utts, outs)


def _record(i, label, level=ConfidenceLevel.B):
    wer = {NO: 1.0, YES: 20.0, UNC: 5.0}[label]
    return LabelRecord(f"r{i:04d}", "en", "en", wer, label, level, 0.97, ("hello", "world"))


def _records(n_no, n_yes, n_unc):
    labels = [NO] * n_no + [YES] * n_yes + [UNC] * n_unc
    return [_record(i, lab) for i, lab in enumerate(labels)]


class TestBalance:
    def test_already_balanced(self):
        m = balance_manifest(_records(100, 150, 150))
        assert m.counts == {"no": 100, "yes": 150, "uncertain": 150}

    def test_downsamples_no(self):
        m = balance_manifest(_records(400, 150, 150))
        assert m.counts == {"no": 100, "yes": 150, "uncertain": 150}

    def test_empty_class_lists_counts(self):
        with pytest.raises(EmptyClassError, match="yes=0"):
            balance_manifest(_records(10, 0, 5))

    def test_no_duplicates_and_order_kept(self):
        recs = _records(300, 90, 500)
        m = balance_manifest(recs, seed=3)
        ids = [e.utterance_id for e in m.examples]
        assert len(ids) == len(set(ids))
        assert ids == sorted(ids)

    def test_deterministic(self):
        recs = _records(300, 90, 500)
        assert balance_manifest(recs, seed=1).to_dicts() == balance_manifest(recs, seed=1).to_dicts()
        assert balance_manifest(recs, seed=1).to_dicts() != balance_manifest(recs, seed=2).to_dicts()

    @given(st.integers(1, 400), st.integers(1, 400), st.integers(1, 400))
    def test_never_exceeds_and_hits_ratio(self, a, b, c):
        counts = balance_manifest(_records(a, b, c)).counts
        assert counts["no"] <= a and counts["yes"] <= b and counts["uncertain"] <= c
        # smallest ratio-normalized class is kept whole
        scale = min(a / 1, b / 1.5, c / 1.5)
        for got, r in zip(counts.values(), (1, 1.5, 1.5)):
            assert abs(got - scale * r) <= 1


class TestFormats:
    def test_no(self):
        ex = format_example(_record(0, NO))
        assert ex.transcription == "hello world" and ex.confidence_token is None
        assert set(ex.loss_mask) == {"language", "language_confidence", "decision_token", "transcription"}
        assert ex.decision_token == DECISION_TOKENS[NO]

    def test_yes(self):
        ex = format_example(_record(0, YES))
        assert ex.transcription is None and ex.confidence_token is None
        assert set(ex.loss_mask) == {"language", "language_confidence", "decision_token"}
        assert "transcription" not in ex.to_dict()

    def test_uncertain(self):
        ex = format_example(_record(0, UNC, ConfidenceLevel.C))
        assert ex.transcription == "hello world"
        assert ex.confidence_token == "<|conf_C|>"
        assert "transcription" not in ex.loss_mask

    def test_tokens_distinct(self):
        assert len(set(DECISION_TOKENS.values())) == 3
        assert Counter(format_example(_record(i, lab)).task_format
                       for i, lab in enumerate([NO, YES, UNC])) == {"no": 1, "yes": 1, "uncertain": 1}
