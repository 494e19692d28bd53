import logging
import random

import httpx
import pytest

from selective_asr.backends import (
    BackendDescriptor,
    BackendError,
    BackendKind,
    InvocationLedger,
    NoBackendError,
    RemoteBackend,
    ReplayBackend,
    ReplayMissError,
    SyntheticBackend,
    build_lid_top,
    load_descriptors,
    synthetic_seed,
)
from selective_asr.corpus import Utterance, write_jsonl
from selective_asr.engine import BaseModelOutput
from selective_asr.synthetic import mls_descriptors
from selective_asr.text_metrics import word_errors


def desc(bid, wers, kind="synthetic", **kw):
    return BackendDescriptor(bid, kind, frozenset(wers), per_language_wer=wers, **kw)


class TestLidTop:
    def test_table_minima(self):
        reg = build_lid_top(mls_descriptors(), "mls")
        assert reg.mapping["de"] == "assembly" and reg.wers["de"] == 3.91
        assert reg.mapping["es"] == "meta" and reg.wers["es"] == 4.02
        assert reg.mapping["pl"] == "openai" and reg.wers["pl"] == 4.52

    def test_single_backend(self):
        reg = build_lid_top([desc("only", {"en": 9.0, "de": 3.0})], "x")
        assert reg.mapping == {"de": "only", "en": "only"}

    def test_tie_breaks_lexicographically(self):
        reg = build_lid_top([desc("zeta", {"en": 5.0}), desc("alpha", {"en": 5.0})], "x")
        assert reg.lookup("en") == "alpha"

    def test_dataset_specific_wer_preferred(self):
        a = desc("a", {"en": 5.0}, dataset_wer={"vox": {"en": 9.0}})
        b = desc("b", {"en": 6.0})
        assert build_lid_top([a, b], "mls").lookup("en") == "a"
        assert build_lid_top([a, b], "vox").lookup("en") == "b"

    def test_gaps_listed(self):
        with pytest.raises(NoBackendError, match=r"\['fr'\]"):
            build_lid_top([desc("a", {"en": 5.0})], "x", languages=["en", "fr"])

    def test_unknown_lookup(self):
        with pytest.raises(NoBackendError):
            build_lid_top([desc("a", {"en": 5.0})], "x").lookup("fr")


REF = " ".join(f"word{i}" for i in range(100))


class TestSynthetic:
    def test_de_fixture_wer(self):
        b = SyntheticBackend(desc("assembly", {"de": 3.91}))
        hyp = b.transcribe(Utterance("u1", "de", REF))
        assert word_errors(REF.split(), hyp).wer == pytest.approx(3.91, abs=1.0)

    def test_deterministic_per_backend_and_utterance(self):
        b = SyntheticBackend(desc("m", {"en": 20.0}))
        u = Utterance("u1", "en", REF)
        assert b.transcribe(u) == b.transcribe(u)
        assert b.transcribe(u) != b.transcribe(Utterance("u2", "en", REF))

    def test_seed_derivation(self):
        import hashlib
        digest = hashlib.sha256(b"meta/utt-7").digest()
        assert synthetic_seed("meta", "utt-7") == int.from_bytes(digest[:8], "big")

    def test_difficulty_scales_target(self):
        b = SyntheticBackend(desc("m", {"en": 40.0}))
        assert b.target_wer(Utterance("u", "en", REF, difficulty=2.0), "en") == 80.0
        assert b.target_wer(Utterance("u", "en", REF, difficulty=4.0), "en") == 100.0

    def test_wrong_language_decode(self):
        b = SyntheticBackend(desc("m", {"en": 5.0, "de": 5.0}))
        hyp = b.transcribe(Utterance("u", "en", REF), "de")
        assert word_errors(REF.split(), hyp).wer == 100.0

    def test_unsupported_language(self):
        b = SyntheticBackend(desc("m", {"en": 5.0}))
        with pytest.raises(BackendError) as e:
            b.transcribe(Utterance("u", "fr", REF))
        assert e.value.backend_id == "m"


class TestReplay:
    def test_known_id_verbatim(self):
        r = ReplayBackend([BaseModelOutput("a", "en", 0.9, "no", hypothesis="Hello there")])
        assert r.transcribe(Utterance("a", "en")) == ["Hello", "there"]

    def test_miss_names_id(self):
        with pytest.raises(ReplayMissError, match="zz"):
            ReplayBackend([]).output("zz")

    def test_duplicates_rejected(self):
        o = BaseModelOutput("a", "en", 0.9, "no", hypothesis="x")
        with pytest.raises(ValueError, match="duplicate"):
            ReplayBackend([o, o])


class TestRemote:
    def _backend(self, handler, **kw):
        d = BackendDescriptor("cloud", BackendKind.REMOTE, frozenset({"en"}),
                              endpoint="https://asr.invalid/v1", auth_env="ASR_TOKEN", **kw)
        return RemoteBackend(d, client=httpx.Client(transport=httpx.MockTransport(handler)))

    def test_json_response(self, monkeypatch):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={"text": "Hello, World"})

        monkeypatch.setenv("ASR_TOKEN", "s3cret")
        words = self._backend(handler).transcribe(Utterance("u", "en", audio="u.wav"))
        assert words == ["hello", "world"]
        assert seen["auth"] == "Bearer s3cret"

    def test_plain_text_response(self):
        b = self._backend(lambda r: httpx.Response(200, text="good morning"))
        assert b.transcribe(Utterance("u", "en")) == ["good", "morning"]

    def test_server_error_retriable(self):
        b = self._backend(lambda r: httpx.Response(503))
        with pytest.raises(BackendError) as e:
            b.transcribe(Utterance("u", "en"))
        assert e.value.retriable and e.value.backend_id == "cloud"

    def test_client_error_not_retriable(self):
        b = self._backend(lambda r: httpx.Response(400))
        with pytest.raises(BackendError) as e:
            b.transcribe(Utterance("u", "en"))
        assert not e.value.retriable

    def test_timeout_retriable(self):
        def handler(request):
            raise httpx.ReadTimeout("slow", request=request)

        with pytest.raises(BackendError) as e:
            self._backend(handler).transcribe(Utterance("u", "en"))
        assert e.value.retriable


class TestLedger:
    def test_entry_cost(self):
        led = InvocationLedger({"a": 0.002})
        assert led.record(Utterance("u", "en", duration=10.0), "a").cost == pytest.approx(0.02)

    def test_empty_total(self):
        assert InvocationLedger({"a": 1.0}).total_cost() == 0

    def test_three_entries(self):
        led = InvocationLedger({"a": 0.002})
        for i in range(3):
            led.record(Utterance(f"u{i}", "en", duration=10.0), "a")
        assert led.total_cost() == pytest.approx(0.06)
        assert led.totals() == {"a": pytest.approx(0.06)}

    def test_duplicate_rejected(self, caplog):
        led = InvocationLedger({"a": 1.0})
        u = Utterance("u", "en", duration=2.0)
        led.record(u, "a")
        with caplog.at_level(logging.WARNING):
            assert led.record(u, "a") is None
        assert len(led) == 1 and "duplicate" in caplog.text

    def test_unregistered_backend(self):
        with pytest.raises(KeyError):
            InvocationLedger({"a": 1.0}).record(Utterance("u", "en"), "b")

    def test_order_invariant_totals(self):
        utts = [Utterance(f"u{i}", "en", duration=0.25 * (i + 1)) for i in range(40)]
        pairs = [(u, "ab"[i % 2]) for i, u in enumerate(utts)]
        a, b = InvocationLedger({"a": 0.5, "b": 2.0}), InvocationLedger({"a": 0.5, "b": 2.0})
        for u, bid in pairs:
            a.record(u, bid)
        random.Random(0).shuffle(pairs)
        for u, bid in pairs:
            b.record(u, bid)
        assert a.totals() == b.totals()


def test_descriptor_file_round_trip(tmp_path):
    descs = mls_descriptors(cost_per_audio_second=0.006)
    write_jsonl(tmp_path / "b.jsonl", (d.to_dict() for d in descs))
    assert load_descriptors(tmp_path / "b.jsonl") == descs
