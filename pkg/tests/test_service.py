from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest
from fastapi.testclient import TestClient

from selective_asr import evaluation as ev
from selective_asr.backends import BackendDescriptor, BackendKind, RemoteBackend, ReplayBackend, SyntheticBackend
from selective_asr.config import AppConfig
from selective_asr.corpus import Utterance
from selective_asr.engine import BaseModelOutput
from selective_asr.service import create_app
from selective_asr.synthetic import mls_descriptors


def _app(synth=None):
    descs = mls_descriptors()
    cfg = AppConfig(descriptors=tuple(descs), dataset="mls")
    if synth is None:
        utts = [Utterance("n1", "en", "good morning all", duration=3.0),
                Utterance("y1", "de", "guten morgen alle", duration=4.0)]
        outs = [BaseModelOutput("n1", "en", 0.99, "no", hypothesis="good morning all"),
                BaseModelOutput("y1", "de", 0.99, "yes")]
    else:
        utts, outs = synth.utterances, synth.outputs
    backends = {d.backend_id: SyntheticBackend(d, "mls") for d in descs}
    return TestClient(create_app(cfg, utts, ReplayBackend(outs), backends)), cfg


def test_no_token_direct_without_ledger():
    client, _ = _app()
    r = client.post("/v1/transcribe", json={"utterance_id": "n1"})
    assert r.status_code == 200
    body = r.json()
    assert (body["route"], body["reason"], body["backend_id"]) == ("direct", "DecisionNo", None)
    assert body["transcript"] == "good morning all"
    assert client.get("/v1/metrics").json()["total_cost"] == 0


def test_yes_token_invokes_once():
    client, _ = _app()
    body = client.post("/v1/transcribe", json={"utterance_id": "y1"}).json()
    assert (body["route"], body["backend_id"]) == ("invoke", "assembly")
    assert body["accumulated_cost"] == 4.0
    m = client.get("/v1/metrics").json()
    assert m["cost_by_backend"] == {"assembly": 4.0}


def test_metrics_rate():
    client, _ = _app()
    assert client.get("/v1/metrics").json()["invocation_rate"] is None
    for uid in ["n1", "y1", "n1", "n1"]:
        client.post("/v1/transcribe", json={"utterance_id": uid})
    m = client.get("/v1/metrics").json()
    assert (m["requests"], m["invocations"]) == (4, 1)
    assert m["invocation_rate"] == ev.invocation_rate([False, True, False, False])


def test_config_endpoint():
    client, cfg = _app()
    body = client.get("/v1/config").json()
    assert body["thresholds"] == {"probability_floor": 0.96, "entropy_ceiling": 0.0015,
                                  "level_threshold": "B"}
    assert body == cfg.public_dict()


def test_validation_errors():
    client, _ = _app()
    assert client.post("/v1/transcribe", json={"utterance_id": "zz"}).status_code == 404
    r = client.post("/v1/transcribe", json={"utt": "n1"})
    assert r.status_code == 422
    assert "utterance_id" in r.text


def test_backend_failure_is_502():
    desc = BackendDescriptor("cloud", BackendKind.REMOTE, frozenset({"de"}),
                             per_language_wer={"de": 1.0}, endpoint="https://asr.invalid")
    remote = RemoteBackend(desc, client=httpx.Client(
        transport=httpx.MockTransport(lambda r: httpx.Response(500))))
    cfg = AppConfig(descriptors=(desc,), dataset="x")
    app = create_app(cfg, [Utterance("y1", "de", "a b")],
                     ReplayBackend([BaseModelOutput("y1", "de", 0.99, "yes")]), {"cloud": remote})
    r = TestClient(app).post("/v1/transcribe", json={"utterance_id": "y1"})
    assert r.status_code == 502
    assert r.json()["detail"]["backend_id"] == "cloud"


@pytest.fixture(scope="module")
def served(request):
    from selective_asr.synthetic import SyntheticSpec, make_corpus
    synth = make_corpus(seed=21, spec=SyntheticSpec(n_utterances=150))
    return synth, _app(synth)


def test_decisions_match_offline_evaluation(served):
    synth, (client, cfg) = served
    offline = ev.evaluate_system(synth.evaluation_corpus(), cfg.engine)
    with ThreadPoolExecutor(8) as pool:
        bodies = list(pool.map(
            lambda u: client.post("/v1/transcribe", json={"utterance_id": u.utterance_id}).json(),
            synth.utterances))
    assert [(b["route"], b["reason"]) for b in bodies] == [(e.route, e.reason) for e in offline.log]
    m = client.get("/v1/metrics").json()
    assert m["invocation_rate"] == pytest.approx(offline.invocation_rate)
    assert m["total_cost"] == pytest.approx(offline.cost)
