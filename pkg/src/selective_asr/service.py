"""HTTP front end around the router (FastAPI).

Endpoints:

* ``POST /v1/transcribe`` with ``{"utterance_id": ...}``: route one
  pre-registered utterance and return its transcript.
* ``GET /v1/metrics``: request count, invocations, rolling invocation rate,
  ledger totals.
* ``GET /v1/config``: active thresholds and policy.
"""

from __future__ import annotations

import threading
import time
from typing import Any, Mapping, Sequence

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .backends import BackendError, InvocationLedger, NoBackendError, ReplayBackend, ReplayMissError
from .config import AppConfig
from .corpus import Utterance
from .engine import route

__all__ = ["create_app", "TranscribeRequest", "TranscribeResponse", "serve"]


class TranscribeRequest(BaseModel):
    utterance_id: str


class TranscribeResponse(BaseModel):
    utterance_id: str
    transcript: str
    route: str
    reason: str
    backend_id: str | None = None
    latency_ms: float
    accumulated_cost: float


class _Stats:
    def __init__(self):
        self.lock = threading.Lock()
        self.requests = 0
        self.invocations = 0


def create_app(config: AppConfig, utterances: Sequence[Utterance], base: ReplayBackend,
               backends: Mapping[str, Any]) -> FastAPI:
    registry = config.registry
    by_id = {u.utterance_id: u for u in utterances}
    ledger = InvocationLedger(config.rates)
    stats = _Stats()
    app = FastAPI(title="selective-asr router")
    app.state.ledger = ledger

    @app.post("/v1/transcribe", response_model=TranscribeResponse)
    def transcribe(req: TranscribeRequest) -> TranscribeResponse:
        start = time.perf_counter()
        utt = by_id.get(req.utterance_id)
        if utt is None:
            raise HTTPException(404, detail={"field": "utterance_id",
                                             "error": f"unknown utterance {req.utterance_id!r}"})
        try:
            output = base.output(utt.utterance_id)
        except ReplayMissError as e:
            raise HTTPException(404, detail={"field": "utterance_id", "error": str(e)}) from None
        decision = route(output, config.engine)
        backend_id = None
        if decision.invoked:
            try:
                backend_id = registry.lookup(decision.target_language)
                words = backends[backend_id].transcribe(utt, decision.target_language)
            except (BackendError, NoBackendError) as e:
                raise HTTPException(502, detail={"reason": decision.reason.value,
                                                 "backend_id": backend_id, "error": str(e)}) from None
            ledger.record(utt, backend_id)
        else:
            words = list(decision.hypothesis or ())
        with stats.lock:
            stats.requests += 1
            stats.invocations += decision.invoked
        return TranscribeResponse(
            utterance_id=utt.utterance_id,
            transcript=" ".join(words),
            route=decision.route.value,
            reason=decision.reason.value,
            backend_id=backend_id,
            latency_ms=1000.0 * (time.perf_counter() - start),
            accumulated_cost=ledger.total_cost(),
        )

    @app.get("/v1/metrics")
    def metrics() -> dict:
        with stats.lock:
            n, k = stats.requests, stats.invocations
        return {
            "requests": n,
            "invocations": k,
            "invocation_rate": 100.0 * k / n if n else None,
            "total_cost": ledger.total_cost(),
            "cost_by_backend": ledger.totals(),
        }

    @app.get("/v1/config")
    def active_config() -> dict:
        return config.public_dict()

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    # uvicorn drains in-flight requests on SIGINT/SIGTERM
    uvicorn.run(app, host=host, port=port, timeout_graceful_shutdown=30)
