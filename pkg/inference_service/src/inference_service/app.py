"""HTTP app implementing the prediction wire protocol.

POST /predict takes `{"image_ids": [...]}` and answers
`{"predictions": [...]}` in request order, omitting ids the model has no
answer for; GET /health reports liveness. Malformed request bodies get a
400 with a message.

The default model is the deterministic rule/hash stub. A real model can
be dropped in by passing any `predictor(image_ids) -> list[dict]`
callable to `create_app`, e.g. one that loads classifier weights and
reads image bytes from a directory; nothing else changes.
"""

from __future__ import annotations

from typing import Any, Callable, Sequence

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .rules import RuleSet

Predictor = Callable[[Sequence[str]], list[dict[str, Any]]]


class PredictRequest(BaseModel):
    image_ids: list[str]


def stub_predictor(ruleset: RuleSet) -> Predictor:
    def predict(image_ids: Sequence[str]) -> list[dict[str, Any]]:
        out = []
        for image_id in image_ids:
            fields = ruleset.predict(image_id)
            if fields is None:
                continue
            out.append({"image_id": image_id, **fields})
        return out

    return predict


def create_app(ruleset: RuleSet | None = None, predictor: Predictor | None = None) -> FastAPI:
    app = FastAPI(title="inference-service", docs_url=None, redoc_url=None)
    predict_fn = predictor or stub_predictor(ruleset or RuleSet())

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": f"malformed request: {exc.errors()[:3]}"})

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/predict")
    def predict(request: PredictRequest) -> dict[str, Any]:
        return {"predictions": predict_fn(request.image_ids)}

    return app
