"""FastAPI application: POST /embed and GET /health.

The service is stateless between requests; for a pinned model version the
same texts always yield the same vectors, in request order.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .encoder import EncoderUnavailable, SentenceEncoder

MAX_TEXTS = 256
MAX_TOTAL_CHARS = 1_000_000


class EmbedRequest(BaseModel):
    texts: list[str]


def create_app(encoder=None) -> FastAPI:
    encoder = encoder if encoder is not None else SentenceEncoder()
    app = FastAPI(title="embed-service")

    @app.get("/health")
    def health():
        return {"status": "ok", "model": encoder.model_id,
                "loaded": getattr(encoder, "loaded", True)}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        if not request.texts:
            return JSONResponse(status_code=400,
                                content={"error": "texts must be non-empty"})
        if len(request.texts) > MAX_TEXTS:
            return JSONResponse(
                status_code=400,
                content={"error": f"at most {MAX_TEXTS} texts per call"})
        if sum(len(t) for t in request.texts) > MAX_TOTAL_CHARS:
            return JSONResponse(status_code=400,
                                content={"error": "payload exceeds size cap"})
        try:
            vectors = encoder.encode(request.texts)
        except EncoderUnavailable as exc:
            return JSONResponse(status_code=503, content={"error": str(exc)})
        return {"dim": int(vectors.shape[1]),
                "model": encoder.model_id,
                "vectors": [[float(x) for x in row] for row in vectors]}

    return app
