"""FastAPI application implementing the embedding wire protocol.

POST /v1/embed with {"texts": [...]} returns {"dim": D, "vectors": [...]}
with one D-dimensional vector per input text, in order.  GET /v1/health
reports status, dimension, and the loaded model.  Errors use status 400
with {"error": "..."} bodies, including malformed request JSON.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backends import EmbeddingBackend, load_backend


@dataclass
class ServiceConfig:
    model: str = "sentence-transformers/all-MiniLM-L6-v2"
    host: str = "127.0.0.1"
    port: int = 8756
    max_batch: int = 64
    max_text_len: int = 8192

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        addr = os.environ.get("EMBED_ADDR", "127.0.0.1:8756")
        host, _, port = addr.rpartition(":")
        return cls(
            model=os.environ.get("EMBED_MODEL", cls.model),
            host=host or "127.0.0.1",
            port=int(port),
            max_batch=int(os.environ.get("EMBED_MAX_BATCH", cls.max_batch)),
            max_text_len=int(os.environ.get("EMBED_MAX_TEXT_LEN", cls.max_text_len)),
        )


class EmbedRequest(BaseModel):
    texts: list[str]


class EmbedResponse(BaseModel):
    dim: int
    vectors: list[list[float]]


class HealthResponse(BaseModel):
    status: str
    dim: int
    model: str


def create_app(config: ServiceConfig | None = None, backend: EmbeddingBackend | None = None) -> FastAPI:
    config = config or ServiceConfig.from_env()
    backend = backend or load_backend(config.model)
    app = FastAPI(title="embed-service", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def validation_error(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:1])})

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", dim=backend.dim, model=backend.model_name)

    @app.post("/v1/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest):
        if len(request.texts) > config.max_batch:
            return JSONResponse(status_code=400, content={"error": "batch too large"})
        texts = [t[: config.max_text_len] for t in request.texts]
        vectors = backend.encode(texts)
        return EmbedResponse(dim=backend.dim, vectors=[v.tolist() for v in vectors])

    return app


def main() -> None:
    import uvicorn

    config = ServiceConfig.from_env()
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")


if __name__ == "__main__":
    main()
