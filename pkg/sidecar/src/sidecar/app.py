"""HTTP service: POST /parse and GET /healthz."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from sidecar.backend import ModelUnavailable, ParseFailure, get_backend, load_lockfile
from sidecar.convert import FORMALISM_ALIASES, parse_one


class ParseRequest(BaseModel):
    text: str
    formalism: str


def create_app(backend=None) -> FastAPI:
    app = FastAPI(title="parser-sidecar")
    app.state.backend = backend or get_backend()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "backend": app.state.backend.name}

    @app.post("/parse")
    def parse(req: ParseRequest):
        if not req.text.strip():
            raise HTTPException(status_code=400, detail="text must be non-empty")
        if req.formalism not in FORMALISM_ALIASES:
            raise HTTPException(
                status_code=400,
                detail=f"formalism must be one of {sorted(FORMALISM_ALIASES)}",
            )
        try:
            fmt, payload, warning = parse_one(
                app.state.backend, req.text, req.formalism
            )
        except ParseFailure as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except ModelUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        body = {"format": fmt, "payload": payload}
        if warning:
            body["warning"] = warning
        return body

    return app
