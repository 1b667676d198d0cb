"""HTTP service for interactive coarse-to-fine refinement sessions.

Clients upload a probability map once, open a session from a drawn polygon
and step the level-set evolution; responses carry sub-pixel contours so the
UI can redraw cheaply.  Sessions live in memory with LRU + idle-TTL eviction;
each session is stepped under an exclusive lock (a concurrent step gets 409,
it is never queued silently).
"""
from __future__ import annotations

import hashlib
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from pydantic import BaseModel, Field

from .errors import DomainError
from .levelset import EmbeddingState, EvolutionParams, _smoothed_boundary, compute_g, mgac_step
from .raster import (
    BinaryMask,
    Polygon,
    ScalarField,
    mask_to_contours,
    polygon_from_obj,
    polygon_to_mask,
    polygon_to_obj,
    sniff_raster,
)

__all__ = ["create_app", "preload_maps", "rle_encode"]

MAX_BODY_BYTES = 16 * 1024 * 1024
MAX_SESSIONS = 64
IDLE_TTL_SECONDS = 30 * 60
MAX_STEPS_PER_CALL = 500


class PolygonBody(BaseModel):
    closed: bool
    vertices: list[list[float]]


class ParamsBody(BaseModel):
    lam: float = Field(default=0.0, alias="lambda", ge=0)
    c: float = 1.0
    mu: int = Field(default=1, ge=0, le=4)
    balloon_threshold: float = Field(default=0.3, ge=0, le=1)

    model_config = {"populate_by_name": True}


class SessionCreateBody(BaseModel):
    prob_map_id: str
    init_polygon: PolygonBody
    params: ParamsBody | None = None
    image_ref: str | None = None


class StepBody(BaseModel):
    steps: int


@dataclass
class MapEntry:
    raw: bytes
    kind: str
    field: ScalarField


@dataclass
class Session:
    id: str
    map_id: str
    prob: ScalarField
    params: EvolutionParams
    g: ScalarField
    state: EmbeddingState
    image_ref: str | None = None
    history: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = 0.0


def rle_encode(bits: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating and starting with the false count."""
    flat = np.asarray(bits, dtype=bool).ravel()
    change = np.nonzero(np.diff(flat))[0] + 1
    lengths = np.diff(np.concatenate([[0], change, [flat.size]])).tolist()
    return ([0] + lengths) if flat[0] else lengths


def _decode_map(raw: bytes) -> MapEntry:
    import io
    import tempfile

    kind = sniff_raster(raw)
    if kind is None:
        raise DomainError("body is not FPM1, PGM or PPM")
    # the raster readers take paths; round-trip through a spooled temp file
    with tempfile.NamedTemporaryFile(suffix=f".{kind}") as tmp:
        tmp.write(raw)
        tmp.flush()
        from . import raster

        if kind == "fpm":
            fld = raster.read_fpm(tmp.name)
            fld = ScalarField(np.clip(fld.values, 0.0, 1.0), probabilities=True)
        elif kind == "pgm":
            fld = raster.read_pgm(tmp.name)
        else:
            fld = raster.read_ppm(tmp.name)
    return MapEntry(raw=raw, kind=kind, field=fld)


def _contour_objs(mask: BinaryMask) -> list[dict]:
    return [polygon_to_obj(p) for p in mask_to_contours(mask)]


def _params_obj(p: EvolutionParams) -> dict:
    return {"lambda": p.lam, "c": p.c, "mu": p.mu, "balloon_threshold": p.balloon_threshold}


def create_app(
    max_body_bytes: int = MAX_BODY_BYTES,
    max_sessions: int = MAX_SESSIONS,
    idle_ttl_seconds: float = IDLE_TTL_SECONDS,
    cors_origin: str | None = None,
    clock=time.monotonic,
) -> FastAPI:
    app = FastAPI(title="contourforge refine service")
    if cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    maps: dict[str, MapEntry] = {}
    sessions: OrderedDict[str, Session] = OrderedDict()
    store_lock = threading.Lock()
    app.state.maps = maps
    app.state.sessions = sessions

    def _touch(session: Session) -> None:
        session.last_access = clock()
        sessions.move_to_end(session.id)

    def _evict() -> None:
        now = clock()
        stale = [sid for sid, s in sessions.items()
                 if now - s.last_access > idle_ttl_seconds]
        for sid in stale:
            del sessions[sid]
        while len(sessions) > max_sessions:
            sessions.popitem(last=False)

    def _get_session(session_id: str) -> Session:
        with store_lock:
            _evict()
            session = sessions.get(session_id)
            if session is None:
                raise HTTPException(404, f"unknown session {session_id}")
            _touch(session)
            return session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/v1/maps", status_code=201)
    async def upload_map(request: Request):
        raw = await request.body()
        if len(raw) > max_body_bytes:
            raise HTTPException(413, f"body exceeds {max_body_bytes} bytes")
        try:
            entry = _decode_map(raw)
        except DomainError as e:
            raise HTTPException(400, str(e)) from None
        map_id = hashlib.sha256(raw).hexdigest()[:16]
        with store_lock:
            maps.setdefault(map_id, entry)
        return {"map_id": map_id}

    @app.get("/api/v1/maps/{map_id}")
    def get_map(map_id: str):
        entry = maps.get(map_id)
        if entry is None:
            raise HTTPException(404, f"unknown map {map_id}")
        return Response(
            content=entry.raw,
            media_type="application/octet-stream",
            headers={"X-Map-Format": entry.kind},
        )

    def _rasterize(body: PolygonBody, fld: ScalarField) -> tuple[Polygon, BinaryMask]:
        try:
            poly = polygon_from_obj({"closed": body.closed, "vertices": body.vertices})
        except DomainError as e:
            raise HTTPException(422, str(e)) from None
        if not poly.closed or len(poly) < 3:
            raise HTTPException(422, "polygon must be closed with at least 3 vertices")
        v = poly.vertices
        if (v[:, 0].min() < 0 or v[:, 0].max() > fld.width - 1
                or v[:, 1].min() < 0 or v[:, 1].max() > fld.height - 1):
            raise HTTPException(422, "polygon leaves the map bounds")
        mask = polygon_to_mask(poly, fld.width, fld.height)
        if mask.empty:
            raise HTTPException(422, "polygon encloses no pixel centers")
        return poly, mask

    def _session_g(prob: ScalarField, init_mask: BinaryMask, params: EvolutionParams) -> ScalarField:
        if params.lam > 0:
            y = _smoothed_boundary(init_mask)
        else:
            y = ScalarField(np.zeros_like(prob.values), probabilities=True)
        return compute_g(prob, y, params.lam)

    @app.post("/api/v1/sessions", status_code=201)
    def create_session(body: SessionCreateBody):
        entry = maps.get(body.prob_map_id)
        if entry is None:
            raise HTTPException(404, f"unknown map {body.prob_map_id}")
        prob = ScalarField(entry.field.values[:1], probabilities=True)
        pb = body.params or ParamsBody()
        params = EvolutionParams(
            lam=pb.lam, c=pb.c, mu=pb.mu, max_steps=MAX_STEPS_PER_CALL,
            snapshot_every=MAX_STEPS_PER_CALL, balloon_threshold=pb.balloon_threshold,
        )
        if body.image_ref is not None and body.image_ref not in maps:
            raise HTTPException(404, f"unknown display image {body.image_ref}")
        _, mask = _rasterize(body.init_polygon, prob)
        session = Session(
            id=uuid.uuid4().hex,
            map_id=body.prob_map_id,
            prob=prob,
            params=params,
            g=_session_g(prob, mask, params),
            state=EmbeddingState(mask, 0),
            image_ref=body.image_ref,
        )
        with store_lock:
            sessions[session.id] = session
            _touch(session)
            _evict()
        return {
            "session_id": session.id,
            "step": 0,
            "contours": _contour_objs(mask),
            "params": _params_obj(params),
        }

    @app.post("/api/v1/sessions/{session_id}/step")
    def step_session(session_id: str, body: StepBody):
        if not 1 <= body.steps <= MAX_STEPS_PER_CALL:
            raise HTTPException(422, f"steps must lie in [1, {MAX_STEPS_PER_CALL}]")
        session = _get_session(session_id)
        if not session.lock.acquire(blocking=False):
            raise HTTPException(409, "a step request is already in flight for this session")
        try:
            before = session.state.u
            state = session.state
            unchanged = 0
            for _ in range(body.steps):
                nxt = mgac_step(state, session.g, session.params)
                unchanged = unchanged + 1 if np.array_equal(nxt.u.bits, state.u.bits) else 0
                state = nxt
                if unchanged >= 3:
                    break
            session.state = state
            changed = not np.array_equal(before.bits, state.u.bits)
            session.history.append((state.step, changed))
            return {
                "step": state.step,
                "contours": _contour_objs(state.u),
                "changed": changed,
            }
        finally:
            session.lock.release()

    @app.get("/api/v1/sessions/{session_id}")
    def get_session(session_id: str, include: str | None = Query(default=None)):
        session = _get_session(session_id)
        payload = {
            "session_id": session.id,
            "map_id": session.map_id,
            "image_ref": session.image_ref,
            "step": session.state.step,
            "params": _params_obj(session.params),
            "contours": _contour_objs(session.state.u),
            "collapsed": session.state.collapsed,
            "history_length": len(session.history),
        }
        if include == "mask":
            payload["mask_rle"] = rle_encode(session.state.u.bits)
            payload["width"] = session.state.u.width
            payload["height"] = session.state.u.height
        return payload

    @app.post("/api/v1/sessions/{session_id}/reset")
    def reset_session(session_id: str, body: PolygonBody):
        session = _get_session(session_id)
        if not session.lock.acquire(blocking=False):
            raise HTTPException(409, "a step request is already in flight for this session")
        try:
            _, mask = _rasterize(body, session.prob)
            session.state = EmbeddingState(mask, 0)
            session.g = _session_g(session.prob, mask, session.params)
            session.history.clear()
            return {
                "session_id": session.id,
                "step": 0,
                "contours": _contour_objs(mask),
                "params": _params_obj(session.params),
            }
        finally:
            session.lock.release()

    return app


def preload_maps(app: FastAPI, directory) -> dict[str, str]:
    """Load every raster in a directory into the app's map store."""
    from pathlib import Path

    loaded = {}
    for path in sorted(Path(directory).iterdir()):
        if path.suffix.lower() not in (".fpm", ".pgm", ".ppm"):
            continue
        raw = path.read_bytes()
        try:
            entry = _decode_map(raw)
        except DomainError:
            continue
        map_id = hashlib.sha256(raw).hexdigest()[:16]
        app.state.maps.setdefault(map_id, entry)
        loaded[path.name] = map_id
    return loaded
