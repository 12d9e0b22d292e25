"""HTTP inference service backing the interactive latent editor.

JSON envelopes carry binary vertex payloads as base64-encoded little-endian
float32 arrays, vertex-major ((x, y, z) per vertex); the template itself is
served as binary PLY. Model math stays float64 internally. Every mutating
endpoint accepts either a session token or an explicit latent (stateless
fallback), and sessions are isolated under one lock.
"""

from __future__ import annotations

import base64
import secrets
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .latent import ManipulationRequest, direct_manipulation
from .mesh import Mesh
from .meshio import mesh_to_ply_bytes
from .spectral import SpectralBasis, local_eigenproject


def encode_vertices(vertices: np.ndarray) -> dict:
    flat = np.ascontiguousarray(vertices, dtype="<f4")
    return {
        "dtype": "float32",
        "byte_order": "little",
        "shape": list(vertices.shape),
        "data": base64.b64encode(flat.tobytes()).decode("ascii"),
    }


def decode_vertices(payload: dict) -> np.ndarray:
    if payload.get("dtype") != "float32" or payload.get("byte_order") != "little":
        raise HTTPException(422, "vertex payload must be little-endian float32")
    raw = base64.b64decode(payload["data"])
    shape = tuple(payload["shape"])
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise HTTPException(422, f"payload size {len(raw)} != expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


class GenerateRequest(BaseModel):
    latent: list[float] | None = None
    seed: int | None = None
    truncation: float = 1.0


class TraverseRequest(BaseModel):
    session: str | None = None
    latent: list[float] | None = None
    dim: int
    value: float


class RandomizeRequest(BaseModel):
    session: str | None = None
    latent: list[float] | None = None
    attribute: int


class ManipulateRequest(BaseModel):
    session: str | None = None
    latent: list[float] | None = None
    vertex_ids: list[int]
    targets: list[list[float]]
    iterations: int = 50
    lr: float = 0.1


class EncodeRequest(BaseModel):
    vertices: dict


def create_app(
    model=None,
    basis: SpectralBasis | None = None,
    attribute_names: list[str] | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="eigenmesh inference service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    state = {
        "model": model,
        "basis": basis,
        "names": attribute_names,
        "sessions": {},
        "lock": threading.Lock(),
        "rng": np.random.default_rng(secrets.randbits(64)),
    }
    app.state.eigenmesh = state

    def require_model():
        if state["model"] is None:
            raise HTTPException(409, "model not loaded")
        return state["model"]

    def current_latent(session: str | None, latent: list[float] | None) -> np.ndarray:
        m = require_model()
        if latent is not None:
            z = np.asarray(latent, dtype=np.float64)
            if z.shape != (m.latent_size,):
                raise HTTPException(422, f"latent must have length {m.latent_size}")
            return z
        if session is None:
            raise HTTPException(422, "provide a session token or an explicit latent")
        with state["lock"]:
            entry = state["sessions"].get(session)
        if entry is None:
            raise HTTPException(404, f"unknown session {session}")
        return entry["latent"].copy()

    def store_session(token: str, latent: np.ndarray, start=None):
        with state["lock"]:
            entry = state["sessions"].setdefault(token, {})
            entry["latent"] = latent.copy()
            if start is not None:
                entry.setdefault("start_vertices", start.copy())

    def session_start(token: str | None, fallback: np.ndarray) -> np.ndarray:
        if token is None:
            return fallback
        with state["lock"]:
            entry = state["sessions"].get(token)
        if entry is None or "start_vertices" not in entry:
            return fallback
        return entry["start_vertices"]

    @app.get("/api/info")
    def info():
        m = require_model()
        names = state["names"] or [f"attribute_{w}" for w in range(m.attribute_count)]
        return {
            "attribute_count": m.attribute_count,
            "kappa": m.kappa,
            "latent_size": m.latent_size,
            "attribute_names": names,
            "vertex_count": int(m.stats.mean.shape[0]),
            "template_url": "/api/template",
            "segmentation_url": "/api/template/segmentation",
            "traversal_range": [-3.0, 3.0],
        }

    @app.get("/api/template")
    def template():
        m = require_model()
        mesh = Mesh(m.stats.mean, m.operators.topologies[0])
        return Response(
            content=mesh_to_ply_bytes(mesh, binary=True),
            media_type="application/octet-stream",
        )

    @app.get("/api/template/segmentation")
    def segmentation():
        require_model()
        if state["basis"] is None:
            raise HTTPException(409, "no precompute bundle loaded")
        seg = state["basis"].segmentation
        return {"labels": seg.labels.tolist(), "attribute_count": seg.attribute_count}

    @app.post("/api/generate")
    def generate(req: GenerateRequest):
        m = require_model()
        if req.latent is not None:
            z = np.asarray(req.latent, dtype=np.float64)
            if z.shape != (m.latent_size,):
                raise HTTPException(422, f"latent must have length {m.latent_size}")
        else:
            if not 0.0 < req.truncation <= 1.0:
                raise HTTPException(422, "truncation must be in (0, 1]")
            rng = np.random.default_rng(req.seed) if req.seed is not None else state["rng"]
            z = req.truncation * rng.standard_normal(m.latent_size)
        vertices = m.generate(z)
        token = secrets.token_hex(16)
        store_session(token, z, start=vertices)
        return {
            "session": token,
            "latent": z.tolist(),
            "vertices": encode_vertices(vertices),
        }

    @app.post("/api/traverse")
    def traverse_endpoint(req: TraverseRequest):
        m = require_model()
        z = current_latent(req.session, req.latent)
        if not 0 <= req.dim < m.latent_size:
            raise HTTPException(422, f"dim must be in [0, {m.latent_size})")
        z[req.dim] = req.value
        vertices = m.generate(z)
        start = session_start(req.session, vertices)
        displacement = np.linalg.norm(vertices - start, axis=1)
        if req.session is not None:
            store_session(req.session, z)
        return {
            "latent": z.tolist(),
            "vertices": encode_vertices(vertices),
            "displacement": displacement.tolist(),
        }

    @app.post("/api/randomize-attribute")
    def randomize(req: RandomizeRequest):
        m = require_model()
        z = current_latent(req.session, req.latent)
        if not 0 <= req.attribute < m.attribute_count:
            raise HTTPException(422, f"attribute must be in [0, {m.attribute_count})")
        blk = m.block(req.attribute)
        z[blk] = state["rng"].standard_normal(m.kappa)
        vertices = m.generate(z)
        start = session_start(req.session, vertices)
        if req.session is not None:
            store_session(req.session, z)
        return {
            "latent": z.tolist(),
            "vertices": encode_vertices(vertices),
            "displacement": np.linalg.norm(vertices - start, axis=1).tolist(),
        }

    @app.post("/api/manipulate")
    def manipulate(req: ManipulateRequest):
        m = require_model()
        if state["basis"] is None:
            raise HTTPException(409, "no precompute bundle loaded")
        z = current_latent(req.session, req.latent)
        try:
            manip = ManipulationRequest(
                np.asarray(req.vertex_ids, dtype=np.int64),
                np.asarray(req.targets, dtype=np.float64),
            )
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        if manip.vertex_ids.max() >= m.stats.mean.shape[0]:
            raise HTTPException(422, "vertex id out of range")
        result = direct_manipulation(
            m, z, manip, state["basis"].segmentation,
            iterations=req.iterations, lr=req.lr,
        )
        vertices = m.generate(result.latent)
        start = session_start(req.session, vertices)
        if req.session is not None:
            store_session(req.session, result.latent)
        return {
            "latent": result.latent.tolist(),
            "vertices": encode_vertices(vertices),
            "displacement": np.linalg.norm(vertices - start, axis=1).tolist(),
            "residuals": result.residuals,
            "initial_residual": result.initial_residual,
        }

    @app.post("/api/encode")
    def encode(req: EncodeRequest):
        m = require_model()
        vertices = decode_vertices(req.vertices)
        if vertices.shape != m.stats.mean.shape:
            raise HTTPException(422, f"vertices must be {list(m.stats.mean.shape)}")
        mu, sigma = m.encode(vertices)
        out = {"mu": mu.tolist(), "sigma": sigma.tolist()}
        if state["basis"] is not None:
            out["projection"] = local_eigenproject(vertices, state["basis"]).tolist()
        return out

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
