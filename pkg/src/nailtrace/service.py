"""HTTP inference service consumed by the browser demo.

Endpoints (all under /api/v1): POST /segment takes a raw PNG body and
returns instances plus a base64 fg/bg mask PNG; POST /render takes JSON
{image_png_b64, params} and returns base64 composited and overlay PNGs;
GET /healthz. One model instance, requests serialized through a lock.
"""

from __future__ import annotations

import base64
import io
import threading

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from .metrics import predict
from .model import SegModel
from .postprocess import NailInstance, extract_instances
from .render import RenderParams, render_overlay


def _png_bytes(arr: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _b64png(arr: np.ndarray, mode: str) -> str:
    return base64.b64encode(_png_bytes(arr, mode)).decode("ascii")


def pad_to_multiple(image: np.ndarray, multiple: int = 16) -> tuple[np.ndarray, int, int]:
    h, w = image.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        image = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return image, h, w


class InferenceEngine:
    """Owns the model; segmentation and rendering behind one lock."""

    def __init__(self, model: SegModel, max_edge: int = 640,
                 render_defaults: RenderParams | None = None):
        self.model = model.train_mode(False)
        self.max_edge = max_edge
        self.render_defaults = render_defaults or RenderParams()
        self._lock = threading.Lock()

    def segment(self, image: np.ndarray) -> tuple[list[NailInstance], np.ndarray, dict]:
        with self._lock:
            padded, h, w = pad_to_multiple(image)
            out = predict(self.model, padded)
            instances = []
            for inst in extract_instances(out):
                clipped = self._clip(inst, h, w)
                if clipped is not None:
                    instances.append(clipped)
            fg_prob = _softmax(out.fgbg_logits.data[0])[1][:h, :w]
            fg_mask = (fg_prob >= 0.5).astype(np.uint8) * 255
            fld = out.field.data[0][:, :h, :w]
            fg = fg_prob >= 0.5
            if fg.any():
                mean_vec = fld[:, fg].mean(axis=1)
                summary = {
                    "mean_direction": [float(mean_vec[0]), float(mean_vec[1])],
                    "mean_norm": float(np.sqrt((fld[:, fg] ** 2).sum(axis=0)).mean()),
                }
            else:
                summary = {"mean_direction": [0.0, 0.0], "mean_norm": 0.0}
            return instances, fg_mask, summary

    @staticmethod
    def _clip(inst: NailInstance, h: int, w: int) -> NailInstance | None:
        """Trim an instance found on the padded frame back to the true extent."""
        from .postprocess import _mask_to_rle

        mask = inst.pixel_mask()[:h, :w]
        if not mask.any():
            return None
        ys, xs = np.nonzero(mask)
        inst.rle = _mask_to_rle(mask)
        inst.bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        inst.centroid = (float(xs.mean()), float(ys.mean()))
        inst.area = int(mask.sum())
        inst.frame_size = (h, w)
        return inst

    def render(self, image: np.ndarray, params: RenderParams):
        instances, _, _ = self.segment(image)
        with self._lock:
            return render_overlay(image, instances, params)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def create_app(engine: InferenceEngine) -> FastAPI:
    app = FastAPI(title="nailtrace")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def _decode(body: bytes) -> np.ndarray | JSONResponse:
        try:
            img = Image.open(io.BytesIO(body)).convert("RGB")
        except Exception:
            return JSONResponse({"error": "request body is not a decodable image"}, status_code=400)
        if max(img.size) > engine.max_edge:
            return JSONResponse(
                {"error": f"image edge {max(img.size)} exceeds limit {engine.max_edge}"},
                status_code=413,
            )
        return np.asarray(img)

    @app.get("/api/v1/healthz")
    @app.get("/healthz")
    def healthz():
        return Response("ok", media_type="text/plain")

    @app.post("/api/v1/segment")
    async def segment(request: Request):
        body = await request.body()
        image = _decode(body)
        if isinstance(image, JSONResponse):
            return image
        instances, fg_mask, summary = engine.segment(image)
        return {
            "instances": [i.to_json_dict() for i in instances],
            "fgbg_png_b64": _b64png(fg_mask, "L"),
            "field_summary": summary,
        }

    @app.post("/api/v1/render")
    async def render(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return JSONResponse({"error": "expected JSON body"}, status_code=400)
        try:
            body = base64.b64decode(doc["image_png_b64"])
        except (KeyError, ValueError):
            return JSONResponse({"error": "missing or invalid image_png_b64"}, status_code=400)
        image = _decode(body)
        if isinstance(image, JSONResponse):
            return image
        try:
            params = RenderParams.from_dict(doc.get("params", {}))
        except Exception as exc:
            return JSONResponse({"error": f"bad render params: {exc}"}, status_code=400)
        overlay, composited = engine.render(image, params)
        return {
            "composited_png_b64": _b64png(composited, "RGB"),
            "overlay_png_b64": _b64png(overlay, "RGBA"),
        }

    return app
