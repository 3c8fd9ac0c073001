"""Image embedding backends.

"pixelstats" is the deterministic offline default: a downsampled RGB patch
grid, L2-normalized. "clip:<checkpoint>" runs a real vision-language model
through `transformers` (install the [clip] extra); the embedding dimension is
whatever the checkpoint produces.
"""
from __future__ import annotations

import numpy as np
from PIL import Image


class BackendError(RuntimeError):
    pass


PIXELSTATS_SIDE = 8  # 8x8 RGB patches -> 192-dim embeddings


def _embed_pixelstats(paths: list[str]) -> np.ndarray:
    vecs = []
    for path in paths:
        try:
            with Image.open(path) as img:
                rgb = img.convert("RGB").resize((PIXELSTATS_SIDE, PIXELSTATS_SIDE),
                                                Image.BILINEAR)
        except OSError as exc:
            raise BackendError(f"cannot decode image {path}: {exc}") from exc
        arr = np.asarray(rgb, dtype=np.float64).reshape(-1) / 255.0
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise BackendError(f"image {path} produced a zero embedding")
        vecs.append(arr / norm)
    return np.stack(vecs)


def _embed_clip(paths: list[str], checkpoint: str) -> np.ndarray:
    try:
        import torch
        from transformers import CLIPModel, CLIPProcessor
    except ImportError as exc:
        raise BackendError(
            "clip backend needs the [clip] extra (transformers + torch)") from exc
    try:
        model = CLIPModel.from_pretrained(checkpoint)
        processor = CLIPProcessor.from_pretrained(checkpoint)
    except Exception as exc:  # model download/load failures surface as BackendError
        raise BackendError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
    model.eval()
    images = []
    for path in paths:
        try:
            with Image.open(path) as img:
                images.append(img.convert("RGB").copy())
        except OSError as exc:
            raise BackendError(f"cannot decode image {path}: {exc}") from exc
    with torch.no_grad():
        inputs = processor(images=images, return_tensors="pt")
        feats = model.get_image_features(**inputs)
        feats = feats / feats.norm(dim=-1, keepdim=True)
    return feats.double().cpu().numpy()


def available_backends() -> list[str]:
    return ["pixelstats", "clip:<checkpoint>"]


def embed_images(paths: list[str], model: str) -> np.ndarray:
    """Embed images to unit-norm rows; dimension is decided by the backend."""
    if model == "pixelstats":
        return _embed_pixelstats(paths)
    if model.startswith("clip:"):
        return _embed_clip(paths, model.split(":", 1)[1])
    raise BackendError(f"unknown model {model!r}; available: {available_backends()}")
