"""Dual-encoder backbones.

The "stub" backbone needs no checkpoints: images carry fixed feature
lists in the metadata (identity projection), and text is featurized by a
deterministic hash so the full pipeline runs in tests and CI. Real
checkpoints are loaded through open_clip when it is installed; embedding
extraction itself is delegated to the runtime — re-implementing encoders
is out of scope.
"""

import hashlib

import numpy as np

from gapextract.errors import BackboneUnavailableError, DatasetError


class StubEncoder:
    """Deterministic checkpoint-free dual encoder for fixtures and tests."""

    name = "stub"

    def __init__(self, dim: int = 8, **_):
        self.dim = dim

    def encode_images(self, samples) -> np.ndarray:
        rows = []
        for s in samples:
            feats = s.image_source
            if not isinstance(feats, (list, tuple)):
                raise DatasetError(
                    f"sample {s.sample_id}: stub backbone needs a fixed "
                    f"feature list in the image field, got {type(feats).__name__}"
                )
            if len(feats) != self.dim:
                raise DatasetError(
                    f"sample {s.sample_id}: expected {self.dim} image features, "
                    f"got {len(feats)}"
                )
            rows.append(np.asarray(feats, dtype=np.float32))
        return np.stack(rows)

    def encode_texts(self, samples) -> np.ndarray:
        return np.stack([self._hash_features(s.text) for s in samples])

    def _hash_features(self, text: str) -> np.ndarray:
        digest = hashlib.blake2b(text.encode("utf-8"), digest_size=self.dim).digest()
        # map bytes to [-1, 1); constant offset keeps all-zero rows impossible
        return (np.frombuffer(digest, dtype=np.uint8).astype(np.float32) - 127.5) / 128.0

    def manifest_info(self) -> dict:
        return {"kind": "stub", "dim": self.dim, "truncation": "none"}


class OpenClipEncoder:
    """Wrapper over an open_clip checkpoint (CLIP/SigLIP family)."""

    def __init__(self, model_name: str, pretrained: str, device: str = "cpu", **_):
        try:
            import open_clip  # noqa: F401
            import torch  # noqa: F401
        except ImportError as exc:
            raise BackboneUnavailableError(
                f"backbone {model_name!r} needs torch and open_clip_torch "
                f"(pip install 'gapextract[clip]'): {exc}"
            ) from exc
        import open_clip
        import torch

        self.name = model_name
        self.device = device
        self.model, _, self.preprocess = open_clip.create_model_and_transforms(
            model_name, pretrained=pretrained, device=device
        )
        self.model.eval()
        self.tokenizer = open_clip.tokenize
        self.torch = torch

    def encode_images(self, samples) -> np.ndarray:
        from PIL import Image

        batch = self.torch.stack(
            [self.preprocess(Image.open(s.image_source).convert("RGB"))
             for s in samples]
        ).to(self.device)
        with self.torch.inference_mode():
            out = self.model.encode_image(batch)
        return out.float().cpu().numpy()

    def encode_texts(self, samples) -> np.ndarray:
        tokens = self.tokenizer([s.text for s in samples]).to(self.device)
        with self.torch.inference_mode():
            out = self.model.encode_text(tokens)
        return out.float().cpu().numpy()

    def manifest_info(self) -> dict:
        return {
            "kind": "open_clip",
            "model": self.name,
            "truncation": "tokenizer default (77 tokens)",
        }


_OPEN_CLIP_SPECS = {
    "clip-vit-b32": ("ViT-B-32", "openai"),
    "siglip-vit-b16": ("ViT-B-16-SigLIP", "webli"),
    "biomedclip": ("hf-hub:microsoft/BiomedCLIP-PubMedBERT_256-vit_base_patch16_224", ""),
    "medsiglip": ("hf-hub:google/medsiglip-448", ""),
}


def make_backbone(name: str, device: str = "cpu", **options):
    if name == "stub":
        return StubEncoder(**options)
    if name in _OPEN_CLIP_SPECS:
        model_name, pretrained = _OPEN_CLIP_SPECS[name]
        return OpenClipEncoder(model_name, pretrained, device=device, **options)
    raise BackboneUnavailableError(
        f"unknown backbone {name!r}; available: "
        f"{sorted(['stub', *_OPEN_CLIP_SPECS])}"
    )
