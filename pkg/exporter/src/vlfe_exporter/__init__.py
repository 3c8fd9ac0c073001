"""Offline embedding exporter for VLFE goal pools."""

from .manifest import ExportManifest, ManifestError
from .poolfile import write_pool_file
from .backends import embed_images, available_backends

__version__ = "0.1.0"

__all__ = ["ExportManifest", "ManifestError", "write_pool_file", "embed_images",
           "available_backends"]
