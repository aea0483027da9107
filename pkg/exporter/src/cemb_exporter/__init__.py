"""CEMB exporter: pretrained chemical LM embeddings to interchange files."""

from .cembfile import write_cemb
from .export import (
    ExportManifest,
    ExportReport,
    ModelLoadError,
    TransformersBackend,
    export_embeddings,
    export_vocab,
    read_smiles_file,
)

__version__ = "0.1.0"
