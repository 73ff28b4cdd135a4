"""Fingernail segmentation, instance extraction and polish try-on at desk scale."""

from .model import ModelConfig, SegModel, SegOutput, build_model, load_model, save_model
from .postprocess import NailInstance, extract_instances, label_components, stretch_mask
from .render import RenderParams, render_overlay
from .synthetic import ImageSample, SceneSpec, generate_sample, random_crop
from .tensor import ConvSpec, Tensor

__all__ = [
    "ModelConfig",
    "SegModel",
    "SegOutput",
    "build_model",
    "load_model",
    "save_model",
    "NailInstance",
    "extract_instances",
    "label_components",
    "stretch_mask",
    "RenderParams",
    "render_overlay",
    "ImageSample",
    "SceneSpec",
    "generate_sample",
    "random_crop",
    "ConvSpec",
    "Tensor",
]

__version__ = "0.1.0"
