from .image import write_image
from .march import Camera, MarchConfig, RayBuffer, RenderResult, init_rays, march, render, shade
from .scene import (
    Box, Difference, Empty, GridLeaf, Intersection, NeuralLeaf, Node, Sphere, Union,
    parse_scene, rotate, translate,
)

__all__ = [
    "Box", "Camera", "Difference", "Empty", "GridLeaf", "Intersection", "MarchConfig",
    "NeuralLeaf", "Node", "RayBuffer", "RenderResult", "Sphere", "Union", "init_rays",
    "march", "parse_scene", "render", "rotate", "shade", "translate", "write_image",
]
