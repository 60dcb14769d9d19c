"""keyvote3d: 3D point-to-keypoint voting for object 6D pose estimation."""

__version__ = "0.1.0"
