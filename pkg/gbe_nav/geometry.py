"""Polar representation of object locations.

An object location is stored as the angle difference between a reference
camera ray and the ray through the object's center, instead of a 2-D box
in one particular view.
"""
import math
from typing import NamedTuple, Sequence, Tuple

import numpy as np

Pixel = Tuple[float, float]

HALF_PI = math.pi / 2


class PolarPoint(NamedTuple):
    # radians, in [-pi, pi)
    heading: float
    # radians, in [-pi/2, pi/2], up is positive
    elevation: float


class PolarExtent(NamedTuple):
    center: PolarPoint
    width: float
    height: float


class CameraSpec(NamedTuple):
    width: int = 640
    height: int = 480
    hfov: float = math.radians(90)
    vfov: float = 2 * math.atan(0.75)
    heading: float = 0.0
    elevation: float = 0.0


def wrap_heading(angle: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = (angle + math.pi) % (2 * math.pi) - math.pi
    # float modulo can land exactly on +pi for inputs a hair below -pi
    if wrapped >= math.pi:
        wrapped -= 2 * math.pi
    return wrapped


def clip_elevation(angle: float) -> float:
    return min(max(angle, -HALF_PI), HALF_PI)


def check_extent(extent: PolarExtent, camera: CameraSpec = CameraSpec()) -> None:
    if not 0 < extent.width <= camera.hfov:
        raise ValueError(f"extent width must be in (0, {camera.hfov}]. Got {extent.width}")
    if not 0 < extent.height <= camera.vfov:
        raise ValueError(f"extent height must be in (0, {camera.vfov}]. Got {extent.height}")


def bbox_center(p1: Pixel, p2: Pixel, p3: Pixel, p4: Pixel) -> Pixel:
    x, y = np.mean(np.asarray([p1, p2, p3, p4], dtype=np.float64), axis=0)
    return float(x), float(y)


def pixel_to_polar(p: Pixel, camera: CameraSpec) -> PolarPoint:
    """Convert a pixel of a pinhole view into a polar point.

    The returned heading and elevation are measured from the reference ray
    of the panorama, i.e. the camera's own heading/elevation are added to
    the in-view angle offsets.
    """
    x, y = p
    if not (0 <= x <= camera.width and 0 <= y <= camera.height):
        raise ValueError(
            f"pixel {p} outside of the {camera.width}x{camera.height} image")
    half_w = camera.width / 2
    half_h = camera.height / 2
    d_heading = math.atan(((x - half_w) / half_w) * math.tan(camera.hfov / 2))
    # pixel rows grow downwards
    d_elevation = math.atan(((half_h - y) / half_h) * math.tan(camera.vfov / 2))
    return PolarPoint(
        wrap_heading(camera.heading + d_heading),
        clip_elevation(camera.elevation + d_elevation))


def polar_to_pixel(point: PolarPoint, camera: CameraSpec) -> Pixel:
    """Inverse of ``pixel_to_polar`` for points inside the view frustum."""
    d_heading = wrap_heading(point.heading - camera.heading)
    d_elevation = point.elevation - camera.elevation
    if abs(d_heading) > camera.hfov / 2 or abs(d_elevation) > camera.vfov / 2:
        raise ValueError(f"{point} is outside of the camera field of view")
    half_w = camera.width / 2
    half_h = camera.height / 2
    x = half_w + half_w * math.tan(d_heading) / math.tan(camera.hfov / 2)
    y = half_h - half_h * math.tan(d_elevation) / math.tan(camera.vfov / 2)
    return x, y


def localization_hit(pred: PolarPoint, extent: PolarExtent) -> bool:
    d_heading = wrap_heading(pred.heading - extent.center.heading)
    d_elevation = pred.elevation - extent.center.elevation
    return abs(d_heading) <= extent.width / 2 and abs(d_elevation) <= extent.height / 2


def annotate_extent(
    corners: Sequence[Pixel],
    camera: CameraSpec
) -> PolarExtent:
    """Turn a four-vertex box drawn in ``camera`` into a polar extent."""
    p1, p2, p3, p4 = corners
    center = pixel_to_polar(bbox_center(p1, p2, p3, p4), camera)
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    left = pixel_to_polar((min(xs), camera.height / 2), camera)
    right = pixel_to_polar((max(xs), camera.height / 2), camera)
    top = pixel_to_polar((camera.width / 2, min(ys)), camera)
    bottom = pixel_to_polar((camera.width / 2, max(ys)), camera)
    width = abs(wrap_heading(right.heading - left.heading))
    height = top.elevation - bottom.elevation
    return PolarExtent(center, width, height)
