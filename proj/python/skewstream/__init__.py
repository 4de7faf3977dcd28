"""Deskew, projection and timing model for oblique lightsheet stacks."""

import json

from ._core import *  # noqa: F401,F403
from ._core import __version__, _default_scene_json, _render_stack


def default_scene(geometry):
    """Sphere plus off-centre cylinder filling the volume sampled by geometry, as a dict."""
    return json.loads(_default_scene_json(geometry))


def render_stack(geometry, scene=None, noise_seed=None):
    """One sweep of skewed slices as a (slices, height, width) uint16 array."""
    scene_json = None if scene is None else json.dumps(scene)
    return _render_stack(geometry, scene_json, noise_seed)
