"""Python bindings for the ACT simulator, training and evaluation library."""

import json

from ._core import *  # noqa: F401,F403
from ._core import train_policy as _train_policy


def train_policy(dataset, config=None):
    """Train a policy; config is a dict in the CLI config layout."""
    return _train_policy(dataset, json.dumps(config or {}))
