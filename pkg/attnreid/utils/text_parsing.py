"""
Text parsing utilities for re-ID filenames and command-line overrides.
"""

import re
from typing import Any, List, Optional, Sequence, Tuple

import yaml

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

# <id>_c<cam>_<frame>, also accepts the <id>_c<cam>s<seq>_<frame> variant
REID_FILENAME_PATTERN = re.compile(r"^(-?\d+)_c(\d+)(?:s\d+)?_(\d+)")


def is_image_filename(name: str) -> bool:
    """
    Check whether a filename has a supported image extension.

    Args:
        name: File name or path

    Returns:
        True for png/jpg/jpeg/bmp files
    """
    return name.lower().endswith(IMAGE_EXTENSIONS)


def parse_reid_filename(name: str) -> Optional[Tuple[int, int]]:
    """
    Extract identity and camera labels from a conventional re-ID filename.

    Args:
        name: File name such as "0001_c1_000151.png"

    Returns:
        (identity, camera) tuple, or None if the name does not follow the
        scheme or carries a negative (distractor) identity
    """
    if not is_image_filename(name):
        return None
    match = REID_FILENAME_PATTERN.match(name)
    if not match:
        return None
    try:
        identity = int(match.group(1))
        camera = int(match.group(2))
    except ValueError:
        return None
    if identity < 0:
        return None
    return identity, camera


def parse_override(text: str) -> Tuple[List[str], Any]:
    """
    Parse a "--set key.path=value" override.

    Args:
        text: Override expression

    Returns:
        Key path components and the value parsed with YAML scalar rules

    Raises:
        ValueError: If the expression has no '=' or an empty key
    """
    if "=" not in text:
        raise ValueError(f"override '{text}' must look like key.path=value")
    key, raw_value = text.split("=", 1)
    parts = [part.strip() for part in key.strip().split(".")]
    if not all(parts):
        raise ValueError(f"override '{text}' has an empty key component")
    return parts, yaml.safe_load(raw_value)


def format_key_path(location: Sequence[Any]) -> str:
    """
    Render a validation error location as a dotted key path.

    Args:
        location: Location tuple from a pydantic error

    Returns:
        Dotted path, e.g. "data.num_identitys"
    """
    return ".".join(str(part) for part in location)
