"""
Base loader class with common functionality for all dataset loaders.
"""

import hashlib
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

from ..models import Domain, LabeledImage, LoadResult

logger = logging.getLogger(__name__)


class BaseLoader(ABC):
    """
    Abstract base class for all dataset loaders.
    Provides common functionality and interface.
    """

    def __init__(
        self,
        root: Union[str, Path],
        domain: Domain = "source",
        image_size: Optional[Tuple[int, int]] = None,
    ):
        """
        Initialize the loader.

        Args:
            root: Directory (or manifest file) to load from
            domain: Domain label attached to every loaded image
            image_size: Optional (height, width) to resize images to
        """
        self.root = Path(root)
        self.domain = domain
        self.image_size = tuple(image_size) if image_size is not None else None
        self.skipped = 0

    @staticmethod
    def generate_id(text: str) -> str:
        """
        Generate a consistent ID from text using MD5 hash.

        Args:
            text: Text to hash

        Returns:
            MD5 hash as hexadecimal string
        """
        return hashlib.md5(text.encode()).hexdigest()

    @staticmethod
    def fingerprint(images: Iterable[LabeledImage]) -> str:
        """
        Hash pixel data, masks and labels of a dataset.

        Two datasets with the same fingerprint are byte-identical.

        Args:
            images: Labeled images in order

        Returns:
            MD5 hash as hexadecimal string
        """
        digest = hashlib.md5()
        for item in images:
            digest.update(f"{item.identity}:{item.camera}:{item.domain}".encode())
            digest.update(item.image.tobytes())
            if item.gt_mask is not None:
                digest.update(item.gt_mask.tobytes())
        return digest.hexdigest()

    @abstractmethod
    def load(self) -> LoadResult:
        """
        Abstract method that all loaders must implement.

        Returns:
            LoadResult with loaded images and skip counts
        """
        pass

    def _create_success_result(
        self, message: str, images: List[LabeledImage], errors: List[str] = None
    ) -> LoadResult:
        """
        Create a successful loading result.

        Args:
            message: Success message
            images: Loaded images
            errors: Non-fatal problems encountered

        Returns:
            LoadResult indicating success
        """
        return LoadResult(
            success=True,
            message=message,
            items_processed=len(images),
            skipped=self.skipped,
            errors=errors or [],
            images=images,
        )

    def _create_error_result(self, message: str, errors: List[str] = None) -> LoadResult:
        """
        Create a failed loading result.

        Args:
            message: Error message
            errors: List of specific errors

        Returns:
            LoadResult indicating failure
        """
        return LoadResult(
            success=False,
            message=message,
            items_processed=0,
            skipped=self.skipped,
            errors=errors or [],
        )

    def _skip(self, reason: str) -> None:
        self.skipped += 1
        logger.warning(f"Skipping {reason}")

    def _log_loading_start(self, operation: str, target: str = None):
        """
        Log the start of a loading operation.

        Args:
            operation: Description of the operation
            target: Optional target being loaded
        """
        target_str = f" from {target}" if target else ""
        logger.info(f"Starting {operation}{target_str}")

    def _log_loading_complete(self, operation: str, count: int, target: str = None):
        """
        Log the completion of a loading operation.

        Args:
            operation: Description of the operation
            count: Number of items loaded
            target: Optional target that was loaded
        """
        target_str = f" from {target}" if target else ""
        logger.info(
            f"Completed {operation}{target_str}: {count} items loaded, {self.skipped} skipped"
        )
