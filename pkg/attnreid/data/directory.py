"""
Loaders for re-ID image directories and manifest files, plus manifest writing.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import pandas as pd

from ..exceptions import DataError
from ..models import Domain, LabeledImage, LoadResult
from ..utils.image_io import load_mask_png, load_png, save_mask_png, save_png
from ..utils.text_parsing import parse_reid_filename
from .base_loader import BaseLoader

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["path", "identity", "camera", "domain", "mask_path"]


class FilenameLoader(BaseLoader):
    """Loader for directories named with the `<id>_c<cam>_<frame>` scheme."""

    def load(self) -> LoadResult:
        """
        Load every parseable image in the directory (non-recursive, sorted by name).

        Returns:
            LoadResult with images; unparseable files are skipped and counted
        """
        self._log_loading_start("filename-labeled loading", str(self.root))
        if not self.root.is_dir():
            return self._create_error_result(f"Directory {self.root} does not exist")

        entries = sorted(p for p in self.root.iterdir() if p.is_file())
        if not entries:
            return self._create_error_result(f"Directory {self.root} is empty")

        images, errors = [], []
        for entry in entries:
            labels = parse_reid_filename(entry.name)
            if labels is None:
                self._skip(f"unparseable filename {entry.name}")
                continue
            identity, camera = labels
            try:
                pixels = load_png(entry, self.image_size)
            except DataError as e:
                self._skip(str(e))
                errors.append(str(e))
                continue
            images.append(
                LabeledImage(
                    image=pixels,
                    identity=identity,
                    camera=camera,
                    domain=self.domain,
                    path=str(entry),
                )
            )

        self._log_loading_complete("filename-labeled loading", len(images), str(self.root))
        if not images:
            return self._create_error_result(
                f"No readable re-ID images in {self.root}", errors
            )
        return self._create_success_result(
            f"Loaded {len(images)} images from {self.root}", images, errors
        )


class ManifestLoader(BaseLoader):
    """Loader for a manifest CSV with columns path,identity|id,camera[,domain,mask_path]."""

    def _manifest_path(self) -> Path:
        return self.root if self.root.suffix == ".csv" else self.root / MANIFEST_NAME

    def load(self) -> LoadResult:
        """
        Load the images listed in the manifest. Paths are relative to the manifest.

        Returns:
            LoadResult with images; rows with missing or unreadable files are skipped
        """
        manifest = self._manifest_path()
        self._log_loading_start("manifest loading", str(manifest))
        if not manifest.is_file():
            return self._create_error_result(f"Manifest {manifest} does not exist")

        try:
            frame = pd.read_csv(manifest, dtype={"path": str, "mask_path": str})
        except (pd.errors.ParserError, pd.errors.EmptyDataError, OSError) as e:
            return self._create_error_result(f"Could not read manifest {manifest}", [str(e)])

        frame = frame.rename(columns={"id": "identity"})
        missing = {"path", "identity", "camera"} - set(frame.columns)
        if missing:
            return self._create_error_result(
                f"Manifest {manifest} lacks columns {sorted(missing)}"
            )
        if frame.empty:
            return self._create_error_result(f"Manifest {manifest} has no rows")

        base = manifest.parent
        images, errors = [], []
        for row in frame.itertuples(index=False):
            image_path = base / row.path
            identity = int(row.identity)
            if identity < 0:
                self._skip(f"negative identity in row {row.path}")
                continue
            try:
                pixels = load_png(image_path, self.image_size)
                mask = None
                mask_path = getattr(row, "mask_path", None)
                if isinstance(mask_path, str) and mask_path:
                    mask = load_mask_png(base / mask_path, pixels.shape[1:])
            except DataError as e:
                self._skip(str(e))
                errors.append(str(e))
                continue
            domain = getattr(row, "domain", None)
            images.append(
                LabeledImage(
                    image=pixels,
                    identity=identity,
                    camera=int(row.camera),
                    domain=domain if domain in ("source", "target") else self.domain,
                    gt_mask=mask,
                    path=str(image_path),
                )
            )

        self._log_loading_complete("manifest loading", len(images), str(manifest))
        if not images:
            return self._create_error_result(f"No readable images in {manifest}", errors)
        return self._create_success_result(
            f"Loaded {len(images)} images from {manifest}", images, errors
        )


LOADERS = {"filename": FilenameLoader, "manifest": ManifestLoader}


def load_reid_directory(
    path: Union[str, Path],
    layout: str = "filename",
    domain: Domain = "source",
    image_size: Optional[Tuple[int, int]] = None,
) -> List[LabeledImage]:
    """
    Ingest a re-ID image directory.

    Args:
        path: Directory (or manifest CSV for the manifest layout)
        layout: "filename" or "manifest"
        domain: Domain label for the images
        image_size: Optional (height, width) resize target

    Returns:
        Labeled images in a deterministic order

    Raises:
        DataError: Unknown layout, empty or missing directory, nothing readable
    """
    if layout not in LOADERS:
        raise DataError(f"Unknown layout '{layout}', expected one of {sorted(LOADERS)}")
    loader = LOADERS[layout](path, domain=domain, image_size=image_size)
    result = loader.load()
    if not result.success:
        raise DataError(result.message + "".join(f"\n  {e}" for e in result.errors))
    if result.skipped:
        logger.warning(f"{result.skipped} entries skipped while loading {path}")
    return result.images


def image_filename(item: LabeledImage, index: int) -> str:
    """Conventional file name so written datasets also load with the filename layout."""
    return f"{item.identity:04d}_c{item.camera}_{index:06d}.png"


def write_domain_dataset(images: Sequence[LabeledImage], root: Union[str, Path]) -> Path:
    """
    Write one domain as PNG images, PNG masks and a manifest CSV.

    Args:
        images: Labeled images of one domain
        root: Output directory (created if needed)

    Returns:
        Path of the written manifest
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rows = []
    for index, item in enumerate(images):
        name = image_filename(item, index)
        save_png(item.image, root / "images" / name)
        mask_rel = ""
        if item.gt_mask is not None:
            (root / "masks").mkdir(exist_ok=True)
            mask_rel = f"masks/{name}"
            save_mask_png(item.gt_mask, root / mask_rel)
        rows.append(
            {
                "path": f"images/{name}",
                "identity": item.identity,
                "camera": item.camera,
                "domain": item.domain,
                "mask_path": mask_rel,
            }
        )

    manifest = root / MANIFEST_NAME
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest, index=False)
    logger.info(f"Wrote {len(rows)} images and manifest to {root}")
    return manifest
