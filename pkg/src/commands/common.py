"""Helpers shared by the command groups."""
import argparse
from pathlib import Path
from typing import Optional

import numpy as np

from src.schemas.exceptions import DimensionMismatchError
from src.schemas.vectors import IVectorSet
from src.services.preprocess import LdaTransform, preprocess_rows, read_lda

# Flags whose dest starts with this prefix override RunConfig fields;
# "cfg__suv__copies" sets RunConfig.suv.copies.
CONFIG_DEST = "cfg__"


def config_flag(parser: argparse.ArgumentParser, *flags: str, field: str, **kwargs) -> None:
    """Add a flag that overrides the RunConfig field at dotted path `field`."""
    parser.add_argument(*flags, dest=CONFIG_DEST + field.replace(".", "__"), default=None, **kwargs)


def config_overrides(args: argparse.Namespace) -> dict:
    """Nested override dict from every config flag that was given."""
    overrides: dict = {}
    for dest, value in vars(args).items():
        if not dest.startswith(CONFIG_DEST) or value is None:
            continue
        *parents, leaf = dest[len(CONFIG_DEST):].split("__")
        node = overrides
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return overrides


def create_common_parser() -> argparse.ArgumentParser:
    """Flags every command accepts."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    config_flag(common, "--seed", field="seed", type=int, help="Base random seed")
    config_flag(common, "--workers", field="workers", type=int, help="Worker threads")
    config_flag(common, "--log-level", field="log_level", help="TRACE, DEBUG, INFO, WARNING, ...")
    return common


def load_lda(path: Optional[Path]) -> Optional[LdaTransform]:
    return read_lda(path) if path is not None else None


def preprocess_set(vectors: IVectorSet, lda: Optional[LdaTransform]) -> np.ndarray:
    """LDA projection (when given) and length normalization of a whole set."""
    if lda is not None and vectors.dim != lda.d_in:
        raise DimensionMismatchError(
            f"i-vectors have dim {vectors.dim} but the LDA expects {lda.d_in}"
        )
    return preprocess_rows(vectors.as_matrix(), lda)


def preprocessed_map(vectors: IVectorSet, lda: Optional[LdaTransform]) -> dict[str, np.ndarray]:
    matrix = preprocess_set(vectors, lda)
    return {utt: matrix[i] for i, utt in enumerate(vectors.utterance_ids)}


def parent_dir(path: Path) -> Path:
    return Path(path).parent
