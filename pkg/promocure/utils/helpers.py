"""Shared plumbing: logging setup, seeding, and delimited output"""

import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: Union[str, int] = "INFO") -> None:
    """Install a single stream handler on the package logger"""
    root = logging.getLogger("promocure")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper() if isinstance(level, str) else level)


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for one (seed, stream...) pair.

    Streams are derived with ``SeedSequence(seed, spawn_key=stream)``, so chain ``c``
    of a run and replicate ``r`` of a study get statistically independent,
    reproducible generators regardless of how work is scheduled.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


def comment_header(lines: Iterable[str]) -> str:
    return "".join(f"# {line}\n" for line in lines)


def write_table(
    frame: pd.DataFrame,
    path: Union[str, Path],
    header_lines: Sequence[str] = (),
    sep: str = ",",
) -> Path:
    """Write a delimited table preceded by '# ' comment lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(comment_header(header_lines))
        frame.to_csv(f, index=False, sep=sep, lineterminator="\n")
    return path


def read_table(path: Union[str, Path], sep: Optional[str] = None) -> pd.DataFrame:
    """Read a delimited table, skipping '#' comment lines, floats round-tripped exactly"""
    path = Path(path)
    if sep is None:
        sep = sniff_delimiter(path)
    return pd.read_csv(path, sep=sep, comment="#", float_precision="round_trip")


def sniff_delimiter(path: Union[str, Path]) -> str:
    """Tab if the header line holds a tab, comma otherwise"""
    with open(path, "r") as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            return "\t" if "\t" in line else ","
    return ","


def read_comment_header(path: Union[str, Path]) -> Dict[str, str]:
    """'# key: value' lines at the top of a table, as a mapping"""
    header: Dict[str, str] = {}
    with open(path, "r") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
    return header
