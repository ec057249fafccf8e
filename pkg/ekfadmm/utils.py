# File: ekfadmm/utils.py
"""
Utility functions for the experiment driver.
"""
from typing import List


def parse_seeds(text: str) -> List[int]:
    """
    Parses a seed list for sweeps.

    Args:
        text: Either an inclusive range "a..b" or a comma-separated list "1,2,5".

    Returns:
        The seeds in the given order, without duplicates.
    """
    text = text.strip()
    if not text:
        raise ValueError("seed list is empty")
    if ".." in text:
        lo_text, _, hi_text = text.partition("..")
        try:
            lo, hi = int(lo_text), int(hi_text)
        except ValueError as e:
            raise ValueError(f"malformed seed range '{text}'") from e
        if hi < lo:
            raise ValueError(f"seed range '{text}' is empty")
        return list(range(lo, hi + 1))
    seeds: List[int] = []
    for part in text.split(","):
        try:
            seed = int(part)
        except ValueError as e:
            raise ValueError(f"malformed seed '{part}'") from e
        if seed not in seeds:
            seeds.append(seed)
    return seeds


def checkpoints(n_total: int, n_points: int) -> List[int]:
    """
    Evenly spaced sample counts in [1, n_total] at which curves are evaluated.

    Args:
        n_total: Length of the run.
        n_points: Requested number of checkpoints; fewer are returned when
            n_total is small, and n_total itself is always the last one.

    Returns:
        Strictly increasing sample counts.
    """
    if n_total <= 0:
        raise ValueError("n_total must be positive")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if n_points == 1:
        return [n_total]

    points: List[int] = []
    for i in range(n_points):
        n = 1 + round(i * (n_total - 1) / (n_points - 1))
        if not points or n > points[-1]:
            points.append(n)
    return points


def parse_list(text: str) -> List[str]:
    """Splits "a,b , c" into ["a", "b", "c"], dropping empty entries."""
    return [part.strip() for part in text.split(",") if part.strip()]
