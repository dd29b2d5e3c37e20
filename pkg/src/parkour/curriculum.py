"""Per-robot terrain difficulty curriculum with episode-end promotion rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def update_level(level: int, traversed: float, segment_length: float,
                 v_cmd: float, T: float, max_level: int) -> int:
    """Promote past half the segment, demote under half the expected distance.

    Promotion is checked first when both conditions hold; the result is always
    clamped to [0, max_level].
    """
    assert segment_length > 0 and T > 0
    if traversed > segment_length / 2.0:
        return min(level + 1, max_level)
    if traversed < v_cmd * T / 2.0:
        return max(level - 1, 0)
    return level


@dataclass
class CurriculumState:
    """Levels for a population of robots; new robots start at level 0."""

    n_robots: int
    max_level: int
    levels: np.ndarray = field(init=False)
    promotions: int = 0
    demotions: int = 0

    def __post_init__(self):
        self.levels = np.zeros(self.n_robots, dtype=np.int64)

    def assign_spawn(self, robot_id: int) -> int:
        """Spawn level for a robot: its current curriculum level."""
        return int(self.levels[robot_id])

    def on_episode_end(self, robot_id: int, traversed: float,
                       segment_length: float, v_cmd: float, T: float) -> int:
        old = int(self.levels[robot_id])
        new = update_level(old, traversed, segment_length, v_cmd, T, self.max_level)
        if new > old:
            self.promotions += 1
        elif new < old:
            self.demotions += 1
        self.levels[robot_id] = new
        return new

    def histogram(self) -> np.ndarray:
        return np.bincount(self.levels, minlength=self.max_level + 1)


def assign_spawn(curriculum: CurriculumState, robot_id: int, course=None) -> int:
    return curriculum.assign_spawn(robot_id)
