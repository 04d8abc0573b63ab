from dataclasses import dataclass
from enum import Enum


class Mode(Enum):
    HEAD_FIRST = "head-first"
    NON_HEAD_FIRST = "non-head-first"


class Layout(Enum):
    SINGLE_BLOCK = "single"
    TWO_BLOCK = "two-block"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AllocatorConfig:
    mode: Mode = Mode.NON_HEAD_FIRST
    capacity: int = 16 * 1024 * 1024
    layout: Layout = Layout.SINGLE_BLOCK
    base_address: int = 0
    carve_threshold_multiplier: int = 3

    def __post_init__(self):
        if self.carve_threshold_multiplier < 1:
            raise ConfigError("carve_threshold_multiplier must be >= 1")
        if self.base_address < 0:
            raise ConfigError("base_address must be non-negative")
