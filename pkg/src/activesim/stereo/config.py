from dataclasses import asdict, dataclass, fields, replace


class StereoConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StereoConfig:
    """Matching parameters. Penalties default to 8 and 32 times the block area.

    ``p1``/``p2`` of zero are rejected unless ``test_penalties`` is set (used
    by oracle tests that need the penalty-free limit).

    ``locking_compensation`` adds a second matching pass against the right
    image resampled by half a pixel and averages the two subpixel results.
    Parabola fits on census costs pull estimates toward integers; the bias
    flips sign between the two passes and largely cancels.
    """

    census_width: int = 9
    census_height: int = 7
    block_width: int = 1
    block_height: int = 1
    min_disp: int = 0
    max_disp: int = 64
    p1: int = None
    p2: int = None
    uniqueness_ratio: float = 10.0
    lr_max_diff: float = 1.0
    median_ksize: int = 3
    paths: int = 4
    rectify: bool = True
    subpixel: bool = True
    locking_compensation: bool = True
    lr_check: bool = True
    register: bool = True
    test_penalties: bool = False

    def __post_init__(self):
        area = self.block_width * self.block_height
        if self.p1 is None:
            object.__setattr__(self, "p1", 8 * area)
        if self.p2 is None:
            object.__setattr__(self, "p2", 32 * area)
        for name in ("census_width", "census_height", "block_width", "block_height"):
            value = getattr(self, name)
            if value < 1 or value % 2 == 0:
                raise StereoConfigError(f"{name} must be a positive odd number, got {value}")
        if self.census_width * self.census_height < 3:
            raise StereoConfigError("census window needs at least one pixel pair")
        if self.census_width > 15 or self.census_height > 15:
            raise StereoConfigError("census window must be at most 15x15")
        if not (self.max_disp > self.min_disp >= 0):
            raise StereoConfigError("need max_disp > min_disp >= 0")
        if self.test_penalties:
            if not (0 <= self.p1 <= self.p2):
                raise StereoConfigError("need 0 <= p1 <= p2")
        elif not (self.p2 > self.p1 > 0):
            raise StereoConfigError("need p2 > p1 > 0")
        if self.median_ksize not in (0, 3, 5):
            raise StereoConfigError("median_ksize must be 0, 3 or 5")
        if self.paths != 4:
            raise StereoConfigError("only 4-path aggregation is supported")
        if self.uniqueness_ratio < 0:
            raise StereoConfigError("uniqueness_ratio must be >= 0")
        if self.lr_max_diff < 0:
            raise StereoConfigError("lr_max_diff must be >= 0")

    @property
    def disp_count(self):
        return self.max_disp - self.min_disp

    @property
    def census_bits(self):
        return (self.census_width * self.census_height) // 2

    @property
    def block_area(self):
        return self.block_width * self.block_height

    @property
    def max_cost(self):
        return self.census_bits * self.block_area

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise StereoConfigError(f"unknown stereo config key(s): {sorted(unknown)}")
        return cls(**data)

    def with_(self, **changes):
        return replace(self, **changes)
