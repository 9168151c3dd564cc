"""Pipeline configuration and its JSON form."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
import hashlib
import json
import os

from .enhance import EnhanceParams
from .errors import InvalidConfig, IoError
from .fusion import FusionParams
from .inpaint import InpaintParams
from .localization import MattingParams
from .motion import MotionParams

OUTPUTS = ("gif", "png_sequence")

# parameters whose JSON value must be an integer (None allowed where the default is None)
_INTEGER = {
    "border_width", "close_radius", "patch_size", "iterations", "pyramid_levels", "grid",
    "factor", "bp_iterations", "feather_radius", "seam_width",
}


def derive_seed(seed: int, tag: str) -> int:
    """Stable 64-bit stage seed from the master seed and a stage tag."""
    digest = hashlib.blake2b(f"{seed}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class PipelineConfig:
    matting: MattingParams = field(default_factory=MattingParams)
    inpaint: InpaintParams = field(default_factory=InpaintParams)
    motion: MotionParams = field(default_factory=MotionParams)
    enhance: EnhanceParams = field(default_factory=EnhanceParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    output: str = "gif"
    max_colors: int = 256
    dither: bool = True
    target_crop_side: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.output not in OUTPUTS:
            raise InvalidConfig(f"output must be one of {OUTPUTS}, got {self.output!r}")
        if not 2 <= self.max_colors <= 256:
            raise InvalidConfig(f"max_colors must lie in 2..256, got {self.max_colors}")
        if self.target_crop_side < 1:
            raise InvalidConfig(f"target_crop_side must be >= 1, got {self.target_crop_side}")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def inpaint_params(self) -> InpaintParams:
        """Inpainting parameters with the stage seed derived from the master seed."""
        return InpaintParams(**{**_as_dict(self.inpaint), "seed": derive_seed(self.seed, "inpaint")})

    @property
    def keypoint_seed(self) -> int:
        return derive_seed(self.seed, "keypoints")

    @classmethod
    def from_json(cls, obj) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise InvalidConfig("config must be a JSON object")
        sections = {"matting": MattingParams, "inpaint": InpaintParams, "motion": MotionParams,
                    "enhance": EnhanceParams, "fusion": FusionParams}
        unknown = set(obj) - set(sections) - {"output", "max_colors", "dither", "target_crop_side", "seed"}
        if unknown:
            raise InvalidConfig(f"config: unknown field(s) {sorted(unknown)}")
        kwargs = {}
        for name, params in sections.items():
            if name in obj:
                # stage seeds are derived from the top-level seed
                exclude = {"seed"} if name == "inpaint" else set()
                kwargs[name] = _section(params, obj[name], name, exclude)
        for name in ("max_colors", "target_crop_side", "seed"):
            if name in obj:
                kwargs[name] = _integer(obj[name], name)
        if "dither" in obj:
            if not isinstance(obj["dither"], bool):
                raise InvalidConfig("config: dither must be true or false")
            kwargs["dither"] = obj["dither"]
        if "output" in obj:
            kwargs["output"] = obj["output"]
        return cls(**kwargs)

    def to_json(self) -> dict:
        inpaint = _as_dict(self.inpaint)
        inpaint.pop("seed")
        return {
            "matting": _as_dict(self.matting), "inpaint": inpaint, "motion": _as_dict(self.motion),
            "enhance": _as_dict(self.enhance), "fusion": _as_dict(self.fusion),
            "output": self.output, "max_colors": self.max_colors, "dither": self.dither,
            "target_crop_side": self.target_crop_side, "seed": self.seed,
        }


def _as_dict(params) -> dict:
    return {f.name: getattr(params, f.name) for f in fields(params)}


def _integer(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise InvalidConfig(f"config: {where} must be an integer, got {v!r}")
    return v


def _section(cls, obj, name, exclude=frozenset()):
    if not isinstance(obj, dict):
        raise InvalidConfig(f"config: {name} must be a JSON object")
    allowed = {f.name for f in fields(cls)} - set(exclude)
    unknown = set(obj) - allowed
    if unknown:
        raise InvalidConfig(f"config: unknown field(s) in {name}: {sorted(unknown)}")
    kwargs = {}
    for key, v in obj.items():
        where = f"{name}.{key}"
        if v is None and key in ("pyramid_levels", "grid"):
            kwargs[key] = None
        elif key in _INTEGER:
            kwargs[key] = _integer(v, where)
        elif isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InvalidConfig(f"config: {where} must be a number, got {v!r}")
        else:
            kwargs[key] = float(v)
    return cls(**kwargs)


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file not found: {os.fspath(path)}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{os.fspath(path)} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {os.fspath(path)}: {exc}") from exc
    return PipelineConfig.from_json(obj)
