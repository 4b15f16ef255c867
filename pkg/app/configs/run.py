"""
Run configuration for the command-line workflow.

A run is configured from a flat ``key = value`` file whose values are then
overridden by command-line flags. Presets fill sampler counts and grid size
that were not set explicitly.
"""

from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
)

from app.config import settings
from app.exceptions import ConfigurationError
from app.models.calibration import CalibrationMode
from app.models.data import DesignBox
from app.utils.data_io import read_kv_file
from app.utils.validation import ValidationUtils


class Preset(str, Enum):
    """Named sampler/grid settings."""

    PAPER = "paper"
    DESK = "desk"


# (n_samples, n_walkers) per mode for the paper preset.
PAPER_SAMPLER: dict[CalibrationMode, tuple[int, int]] = {
    CalibrationMode.BI: (8000, 16),
    CalibrationMode.BCD: (20000, 16),
    CalibrationMode.BCE: (100000, 16),
    CalibrationMode.BCED: (30000, 32),
}
DESK_DIVISOR = 10
DESK_NODES = 50
DEFAULT_NODES = 100


class RunConfig(BaseModel):
    """Every per-run knob of the command-line workflow."""

    model_config = ConfigDict(extra="forbid")

    # Inputs
    data: Path | None = Field(default=None, description="Observed profile CSV at t=T")
    initial: Path | None = Field(default=None, description="Initial live-cell CSV")
    initial_dead: Path | None = Field(
        default=None, description="Initial dead-cell CSV (zero when omitted)"
    )
    constants: Path | None = Field(
        default=None, description="Fixed constants key-value file"
    )
    synthetic: Path | None = Field(default=None, description="Synthetic dataset CSV")
    chain: Path | None = Field(default=None, description="Chain file to analyze")
    resume: Path | None = Field(default=None, description="Chain file to continue")
    out: Path = Field(
        default_factory=lambda: Path(settings.OUTPUT_DIR),
        description="Output directory",
    )

    # Calibration
    mode: CalibrationMode = Field(default=CalibrationMode.BI)
    preset: Preset | None = Field(default=None)
    n_nodes: int | None = Field(default=None, description="Spatial grid nodes")

    # Sampler
    n_walkers: int | None = Field(default=None)
    n_samples: int | None = Field(default=None)
    burn_in: float = Field(default=0.2)
    seed: int = Field(default=0)
    stretch: float = Field(default=2.0, gt=1.0, description="Stretch scale a")
    thin: int = Field(default=1)
    threads: int | None = Field(default=None)

    # Design
    n_lhs: int = Field(default=28, ge=0, description="LHS experimental points")
    pool: int = Field(default=500, description="Forward runs for synthetic data")
    keep: int = Field(default=200, description="Synthetic records kept")
    box_lower: list[float] = Field(default_factory=lambda: [0.1] * 4)
    box_upper: list[float] = Field(default_factory=lambda: [6.0] * 4)
    sampling: str = Field(default="uniform")
    select_points: bool = Field(
        default=True, description="Calibrate on the LHS-selected subset"
    )

    # Simulation and prediction
    theta: list[float] | None = Field(
        default=None, description="Physical (tau_n, chi, b, j) for simulate"
    )
    noise_sd: float | None = Field(
        default=None, ge=0.0, description="Observation noise, fraction of c_sat"
    )
    n_obs: int = Field(default=30, description="Observation points for simulate")
    n_draws: int = Field(default=1000, description="Predictive band draws")

    @field_validator(
        "n_nodes", "n_walkers", "n_samples", "thin", "threads", "pool", "keep",
        "n_obs", "n_draws",
    )
    @classmethod
    def validate_counts(cls, v: int | None, info: ValidationInfo) -> int | None:
        """Validate positive counts."""
        return ValidationUtils.validate_positive_count(v, str(info.field_name))

    @field_validator("burn_in")
    @classmethod
    def validate_burn_in(cls, v: float) -> float:
        """Validate burn-in fraction."""
        return ValidationUtils.validate_fraction(v, "burn_in")

    @field_validator("sampling")
    @classmethod
    def validate_sampling(cls, v: str) -> str:
        """Validate synthetic sampling scheme."""
        if v.lower() not in ("uniform", "lhs"):
            raise ValueError("sampling must be 'uniform' or 'lhs'")
        return v.lower()

    @field_validator("preset", mode="before")
    @classmethod
    def alias_preset(cls, v: Any) -> Any:
        """Case-insensitive preset names; ``full`` is another name for paper."""
        if isinstance(v, str):
            v = v.lower()
            return Preset.PAPER if v == "full" else v
        return v

    @field_validator("theta")
    @classmethod
    def validate_theta(cls, v: list[float] | None) -> list[float] | None:
        """Validate the physical parameter override."""
        if v is not None and (len(v) != 4 or min(v) <= 0):
            raise ValueError("theta needs four positive values (tau_n, chi, b, j)")
        return v

    @field_validator("box_lower", "box_upper")
    @classmethod
    def validate_box_side(cls, v: list[float]) -> list[float]:
        """One bound per calibration parameter."""
        if len(v) != 4:
            raise ValueError("box bounds need four values")
        return v

    @field_validator("box_lower", "box_upper", "theta", mode="before")
    @classmethod
    def split_lists(cls, v: Any) -> Any:
        """Accept comma-separated strings from key-value files."""
        if isinstance(v, str):
            return [float(part) for part in v.replace(" ", ",").split(",") if part]
        return v

    @property
    def box(self) -> DesignBox:
        return DesignBox(lower=self.box_lower, upper=self.box_upper)

    def resolved(self) -> "RunConfig":
        """
        Copy with preset-dependent settings filled in.

        Explicit values always win; without a preset the paper counts and
        a 100-node grid apply.
        """
        samples, walkers = PAPER_SAMPLER[self.mode]
        nodes = DEFAULT_NODES
        if self.preset is Preset.DESK:
            samples //= DESK_DIVISOR
            nodes = DESK_NODES
        return self.model_copy(
            update={
                "n_samples": self.n_samples or samples,
                "n_walkers": self.n_walkers or walkers,
                "n_nodes": self.n_nodes or nodes,
            }
        )

    def require(self, *keys: str) -> None:
        """
        Check that input paths needed by a command are set.

        Raises:
            ConfigurationError: Naming the first missing key
        """
        for key in keys:
            if getattr(self, key) is None:
                raise ConfigurationError(
                    f"Missing required setting '{key}' (config file or --{key})",
                    key=key,
                )

    @classmethod
    def load(
        cls, path: str | Path | None = None, overrides: dict[str, Any] | None = None
    ) -> "RunConfig":
        """
        Build a configuration from an optional key-value file and overrides.

        Override entries that are None are ignored, so unset flags never
        clobber file values.

        Raises:
            ConfigurationError: On unknown keys or invalid values
        """
        values: dict[str, Any] = dict(read_kv_file(path)) if path else {}
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = sorted(set(values) - set(cls.model_fields))
        if unknown:
            raise ConfigurationError(
                f"Unknown configuration keys: {', '.join(unknown)}", key=unknown[0]
            )
        try:
            return cls(**values)
        except ValidationError as exc:
            first = exc.errors()[0]
            key = str(first["loc"][0]) if first.get("loc") else None
            raise ConfigurationError(
                f"Invalid configuration: {first['msg']} ({key})", key=key
            ) from exc

    def effective(self) -> dict[str, Any]:
        """JSON-ready dump of the effective configuration."""
        return self.model_dump(mode="json")
