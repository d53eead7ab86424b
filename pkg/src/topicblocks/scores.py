"""Description-length containers shared by every scoring routine."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ModelScore:
    """Description length in nats with its additive term breakdown.

    `sigma_nats` is the negative natural log of the model's joint probability
    of the data; smaller is better.  The breakdown terms sum to sigma_nats.
    """

    sigma_nats: float
    breakdown: dict[str, float] = field(default_factory=dict)
    model_id: str = ""
    parametrization: str = ""

    def __post_init__(self):
        total = sum(self.breakdown.values())
        if self.breakdown and abs(total - self.sigma_nats) > 1e-9 * max(1.0, abs(total)):
            raise ValueError(
                f"breakdown sums to {total!r} but sigma_nats is {self.sigma_nats!r}"
            )

    @classmethod
    def from_breakdown(cls, breakdown: dict[str, float], model_id: str = "",
                       parametrization: str = "") -> "ModelScore":
        return cls(float(sum(breakdown.values())), dict(breakdown), model_id, parametrization)

    def per_token(self, n_tokens: int) -> float:
        return self.sigma_nats / n_tokens

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "parametrization": self.parametrization,
            "sigma_nats": self.sigma_nats,
            "breakdown": dict(self.breakdown),
        }
