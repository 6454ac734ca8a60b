"""Monte-Carlo simulator for Champions League qualifying formats.

Estimates, per national association, the probability that its champion
reaches the group stage under the pre-2018 and post-2018 Champions Path
regimes, and derives the reform-impact, seeding, sensitivity, weighting and
prize-money analyses from those estimates.
"""

__version__ = "0.1.0"

from .model import (
    ASSOCIATIONS,
    SEASONS,
    AssociationId,
    ChampionProfile,
    FormatSpec,
    RoundSpec,
    SeasonId,
    SeasonTable,
    validate_dataset,
)

__all__ = [
    "ASSOCIATIONS",
    "SEASONS",
    "AssociationId",
    "ChampionProfile",
    "FormatSpec",
    "RoundSpec",
    "SeasonId",
    "SeasonTable",
    "validate_dataset",
    "__version__",
]
