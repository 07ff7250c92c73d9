"""Data-driven typologies from binary survey questions.

Two typologies are built from the same Yes/No answers: a curve-fitting
typology of the most common answer patterns and a taxonomic tree chosen
among exhaustively enumerated splits. Predictors from psychometric scales
are fitted to both with multinomial logistic regression and the reduced
models are compared.
"""

__version__ = "0.1.0"

from .dataset import QuestionDef, SurveyDataset, load_dataset, parse_dataset  # noqa: E402,F401
from .errors import (  # noqa: E402,F401
    ConfigError,
    ConvergenceError,
    DataError,
    NumericalError,
    RankDeficientError,
    SeparationError,
    TypologyError,
)
