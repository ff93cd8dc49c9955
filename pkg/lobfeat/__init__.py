"""
lobfeat - Limit order book feature extraction, wrapper ranking and mid-price movement classification
"""

from .classify import Movement, score, train_classifier
from .config import DEFAULT_CONFIG, LobfeatConfig, get_config
from .errors import ConfigError, CriterionError, FormatError, LobfeatError, ParseError, ValidationError
from .extraction import FeatureMatrix, extract_features, feature_manifest, pool_stocks
from .lob_core import parse_book_file, parse_message_file
from .pipeline import DayData, run_protocol
from .selection import Dataset, RankingList, rank

__version__ = "1.0.0"
