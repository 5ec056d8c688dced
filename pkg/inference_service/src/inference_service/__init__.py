"""Reference implementation of the road-surface prediction wire protocol
with a deterministic stub model."""

from .app import create_app, stub_predictor
from .rules import RuleSet, RulesError, StubRule, hash_prediction, load_rules_file

__version__ = "0.1.0"
