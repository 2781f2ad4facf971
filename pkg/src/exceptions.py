"""
Exception types raised across the attack pipeline
"""


class SnoutbenchError(Exception):
    """Base class for all domain errors"""


class ConfigError(SnoutbenchError, ValueError):
    """Experiment configuration failed validation"""


class SchemaMismatch(SnoutbenchError, ValueError):
    """CSV content does not fit the declared schema"""


class NotEnoughUniqueRecords(SnoutbenchError, ValueError):
    """Too few records are unique on the known attributes"""


class SizeTooLarge(SnoutbenchError, ValueError):
    """Requested dataset size exceeds the sampling pool"""


class NoCondition(SnoutbenchError, ValueError):
    """Attribute carries no condition in the query"""


class InvalidPivot(SnoutbenchError, ValueError):
    """Difference-pair pivot is inside the subset or is the sensitive attribute"""


class InvalidKind(SnoutbenchError, TypeError):
    """Operation is not supported by this mechanism"""


class BudgetExhausted(SnoutbenchError, RuntimeError):
    """Answering would exceed the instance's privacy budget"""


class EmptyTestSet(SnoutbenchError, ValueError):
    """Test fleet holds no datasets"""
