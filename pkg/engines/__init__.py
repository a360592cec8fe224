"""
Engines package initialization
"""
from .market_loader import MarketLoader
from .equilibrium_solver import EquilibriumSolver
from .tatonnement_engine import TatonnementEngine
from .verification_engine import VerificationEngine
from .experiment_coordinator import ExperimentCoordinator

__all__ = [
    'MarketLoader',
    'EquilibriumSolver',
    'TatonnementEngine',
    'VerificationEngine',
    'ExperimentCoordinator'
]
