"""Agents that run attack suites, defense sweeps and bound reports."""

from src.agents.attack_suite import AttackSuiteAgent, run_attack_suite
from src.agents.attacks import logit_recoverer, run_attack
from src.agents.base import AgentResult, BaseAgent
from src.agents.defense_sweep import DefenseSweepAgent, defense_sweep
from src.agents.lower_bound import LowerBoundAgent
from src.agents.suites import load_experiment

__all__ = [
    "AgentResult",
    "AttackSuiteAgent",
    "BaseAgent",
    "DefenseSweepAgent",
    "LowerBoundAgent",
    "defense_sweep",
    "load_experiment",
    "logit_recoverer",
    "run_attack",
    "run_attack_suite",
]
