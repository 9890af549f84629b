"""Lower-bound agent: measure logprob-free costs at each precision target."""

from typing import Optional, Sequence

from src.agents.base import AgentResult, BaseAgent
from src.analysis.lower_bound import (
    DEFAULT_BIT_TARGETS,
    LowerBoundMeasurement,
    LowerBoundViolationError,
    check_lower_bound,
    lower_bound_table,
)
from src.models.oracle import ApiConfig, ApiMode
from src.models.victim import VictimSpec
from src.oracle.local import LocalSession
from src.recover.bounds import epsilon_for_bits
from src.recover.logprob_free import Centering, HyperrectangleConfig, recover_hyperrectangle
from src.victim.builder import build_victim
from src.victim.prompts import random_prompts

DEFAULT_MAX_ROUNDS = 5000


class LowerBoundAgent(BaseAgent):
    """
    Runs the one-of-n and midpoint hyperrectangle attacks until their mean
    interval width reaches each bit target, and tabulates queries per logit
    next to the information-theoretic bound.
    """

    agent_name = "lower_bound"

    async def measure(
        self,
        spec: VictimSpec,
        api: ApiConfig,
        bits: float,
        centering: Centering,
        seed: int = 0,
        max_rounds: int = DEFAULT_MAX_ROUNDS,
        tokens: Optional[Sequence[int]] = None,
    ) -> LowerBoundMeasurement:
        """Cost of one attack to reach mean width 2^-bits on a fresh session."""
        victim = build_victim(spec)
        session = LocalSession(victim, api)
        prompt = random_prompts(1, victim.vocab_size, seed)[0]
        epsilon = epsilon_for_bits(bits)
        config = HyperrectangleConfig(rounds=max_rounds, centering=centering, target_width=epsilon)
        bounds = await recover_hyperrectangle(session, prompt, config=config, tokens=tokens)

        logits = bounds.to_recovered(victim.vocab_size).logits_recovered
        measurement = LowerBoundMeasurement(
            attack=centering.value,
            bits=float(bits),
            queries_per_logit=session.ledger.queries / logits,
            mean_width=bounds.mean_width,
            converged=bounds.mean_width <= epsilon,
        )
        self.log(
            f"{centering.value} at {bits:g} bits: {measurement.queries_per_logit:.3f} "
            f"queries/logit{'' if measurement.converged else ' (round cap hit)'}"
        )
        return measurement

    async def run(
        self,
        spec: VictimSpec,
        bit_targets: Sequence[float] = DEFAULT_BIT_TARGETS,
        api: Optional[ApiConfig] = None,
        centerings: Sequence[Centering] = (Centering.ONE_OF_N, Centering.MIDPOINT),
        seed: int = 0,
        max_rounds: int = DEFAULT_MAX_ROUNDS,
        tokens: Optional[Sequence[int]] = None,
    ) -> AgentResult:
        """
        Build the lower-bound table for one victim.

        Args:
            spec: Victim to attack
            bit_targets: Precision targets in bits
            api: Argmax-only surface; its bias bound and entry cap set the bound
            centerings: Which hyperrectangle variants to measure
            seed: Prompt seed
            max_rounds: Round cap per batch
            tokens: Restrict the attack to these tokens

        Returns:
            AgentResult with the table; success is False when a row beats the bound
        """
        self.start()
        api = api or ApiConfig(mode=ApiMode.ARGMAX_ONLY)
        if api.mode != ApiMode.ARGMAX_ONLY:
            api = api.model_copy(update={"mode": ApiMode.ARGMAX_ONLY})
        self.log(f"Measuring {len(centerings)} attacks at {len(bit_targets)} precision targets...")

        measurements = []
        for bits in bit_targets:
            for centering in centerings:
                measurements.append(
                    await self.measure(spec, api, bits, centering, seed, max_rounds, tokens)
                )

        candidates = len(tokens) if tokens is not None else spec.vocab_size - 1
        batch = min(api.bias_max_entries, candidates)
        table = lower_bound_table(api.bias_bound, batch, bit_targets, measurements)
        errors = []
        try:
            check_lower_bound(table)
        except LowerBoundViolationError as e:
            errors.append(str(e))
            self.log(str(e), level="error")

        return self.finish(
            {"table": table, "measurements": measurements},
            f"{len(measurements)} measurements",
            errors,
        )
