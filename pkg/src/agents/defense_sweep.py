"""Defense sweep agent: rerun attacks against defended victims and surfaces."""

from dataclasses import dataclass, field
from typing import Any, Optional

from src.agents.attack_suite import AttackSuiteAgent
from src.agents.base import AgentResult
from src.models.experiment import (
    AttackName,
    AttackSettings,
    DefenseKind,
    ExperimentConfig,
    Report,
)
from src.models.oracle import ApiConfig
from src.models.victim import VictimSpec

_LOGPROB_FREE = AttackSettings(name=AttackName.ONE_OF_N, params={"rounds": 50})

DEFAULT_DEFENSE_ATTACKS: dict[DefenseKind, list[AttackSettings]] = {
    DefenseKind.NOISE: [AttackSettings(name=AttackName.LAYER)],
    DefenseKind.QUANTIZATION: [AttackSettings(name=AttackName.HIDDEN_DIM)],
    DefenseKind.SPOOFING: [AttackSettings(name=AttackName.HIDDEN_DIM)],
    DefenseKind.BIAS_XOR_LOGPROBS: [
        AttackSettings(name=AttackName.REFERENCE_TOKEN),
        _LOGPROB_FREE,
        AttackSettings(name=AttackName.HIDDEN_DIM),
    ],
    DefenseKind.BLOCK_LIST: [
        AttackSettings(name=AttackName.REFERENCE_TOKEN),
        _LOGPROB_FREE,
        AttackSettings(name=AttackName.HIDDEN_DIM),
    ],
    DefenseKind.BIAS_RATE_LIMIT: [
        AttackSettings(name=AttackName.REFERENCE_TOKEN),
        AttackSettings(name=AttackName.HIDDEN_DIM),
    ],
}


@dataclass
class DefenseVariant:
    """One point of a sweep: changes to the victim spec and to the API surface."""

    setting: str
    victim_update: dict[str, Any] = field(default_factory=dict)
    api_update: dict[str, Any] = field(default_factory=dict)

    def victim(self, spec: VictimSpec) -> VictimSpec:
        return VictimSpec.model_validate({**spec.model_dump(), **self.victim_update})

    def api(self, config: ApiConfig) -> ApiConfig:
        return ApiConfig.model_validate({**config.model_dump(), **self.api_update})


def default_spoof_dim(spec: VictimSpec) -> Optional[int]:
    """A third wider than the real hidden state, if the vocabulary leaves room."""
    target = min(round(spec.hidden_dim * 4 / 3), spec.vocab_size - 1)
    return target if target > spec.hidden_dim else None


def defense_variants(
    defense: DefenseKind, experiment: ExperimentConfig, spec: VictimSpec
) -> list[DefenseVariant]:
    """Undefended baseline first, then each defended setting."""
    if defense == DefenseKind.NOISE:
        return [
            DefenseVariant(f"sigma={sigma:g}", victim_update={"logit_noise_sigma": sigma})
            for sigma in experiment.noise_sigmas
        ]
    if defense == DefenseKind.QUANTIZATION:
        return [
            DefenseVariant(
                "bits=none" if bits is None else f"bits={bits}",
                victim_update={"weight_quantization_bits": bits},
            )
            for bits in experiment.quantization_bits
        ]
    if defense == DefenseKind.SPOOFING:
        target = experiment.spoof_target_dim or default_spoof_dim(spec)
        variants = [DefenseVariant("dim=none")]
        if target is not None:
            variants.append(DefenseVariant(f"dim={target}", {"spoof_target_dim": target}))
        return variants

    if defense == DefenseKind.BIAS_XOR_LOGPROBS:
        update: dict[str, Any] = {"bias_xor_logprobs": True}
    elif defense == DefenseKind.BLOCK_LIST:
        blocked = [t for t in experiment.blocked_tokens if 0 <= t < spec.vocab_size]
        update = {"allow_logit_bias": False, "blocked_tokens": blocked}
    else:
        limit = experiment.bias_rate_limit
        update = {"max_bias_queries_per_prompt": limit or max(1, spec.hidden_dim // 5)}
    return [DefenseVariant("off"), DefenseVariant("on", api_update=update)]


class DefenseSweepAgent(AttackSuiteAgent):
    """Measures how each defense degrades, or blocks, the configured attacks."""

    agent_name = "defense_sweep"

    def attacks_for(
        self, experiment: ExperimentConfig, defense: DefenseKind
    ) -> list[AttackSettings]:
        attacks = experiment.attacks or DEFAULT_DEFENSE_ATTACKS[defense]
        for attack in attacks:
            attack.check_compatibility()
        return attacks

    async def run(  # type: ignore[override]
        self, experiment: ExperimentConfig, defense: DefenseKind, write: bool = True
    ) -> AgentResult:
        """
        Sweep one defense across every victim, attack and seed.

        Noise sweeps fix the layer attack at the true h and 4h queries, so
        the RMS curve reflects the noise and not a dimension misestimate.

        Returns:
            AgentResult with the Report and the written paths
        """
        self.start()
        attacks = self.attacks_for(experiment, defense)

        jobs = []
        for spec in experiment.victims:
            for variant in defense_variants(defense, experiment, spec):
                defended = variant.victim(spec)
                for attack in attacks:
                    if defense == DefenseKind.NOISE and attack.name == AttackName.LAYER:
                        h = spec.hidden_dim
                        params = {"dim": h, "n": 4 * h, **attack.params}
                        attack = attack.model_copy(update={"params": params})
                    for seed in experiment.seeds:
                        jobs.append(
                            {
                                "spec": defended,
                                "attack": attack,
                                "seed": seed,
                                "api": variant.api(attack.effective_api()),
                                "defense": defense.value,
                                "setting": variant.setting,
                            }
                        )
        self.log(f"Sweeping {defense.value}: {len(jobs)} runs...")

        runs = await self.gather(experiment, jobs)
        report = Report.for_config(experiment, runs)
        report.name = f"{experiment.name}-{defense.value}"

        paths = []
        if write and experiment.output_dir is not None:
            paths = list(report.write(experiment.output_dir))
            self.log(f"Wrote {', '.join(str(p) for p in paths)}")

        blocked = [r for r in runs if not r.succeeded]
        return self.finish(
            {"report": report, "paths": paths},
            f"{len(runs)} runs, {len(blocked)} blocked or failed",
            errors=[f"{r.attack} [{r.setting}]: {r.error}" for r in blocked],
            success=True,
        )


async def defense_sweep(
    experiment: ExperimentConfig, defense: DefenseKind, quiet: bool = False
) -> Report:
    """Run one defense sweep and return its report."""
    result = await DefenseSweepAgent({"quiet": quiet}).run(experiment, defense)
    return result.data["report"]
