"""Attack suite agent: every (victim, attack, seed) of an experiment, scored."""

import asyncio
import time
from typing import Optional

from src.agents.attacks import run_attack
from src.agents.base import AgentResult, BaseAgent
from src.agents.transport import open_session
from src.models.experiment import AttackSettings, ExperimentConfig, Report, RunMetrics
from src.models.oracle import ApiConfig
from src.models.victim import VictimSpec
from src.victim.builder import build_victim
from src.victim.model import Victim


class VictimCache:
    """Builds each (spec, seed) victim once per suite.

    Victims with per-query noise carry generator state, so those are rebuilt
    for every run to keep runs independent of scheduling order.
    """

    def __init__(self) -> None:
        self._victims: dict[str, Victim] = {}

    @staticmethod
    def seeded(spec: VictimSpec, seed: int) -> VictimSpec:
        return spec.with_seed(spec.seed + seed)

    def get(self, spec: VictimSpec, seed: int) -> Victim:
        seeded = self.seeded(spec, seed)
        if seeded.noise_iid:
            return build_victim(seeded)
        key = seeded.model_dump_json()
        if key not in self._victims:
            self._victims[key] = build_victim(seeded)
        return self._victims[key]


class AttackSuiteAgent(BaseAgent):
    """
    Runs a suite of attacks against a set of victims over several seeds.

    Runs are independent, so they go through a bounded worker pool. Each
    attack's own queries stay sequential because they are adaptive.
    """

    agent_name = "attack_suite"

    def __init__(self, config: Optional[dict] = None):
        super().__init__(config)
        self.victims = VictimCache()

    async def run_one(
        self,
        experiment: ExperimentConfig,
        spec: VictimSpec,
        attack: AttackSettings,
        seed: int,
        api: Optional[ApiConfig] = None,
        defense: str = "none",
        setting: str = "",
    ) -> RunMetrics:
        """One attack run on a fresh session."""
        victim = self.victims.get(spec, seed)
        api = api or attack.effective_api()
        started = time.perf_counter()
        async with open_session(victim, api, experiment.transport, experiment.bind_host) as session:
            metrics = await run_attack(attack, session, victim, seed, defense, setting)
        if experiment.record_timing:
            metrics.wall_time_s = time.perf_counter() - started

        outcome = "ok" if metrics.succeeded else f"failed ({metrics.error})"
        self.log(
            f"{spec.name} / {attack.display_name} / seed {seed}{' / ' + setting if setting else ''}: "
            f"{outcome}, {metrics.queries} queries"
        )
        return metrics

    async def gather(self, experiment: ExperimentConfig, jobs: list[dict]) -> list[RunMetrics]:
        """Run jobs (keyword arguments of run_one) with at most max_concurrency in flight."""
        semaphore = asyncio.Semaphore(experiment.max_concurrency)

        async def bounded(job: dict) -> RunMetrics:
            async with semaphore:
                return await self.run_one(experiment, **job)

        return list(await asyncio.gather(*(bounded(job) for job in jobs)))

    async def run(self, experiment: ExperimentConfig, write: bool = True) -> AgentResult:
        """
        Run every attack of the experiment against every victim and seed.

        Args:
            experiment: Suite definition; attack/mode compatibility is checked
                before any query is made
            write: Write report.json and report.csv to experiment.output_dir

        Returns:
            AgentResult with the Report and the written paths
        """
        self.start()
        experiment.check_compatibility()
        jobs = [
            {"spec": spec, "attack": attack, "seed": seed}
            for spec in experiment.victims
            for attack in experiment.attacks
            for seed in experiment.seeds
        ]
        self.log(f"Running {len(jobs)} attack runs for suite '{experiment.name}'...")

        runs = await self.gather(experiment, jobs)
        report = Report.for_config(experiment, runs)

        paths = []
        if write and experiment.output_dir is not None:
            paths = list(report.write(experiment.output_dir))
            self.log(f"Wrote {', '.join(str(p) for p in paths)}")

        failed = [r for r in runs if not r.succeeded]
        return self.finish(
            {"report": report, "paths": paths},
            f"{len(runs)} runs, {len(failed)} failed",
            errors=[f"{r.victim}/{r.attack}/seed {r.seed}: {r.error}" for r in failed],
            success=True,
        )


async def run_attack_suite(experiment: ExperimentConfig, quiet: bool = False) -> Report:
    """Run a suite end to end and return its report; writes files when output_dir is set."""
    result = await AttackSuiteAgent({"quiet": quiet}).run(experiment)
    return result.data["report"]
