"""Tests for the suite, sweep and lower-bound agents."""

import json

import numpy as np
import pytest

from src.agents import (
    AttackSuiteAgent,
    DefenseSweepAgent,
    LowerBoundAgent,
    load_experiment,
    run_attack,
    run_attack_suite,
)
from src.agents.attack_suite import VictimCache
from src.agents.defense_sweep import default_spoof_dim, defense_variants
from src.agents.suites import experiment_from_dict, list_suites
from src.models.experiment import (
    AttackName,
    AttackSettings,
    ConfigError,
    DefenseKind,
    ExperimentConfig,
    Report,
    RunMetrics,
    TransportKind,
    required_modes,
)
from src.models.oracle import ApiConfig, ApiMode
from src.models.victim import VictimSpec
from src.oracle.local import LocalSession
from src.recover.logprob_free import Centering
from src.victim.config import load_victim_spec

QUIET = {"quiet": True}


def tiny_suite(tiny_spec: VictimSpec, **overrides) -> ExperimentConfig:
    """Four quick attacks over two seeds."""
    kwargs = dict(
        name="tiny-suite",
        victims=[tiny_spec],
        attacks=[
            AttackSettings(name=AttackName.REFERENCE_TOKEN),
            AttackSettings(name=AttackName.BINARY_SEARCH, params={"queries_per_token": 10}),
            AttackSettings(name=AttackName.HIDDEN_DIM),
            AttackSettings(name=AttackName.LAYER),
        ],
        seeds=[0, 1],
    )
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


def runs_for(report: Report, attack: str, setting: str) -> list[RunMetrics]:
    return [r for r in report.runs if r.attack == attack and r.setting == setting]


async def sweep(experiment: ExperimentConfig, defense: DefenseKind) -> Report:
    result = await DefenseSweepAgent(QUIET).run(experiment, defense, write=False)
    return result.data["report"]


class TestAttackCompatibility:
    """Tests for mode checks made before any query."""

    def test_required_modes(self):
        assert required_modes(AttackName.BINARIZED, {}) == (ApiMode.TOP1_BINARY_BIAS,)
        assert required_modes(AttackName.LAYER, {}) == (ApiMode.ALL_LOGITS,)
        assert ApiMode.TOPK_LOGPROBS in required_modes(
            AttackName.HIDDEN_DIM, {"via": "reference_token"}
        )

    def test_unusable_via(self):
        with pytest.raises(ConfigError):
            required_modes(AttackName.LAYER, {"via": "multi_token"})
        with pytest.raises(ConfigError):
            required_modes(AttackName.LAYER, {"via": "unknown"})

    def test_effective_api(self):
        settings = AttackSettings(name=AttackName.HIDDEN_DIM, params={"via": "reference_token"})
        assert settings.effective_api().mode == ApiMode.TOPK_LOGPROBS
        assert AttackSettings(name=AttackName.LAYER).effective_api().mode == ApiMode.ALL_LOGITS
        assert AttackSettings(name=AttackName.BINARIZED).effective_api().k == 1

    @pytest.mark.asyncio
    async def test_incompatible_mode_rejected(self, tiny_spec):
        experiment = ExperimentConfig(
            victims=[tiny_spec],
            attacks=[
                AttackSettings(
                    name=AttackName.BINARIZED, api=ApiConfig(mode=ApiMode.ARGMAX_ONLY)
                )
            ],
        )
        with pytest.raises(ConfigError, match="binarized"):
            await AttackSuiteAgent(QUIET).run(experiment)

    def test_checked_on_load(self):
        data = {
            "victims": ["tiny"],
            "attacks": [{"name": "layer", "api": {"mode": "argmax_only"}}],
        }
        with pytest.raises(ConfigError):
            experiment_from_dict(data, "broken")


class TestRunAttack:
    """Tests for scoring a single run."""

    @pytest.mark.asyncio
    async def test_metrics_from_ledger(self, tiny_victim):
        settings = AttackSettings(name=AttackName.REFERENCE_TOKEN)
        session = LocalSession(tiny_victim, settings.effective_api())
        metrics = await run_attack(settings, session, tiny_victim)

        assert metrics.succeeded
        assert metrics.queries == session.ledger.queries == 25
        assert metrics.logits == 99
        assert metrics.queries_per_logit == pytest.approx(25 / 99)
        assert metrics.bits > 30

    @pytest.mark.asyncio
    async def test_rejection_becomes_failed_run(self, tiny_victim):
        settings = AttackSettings(name=AttackName.REFERENCE_TOKEN)
        session = LocalSession(
            tiny_victim, ApiConfig(mode=ApiMode.TOPK_LOGPROBS, bias_bound=1.0, bias_max_entries=2)
        )
        metrics = await run_attack(settings, session, tiny_victim)

        assert not metrics.succeeded
        assert metrics.error == "bias_limit"
        assert metrics.queries == 1

    @pytest.mark.asyncio
    async def test_multi_token_scores_every_position(self, tiny_victim):
        settings = AttackSettings(name=AttackName.MULTI_TOKEN, params={"m": 3})
        session = LocalSession(tiny_victim, settings.effective_api())
        metrics = await run_attack(settings, session, tiny_victim)

        assert metrics.succeeded
        assert metrics.logits == 3 * 99
        assert metrics.bits > 30


class TestAttackSuite:
    """Tests for whole-suite runs and reports."""

    @pytest.mark.asyncio
    async def test_tiny_suite(self, tiny_spec):
        report = await run_attack_suite(tiny_suite(tiny_spec), quiet=True)

        assert len(report.runs) == 8
        assert all(r.succeeded for r in report.runs)
        for seed in (0, 1):
            assert report.run("reference_token", seed).bits > 30
            assert report.run("binary_search", seed).bits > 4
            assert report.run("hidden_dim", seed).extracted_dim == 8
            assert report.run("layer", seed).rms < 1e-8

    @pytest.mark.asyncio
    async def test_deterministic(self, tiny_spec):
        first = await run_attack_suite(tiny_suite(tiny_spec), quiet=True)
        second = await run_attack_suite(tiny_suite(tiny_spec), quiet=True)
        assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(
            second.to_dict(), sort_keys=True
        )

    @pytest.mark.asyncio
    async def test_aggregate(self, tiny_spec):
        report = await run_attack_suite(tiny_suite(tiny_spec), quiet=True)
        aggregate = report.aggregate()

        assert len(aggregate) == 4
        assert (aggregate["runs"] == 2).all()
        assert "bits_mean" in aggregate.columns
        assert "rms_std" in aggregate.columns

    @pytest.mark.asyncio
    async def test_writes_reports(self, tmp_path, tiny_spec):
        experiment = tiny_suite(tiny_spec, output_dir=tmp_path)
        result = await AttackSuiteAgent(QUIET).run(experiment)

        assert result.success
        assert result.errors == []
        assert result.summary().startswith("8 runs, 0 failed in ")
        assert sorted(p.name for p in result.data["paths"]) == ["report.csv", "report.json"]
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["config_hash"] == experiment.config_hash()
        assert len(data["runs"]) == 8

    @pytest.mark.asyncio
    async def test_asgi_matches_in_process(self, tiny_spec):
        experiment = ExperimentConfig(
            victims=[tiny_spec], attacks=[AttackSettings(name=AttackName.REFERENCE_TOKEN)]
        )
        local = await run_attack_suite(experiment, quiet=True)
        remote = await run_attack_suite(
            experiment.model_copy(update={"transport": TransportKind.ASGI}), quiet=True
        )

        assert remote.runs[0].bits == local.runs[0].bits
        assert remote.runs[0].queries == local.runs[0].queries


class TestReport:
    """Tests for report provenance and serialization."""

    def test_config_hash_ignores_output_dir(self, tmp_path, tiny_spec):
        a = tiny_suite(tiny_spec)
        b = tiny_suite(tiny_spec, output_dir=tmp_path)
        c = tiny_suite(tiny_spec, seeds=[0])
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_nan_written_as_null(self, tmp_path):
        run = RunMetrics(victim="v", attack="a", seed=0, mode="argmax_only", bits=float("nan"))
        json_path, csv_path = Report(name="r", runs=[run]).write(tmp_path)

        data = json.loads(json_path.read_text())
        assert data["runs"][0]["bits"] is None
        assert csv_path.exists()

    def test_missing_run(self):
        with pytest.raises(KeyError):
            Report(name="r").run("layer")

    def test_empty_aggregate(self):
        assert Report(name="r").aggregate().empty


class TestVictimCache:
    """Tests for per-seed victim reuse."""

    def test_reuses_victims(self, tiny_spec):
        cache = VictimCache()
        assert cache.get(tiny_spec, 0) is cache.get(tiny_spec, 0)
        assert cache.get(tiny_spec, 1).spec.seed == tiny_spec.seed + 1

    def test_rebuilds_iid_noise(self, tiny_spec):
        noisy = tiny_spec.model_copy(update={"logit_noise_sigma": 0.1, "noise_iid": True})
        cache = VictimCache()
        assert cache.get(noisy, 0) is not cache.get(noisy, 0)


class TestDefenseSweep:
    """Tests for each defense against the tiny victim."""

    def test_variants(self, tiny_spec):
        experiment = ExperimentConfig(victims=[tiny_spec])
        rate = defense_variants(DefenseKind.BIAS_RATE_LIMIT, experiment, tiny_spec)
        assert [v.setting for v in rate] == ["off", "on"]
        assert rate[1].api_update == {"max_bias_queries_per_prompt": 1}
        assert default_spoof_dim(tiny_spec) == 11

    @pytest.mark.asyncio
    async def test_bias_xor_logprobs(self, tiny_spec):
        report = await sweep(ExperimentConfig(victims=[tiny_spec]), DefenseKind.BIAS_XOR_LOGPROBS)

        assert runs_for(report, "reference_token", "off")[0].succeeded
        blocked = runs_for(report, "reference_token", "on")[0]
        assert not blocked.succeeded
        assert blocked.error == "bias_xor_logprobs"
        assert runs_for(report, "one_of_n", "on")[0].succeeded
        assert runs_for(report, "hidden_dim", "on")[0].succeeded

    @pytest.mark.asyncio
    async def test_block_list(self, tiny_spec):
        report = await sweep(ExperimentConfig(victims=[tiny_spec]), DefenseKind.BLOCK_LIST)

        assert runs_for(report, "reference_token", "on")[0].error == "capability"
        hidden = runs_for(report, "hidden_dim", "on")[0]
        assert hidden.succeeded
        assert hidden.extracted_dim == 8

    @pytest.mark.asyncio
    async def test_bias_rate_limit(self, tiny_spec):
        report = await sweep(ExperimentConfig(victims=[tiny_spec]), DefenseKind.BIAS_RATE_LIMIT)

        assert runs_for(report, "reference_token", "on")[0].error == "rate_limited"
        assert runs_for(report, "hidden_dim", "on")[0].succeeded

    @pytest.mark.asyncio
    async def test_noise(self, tiny_spec):
        experiment = ExperimentConfig(victims=[tiny_spec], noise_sigmas=[0.0, 1e-2])
        report = await sweep(experiment, DefenseKind.NOISE)

        clean = runs_for(report, "layer", "sigma=0")[0]
        noisy = runs_for(report, "layer", "sigma=0.01")[0]
        assert clean.extracted_dim == noisy.extracted_dim == 8
        assert clean.queries == 32
        assert clean.rms < noisy.rms

    @pytest.mark.asyncio
    async def test_noise_rms_monotone(self, tiny_spec):
        sigmas = [0.0, 1e-4, 1e-3, 1e-2, 1e-1]
        experiment = ExperimentConfig(victims=[tiny_spec], noise_sigmas=sigmas)
        report = await sweep(experiment, DefenseKind.NOISE)

        errors = [runs_for(report, "layer", f"sigma={s:g}")[0].rms for s in sigmas]
        assert all(a < b for a, b in zip(errors, errors[1:]))

    @pytest.mark.asyncio
    async def test_quantization(self, tiny_spec):
        report = await sweep(ExperimentConfig(victims=[tiny_spec]), DefenseKind.QUANTIZATION)

        assert {r.setting for r in report.runs} == {"bits=none", "bits=8", "bits=4"}
        assert all(r.extracted_dim == 8 for r in report.runs)

    @pytest.mark.asyncio
    async def test_spoofing(self, tiny_spec):
        report = await sweep(ExperimentConfig(victims=[tiny_spec]), DefenseKind.SPOOFING)

        assert runs_for(report, "hidden_dim", "dim=none")[0].extracted_dim == 8
        assert runs_for(report, "hidden_dim", "dim=11")[0].extracted_dim == 11


class TestLowerBoundAgent:
    """Tests for the measured lower-bound table."""

    @pytest.mark.asyncio
    async def test_never_beats_bound(self):
        spec = VictimSpec(name="small", l=21, h=4, seed=3)
        result = await LowerBoundAgent(QUIET).run(spec, bit_targets=[4.0, 6.0], max_rounds=2000)

        assert result.success
        table = result.data["table"]
        assert list(table["bits"]) == [4.0, 6.0]
        assert {"one_of_n", "midpoint"} <= set(table.columns)
        assert len(result.data["measurements"]) == 4

    @pytest.mark.asyncio
    async def test_one_of_n_near_bound_at_top_target(self):
        spec = load_victim_spec(preset="lower_bound")
        result = await LowerBoundAgent(QUIET).run(
            spec, bit_targets=[6.0, 23.0], centerings=(Centering.ONE_OF_N,)
        )

        assert result.success
        table = result.data["table"]
        top = table[table["bits"] == 23.0].iloc[0]
        assert top["bound"] == pytest.approx(3.6025, abs=1e-3)
        assert top["one_of_n_converged"]
        assert top["bound"] <= top["one_of_n"] <= top["bound"] + 1.5


class TestSuiteConfig:
    """Tests for YAML suites."""

    def test_table4(self):
        experiment = load_experiment("table4")
        assert len(experiment.attacks) == 6
        assert experiment.seeds == list(range(10))
        assert experiment.attacks[1].api.logprob_precision.value == "fp16"

    def test_table4_precisions(self):
        experiment = load_experiment("table4")
        settings = {a.display_name: a for a in experiment.attacks}
        assert settings["binarized"].api.logprob_precision.value == "fp16"
        assert settings["hyperrectangle-midpoint"].params == {"rounds": 3750, "batch_size": 250}

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_table4_ordering(self):
        """Median bits over seeds keep the table's two orderings."""
        experiment = load_experiment("table4", overrides={"seeds": [0, 1, 2, 3, 4]})
        report = await run_attack_suite(experiment, quiet=True)

        def median_bits(label: str) -> float:
            return float(np.median([r.bits for r in report.runs if r.attack == label]))

        assert median_bits("logprob-4") > median_bits("sherman-morrison-fp16")
        assert median_bits("sherman-morrison-fp16") > median_bits("binarized")
        assert median_bits("one_of_n") > median_bits("hyperrectangle-midpoint")
        assert median_bits("hyperrectangle-midpoint") > median_bits("binary_search")

    def test_overrides(self, tmp_path):
        experiment = load_experiment("table4", overrides={"seeds": [3], "output_dir": tmp_path})
        assert experiment.seeds == [3]
        assert experiment.output_dir == tmp_path

    def test_unknown_suite(self):
        with pytest.raises(ConfigError, match="unknown suite"):
            load_experiment("table99")

    def test_list_suites(self):
        assert {"table3", "table4", "noise-sweep", "lower-bound"} <= set(list_suites())

    def test_unknown_victim(self):
        with pytest.raises(ConfigError, match="unknown victim preset"):
            experiment_from_dict({"victims": ["nope"]}, "x")
