"""End-to-end tests over real sockets, transcripts and full-size victims."""

import httpx
import numpy as np
import pytest

from api.server import ServerHandle
from src.agents import run_attack_suite
from src.clients.completions import RemoteSession
from src.extract import collect_query_matrix, extract_hidden_dim
from src.models.experiment import AttackName, AttackSettings, ExperimentConfig, TransportKind
from src.models.oracle import ApiConfig, ApiMode
from src.oracle.errors import TransportError
from src.oracle.transcript import ReplaySession, TranscriptRecorder
from src.recover import recover_hyperrectangle, recover_reference_token
from src.victim.builder import build_victim
from src.victim.config import load_victim_spec
from tests.conftest import PROMPT, make_session


class TestLoopbackServer:
    """Tests against a uvicorn server on a free loopback port."""

    @pytest.mark.asyncio
    async def test_remote_matches_local(self, tiny_victim):
        config = ApiConfig(mode=ApiMode.TOPK_LOGPROBS, k=5)
        local = make_session(tiny_victim, ApiMode.TOPK_LOGPROBS, k=5)
        expected = await recover_reference_token(local, PROMPT)

        with ServerHandle(tiny_victim, config, "127.0.0.1:0") as handle:
            assert handle.port != 0
            remote = await RemoteSession.connect(handle.endpoint)
            try:
                actual = await recover_reference_token(remote, PROMPT)
            finally:
                await remote.close()

        np.testing.assert_array_equal(actual.values, expected.values)
        assert remote.ledger.snapshot() == local.ledger.snapshot()

    @pytest.mark.asyncio
    async def test_http_transport_suite(self, tiny_spec):
        experiment = ExperimentConfig(
            victims=[tiny_spec],
            attacks=[AttackSettings(name=AttackName.ONE_OF_N, params={"rounds": 20})],
        )
        local = await run_attack_suite(experiment, quiet=True)
        remote = await run_attack_suite(
            experiment.model_copy(update={"transport": TransportKind.HTTP}), quiet=True
        )

        assert remote.runs[0].succeeded
        assert remote.runs[0].bits == local.runs[0].bits
        assert remote.runs[0].queries == local.runs[0].queries

    @pytest.mark.asyncio
    async def test_stopped_server(self, tiny_victim):
        """Once the server is gone queries fail after retries and nothing is billed."""
        config = ApiConfig(mode=ApiMode.ARGMAX_ONLY)
        with ServerHandle(tiny_victim, config, "127.0.0.1:0") as handle:
            remote = await RemoteSession.connect(handle.endpoint, retries=1, backoff=0.01)
            await remote.query_argmax(PROMPT)
        before = remote.ledger.snapshot()

        try:
            with pytest.raises(TransportError) as excinfo:
                await remote.query_argmax(PROMPT)
        finally:
            await remote.close()

        assert isinstance(excinfo.value.__cause__, httpx.TransportError)
        assert remote.ledger.snapshot() == before
        assert before.queries == 1


class TestTranscriptReplay:
    """Replaying a recorded attack reproduces it without the victim."""

    @pytest.mark.asyncio
    async def test_replay_hyperrectangle(self, argmax_session):
        recorder = TranscriptRecorder(argmax_session)
        recorded = await recover_hyperrectangle(recorder, PROMPT, rounds=20)

        replay = ReplaySession(recorder.records, vocab_size=100, config=argmax_session.config)
        replayed = await recover_hyperrectangle(replay, PROMPT, rounds=20)

        np.testing.assert_array_equal(replayed.alpha, recorded.alpha)
        np.testing.assert_array_equal(replayed.beta, recorded.beta)
        assert replay.exhausted
        assert replay.ledger.queries == recorded.queries


@pytest.mark.slow
class TestFullSizeVictims:
    """Hidden-dimension extraction at GPT-2-small scale."""

    @pytest.mark.asyncio
    async def test_planted_rank(self):
        victim = build_victim(load_victim_spec(preset="gpt2_small_like"))
        session = make_session(victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 1600)

        dim, _ = extract_hidden_dim(matrix)
        assert dim == 757

    @pytest.mark.asyncio
    async def test_spoofed_width(self):
        victim = build_victim(load_victim_spec(preset="spoofed"))
        session = make_session(victim, ApiMode.ALL_LOGITS)
        matrix = await collect_query_matrix(session, 1600)

        dim, _ = extract_hidden_dim(matrix)
        assert dim == 1024
