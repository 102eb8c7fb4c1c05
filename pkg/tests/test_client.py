import httpx
import pytest

from conftest import gold_responder, load_mixed
from mnlu.client import (
    AuthRejected,
    CannotSatisfyDistinctness,
    FewShotPolicy,
    InferenceClient,
    InferenceConfig,
    InvalidArgument,
    RequestRejected,
    ResponseMalformed,
    TransportFailure,
    describe_qa_options,
    run_benchmark,
    select_fewshot,
    summarize_document,
)
from mnlu.core import EntityMention, NluInstance, PromptPair, TaskKind
from mnlu.mockserver import MockChatServer, MockReply
from mnlu.prompts import NER_FEWSHOT_PREAMBLE, PoolTooSmall, RenderOptions


def _client(server, **kw):
    sleeps = kw.pop("sleeps", [])
    return InferenceClient(InferenceConfig(server.url, **kw), sleep=sleeps.append)


def test_config_url_and_validation():
    assert InferenceConfig("http://h/v1/").completions_url == "http://h/v1/chat/completions"
    assert InferenceConfig("http://h/v1/chat/completions").completions_url == "http://h/v1/chat/completions"
    with pytest.raises(ValueError):
        InferenceConfig("http://h", max_attempts=0)
    assert InferenceConfig("a").config_hash() != InferenceConfig("b").config_hash()


def test_round_trip_and_payload(monkeypatch):
    monkeypatch.setenv("MNLU_API_KEY", "sekrit")
    with MockChatServer(lambda p, b: p.upper()) as srv:
        with _client(srv, model_name="m1", max_output_tokens=7) as c:
            got = c.complete("hi there")
    assert (got.text, got.attempts, got.truncated) == ("HI THERE", 1, False)
    body = srv.requests[0]
    assert body["model"] == "m1" and body["max_tokens"] == 7 and body["temperature"] == 0.0
    assert srv.headers[0]["Authorization"] == "Bearer sekrit"


def test_retries_server_errors_with_backoff():
    sleeps = []
    script = [MockReply(500), MockReply(503), MockReply(content="ok")]
    with MockChatServer(script=script) as srv, _client(srv, sleeps=sleeps, backoff_base_ms=100) as c:
        got = c.complete("x")
    assert (got.text, got.attempts) == ("ok", 3)
    assert sleeps == [0.1, 0.2]


def test_gives_up_after_max_attempts():
    with MockChatServer(lambda p, b: MockReply(502)) as srv, _client(srv, max_attempts=2) as c:
        with pytest.raises(TransportFailure) as exc:
            c.complete("x")
    assert exc.value.attempts == 2 and len(srv.requests) == 2


def test_connection_errors_are_retried():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    c = InferenceClient(InferenceConfig("http://x"), transport=httpx.MockTransport(handler), sleep=lambda s: None)
    with pytest.raises(TransportFailure):
        c.complete("x")


@pytest.mark.parametrize("status, err", [(401, AuthRejected), (403, AuthRejected), (400, RequestRejected), (429, RequestRejected)])
def test_client_errors_not_retried(status, err):
    with MockChatServer(lambda p, b: MockReply(status)) as srv, _client(srv) as c:
        with pytest.raises(err):
            c.complete("x")
    assert len(srv.requests) == 1


def test_malformed_body():
    with MockChatServer(lambda p, b: MockReply(body=b'{"choices": []}')) as srv, _client(srv) as c:
        with pytest.raises(ResponseMalformed):
            c.complete("x")


def test_truncation_flag():
    with MockChatServer(lambda p, b: MockReply(content="cut", finish_reason="length")) as srv, _client(srv) as c:
        assert c.complete("x").truncated


def test_empty_prompt_rejected(mock_server):
    with _client(mock_server) as c, pytest.raises(InvalidArgument):
        c.complete("")


# -- few-shot ------------------------------------------------------------------


def _ner(i, text, mentions=()):
    return NluInstance(f"n{i}", "d", TaskKind.NER, text, ("Drug",), tuple(mentions))


def _ner_pool():
    words = ["aspirin", "heroin", "ibuprofen", "codeine", "morphine", "caffeine"]
    return [_ner(i, f"took {w} today", [EntityMention("Drug", w, 5, 5 + len(w))]) for i, w in enumerate(words)]


def test_fewshot_deterministic_and_excludes_query():
    pool = _ner_pool()
    policy = FewShotPolicy(pool, k=2, seed=9)
    for q in pool:
        a = select_fewshot(policy, q)
        assert a == select_fewshot(policy, q)
        assert len(a) == 2 and a[0].output != a[1].output
        assert all(q.source_text not in p.input for p in a)


def test_fewshot_pool_too_small():
    pool = _ner_pool()[:2]
    with pytest.raises(PoolTooSmall):
        select_fewshot(FewShotPolicy(pool, k=2), pool[0])


def test_fewshot_distinctness_unsatisfiable():
    pool = [_ner(i, f"nothing {i}") for i in range(5)]
    with pytest.raises(CannotSatisfyDistinctness):
        select_fewshot(FewShotPolicy(pool, k=2), pool[0])
    assert len(select_fewshot(FewShotPolicy(pool, k=2, require_distinct_outputs=False), pool[0])) == 2


# -- preprocessing helpers -----------------------------------------------------


def test_summarize_prompt(mock_server):
    mock_server.responder = lambda p, b: "summary"
    with _client(mock_server) as c:
        assert summarize_document("Pt smokes.", "social history", c) == "summary"
        with pytest.raises(InvalidArgument):
            summarize_document("Pt smokes.", " ", c)
    assert mock_server.prompts()[0] == "Summarize the social history from the following clinical note.\n\nPt smokes."


def test_describe_qa_options(mock_server):
    mock_server.responder = lambda p, b: "The drug is effective.\nextra"
    shot = PromptPair("qa-1", "Question: q\nAnswer: yes\nStatement:", "It is so.")
    with _client(mock_server) as c:
        got = describe_qa_options("Is it effective?", ["yes", "maybe"], shot, c)
        with pytest.raises(InvalidArgument):
            describe_qa_options("q", [], shot, c)
    assert got == ["The drug is effective (yes).", "The drug is effective (maybe)."]
    assert "Answer: maybe" in mock_server.prompts()[1]


# -- benchmark runs ------------------------------------------------------------


def _headline(run):
    return {r.dataset: r.value for r in run.reports}


def test_benchmark_gold_oracle_scores_perfectly():
    insts = load_mixed()
    with MockChatServer(gold_responder(insts)) as srv, _client(srv) as c:
        run = run_benchmark(insts, c)
    assert set(_headline(run).values()) == {1.0}
    assert run.manifest["coverage"] == 1.0 and run.manifest["n_unscoreable"] == 0


def test_benchmark_gold_oracle_with_shuffled_labels():
    insts = load_mixed()
    opts = RenderOptions(seed=4, shuffle_labels=True)
    with MockChatServer(gold_responder(insts, opts)) as srv, _client(srv) as c:
        run = run_benchmark(insts, c, render_opts=opts)
    assert set(_headline(run).values()) == {1.0}


def test_benchmark_garbage_is_unscoreable():
    insts = load_mixed()
    with MockChatServer(lambda p, b: "garbage") as srv, _client(srv) as c:
        run = run_benchmark(insts, c)
    scores = _headline(run)
    assert all(v == 0.0 for v in scores.values())
    assert run.manifest["n_unscoreable"] == len(insts)


def test_benchmark_respects_concurrency_cap():
    insts = load_mixed()
    with MockChatServer(gold_responder(insts), delay=0.02) as srv, _client(srv, max_concurrent_requests=3) as c:
        run_benchmark(insts, c)
    assert 1 < srv.max_in_flight <= 3


def test_benchmark_records_failures():
    insts = load_mixed()[:4]
    with MockChatServer(lambda p, b: MockReply(500)) as srv, _client(srv, max_attempts=1) as c:
        run = run_benchmark(insts, c)
    assert run.failed == 4 and run.manifest["coverage"] == 0.0


def test_fewshot_only_changes_token_prompts():
    insts = load_mixed()
    policy = FewShotPolicy(insts, k=2, seed=1)
    with MockChatServer(gold_responder(insts)) as srv, _client(srv) as c:
        zero = run_benchmark(insts, c)
    with MockChatServer(gold_responder(insts, fewshot=policy)) as srv, _client(srv) as c:
        two = run_benchmark(insts, c, fewshot=policy)
    for a, b, inst in zip(zero.prompt_log, two.prompt_log, insts):
        if inst.task in (TaskKind.NER, TaskKind.EAE):
            assert b["prompt"].startswith(NER_FEWSHOT_PREAMBLE) and a["prompt"] != b["prompt"]
        else:
            assert a["prompt"] == b["prompt"]
    assert set(_headline(two).values()) == {1.0}


def test_duplicate_instances_rejected(mock_server):
    inst = load_mixed()[0]
    with _client(mock_server) as c, pytest.raises(InvalidArgument):
        run_benchmark([inst, inst], c)
