import json
import threading
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabinsight.errors import (
    CacheMissInReplayMode,
    ConfigurationError,
    DimensionMismatch,
    EmbedInputError,
    MalformedResponseError,
    RateLimitedError,
    RoleNotConfiguredError,
    TransportError,
    ZeroVectorError,
)
from tabinsight.gateway import (
    Backend,
    BackendProfile,
    Completion,
    Gateway,
    HTTPBackend,
    RequestCache,
    RequestLog,
    RetryPolicy,
    ScriptedBackend,
    Similarity,
    chat_fingerprint,
    cosine_similarity,
    embed_fingerprint,
    parse_verdict,
)

MSG = [{"role": "user", "content": "hello"}]


def http_gateway(handler, cache=True, replay=False, role="summarizer", **profile_kw):
    profile = BackendProfile(role, model_name="m", endpoint_url="http://llm.test/v1", **profile_kw)
    backend = HTTPBackend(httpx.Client(transport=httpx.MockTransport(handler)))
    sleeps = []
    gw = Gateway([profile], {role: backend}, cache=RequestCache() if cache else None, replay=replay, sleep=sleeps.append)
    return gw, sleeps


def chat_body(text):
    return {"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 3}}


def test_cache_serves_identical_request_once():
    hits = []

    def handler(request):
        hits.append(json.loads(request.content))
        return httpx.Response(200, json=chat_body("ok"))

    gw, _ = http_gateway(handler)
    assert gw.chat("summarizer", MSG) == "ok"
    assert gw.chat("summarizer", MSG) == "ok"
    assert len(hits) == 1 and gw.log.network_calls == 1
    assert gw.log.count(source="cache") == 1
    assert hits[0]["model"] == "m" and hits[0]["temperature"] == 0.0


def test_retry_then_success_with_exponential_backoff():
    codes = iter([503, 429, 200])

    def handler(request):
        code = next(codes)
        return httpx.Response(code, json=chat_body("fine") if code == 200 else {})

    gw, sleeps = http_gateway(handler, retry=RetryPolicy(max_attempts=3, base_backoff_ms=100))
    assert gw.chat("summarizer", MSG) == "fine"
    assert sleeps == [0.1, 0.2]
    assert gw.log.entries[-1]["attempts"] == 3


def test_rate_limit_surfaces_after_retries():
    gw, sleeps = http_gateway(lambda r: httpx.Response(429), retry=RetryPolicy(2, 10))
    with pytest.raises(RateLimitedError):
        gw.chat("summarizer", MSG)
    assert len(sleeps) == 1


def test_client_error_is_not_retried():
    gw, sleeps = http_gateway(lambda r: httpx.Response(400, text="bad"))
    with pytest.raises(TransportError) as err:
        gw.chat("summarizer", MSG)
    assert not err.value.transient and sleeps == []


def test_connection_error_is_transient():
    def handler(request):
        raise httpx.ConnectError("down")

    gw, sleeps = http_gateway(handler, retry=RetryPolicy(2, 0))
    with pytest.raises(TransportError):
        gw.chat("summarizer", MSG)
    assert sleeps == [0.0]


def test_malformed_response():
    gw, _ = http_gateway(lambda r: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(MalformedResponseError):
        gw.chat("summarizer", MSG)


def test_http_embeddings():
    gw, _ = http_gateway(lambda r: httpx.Response(200, json={"data": [{"embedding": [1, 2]}]}), role="embedder")
    assert gw.embed("embedder", "x") == [1.0, 2.0]


def test_api_key_sent_from_configured_variable(monkeypatch):
    monkeypatch.setenv("MY_KEY", "secret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json=chat_body("ok"))

    gw, _ = http_gateway(handler, api_key_env="MY_KEY")
    gw.chat("summarizer", MSG)
    assert seen["auth"] == "Bearer secret"


def test_scripted_fixture_by_fingerprint_and_miss():
    profile = BackendProfile("judge")
    fp = chat_fingerprint(profile, MSG)
    gw = Gateway([profile], {"judge": ScriptedBackend({fp: "ok"})})
    assert gw.chat("judge", MSG) == "ok"
    with pytest.raises(CacheMissInReplayMode) as err:
        gw.chat("judge", [{"role": "user", "content": "other"}])
    assert err.value.fingerprint == chat_fingerprint(profile, [{"role": "user", "content": "other"}])
    assert gw.log.network_calls == 0


def test_scripted_rules_first_match_wins():
    b = ScriptedBackend(rules=[{"contains": ["a", "b"], "completion": "AB"}, {"contains": "a", "completion": "A"}])
    gw = Gateway([BackendProfile("judge")], {"judge": b})
    assert gw.chat("judge", [{"role": "user", "content": "a b"}]) == "AB"
    assert gw.chat("judge", [{"role": "user", "content": "a"}]) == "A"


def test_replay_serves_only_from_cache(tmp_path):
    path = tmp_path / "cache.jsonl"
    live = Gateway([BackendProfile("judge")], {"judge": ScriptedBackend(responder="echo")}, cache=RequestCache(path))
    assert live.chat("judge", MSG) == "hello"
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert set(lines[0]) == {"fingerprint", "role", "completion"}

    class Exploding(Backend):
        def complete(self, profile, messages):
            raise AssertionError("backend contacted during replay")

    replay = Gateway([BackendProfile("judge")], {"judge": Exploding()}, cache=RequestCache(path), replay=True)
    assert replay.chat("judge", MSG) == "hello"
    with pytest.raises(CacheMissInReplayMode):
        replay.chat("judge", [{"role": "user", "content": "new"}])


def test_cache_survives_torn_last_line(tmp_path):
    path = tmp_path / "cache.jsonl"
    path.write_text(json.dumps({"fingerprint": "f", "role": "judge", "completion": "x"}) + "\n{\"fingerp")
    assert RequestCache(path).get("f") == "x"


def test_fingerprint_depends_on_model_and_temperature():
    a = chat_fingerprint(BackendProfile("teacher"), MSG)
    assert a == chat_fingerprint(BackendProfile("teacher"), MSG)
    assert a != chat_fingerprint(BackendProfile("teacher", temperature=0.0), MSG)
    assert a != chat_fingerprint(BackendProfile("teacher", model_name="other"), MSG)
    assert embed_fingerprint(BackendProfile("embedder"), "x") != embed_fingerprint(BackendProfile("embedder"), "y")


def test_role_defaults_and_validation():
    assert BackendProfile("teacher").temperature == 0.7
    assert BackendProfile("critic").temperature == 0.0
    assert BackendProfile("judge").temperature == 0.0
    with pytest.raises(ValueError):
        BackendProfile("oracle")
    with pytest.raises(ValueError):
        BackendProfile("judge", concurrency_limit=0)
    gw = Gateway([BackendProfile("judge")], {"judge": ScriptedBackend(responder="echo")})
    with pytest.raises(RoleNotConfiguredError):
        gw.chat("teacher", MSG)
    with pytest.raises(ConfigurationError):
        Gateway([BackendProfile("judge"), BackendProfile("judge")])


def test_embedding_fixtures_and_empty_input():
    b = ScriptedBackend(embeddings={"a": [1, 0], "b": [0, 1]})
    gw = Gateway([BackendProfile("embedder")], {"embedder": b}, cache=RequestCache())
    assert gw.embed("embedder", "a") == [1.0, 0.0]
    assert gw.embed("embedder", "b") == [0.0, 1.0]
    assert gw.embed("embedder", "a") == gw.embed("embedder", "a")
    with pytest.raises(EmbedInputError):
        gw.embed("embedder", "  ")


class SlowCounting(Backend):
    def __init__(self):
        self.active = 0
        self.peak = 0
        self.lock = threading.Lock()

    def complete(self, profile, messages):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        time.sleep(0.01)
        with self.lock:
            self.active -= 1
        return Completion(messages[-1]["content"])


def test_concurrency_limit_bounds_in_flight_requests():
    backend = SlowCounting()
    gw = Gateway([BackendProfile("judge", concurrency_limit=2)], {"judge": backend})
    threads = [
        threading.Thread(target=gw.chat, args=("judge", [{"role": "user", "content": str(i)}])) for i in range(12)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert 1 <= backend.peak <= 2
    assert gw.log.count(role="judge") == 12


def test_critic_fail_closed(caplog):
    b = ScriptedBackend(rules=[{"contains": "Statement: X", "completion": "Entailed."}], responder=lambda m: "maybe")
    gw = Gateway([BackendProfile("critic")], {"critic": b})
    assert gw.classify_factuality("critic", "col : a", "X").label == "entailed"
    with caplog.at_level("WARNING"):
        assert gw.classify_factuality("critic", "col : a", "Y").label == "refuted"
    assert "refuted" in caplog.text


def test_critic_hundred_claims_nine_refuted():
    refuted = {f"claim {i}" for i in range(5, 100, 11)}
    rules = [{"contains": f"Statement: {c}\n", "completion": "refuted"} for c in refuted]
    gw = Gateway([BackendProfile("critic")], {"critic": ScriptedBackend(rules=rules, responder="entail-all")})
    labels = [gw.classify_factuality("critic", "col : a", f"claim {i}").label for i in range(100)]
    assert labels.count("refuted") == 9 == len(refuted)


@pytest.mark.parametrize(
    "reply,label", [("entailed", "entailed"), ("Refuted.", "refuted"), ("yes", "entailed"), ("**false**", "refuted"), ("", None), ("perhaps", None)]
)
def test_parse_verdict(reply, label):
    assert parse_verdict(reply) == label


def test_cosine_examples():
    assert cosine_similarity([1, 2], [1, 2]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 2, 3], [4, 5, 6]) == pytest.approx(0.974631846, abs=1e-9)
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1], [1, 2])
    with pytest.raises(ZeroVectorError):
        cosine_similarity([0, 0], [1, 2])


vec = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3).filter(lambda v: sum(x * x for x in v) > 1e-6)


@settings(max_examples=200, deadline=None)
@given(vec, vec, st.floats(0.01, 100))
def test_cosine_symmetric_and_scale_invariant(u, v, alpha):
    s = cosine_similarity(u, v)
    assert s == pytest.approx(cosine_similarity(v, u), abs=1e-12)
    assert s == pytest.approx(cosine_similarity([alpha * x for x in u], v), abs=1e-12)
    assert -1.0 <= s <= 1.0


def test_similarity_backends():
    gw = Gateway([BackendProfile("embedder")], {"embedder": ScriptedBackend(embedder="hash-embed")})
    assert Similarity("embedding-cosine", gw)("a b c", "a b c") == pytest.approx(1.0)
    assert Similarity("token-f1")("the cat", "the cat sat") == pytest.approx(0.8)
    with pytest.raises(ValueError):
        Similarity("bleu")
    with pytest.raises(ValueError):
        Similarity("embedding-cosine")


def test_request_log_written_to_disk(tmp_path):
    log = RequestLog(tmp_path / "requests.jsonl")
    gw = Gateway([BackendProfile("judge")], {"judge": ScriptedBackend(responder="echo")}, log=log)
    gw.chat("judge", MSG)
    entry = json.loads((tmp_path / "requests.jsonl").read_text())
    assert {"kind", "role", "model", "fingerprint", "source", "network", "attempts", "latency_ms", "usage"} <= set(entry)
