from __future__ import annotations

import pytest

from fault_servers import DualServer, FaultServer, closed_port
from prpo.errors import ProtocolViolationError, RemoteUnavailableError
from prpo.policy import ToyClassifierPolicy
from prpo.serialize import build_prompt, serialize_row
from prpo.stub_server import PolicyStubServer
from prpo.synth import make_separable_classification
from prpo.trainer import RemotePolicy, remote_rollout_client

FAST = dict(retries=3, backoff=0.01, timeout=2.0)


@pytest.fixture(scope="module")
def task(request):
    examples, manifest, _ = make_separable_classification(8, 3, seed=4)
    return examples, manifest


@pytest.fixture(scope="module")
def stub(task, request):
    examples, manifest = task
    policy = ToyClassifierPolicy(manifest, seed=6)
    policy.refresh_reference(0)
    policy.apply_gradient({"bias": __import__("numpy").array([-0.4, 0.4])}, 1.0)
    server = PolicyStubServer(policy).start()
    request.addfinalizer(server.stop)
    return server, policy


def _prompt(task):
    examples, manifest = task
    from prpo.serialize import default_template

    template = default_template()
    return build_prompt(
        serialize_row(examples[0], template), manifest, template, n_features=3
    )


# -- shared Policy contract, run against the toy and the remote client --------


@pytest.fixture(params=["toy", "remote"])
def impl(request, task, stub):
    server, toy = stub
    if request.param == "toy":
        return toy
    return remote_rollout_client(server.endpoint, **FAST)


def test_contract_rollout_count_and_shapes(impl, task):
    prompt = _prompt(task)
    completions = impl.rollout(prompt, 4, 1.0, seed=5)
    assert len(completions) == 4
    for c in completions:
        assert len(c.token_ids) == len(c.logprobs_current) == len(c.logprobs_reference) >= 1
        assert all(lp <= 0 for lp in c.logprobs_current + c.logprobs_reference)
        assert c.text


def test_contract_rollout_deterministic(impl, task):
    prompt = _prompt(task)
    a = impl.rollout(prompt, 5, 1.0, seed=9)
    b = impl.rollout(prompt, 5, 1.0, seed=9)
    assert [c.token_ids for c in a] == [c.token_ids for c in b]
    assert [c.logprobs_current for c in a] == [c.logprobs_current for c in b]


def test_contract_logprob_tags_consistent(impl, task):
    prompt = _prompt(task)
    completion = impl.rollout(prompt, 1, 1.0, seed=2)[0]
    current = impl.logprob_tagged(prompt, completion.token_ids, "current")
    reference = impl.logprob_tagged(prompt, completion.token_ids, "reference")
    assert current == pytest.approx(completion.logprobs_current, abs=1e-12)
    assert reference == pytest.approx(completion.logprobs_reference, abs=1e-12)


def test_remote_matches_toy_bitwise(task, stub):
    server, toy = stub
    remote = remote_rollout_client(server.endpoint, **FAST)
    prompt = _prompt(task)
    local = toy.rollout(prompt, 3, 1.0, seed=8)
    wire = remote.rollout(prompt, 3, 1.0, seed=8)
    assert [c.text for c in local] == [c.text for c in wire]
    assert [c.logprobs_current for c in local] == [c.logprobs_current for c in wire]
    assert [c.logprobs_reference for c in local] == [c.logprobs_reference for c in wire]


# -- fault paths ----------------------------------------------------------------


def _tiny_prompt():
    from prpo.serialize import Prompt

    return Prompt(text="The x is 1.\nQuestion: q\nanswer format", n_features=1)


def test_fixed_payload_passes_through():
    payload = {
        "completions": [
            {
                "text": "<think>t</think><answer>yes</answer>",
                "token_ids": [0],
                "logprobs": [-0.25],
            }
        ]
    }
    with DualServer(payload, {"logprobs": [-0.5]}) as server:
        remote = remote_rollout_client(server.endpoint, **FAST)
        out = remote.rollout(_tiny_prompt(), 1, 1.0, seed=0)
        assert out[0].text == "<think>t</think><answer>yes</answer>"
        assert out[0].logprobs_current == [-0.25]
        assert out[0].logprobs_reference == [-0.5]


def test_mismatched_lengths_violate_protocol():
    payload = {
        "completions": [
            {"text": "x", "token_ids": [0, 1], "logprobs": [-0.5]}  # 2 ids, 1 logprob
        ]
    }
    with DualServer(payload, {"logprobs": [-0.5]}) as server:
        remote = remote_rollout_client(server.endpoint, **FAST)
        with pytest.raises(ProtocolViolationError):
            remote.rollout(_tiny_prompt(), 1, 1.0, seed=0)


def test_wrong_completion_count_violates_protocol():
    payload = {
        "completions": [
            {"text": "x", "token_ids": [0], "logprobs": [-0.5]},
        ]
    }
    with DualServer(payload, {"logprobs": [-0.5]}) as server:
        remote = remote_rollout_client(server.endpoint, **FAST)
        with pytest.raises(ProtocolViolationError):
            remote.rollout(_tiny_prompt(), 2, 1.0, seed=0)


def test_positive_logprobs_violate_protocol():
    payload = {
        "completions": [{"text": "x", "token_ids": [0], "logprobs": [0.25]}]
    }
    with DualServer(payload, {"logprobs": [-0.5]}) as server:
        remote = remote_rollout_client(server.endpoint, **FAST)
        with pytest.raises(ProtocolViolationError):
            remote.rollout(_tiny_prompt(), 1, 1.0, seed=0)


def test_server_down_unavailable_after_retries():
    remote = remote_rollout_client(f"http://127.0.0.1:{closed_port()}", **FAST)
    with pytest.raises(RemoteUnavailableError) as err:
        remote.rollout(_tiny_prompt(), 1, 1.0, seed=0)
    assert "3 attempts" in str(err.value)


def test_server_errors_retry_then_unavailable():
    with FaultServer(payload={"error": "boom"}, status=503) as server:
        remote = remote_rollout_client(server.endpoint, **FAST)
        with pytest.raises(RemoteUnavailableError):
            remote.rollout(_tiny_prompt(), 1, 1.0, seed=0)
        assert server.counter["posts"] == 3  # exactly the retry budget


def test_probe_reachable_and_unreachable(stub):
    server, _ = stub
    RemotePolicy(server.endpoint, **FAST).probe()
    with pytest.raises(RemoteUnavailableError):
        RemotePolicy(f"http://127.0.0.1:{closed_port()}", **FAST).probe()
