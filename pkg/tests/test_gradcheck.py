import time

import numpy as np
import pytest

from hsnvad.errors import RejectedInputError
from hsnvad.gradcheck import SUITE, grad_check, run_suite
from hsnvad.tensor import OPERATORS, Tensor, fault_injection, square, total


def test_linear_graph_is_exact() -> None:
    x = Tensor([0.03, 0.07, 0.05])
    w = Tensor([0.9, 0.6, 0.75])
    assert grad_check(lambda: total(x * w), [x]) <= 1e-10


def test_grad_check_restores_flags() -> None:
    x, w = Tensor([0.5, 0.25]), Tensor([1.0, 2.0], requires_grad=True)
    grad_check(lambda: total(x * w), [x, w])
    assert x.requires_grad is False
    assert w.requires_grad is True
    assert x.grad is None


@pytest.mark.parametrize("name", ("conv1d", "lstm", "lstm/batched"))
def test_recurrent_and_convolution_checks(name: str) -> None:
    (result,) = run_suite([name])
    assert result.passed, result


def test_end_to_end_model_check() -> None:
    (result,) = run_suite(["hsn_model"])
    assert result.passed, result


def test_suite_covers_composites() -> None:
    for name in (
        "mgtm_forward",
        "relation_model+tracklet_rank",
        "segment_level_selection",
        "video_level_selection",
        "fuse",
        "context_loss",
        "instance_loss",
    ):
        assert name in SUITE
    for operator in OPERATORS:
        assert any(name.split("/")[0] == operator for name in SUITE), operator


def test_full_suite_passes_within_a_minute() -> None:
    start = time.monotonic()
    results = run_suite()
    diff = time.monotonic() - start

    assert [result.name for result in results if not result.passed] == []
    assert diff < 60


@pytest.mark.parametrize(
    ("operator", "name"),
    (
        ("add", "add"),
        ("conv1d", "conv1d"),
        ("lstm", "lstm"),
        ("pool", "pool/max"),
        ("conv1d", "mgtm_forward"),
        ("multiply", "fuse"),
    ),
)
def test_injected_fault_is_reported(operator: str, name: str) -> None:
    with fault_injection(operator):  # type: ignore[arg-type]
        (result,) = run_suite([name])
    assert not result.passed
    assert result.error > 0.1


def test_run_suite_is_deterministic() -> None:
    first = run_suite(["lstm", "fuse"])
    second = run_suite(["fuse", "lstm"])
    assert {r.name: r.error for r in first} == {r.name: r.error for r in second}


def test_unknown_check() -> None:
    with pytest.raises(RejectedInputError, match="unknown gradient check"):
        run_suite(["softmax"])


def test_quadratic_check() -> None:
    x = Tensor(np.array([2.0, -0.5]))
    assert grad_check(lambda: total(square(x)), [x]) < 1e-8
