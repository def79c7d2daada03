import json

import pytest

from tsb.pipeline import RunConfig

TINY_RUN = {
    "scenario": {"channels": 4, "slots": 252, "hu_count": 1, "seed": 5},
    "model": {
        "input_len": 8,
        "horizon": 4,
        "d_model": 8,
        "encoder_layers": 1,
        "decoder_layers": 1,
        "heads": 2,
        "lstm_layers": 1,
    },
    "train": {"epochs": 2, "batch_size": 16, "valid_max_windows": 8},
    "seed": 5,
}


@pytest.fixture
def tiny_run_dict():
    return json.loads(json.dumps(TINY_RUN))


@pytest.fixture
def tiny_run(tmp_path, tiny_run_dict):
    return RunConfig.from_dict({**tiny_run_dict, "out": str(tmp_path / "run")})


@pytest.fixture
def tiny_config_file(tmp_path, tiny_run_dict):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny_run_dict))
    return path


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (ok, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
