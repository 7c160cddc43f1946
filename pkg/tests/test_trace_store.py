import pandas as pd
import pytest

from core.env import run_episode
from core.trace_store import ARCHIVE_NAME, CSV_PATTERN, load_trace_archive, load_trace_columns, write_trace_archive


@pytest.fixture
def traces(toy_env):
    return [run_episode(toy_env, lambda s: a, seed=0) for a in (0, 1, 2)]


def test_archive_round_trip(traces, tmp_path):
    path = write_trace_archive(traces, tmp_path / ARCHIVE_NAME)
    loaded = load_trace_archive(path)
    assert len(loaded) == 3
    for original, back in zip(traces, loaded):
        pd.testing.assert_frame_equal(back, original)


def test_missing_archive_falls_back_to_csv(traces, tmp_path):
    for i, t in enumerate(traces):
        t.to_csv(tmp_path / CSV_PATTERN.format(index=i), index=False)
    loaded = load_trace_archive(tmp_path / ARCHIVE_NAME)
    assert len(loaded) == 3
    assert list(loaded[2]["serving_bs"]) == list(traces[2]["serving_bs"])


def test_nothing_to_load(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_trace_archive(tmp_path / ARCHIVE_NAME)


def test_empty_trace_list_is_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_trace_archive([], tmp_path / ARCHIVE_NAME)


def test_column_subset(traces, tmp_path):
    path = write_trace_archive(traces, tmp_path / ARCHIVE_NAME)
    df = load_trace_columns(path, ["realization", "throughput"])
    assert list(df.columns) == ["realization", "throughput"]
    assert len(df) == 30
    assert sorted(df["realization"].unique()) == [0, 1, 2]
