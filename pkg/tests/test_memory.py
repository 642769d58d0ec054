"""Append-only buffer, windowing, pooling exactness, and stream files."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weavecache.core import mean_pool
from weavecache.errors import (
    DimensionError,
    EmptyInputError,
    StreamFormatError,
    TimeOrderError,
)
from weavecache.memory import (
    DEFAULT_WINDOW_C,
    MemoryBuffer,
    as_token_matrix,
    frame_to_json_line,
    load_stream_jsonl,
    pool_tokens,
    read_frame_lines,
    write_stream_jsonl,
)


def simple_tokens(value: float = 1.0, n: int = 2, dim: int = 3):
    return [[value] * dim for _ in range(n)]


class TestAsTokenMatrix:
    def test_shape_and_readonly(self):
        mat = as_token_matrix([[1.0, 2.0], [3.0, 4.0]])
        assert mat.shape == (2, 2)
        assert not mat.flags.writeable

    def test_copies_ndarray_input(self):
        src = np.ones((2, 2))
        mat = as_token_matrix(src)
        src[0, 0] = 99.0
        assert mat[0, 0] == 1.0

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            as_token_matrix([])

    def test_ragged(self):
        with pytest.raises(DimensionError):
            as_token_matrix([[1.0, 2.0], [1.0]])

    def test_zero_dim(self):
        with pytest.raises(DimensionError):
            as_token_matrix([[], []])

    def test_non_2d(self):
        with pytest.raises(DimensionError):
            as_token_matrix(np.ones(3))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            as_token_matrix([[1.0, math.inf]])


class TestPooling:
    def test_matches_scalar_pool_bitwise(self, rng):
        for _ in range(50):
            tokens = rng.standard_normal((int(rng.integers(1, 9)), 5))
            pooled = pool_tokens(as_token_matrix(tokens))
            scalar = mean_pool([list(row) for row in tokens])
            assert tuple(pooled) == scalar

    def test_copies_recover_token(self):
        mat = as_token_matrix([[0.1, 0.3, 0.7]] * 7)
        assert tuple(pool_tokens(mat)) == (0.1, 0.3, 0.7)


class TestMemoryBuffer:
    def test_append_assigns_dense_ids(self):
        buf = MemoryBuffer(window_c=4)
        for i in range(5):
            rec = buf.append(float(i), simple_tokens(i + 1.0))
            assert rec.frame_id == i
        assert len(buf) == 5
        assert buf.last_timestamp_s == 4.0

    def test_default_window(self):
        assert MemoryBuffer().window_c == DEFAULT_WINDOW_C

    def test_window_is_tail(self):
        buf = MemoryBuffer(window_c=3)
        for i in range(10):
            buf.append(float(i), simple_tokens())
        win = buf.local_window()
        assert [f.frame_id for f in win] == [7, 8, 9]

    def test_window_shorter_than_c(self):
        buf = MemoryBuffer(window_c=8)
        buf.append(0.0, simple_tokens())
        assert [f.frame_id for f in buf.local_window()] == [0]

    def test_window_empty(self):
        assert MemoryBuffer().local_window() == ()

    def test_equal_timestamps_allowed(self):
        buf = MemoryBuffer()
        buf.append(1.0, simple_tokens())
        buf.append(1.0, simple_tokens())
        assert len(buf) == 2

    def test_timestamp_regression(self):
        buf = MemoryBuffer()
        buf.append(2.0, simple_tokens())
        with pytest.raises(TimeOrderError):
            buf.append(1.0, simple_tokens())

    def test_non_finite_timestamp(self):
        with pytest.raises(TimeOrderError):
            MemoryBuffer().append(math.nan, simple_tokens())

    def test_dim_locked_by_first_append(self):
        buf = MemoryBuffer()
        buf.append(0.0, [[1.0, 2.0]])
        with pytest.raises(DimensionError):
            buf.append(1.0, [[1.0, 2.0, 3.0]])

    def test_dim_locked_by_constructor(self):
        buf = MemoryBuffer(dim=4)
        with pytest.raises(DimensionError):
            buf.append(0.0, [[1.0, 2.0]])

    def test_bad_window(self):
        with pytest.raises(ValueError):
            MemoryBuffer(window_c=0)

    def test_snapshot_is_stable_under_append(self):
        buf = MemoryBuffer()
        buf.append(0.0, simple_tokens())
        snap = buf.snapshot()
        buf.append(1.0, simple_tokens())
        assert len(snap) == 1
        assert len(buf.snapshot()) == 2

    def test_snapshot_pooled_matrix_rows(self, rng):
        buf = MemoryBuffer()
        for i in range(6):
            buf.append(float(i), rng.standard_normal((3, 4)))
        snap = buf.snapshot()
        mat = snap.pooled_matrix()
        assert mat.shape == (6, 4)
        for i, frame in enumerate(snap):
            assert np.array_equal(mat[i], frame.pooled_key)
        norms = snap.pooled_norms()
        assert norms == pytest.approx(np.linalg.norm(mat, axis=1))

    @given(st.integers(min_value=1, max_value=12), st.integers(min_value=1, max_value=30))
    @settings(max_examples=60)
    def test_window_length_invariant(self, window_c, n):
        buf = MemoryBuffer(window_c=window_c)
        for i in range(n):
            buf.append(float(i), [[1.0]])
        assert len(buf.local_window()) == min(window_c, n)


class TestStreamJsonl:
    def test_line_format(self):
        line = frame_to_json_line(1.5, [[1.0, 2.0]], "tag")
        assert json.loads(line) == {"t": 1.5, "tokens": [[1.0, 2.0]], "label": "tag"}
        assert " " not in line

    def test_label_omitted_when_none(self):
        assert "label" not in json.loads(frame_to_json_line(0.0, [[1.0]]))

    def test_roundtrip_bytes(self, tmp_path, rng):
        frames = []
        for i in range(8):
            tokens = [[float(x) for x in row] for row in rng.standard_normal((2, 3))]
            frames.append((float(i), tokens, f"e{i % 2}"))
        path = tmp_path / "s.jsonl"
        assert write_stream_jsonl(path, frames) == 8
        first = path.read_bytes()
        parsed = list(read_frame_lines(path.read_text().splitlines()))
        assert write_stream_jsonl(path, parsed) == 8
        assert path.read_bytes() == first

    def test_load_rebuilds_buffer(self, tmp_path):
        path = tmp_path / "s.jsonl"
        write_stream_jsonl(path, [(0.0, [[1.0, 2.0]], "a"), (1.0, [[3.0, 4.0]], None)])
        buf = load_stream_jsonl(path, window_c=2)
        assert len(buf) == 2
        assert buf.snapshot()[0].label == "a"
        assert buf.snapshot()[1].label is None
        assert np.array_equal(buf.snapshot()[1].token_keys, [[3.0, 4.0]])

    def test_blank_lines_skipped(self):
        lines = ['{"t": 0, "tokens": [[1.0]]}', "", '{"t": 1, "tokens": [[2.0]]}']
        assert len(list(read_frame_lines(lines))) == 2

    @pytest.mark.parametrize(
        "line, exc",
        [
            ("not json", StreamFormatError),
            ("[1, 2]", StreamFormatError),
            ('{"tokens": [[1.0]]}', StreamFormatError),
            ('{"t": 0}', StreamFormatError),
            ('{"t": true, "tokens": [[1.0]]}', StreamFormatError),
            ('{"t": 0, "tokens": []}', StreamFormatError),
            ('{"t": 0, "tokens": [[]]}', StreamFormatError),
            ('{"t": 0, "tokens": [[1.0], [1.0, 2.0]]}', DimensionError),
            ('{"t": 0, "tokens": [[true]]}', StreamFormatError),
            ('{"t": 0, "tokens": [["x"]]}', StreamFormatError),
            ('{"t": 0, "tokens": [[1e999]]}', StreamFormatError),
            ('{"t": 0, "tokens": [[1.0]], "label": 5}', StreamFormatError),
        ],
    )
    def test_bad_lines_raise_with_line_number(self, line, exc):
        with pytest.raises(exc, match="line 2"):
            list(read_frame_lines(['{"t": 0, "tokens": [[1.0]]}', line]))

    def test_load_reports_regression_line(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"t": 5, "tokens": [[1.0]]}\n{"t": 1, "tokens": [[1.0]]}\n')
        with pytest.raises(TimeOrderError, match="frame 2"):
            load_stream_jsonl(path)
