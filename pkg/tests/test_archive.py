import numpy as np
import pytest

from tokmesh.archive import ArchiveError, ArchiveVersionError, load_archive, save_archive


def test_round_trip_arrays_and_meta(tmp_path):
    path = tmp_path / "x.naa"
    arrays = {
        "a/float64": np.random.default_rng(0).normal(size=(3, 4)),
        "b/int64": np.arange(10, dtype=np.int64).reshape(2, 5),
        "c/scalar": np.array(3.5),
        "d/uint8": np.array([1, 0, 1], dtype=np.uint8),
    }
    save_archive(path, arrays, meta={"kind": "test", "nested": {"x": 1}})
    back = load_archive(path)
    assert back.meta == {"kind": "test", "nested": {"x": 1}}
    assert back.names() == sorted(arrays)
    for name, arr in arrays.items():
        assert back[name].dtype == arr.dtype
        assert back[name].shape == arr.shape
        assert np.array_equal(back[name], arr)


def test_bitwise_float_round_trip(tmp_path):
    path = tmp_path / "x.naa"
    arr = np.random.default_rng(1).normal(size=257)
    save_archive(path, {"v": arr})
    assert load_archive(path)["v"].tobytes() == arr.tobytes()


def test_non_contiguous_input_saved_row_major(tmp_path):
    path = tmp_path / "x.naa"
    arr = np.arange(12.0).reshape(3, 4).T  # transposed view, not contiguous
    save_archive(path, {"v": arr})
    assert np.array_equal(load_archive(path)["v"], arr)


def test_foreign_file_raises_parse_error(tmp_path):
    path = tmp_path / "garbage.naa"
    path.write_bytes(b"this is definitely not an archive, just some text padding")
    with pytest.raises(ArchiveError):
        load_archive(path)


def test_truncated_file_raises(tmp_path):
    path = tmp_path / "x.naa"
    save_archive(path, {"v": np.zeros(100)})
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(ArchiveError):
        load_archive(path)


def test_version_mismatch_raises(tmp_path):
    import json
    import struct

    path = tmp_path / "x.naa"
    manifest = json.dumps({"format_version": 99, "meta": {}, "entries": []}).encode()
    path.write_bytes(b"NARCHIV1" + struct.pack("<Q", len(manifest)) + manifest)
    with pytest.raises(ArchiveVersionError):
        load_archive(path)


def test_empty_archive_ok(tmp_path):
    path = tmp_path / "x.naa"
    save_archive(path, {})
    assert load_archive(path).arrays == {}
