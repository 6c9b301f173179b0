import pytest

from golden_utils import compare_golden


def test_missing_file_fails(tmp_path):
    with pytest.raises(pytest.fail.Exception, match="--update-golden"):
        compare_golden(tmp_path / "absent.png", b"\x89PNG")
    assert not (tmp_path / "absent.png").exists()


def test_mismatch_fails(tmp_path):
    path = tmp_path / "frozen.png"
    path.write_bytes(b"expected")
    with pytest.raises(AssertionError):
        compare_golden(path, b"actual")


def test_update_rewrites(tmp_path):
    path = tmp_path / "nested" / "frozen.png"
    compare_golden(path, b"fresh", update=True)
    assert path.read_bytes() == b"fresh"
    compare_golden(path, b"fresh")
