import struct

import numpy as np
import pytest

from tsidec.dcae import build_dcae, encode
from tsidec.io import (
    MAGIC,
    ModelFormatError,
    ParseError,
    ingest_csv,
    layer_specs_from_file,
    load_model,
    parse_config,
    read_metadata_csv,
    save_model,
)


def write(path, text):
    path.write_text(text)
    return path


def toy():
    return build_dcae(10, 10, latent_dim=4, seed=1, filters=(2, 2, 2, 3), dense_widths=(6, 5))


def test_ingest_two_series_and_reorder(tmp_path):
    p = write(tmp_path / "d.csv", "series_id,timestamp,value\n"
              "b,2,5\na,10,3\na,2,1\nb,1,4\na,9,2\nb,3,6\n")
    s = ingest_csv(p)
    assert [t.id for t in s] == ["b", "a"]
    # numeric sort: 2 < 9 < 10
    np.testing.assert_array_equal(s[1].values, [1, 2, 3])
    np.testing.assert_array_equal(s[0].values, [4, 5, 6])


def test_ingest_lexicographic_timestamps(tmp_path):
    p = write(tmp_path / "d.csv", "series_id,timestamp,value\n"
              "a,2024-01-02T00:00,2\na,2024-01-01T00:00,1\n")
    np.testing.assert_array_equal(ingest_csv(p)[0].values, [1, 2])


@pytest.mark.parametrize("body,line,msg", [
    ("id,t,v\na,1,2\n", 1, "header"),
    ("series_id,timestamp,value\na,1,2\na,2,x\n", 3, "non-numeric"),
    ("series_id,timestamp,value\na,1,2\na,1,3\n", 3, "duplicate"),
    ("series_id,timestamp,value\na,1,2\na,2\n", 3, "3 fields"),
    ("series_id,timestamp,value\na,1,nan\n", 2, "non-finite"),
    ("series_id,timestamp,value\n", 2, "no data"),
])
def test_ingest_errors_name_line(tmp_path, body, line, msg):
    p = write(tmp_path / "d.csv", body)
    with pytest.raises(ParseError, match=msg) as exc:
        ingest_csv(p)
    assert exc.value.line == line
    assert f"d.csv:{line}:" in str(exc.value)


def test_metadata_sidecar(tmp_path):
    d = write(tmp_path / "d.csv", "series_id,timestamp,value\na,0,1\na,1,2\nb,0,3\n")
    m = write(tmp_path / "m.csv", "series_id,weight,energy\na,10,500\nb,8,\n")
    s = ingest_csv(d, m)
    assert s[0].metadata == {"weight": 10.0, "energy": 500.0}
    assert s[1].metadata == {"weight": 8.0}
    with pytest.raises(ParseError, match="duplicate"):
        read_metadata_csv(write(tmp_path / "m2.csv", "series_id,weight\na,1\na,2\n"))


def test_parse_config(tmp_path):
    p = write(tmp_path / "c.cfg", "# comment\nseed = 3\n\nk_range = 3:8  # sweep\n")
    assert parse_config(p) == {"seed": "3", "k_range": "3:8"}
    with pytest.raises(ParseError) as exc:
        parse_config(write(tmp_path / "bad.cfg", "seed = 1\njunk\n"))
    assert exc.value.line == 2


def test_model_round_trip_bit_exact(tmp_path):
    m = toy()
    cent = np.random.default_rng(0).standard_normal((3, 4))
    path = tmp_path / "m.tsidec"
    save_model(m, path, cent)
    back, c = load_model(path)
    np.testing.assert_array_equal(back.params, m.params)
    np.testing.assert_array_equal(c, cent)
    x = np.random.default_rng(1).random((5, 1, 10, 10))
    np.testing.assert_array_equal(encode(back, x), encode(m, x))
    assert len(layer_specs_from_file(path)) == len(m.encoder.specs()) + len(m.decoder.specs())


def test_model_file_size(tmp_path):
    m = toy()
    path = tmp_path / "m.tsidec"
    save_model(m, path, np.zeros((2, 4)))
    blob = path.read_bytes()
    assert blob[:8] == MAGIC
    _, version, hlen = struct.unpack_from("<8sII", blob)
    assert version == 1
    assert len(blob) == 16 + hlen + 8 * (m.n_params + 8)


def test_model_errors_name_offset(tmp_path):
    path = tmp_path / "m.tsidec"
    save_model(toy(), path, np.zeros((2, 4)))
    blob = path.read_bytes()
    cases = {
        "bad magic": b"XXXXXXXX" + blob[8:],
        "version": blob[:8] + struct.pack("<I", 9) + blob[12:],
        "truncated": blob[:-5],
        "trailing": blob + b"\0",
        "truncated inside": blob[:10],
    }
    for msg, data in cases.items():
        path.write_bytes(data)
        with pytest.raises(ModelFormatError, match=msg) as exc:
            load_model(path)
        assert "offset" in str(exc.value)
    path.write_bytes(blob[:-5])
    with pytest.raises(ModelFormatError) as exc:
        load_model(path)
    assert exc.value.offset == len(blob) - 5
