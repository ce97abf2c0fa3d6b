import json
import struct

import numpy as np
import pytest

from equicine.phantom import (DatasetFormatError, Feature, PhantomSpec, Sample, generate_cine_phantom,
                              make_sample, random_phantom_spec, read_dataset, write_dataset)


def test_empty_spec_is_zero():
    img = generate_cine_phantom(PhantomSpec(T=3, H=16, W=16))
    assert img.shape == (3, 16, 16)
    assert not np.any(img)


def test_static_disk_frames_identical():
    spec = PhantomSpec(T=4, H=32, W=32, features=[Feature("ellipse", (2.0, -3.0), (6.0, 6.0))])
    img = generate_cine_phantom(spec)
    for t in range(1, 4):
        assert np.array_equal(img[t], img[0])


def test_pulsating_disk_area_swing():
    # largest over smallest area of a disk pulsing by +-10% is (1.1/0.9)^2
    T = 4
    spec = PhantomSpec(T=T, H=128, W=128, phase_order=0,
                       features=[Feature("ellipse", (0.0, 0.0), (30.0, 30.0), alpha=0.1)])
    area = np.abs(generate_cine_phantom(spec)).sum(axis=(1, 2))
    expected = np.pi * 30.0 ** 2 * (1 + 0.1 * np.sin(2 * np.pi * np.arange(T) / T)) ** 2
    assert np.allclose(area, expected, rtol=0.01)
    assert abs(area.max() / area.min() - (1.1 / 0.9) ** 2) < 0.01


def test_out_of_fov_and_bad_feature():
    with pytest.raises(ValueError, match="field of view"):
        generate_cine_phantom(PhantomSpec(T=1, H=16, W=16, features=[Feature("ring", (6.0, 0.0), (4.0, 4.0))]))
    with pytest.raises(ValueError):
        Feature("triangle")
    with pytest.raises(ValueError):
        Feature(intensity=1.5)


def test_determinism_and_spec_round_trip():
    spec = random_phantom_spec(3, T=4, H=32, W=32)
    a = generate_cine_phantom(spec)
    b = generate_cine_phantom(PhantomSpec.from_dict(spec.to_dict()))
    assert np.array_equal(a, b)
    assert np.max(np.abs(a)) <= 1.0


def test_fourfold_copies_are_rotation_symmetric():
    feats = [Feature("L-blob", (9.0, 4.0), (3.0, 2.5), angle=0.4), Feature("ring", (-5.0, 8.0), (3.0, 2.0))]
    spec = PhantomSpec(T=1, H=48, W=48, features=feats, copies=4, phase_order=0)
    mag = np.abs(generate_cine_phantom(spec)[0])
    # differences only come from edge rasterization, a quarter of a sub-sample each
    assert np.max(np.abs(np.rot90(mag) - mag)) <= 2 * 0.25 + 1e-12
    assert np.mean(np.abs(np.rot90(mag) - mag)) < 0.01


def test_dataset_round_trip_is_bitwise(tmp_path):
    samples = [make_sample(s, T=2, H=8, W=8, n_coils=2, R=2.0) for s in (1, 2)]
    samples[0].image[0, 0, 0] = -0.0 + 0j
    path = tmp_path / "d.dsre"
    write_dataset(path, samples, {"note": "x"})
    back, meta = read_dataset(path)
    assert meta == {"note": "x"}
    for s, b in zip(samples, back):
        assert s.seed == b.seed
        for u, v in [(s.image, b.image), (s.sens, b.sens), (s.mask, b.mask)]:
            assert u.tobytes() == v.tobytes()


def test_dataset_format_errors(tmp_path):
    path = tmp_path / "d.dsre"
    write_dataset(path, [make_sample(0, T=2, H=8, W=8, n_coils=1, R=2.0)])
    raw = path.read_bytes()
    (tmp_path / "magic.dsre").write_bytes(b"XXXX1" + raw[5:])
    with pytest.raises(DatasetFormatError, match="magic"):
        read_dataset(tmp_path / "magic.dsre")
    (tmp_path / "short.dsre").write_bytes(raw[:-8])
    with pytest.raises(DatasetFormatError, match="header declares"):
        read_dataset(tmp_path / "short.dsre")
    n = struct.unpack("<Q", raw[5:13])[0]
    header = json.loads(raw[13:13 + n])
    header["element_count"] += 1
    blob = json.dumps(header).encode()
    (tmp_path / "count.dsre").write_bytes(raw[:5] + struct.pack("<Q", len(blob)) + blob + raw[13 + n:])
    with pytest.raises(DatasetFormatError, match="elements"):
        read_dataset(tmp_path / "count.dsre")


def test_sample_and_mask_contract():
    s = make_sample(5, T=4, H=16, W=16, n_coils=3, R=4.0)
    assert isinstance(s, Sample)
    assert s.image.shape == (4, 16, 16) and s.sens.shape == (3, 16, 16) and s.mask.shape == (4, 16)
    assert np.all(s.mask.sum(axis=1) == 4)
