"""Image loading against a per-pixel bilinear oracle, COCO reorganization
rules, and synthetic-data separability."""

import json

import numpy as np
import pytest
from PIL import Image

from pnmf import ingest
from pnmf.errors import BadConfig, EmptyClass, ParseError


def bilinear_oracle(img, out_h, out_w):
    """Independent per-pixel bilinear interpolation (half-pixel centers)."""
    in_h, in_w = img.shape
    out = np.zeros((out_h, out_w))
    for oy in range(out_h):
        for ox in range(out_w):
            sy = (oy + 0.5) * in_h / out_h - 0.5
            sx = (ox + 0.5) * in_w / out_w - 0.5
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            fy, fx = sy - y0, sx - x0
            acc = 0.0
            for dy, wy in ((0, 1 - fy), (1, fy)):
                for dx, wx in ((0, 1 - fx), (1, fx)):
                    yy = min(max(y0 + dy, 0), in_h - 1)
                    xx = min(max(x0 + dx, 0), in_w - 1)
                    acc += wy * wx * img[yy, xx]
            out[oy, ox] = acc
    return out


def threshold_sweep_accuracy(values, labels):
    """Best accuracy of a single threshold on 1-D scores (either polarity)."""
    order = np.argsort(values)
    v = np.asarray(values)[order]
    y = np.asarray(labels)[order]
    best = 0.0
    cuts = np.concatenate([[-np.inf], (v[1:] + v[:-1]) / 2, [np.inf]])
    for c in cuts:
        pred = (values > c).astype(int)
        acc = max(np.mean(pred == labels), np.mean(1 - pred == labels))
        best = max(best, acc)
    return best


class TestImageLoading:
    def test_uniform_white_column(self, tmp_path):
        path = tmp_path / "w.png"
        Image.fromarray(np.full((8, 8), 255, dtype=np.uint8)).save(path)
        col = ingest.load_image_column(path, 8)
        np.testing.assert_array_equal(col, np.ones(64))

    def test_uniform_black_column(self, tmp_path):
        path = tmp_path / "b.png"
        Image.fromarray(np.zeros((8, 8), dtype=np.uint8)).save(path)
        col = ingest.load_image_column(path, 8)
        np.testing.assert_array_equal(col, np.zeros(64))

    def test_checkerboard_matches_bilinear_oracle(self):
        img = np.array([[0.0, 1.0], [1.0, 0.0]])
        got = ingest.bilinear_resize(img, 4, 4)
        want = bilinear_oracle(img, 4, 4)
        np.testing.assert_allclose(got, want, rtol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_resizes_match_oracle(self, seed):
        rng = np.random.default_rng(seed)
        in_h, in_w = rng.integers(2, 9, 2)
        out_h, out_w = rng.integers(2, 13, 2)
        img = rng.random((in_h, in_w))
        np.testing.assert_allclose(
            ingest.bilinear_resize(img, out_h, out_w),
            bilinear_oracle(img, out_h, out_w),
            rtol=1e-12,
        )

    def test_rgb_luma_weights(self, tmp_path):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[:, :, 0] = 255  # pure red
        path = tmp_path / "r.png"
        Image.fromarray(arr).save(path)
        col = ingest.load_image_column(path, 4)
        np.testing.assert_allclose(col, 0.299, atol=1e-9)

    def test_pgm_binary_supported(self, tmp_path):
        path = tmp_path / "g.pgm"
        Image.fromarray(np.full((6, 6), 128, dtype=np.uint8)).save(path)
        col = ingest.load_image_column(path, 6)
        np.testing.assert_allclose(col, 128 / 255.0, atol=1e-9)


class TestLoadSplit:
    def _make_folder(self, tmp_path, n_normal=2, n_tumor=2):
        for cls, n in (("normal", n_normal), ("tumor", n_tumor)):
            d = tmp_path / cls
            d.mkdir(parents=True)
            for i in range(n):
                Image.fromarray(
                    np.full((5, 5), 60 + 17 * i, dtype=np.uint8)
                ).save(d / f"img_{i}.png")

    def test_labels_match_column_order(self, tmp_path):
        self._make_folder(tmp_path)
        split, skipped = ingest.load_split(tmp_path, 5)
        assert split.images.shape == (25, 4)
        np.testing.assert_array_equal(split.labels, [0, 0, 1, 1])
        assert skipped == []
        assert split.images.min() >= 0.0 and split.images.max() <= 1.0

    def test_unreadable_file_skipped(self, tmp_path):
        self._make_folder(tmp_path)
        (tmp_path / "normal" / "corrupt.png").write_bytes(b"not an image")
        split, skipped = ingest.load_split(tmp_path, 5)
        assert len(skipped) == 1
        assert split.images.shape[1] == 4

    def test_empty_class_rejected(self, tmp_path):
        (tmp_path / "normal").mkdir()
        (tmp_path / "tumor").mkdir()
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "normal" / "a.png")
        with pytest.raises(EmptyClass):
            ingest.load_split(tmp_path, 4)


class TestReorganizeCoco:
    def _write_coco(self, tmp_path, images, annotations, categories):
        ann = tmp_path / "ann.json"
        ann.write_text(
            json.dumps({"images": images, "annotations": annotations, "categories": categories})
        )
        return ann

    def _touch_images(self, tmp_path, names):
        d = tmp_path / "imgs"
        d.mkdir(exist_ok=True)
        for name in names:
            Image.fromarray(np.zeros((3, 3), dtype=np.uint8)).save(d / name)
        return d

    def test_direct_mapping(self, tmp_path):
        ann = self._write_coco(
            tmp_path,
            images=[{"id": i, "file_name": f"i{i}.png"} for i in range(3)],
            annotations=[
                {"image_id": 0, "category_id": 1},
                {"image_id": 1, "category_id": 1},
            ],
            categories=[{"id": 1, "name": "tumor"}],
        )
        img_dir = self._touch_images(tmp_path, [f"i{i}.png" for i in range(3)])
        out = ingest.reorganize_coco(ann, img_dir, tmp_path / "out", split="train")
        assert out["counts"] == {"tumor": 2, "normal": 1}
        assert (tmp_path / "out" / "train" / "tumor" / "i0.png").exists()
        assert (tmp_path / "out" / "train" / "normal" / "i2.png").exists()

    def test_empty_annotations_default_to_normal(self, tmp_path):
        ann = self._write_coco(
            tmp_path,
            images=[{"id": i, "file_name": f"i{i}.png"} for i in range(3)],
            annotations=[],
            categories=[],
        )
        img_dir = self._touch_images(tmp_path, [f"i{i}.png" for i in range(3)])
        out = ingest.reorganize_coco(ann, img_dir, tmp_path / "out")
        assert out["counts"] == {"normal": 3}

    def test_missing_image_reported_not_fatal(self, tmp_path):
        ann = self._write_coco(
            tmp_path,
            images=[{"id": 0, "file_name": "here.png"}, {"id": 1, "file_name": "gone.png"}],
            annotations=[],
            categories=[],
        )
        img_dir = self._touch_images(tmp_path, ["here.png"])
        out = ingest.reorganize_coco(ann, img_dir, tmp_path / "out")
        assert out["counts"] == {"normal": 1}
        assert out["skipped"] == ["gone.png"]

    def test_malformed_json(self, tmp_path):
        ann = tmp_path / "bad.json"
        ann.write_text("{nope")
        with pytest.raises(ParseError):
            ingest.reorganize_coco(ann, tmp_path, tmp_path / "out")

    def test_extra_categories_need_map(self, tmp_path):
        ann = self._write_coco(
            tmp_path,
            images=[{"id": 0, "file_name": "a.png"}],
            annotations=[{"image_id": 0, "category_id": 5}],
            categories=[{"id": 5, "name": "glioma"}],
        )
        img_dir = self._touch_images(tmp_path, ["a.png"])
        with pytest.raises(ParseError, match="category"):
            ingest.reorganize_coco(ann, img_dir, tmp_path / "out")
        out = ingest.reorganize_coco(
            ann, img_dir, tmp_path / "out", category_map={"glioma": "tumor"}
        )
        assert out["counts"] == {"tumor": 1}


class TestSynthetic:
    def test_deterministic(self):
        spec = ingest.SyntheticSpec(
            n_per_class_per_split={"train": 4, "val": 2, "test": 2},
            image_side=16,
            lesion_radius_range=(2.0, 4.0),
            seed=5,
        )
        a = ingest.generate_synthetic(spec)
        b = ingest.generate_synthetic(spec)
        for split in ("train", "val", "test"):
            assert a[split].images.tobytes() == b[split].images.tobytes()
            np.testing.assert_array_equal(a[split].labels, b[split].labels)

    def test_range_and_counts(self):
        spec = ingest.SyntheticSpec(
            n_per_class_per_split={"train": 6, "val": 3, "test": 3}, image_side=24, seed=1
        )
        out = ingest.generate_synthetic(spec)
        assert out["train"].images.shape == (24 * 24, 12)
        assert out["val"].images.shape[1] == 6
        for split in out.values():
            assert split.images.min() >= 0.0
            assert split.images.max() <= 1.0
            assert split.labels.sum() == split.labels.size // 2

    def test_zero_lesion_removes_separability(self):
        from pnmf import featstats

        spec = ingest.SyntheticSpec(
            n_per_class_per_split={"train": 60, "val": 2, "test": 2},
            image_side=24,
            lesion_intensity=0.0,
            lesion_intensity_min=0.0,
            lesion_radius_range=(2.0, 5.0),
            seed=2,
        )
        train = ingest.generate_synthetic(spec)["train"]
        means = train.images.mean(axis=0)
        a = featstats.auc(means[train.labels == 1], means[train.labels == 0])
        assert abs(a - 0.5) <= 0.1

    def test_default_spec_threshold_separability(self):
        spec = ingest.SyntheticSpec(
            n_per_class_per_split={"train": 80, "val": 2, "test": 2}, seed=3
        )
        train = ingest.generate_synthetic(spec)["train"]
        means = train.images.mean(axis=0)
        acc = threshold_sweep_accuracy(means, train.labels)
        assert acc >= 0.9

    def test_bad_spec_rejected(self):
        with pytest.raises(BadConfig):
            ingest.generate_synthetic(
                ingest.SyntheticSpec(n_per_class_per_split={"train": 0, "val": 1, "test": 1})
            )
        with pytest.raises(BadConfig):
            ingest.generate_synthetic(
                ingest.SyntheticSpec(lesion_radius_range=(40.0, 50.0), image_side=64)
            )
