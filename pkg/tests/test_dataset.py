import numpy as np
import pytest

from egan import dataset as ds

# The standard 40-name header of the public face-attribute label file.
CELEBA_ATTRIBUTES = (
    "5_o_Clock_Shadow Arched_Eyebrows Attractive Bags_Under_Eyes Bald Bangs "
    "Big_Lips Big_Nose Black_Hair Blond_Hair Blurry Brown_Hair Bushy_Eyebrows "
    "Chubby Double_Chin Eyeglasses Goatee Gray_Hair Heavy_Makeup High_Cheekbones "
    "Male Mouth_Slightly_Open Mustache Narrow_Eyes No_Beard Oval_Face Pale_Skin "
    "Pointy_Nose Receding_Hairline Rosy_Cheeks Sideburns Smiling Straight_Hair "
    "Wavy_Hair Wearing_Earrings Wearing_Hat Wearing_Lipstick Wearing_Necklace "
    "Wearing_Necktie Young"
)


class TestParseAttributeFile:
    def test_basic(self):
        schema, labels = ds.parse_attribute_file("1\nSmiling Male\na.jpg 1 -1\n")
        assert schema.names == ("Smiling", "Male")
        assert list(labels) == ["a.jpg"]
        np.testing.assert_array_equal(labels["a.jpg"], [1.0, 0.0])

    def test_row_count_mismatch(self):
        with pytest.raises(ds.AttributeFileError, match=r"row count 1 != declared 2"):
            ds.parse_attribute_file("2\nSmiling\na.jpg 1\n")

    def test_forty_attribute_header(self):
        row = "000001.jpg " + " ".join(["-1"] * 40)
        schema, labels = ds.parse_attribute_file(f"1\n{CELEBA_ATTRIBUTES}\n{row}\n")
        assert schema.count == 40
        assert labels["000001.jpg"].sum() == 0

    def test_wrong_token_count_names_line(self):
        with pytest.raises(ds.AttributeFileError, match="line 3"):
            ds.parse_attribute_file("1\nSmiling Male\na.jpg 1\n")

    def test_bad_token_names_line(self):
        with pytest.raises(ds.AttributeFileError, match="line 4"):
            ds.parse_attribute_file("2\nSmiling\na.jpg 1\nb.jpg 2\n")

    def test_round_trip(self):
        text = "2\nSmiling Male\na.jpg 1 -1\nb.jpg -1 1\n"
        schema, labels = ds.parse_attribute_file(text)
        assert ds.serialize_attribute_file(schema, labels) == text

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            ds.parse_attribute_file("1\nSmiling Smiling\na.jpg 1 1\n")


class TestNormalize:
    def test_endpoints(self):
        raw = np.array([[[0, 127, 255]]], dtype=np.uint8)
        out = ds.normalize_image(raw)
        assert out[0, 0, 0] == -1.0
        assert out[0, 0, 2] == 1.0
        assert out[0, 0, 1] == pytest.approx(127 / 127.5 - 1.0)  # ~ -0.00392

    def test_round_trip_all_bytes(self):
        raw = np.arange(256, dtype=np.uint8).reshape(16, 16, 1).repeat(3, axis=2)
        back = ds.denormalize_image(ds.normalize_image(raw))
        np.testing.assert_array_equal(back, raw)

    def test_rejects_floats_and_out_of_range(self):
        with pytest.raises(ValueError):
            ds.normalize_image(np.zeros((2, 2, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            ds.normalize_image(np.full((2, 2, 3), 300, dtype=np.int32))


class TestSynthetic:
    def test_determinism(self):
        cfg = ds.SyntheticConfig(n_images=100, seed=7)
        a = ds.generate_synthetic_dataset(cfg)
        b = ds.generate_synthetic_dataset(cfg)
        for x, y in zip(a, b):
            assert x.id == y.id
            np.testing.assert_array_equal(x.pixels, y.pixels)
            np.testing.assert_array_equal(x.attributes, y.attributes)

    @pytest.mark.parametrize("resolution", [32, 64])
    def test_oracle_recovers_labels_exactly(self, resolution):
        cfg = ds.SyntheticConfig(n_images=200, seed=11, resolution=resolution)
        for item in ds.generate_synthetic_dataset(cfg):
            np.testing.assert_array_equal(ds.analytic_attribute_oracle(item.pixels), item.attributes)

    def test_pixel_range(self, small_dataset):
        for item in small_dataset:
            assert item.pixels.min() >= -1.0 and item.pixels.max() <= 1.0

    def test_attribute_rates_concentrate(self):
        data = ds.generate_synthetic_dataset(ds.SyntheticConfig(n_images=10000, seed=7))
        rates = np.stack([i.attributes for i in data]).mean(axis=0)
        assert np.all(rates >= 0.47) and np.all(rates <= 0.53)

    def test_bad_resolution(self):
        with pytest.raises(ValueError):
            ds.SyntheticConfig(n_images=10, seed=0, resolution=48)


class TestOracle:
    def test_all_black_is_all_zero(self):
        image = np.full((32, 32, 3), -1.0, dtype=np.float32)
        np.testing.assert_array_equal(ds.analytic_attribute_oracle(image), np.zeros(4))

    def test_flip_invariance(self, small_dataset):
        for item in small_dataset[:32]:
            flipped = np.ascontiguousarray(np.flip(item.pixels, axis=1))
            np.testing.assert_array_equal(ds.analytic_attribute_oracle(flipped), item.attributes)


class TestSampling:
    def test_full_batch_is_permutation(self, small_dataset):
        batch = ds.sample_batch(small_dataset, len(small_dataset), np.random.default_rng(0))
        assert sorted(batch.ids) == sorted(item.id for item in small_dataset)

    def test_batch_determinism(self, small_dataset):
        a = ds.sample_batch(small_dataset, 16, np.random.default_rng(9))
        b = ds.sample_batch(small_dataset, 16, np.random.default_rng(9))
        assert a.ids == b.ids
        np.testing.assert_array_equal(a.images, b.images)

    def test_without_replacement(self):
        data = ds.generate_synthetic_dataset(ds.SyntheticConfig(n_images=200, seed=2))
        batch = ds.sample_batch(data, 64, np.random.default_rng(1))
        assert len(set(batch.ids)) == 64

    def test_oversized_batch_rejected(self, small_dataset):
        with pytest.raises(ValueError):
            ds.sample_batch(small_dataset, len(small_dataset) + 1, np.random.default_rng(0))

    def test_random_attributes(self):
        rng = np.random.default_rng(4)
        attrs = ds.sample_random_attributes(10000, ds.SYNTHETIC_SCHEMA, rng)
        assert set(np.unique(attrs)) <= {0.0, 1.0}
        assert np.all(attrs.mean(axis=0) >= 0.47) and np.all(attrs.mean(axis=0) <= 0.53)
        again = ds.sample_random_attributes(10000, ds.SYNTHETIC_SCHEMA, np.random.default_rng(4))
        np.testing.assert_array_equal(attrs, again)


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        data = ds.generate_synthetic_dataset(ds.SyntheticConfig(n_images=12, seed=3))
        ds.save_dataset(data, ds.SYNTHETIC_SCHEMA, tmp_path / "d")
        schema, loaded = ds.load_dataset(tmp_path / "d")
        assert schema.names == ds.SYNTHETIC_SCHEMA.names
        assert len(loaded) == 12
        by_id = {item.id: item for item in loaded}
        for item in data:
            np.testing.assert_array_equal(by_id[item.id].attributes, item.attributes)
            # PNG quantization error is at most one byte step
            assert np.abs(by_id[item.id].pixels - item.pixels).max() <= (1 / 127.5) + 1e-6

    def test_loaded_labels_survive_oracle(self, tmp_path):
        data = ds.generate_synthetic_dataset(ds.SyntheticConfig(n_images=12, seed=3))
        ds.save_dataset(data, ds.SYNTHETIC_SCHEMA, tmp_path / "d")
        _, loaded = ds.load_dataset(tmp_path / "d")
        for item in loaded:
            np.testing.assert_array_equal(ds.analytic_attribute_oracle(item.pixels), item.attributes)
