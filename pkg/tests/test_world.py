"""Phantom world: sampling frequencies, rendering semantics, detectors, datasets."""

from __future__ import annotations

import numpy as np
import pytest

from tailor.manifest import DatasetManifest
from tailor.world import (
    PhantomSpec,
    WorldConfig,
    apply_device_style,
    boundary_sharpness,
    build_dataset,
    build_tail_testset,
    count_bright_foci,
    detect_cal,
    detect_ncm,
    render,
    render_styled,
    sample_spec,
)


def make_spec(**overrides) -> PhantomSpec:
    base = dict(pathology="benign", subtype="fibroadenoma", ncm=False, cal=False,
                is_dcis=False, device="A", bbox=(0.5, 0.5, 0.2, 0.16), seed=99)
    base.update(overrides)
    return PhantomSpec(**base)


class TestSampling:
    def test_malignant_head_fraction(self):
        cfg = WorldConfig()
        rng = np.random.default_rng(11)
        draws = [sample_spec(cfg, rng, pathology="malignant") for _ in range(10_000)]
        head = sum(1 for s in draws if s.subtype == "ibc") / len(draws)
        assert abs(head - 0.818) < 0.02

    def test_single_subtype_config(self):
        cfg = WorldConfig(benign_subtypes={"cyst": 1.0})
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert sample_spec(cfg, rng, pathology="benign").subtype == "cyst"

    def test_subtype_histogram_matches_table(self):
        cfg = WorldConfig()
        rng = np.random.default_rng(5)
        n = 100_000
        counts: dict[str, int] = {}
        totals = {"benign": 0, "malignant": 0}
        for _ in range(n):
            s = sample_spec(cfg, rng)
            counts[s.subtype] = counts.get(s.subtype, 0) + 1
            totals[s.pathology] += 1
        for pathology, table in (("benign", cfg.benign_subtypes),
                                 ("malignant", cfg.malignant_subtypes)):
            for subtype, freq in table.items():
                observed = counts.get(subtype, 0) / totals[pathology]
                assert abs(observed - freq) < 0.01, (subtype, observed, freq)

    def test_long_tail_realism(self):
        cfg = WorldConfig()
        rng = np.random.default_rng(21)
        draws = [sample_spec(cfg, rng) for _ in range(10_000)]
        benign_ncm = sum(1 for s in draws if s.pathology == "benign" and s.ncm) / len(draws)
        benign_cal = sum(1 for s in draws if s.pathology == "benign" and s.cal) / len(draws)
        dcis = sum(1 for s in draws if s.is_dcis) / len(draws)
        assert benign_ncm < 0.05
        assert benign_cal < 0.05
        assert dcis < 0.03

    def test_dcis_implies_malignant(self):
        with pytest.raises(ValueError):
            make_spec(pathology="benign", is_dcis=True)

    def test_bbox_must_stay_inside_unit_square(self):
        with pytest.raises(ValueError):
            make_spec(bbox=(0.9, 0.5, 0.2, 0.1))

    def test_frequency_table_must_sum_to_one(self):
        with pytest.raises(ValueError):
            WorldConfig(device_mix={"A": 0.5, "B": 0.2})


class TestRender:
    def test_deterministic_given_seed(self):
        spec = make_spec(seed=1234)
        a = render(spec)
        b = render(spec)
        assert np.array_equal(a.pixels, b.pixels)

    def test_pixels_in_range_and_size(self):
        img = render(make_spec(), size=48)
        assert img.pixels.shape == (48, 48)
        assert img.pixels.min() >= 0 and img.pixels.max() <= 1

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(ValueError):
            make_spec(bbox=(0.5, 0.5, 0.0, 0.1))

    def test_cal_creates_bright_foci(self):
        rng = np.random.default_rng(3)
        for seed in rng.integers(0, 1 << 32, size=25):
            spec = make_spec(cal=True, seed=int(seed))
            img = render(spec)
            assert count_bright_foci(img.pixels, spec.bbox, threshold=0.9) >= 2

    def test_ncm_lowers_boundary_gradient(self):
        """Mean |grad| on the contour ring: NCM lower by >= 3 pooled SEs."""
        cfg = WorldConfig()
        rng = np.random.default_rng(17)

        def ring_gradient(px, bbox):
            sy, sx = px.shape
            cx, cy, hw, hh = bbox
            ys, xs = np.mgrid[0:sy, 0:sx].astype(np.float32)
            xs = (xs + 0.5) / sx
            ys = (ys + 0.5) / sy
            d = np.sqrt(((xs - cx) / hw) ** 2 + ((ys - cy) / hh) ** 2)
            gy, gx = np.gradient(px.astype(np.float64))
            mag = np.sqrt(gx * gx + gy * gy)
            return mag[(d > 0.7) & (d < 1.3)].mean()

        stats = {True: [], False: []}
        for _ in range(1000):
            for flag in (True, False):
                spec = sample_spec(cfg, rng, ncm=flag)
                if spec.ncm != flag:  # dcis subtype forces ncm off; skip those
                    continue
                img = render(spec, config=cfg)
                stats[flag].append(ring_gradient(img.pixels, spec.bbox))
        m_ncm, m_non = np.mean(stats[True]), np.mean(stats[False])
        se = np.sqrt(np.var(stats[True]) / len(stats[True])
                     + np.var(stats[False]) / len(stats[False]))
        assert m_ncm < m_non - 3 * se

    def test_dcis_renders_regular_and_crisp(self):
        # DCIS margin sharpness looks like benign margins, not like NCM
        crisp = []
        for seed in range(40):
            spec = make_spec(pathology="malignant", subtype="dcis", is_dcis=True, seed=seed)
            img = render(spec)
            crisp.append(boundary_sharpness(img.pixels, spec.bbox))
        feathered = []
        for seed in range(40):
            spec = make_spec(pathology="malignant", subtype="ibc", ncm=True, seed=seed)
            img = render(spec)
            feathered.append(boundary_sharpness(img.pixels, spec.bbox))
        assert np.mean(crisp) > 2 * np.mean(feathered)


class TestDeviceStyles:
    def test_device_a_identity(self):
        img = render(make_spec(seed=5))
        styled = apply_device_style(img, "A")
        assert np.array_equal(styled.pixels, img.pixels)

    def test_device_b_brightens(self):
        img = render(make_spec(seed=6))
        styled = apply_device_style(img, "B")
        assert styled.pixels.mean() > img.pixels.mean()

    def test_style_is_pure_function(self):
        img = render(make_spec(seed=7))
        a = apply_device_style(img, "B")
        b = apply_device_style(img, "B")
        assert np.array_equal(a.pixels, b.pixels)

    def test_device_probe_classifier(self):
        """3-way logistic probe on simple stats separates styles >= 95%."""
        cfg = WorldConfig()
        rng = np.random.default_rng(13)

        def features(px):
            gy, gx = np.gradient(px.astype(np.float64))
            hf = np.abs(np.sqrt(gx * gx + gy * gy))
            return np.array([px.mean(), px.std(), np.quantile(px, 0.1),
                             np.quantile(px, 0.9), hf.mean(), np.quantile(hf, 0.9)])

        def batch(n):
            feats, labels = [], []
            for _ in range(n):
                spec = sample_spec(cfg, rng)
                base = render(spec, config=cfg)
                dev = int(rng.integers(0, 3))
                styled = apply_device_style(base, "ABC"[dev])
                feats.append(features(styled.pixels))
                labels.append(dev)
            return np.array(feats), np.array(labels)

        xtr, ytr = batch(3000)
        xte, yte = batch(800)
        mu, sd = xtr.mean(0), xtr.std(0) + 1e-9
        xtr = (xtr - mu) / sd
        xte = (xte - mu) / sd
        w = np.zeros((xtr.shape[1] + 1, 3))
        xb = np.hstack([xtr, np.ones((len(xtr), 1))])
        onehot = np.eye(3)[ytr]
        for _ in range(400):
            logits = xb @ w
            p = np.exp(logits - logits.max(1, keepdims=True))
            p /= p.sum(1, keepdims=True)
            w -= 0.5 * xb.T @ (p - onehot) / len(xb)
        pred = (np.hstack([xte, np.ones((len(xte), 1))]) @ w).argmax(1)
        assert (pred == yte).mean() >= 0.95


class TestDetectors:
    def test_detector_accuracy_gate(self):
        """Hand-coded CAL and NCM detectors >= 90% on 2,000 styled samples."""
        cfg = WorldConfig()
        rng = np.random.default_rng(42)
        specs = [sample_spec(cfg, rng) for _ in range(2000)]
        cal_ok = ncm_ok = 0
        for s in specs:
            img = render_styled(s, config=cfg)
            cal_ok += detect_cal(img, s.bbox) == s.cal
            ncm_ok += detect_ncm(img, s.bbox) == s.ncm
        assert cal_ok / len(specs) >= 0.90
        assert ncm_ok / len(specs) >= 0.90


class TestBuildDataset:
    def test_split_counts(self, tmp_path):
        cfg = WorldConfig()
        manifest = build_dataset(cfg, 100, tmp_path, rng=1, train_fraction=0.8)
        assert len(manifest.split("train")) == 80
        assert len(manifest.split("test")) == 20

    def test_bboxes_inside_unit_square(self, tmp_path):
        manifest = build_dataset(WorldConfig(), 50, tmp_path, rng=2)
        for row in manifest:
            cx, cy, hw, hh = row.bbox
            assert 0 <= cx - hw and cx + hw <= 1
            assert 0 <= cy - hh and cy + hh <= 1

    def test_stratified_split_ratio(self, tmp_path):
        cfg = WorldConfig()
        manifest = build_dataset(cfg, 200, tmp_path, rng=3, split_policy="stratified",
                                 train_fraction=0.8)
        global_ratio = manifest.counts()["malignant"] / len(manifest)
        for name in ("train", "test"):
            part = manifest.split(name)
            mal = part.counts().get("malignant", 0)
            expected = global_ratio * len(part)
            assert abs(mal - expected) <= 1

    def test_oracle_soundness_bit_for_bit(self, tmp_path):
        """Manifest labels replay exactly from the seeded spec stream."""
        cfg = WorldConfig()
        seed = 77
        manifest = build_dataset(cfg, 40, tmp_path, rng=seed)
        replay = np.random.default_rng(seed)
        for row in manifest.rows:
            spec = sample_spec(cfg, replay)
            assert row.pathology == spec.pathology
            assert row.subtype == spec.subtype
            assert row.ncm == spec.ncm and row.cal == spec.cal and row.dcis == spec.is_dcis
            assert row.device == spec.device
            assert row.bbox == spec.bbox
            assert row.label_standard == "gold"

    def test_silver_rows_flip_a_small_fraction(self, tmp_path):
        cfg = WorldConfig()
        seed = 99
        manifest = build_dataset(cfg, 500, tmp_path, rng=seed, silver_fraction=1.0,
                                 silver_flip_rate=0.02)
        replay = np.random.default_rng(seed)
        flips = 0
        for row in manifest.rows:
            spec = sample_spec(cfg, replay)
            assert row.label_standard == "silver"
            flips += row.pathology != spec.pathology
        assert 0 < flips < 0.06 * len(manifest)

    def test_manifest_round_trip(self, tmp_path):
        manifest = build_dataset(WorldConfig(), 20, tmp_path, rng=4)
        loaded = DatasetManifest.load(tmp_path / "manifest.csv")
        assert len(loaded) == 20
        for a, b in zip(manifest.rows, loaded.rows):
            assert (a.id, a.path, a.pathology, a.subtype, a.ncm, a.cal, a.dcis,
                    a.device, a.label_standard, a.split) == \
                   (b.id, b.path, b.pathology, b.subtype, b.ncm, b.cal, b.dcis,
                    b.device, b.label_standard, b.split)
            assert np.allclose(a.bbox, b.bbox, atol=5e-7)  # CSV carries 6 decimals
        imgs = loaded.load_images()
        assert imgs.shape == (20, 1, 32, 32)
        assert imgs.min() >= 0 and imgs.max() <= 1

    def test_deterministic_rebuild(self, tmp_path):
        m1 = build_dataset(WorldConfig(), 15, tmp_path / "a", rng=8)
        m2 = build_dataset(WorldConfig(), 15, tmp_path / "b", rng=8)
        assert (tmp_path / "a" / "manifest.csv").read_text() == \
               (tmp_path / "b" / "manifest.csv").read_text()
        for r1, r2 in zip(m1.rows, m2.rows):
            assert np.array_equal(m1.load_image(r1), m2.load_image(r2))

    def test_tail_testset_composition(self, tmp_path):
        m = build_tail_testset(WorldConfig(), "dcis", 12, tmp_path, rng=5)
        assert len(m) == 24
        mal = m.filter(lambda r: r.pathology == "malignant")
        assert len(mal) == 12 and all(r.dcis for r in mal)
        ncm_set = build_tail_testset(WorldConfig(), "ncm", 10, tmp_path, rng=6)
        assert all(r.ncm for r in ncm_set)
        assert ncm_set.counts() == {"benign": 10, "malignant": 10}

    def test_n_must_be_positive(self, tmp_path):
        with pytest.raises(ValueError):
            build_dataset(WorldConfig(), 0, tmp_path, rng=1)
