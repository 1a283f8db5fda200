import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st
from src.errors import DegenerateInputError, DomainError, ShapeMismatchError
from src.metrics import (
    PSNR_CAP_DB,
    MmdConfig,
    MsSsimConfig,
    SliceAxis,
    extract_patches,
    fractional_anisotropy,
    mmd,
    mmd_permutation_test,
    ms_ssim,
    patch_mmd,
    psnr,
    slice_report,
    subject_report,
)

SMALL = MsSsimConfig(kernel_size=7)
eigen = st.one_of(st.just(0.0), st.floats(1e-3, 10.0))


def _smooth(rng, shape):
    # 저주파 성분이 있어야 SSIM 이 노이즈에 민감하게 반응합니다.
    grids = np.meshgrid(*(np.linspace(0, 1, n) for n in shape), indexing="ij")
    base = 0.5 + 0.3 * np.sin(2 * np.pi * sum(grids))
    return np.clip(base + 0.05 * rng.normal(size=shape), 0, 1)


def test_fa_golden_values():
    assert fractional_anisotropy(1, 1, 1) == 0.0
    assert fractional_anisotropy(1, 0, 0) == pytest.approx(1.0)
    assert fractional_anisotropy(2, 1, 1) == pytest.approx(1 / np.sqrt(6))


@given(eigen, eigen, eigen)
def test_fa_in_unit_interval(l1, l2, l3):
    if l1 == l2 == l3 == 0:
        return
    assert -1e-12 <= fractional_anisotropy(l1, l2, l3) <= 1 + 1e-12


def test_fa_errors():
    with pytest.raises(DomainError):
        fractional_anisotropy(-1, 1, 1)
    with pytest.raises(DegenerateInputError):
        fractional_anisotropy(0, 0, 0)


def test_fa_elementwise():
    out = fractional_anisotropy(np.array([1.0, 2.0]), np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(out, [0.0, 1 / np.sqrt(6)], atol=1e-15)


def test_psnr():
    a = np.zeros((4, 4))
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a) == PSNR_CAP_DB
    with pytest.raises(DomainError):
        psnr(a, a + 2.0)
    with pytest.raises(ShapeMismatchError):
        psnr(a, np.zeros((4, 5)))


def test_ms_ssim_identity():
    image = np.random.default_rng(0).uniform(size=(48, 48))
    assert ms_ssim(image, image) == pytest.approx(1.0, abs=1e-12)
    volume = np.random.default_rng(1).uniform(size=(28, 28, 28))
    assert ms_ssim(volume, volume, SMALL) == pytest.approx(1.0, abs=1e-12)


def test_ms_ssim_drops_with_noise():
    rng = np.random.default_rng(2)
    image = _smooth(rng, (64, 64))
    mild = np.clip(image + 0.02 * rng.normal(size=image.shape), 0, 1)
    heavy = np.clip(image + 0.2 * rng.normal(size=image.shape), 0, 1)
    assert ms_ssim(image, heavy) < ms_ssim(image, mild) < 1.0
    assert ms_ssim(image, mild) == pytest.approx(ms_ssim(mild, image), abs=1e-12)


def test_ms_ssim_inverted_contrast_is_clamped_to_zero():
    rng = np.random.default_rng(3)
    image = _smooth(rng, (64, 64))
    heavy = np.clip(image + 0.2 * rng.normal(size=image.shape), 0, 1)
    # 음의 상관이면 contrast-structure 항이 음수가 되어 0 으로 잘립니다.
    assert ms_ssim(image, 1.0 - image) == 0.0
    assert ms_ssim(image, 1.0 - image) < ms_ssim(image, heavy)
    volume = _smooth(rng, (28, 28, 28))
    assert ms_ssim(volume, 1.0 - volume, SMALL) == 0.0


def test_ms_ssim_rejects_small_inputs():
    with pytest.raises(DomainError):
        ms_ssim(np.zeros((40, 40)), np.zeros((40, 40)))
    with pytest.raises(ShapeMismatchError):
        ms_ssim(np.zeros((48, 48)), np.zeros((48, 49)))
    assert SMALL.min_extent == 28


def test_ms_ssim_config_validation():
    with pytest.raises(DomainError):
        MsSsimConfig(scale_weights=(0.5, 0.6))
    with pytest.raises(DomainError):
        MsSsimConfig(kernel_size=6)


def test_mmd_identity_and_symmetry():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(40, 3))
    y = rng.normal(size=(30, 3)) + 0.5
    assert mmd(x, x) == 0.0
    assert mmd(x, y) > 0.0
    assert mmd(x, y) == pytest.approx(mmd(y, x), rel=1e-12)


def test_mmd_degenerate_inputs():
    with pytest.raises(DegenerateInputError):
        mmd(np.ones((5, 2)), np.ones((5, 2)))
    with pytest.raises(DegenerateInputError):
        mmd(np.zeros((1, 2)), np.ones((3, 2)))
    with pytest.raises(ShapeMismatchError):
        mmd(np.zeros((3, 2)), np.ones((3, 4)))


def test_mmd_fixed_bandwidth():
    x = np.array([[0.0], [1.0]])
    y = np.array([[0.0], [1.0]])
    assert mmd(x, y, MmdConfig(bandwidth=0.5)) == 0.0


def test_permutation_test_separates_shifted_gaussians():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(100, 1))
    y = rng.normal(loc=2.0, size=(100, 1))
    result = mmd_permutation_test(x, y, permutations=200, rng=rng)
    assert result.null.shape == (200,)
    assert result.statistic > result.quantile(0.95)
    assert result.p_value < 0.05


def test_extract_patches():
    volume = np.arange(8**3, dtype=float).reshape(8, 8, 8)
    patches = extract_patches(volume, 4, 4)
    assert patches.shape == (8, 64)
    np.testing.assert_array_equal(patches[0], volume[:4, :4, :4].ravel())
    with pytest.raises(DomainError):
        extract_patches(np.zeros((3, 8, 8)), 4, 4)


def test_patch_mmd_subsamples_same_locations():
    rng = np.random.default_rng(5)
    volume = rng.uniform(size=(16, 16, 16))
    cfg = MmdConfig(patch_size=2, patch_stride=2, max_patches=64)
    assert patch_mmd(volume, volume, cfg) == 0.0
    assert patch_mmd(volume, rng.uniform(size=(16, 16, 16)), cfg) > 0.0


def test_slice_axis_parse():
    assert SliceAxis.parse("axial") is SliceAxis.AXIAL
    assert SliceAxis.parse("Sagittal") is SliceAxis.SAGITTAL
    with pytest.raises(DomainError):
        SliceAxis.parse("oblique")


def test_slice_report_flags_degenerate_slices():
    rng = np.random.default_rng(6)
    a = rng.uniform(size=(48, 48, 3))
    a[:, :, 1] = 0.0
    report = slice_report(a, a.copy(), "axial")
    assert report.degenerate == [False, True, False]
    assert report.values[1] is None
    assert report.mu == pytest.approx(1.0, abs=1e-12)

    frame = report.to_frame()
    assert list(frame.columns) == ["axis", "slice_index", "ms_ssim", "degenerate_flag"]
    assert frame["axis"].eq("axial").all()
    assert np.isnan(frame.loc[1, "ms_ssim"])


def test_slice_report_small_slices_are_degenerate():
    a = np.random.default_rng(7).uniform(size=(48, 48, 3))
    report = slice_report(a, a, SliceAxis.SAGITTAL)
    assert all(report.degenerate)
    assert report.mu is None


def test_subject_report():
    rng = np.random.default_rng(8)
    real = rng.uniform(size=(32, 32, 32))
    noisy = np.clip(real + 0.1 * rng.normal(size=real.shape), 0, 1)
    frame = subject_report(
        [(real, real), (real, noisy)],
        SMALL,
        MmdConfig(max_patches=128),
        ["same", "noisy"],
    )
    assert list(frame.columns) == ["subject_id", "ms_ssim_3d", "psnr_db", "mmd", "notes"]
    same, noisy_row = frame.iloc[0], frame.iloc[1]
    assert same["ms_ssim_3d"] == pytest.approx(1.0, abs=1e-12)
    assert same["psnr_db"] == PSNR_CAP_DB
    assert same["mmd"] == 0.0
    assert noisy_row["ms_ssim_3d"] < 1.0
    assert noisy_row["psnr_db"] < PSNR_CAP_DB


def test_subject_report_keeps_computable_metrics():
    rng = np.random.default_rng(9)
    volume = rng.uniform(size=(8, 8, 8))
    frame = subject_report([(volume, volume)], subject_ids=["tiny"])
    row = frame.iloc[0]
    assert pd.isna(row["ms_ssim_3d"])
    assert row["psnr_db"] == PSNR_CAP_DB
    assert "ms_ssim_3d" in row["notes"]


def test_subject_report_needs_pairs():
    with pytest.raises(DegenerateInputError):
        subject_report([])


def test_subject_report_keeps_repeated_ids_apart():
    rng = np.random.default_rng(10)
    real = rng.uniform(size=(32, 32, 32))
    noisy = np.clip(real + 0.1 * rng.normal(size=real.shape), 0, 1)
    frame = subject_report(
        [(real, real), (real, noisy)], SMALL, MmdConfig(max_patches=128), ["s", "s"]
    )
    assert frame["subject_id"].tolist() == ["s", "s"]
    assert frame["psnr_db"].iloc[0] == PSNR_CAP_DB
    assert frame["psnr_db"].iloc[1] < PSNR_CAP_DB
