import numpy as np
import pytest

from neurevo import preprocess as pp


def make_pair(shape=(4, 6, 3), n=9, seed=0, n_classes=3, values=None):
    rng = np.random.default_rng(seed)
    def split(count, offset):
        if values is not None:
            x = np.full((count,) + shape, values, dtype=np.float32)
        else:
            x = rng.random((count,) + shape, dtype=np.float32) + offset
        y = np.arange(count) % n_classes
        return pp.Split(x, y)
    return pp.DataPair(split(n, 0.0), split(max(3, n // 3), 0.0),
                       split(max(3, n // 3), 0.0), n_classes)


ALL_TRANSFORMS = [
    ("cosine_window", lambda d: pp.cosine_window(d)),
    ("grayscale", lambda d: pp.grayscale(d)),
    ("normalize_fit_apply", lambda d: pp.normalize_fit_apply(d)),
    ("gaussian_blur", lambda d: pp.gaussian_blur(d, 1.0)),
    ("sobel_edges", lambda d: pp.sobel_edges(d)),
    ("threshold_binarize", lambda d: pp.threshold_binarize(d, 0.5)),
    ("intensity_histogram", lambda d: pp.intensity_histogram(d, 8)),
]


# -- cosine window ------------------------------------------------------------

def test_hann_width3_row():
    d = pp.DataPair(pp.Split(np.array([[[[5.0], [7.0], [9.0]]]]), np.array([0])),
                    pp.Split(np.zeros((1, 1, 3, 1)), np.array([0])),
                    pp.Split(np.zeros((1, 1, 3, 1)), np.array([0])), 2)
    out = pp.cosine_window(d)
    assert np.allclose(out.train.x[0, 0, :, 0], [0.0, 7.0, 0.0])


def test_hann_zero_input():
    d = make_pair(values=0.0)
    out = pp.cosine_window(d)
    assert np.all(out.train.x == 0)


def test_hann_borders_zero():
    d = make_pair(shape=(5, 7, 3))
    out = pp.cosine_window(d)
    assert np.all(out.test.x[:, 0, :, :] == 0)
    assert np.all(out.test.x[:, -1, :, :] == 0)
    assert np.all(out.test.x[:, :, 0, :] == 0)
    assert np.all(out.test.x[:, :, -1, :] == 0)


def test_hann_single_axis_is_identity():
    assert np.allclose(pp.hann_window(1), [1.0])


# -- grayscale ------------------------------------------------------------------

def test_grayscale_red_pixel():
    d = make_pair(values=0.0)
    x = d.train.x.copy()
    x[0, 0, 0] = (255.0, 0.0, 0.0)
    d = pp.DataPair(pp.Split(x, d.train.y), d.validation, d.test, d.n_classes)
    out = pp.grayscale(d)
    assert out.train.x.shape[-1] == 1
    assert np.isclose(out.train.x[0, 0, 0, 0], 76.245, atol=1e-3)


def test_grayscale_of_gray_is_value():
    d = make_pair(values=0.6)
    out = pp.grayscale(d)
    assert np.allclose(out.train.x, 0.6, atol=1e-6)


def test_grayscale_twice_raises():
    with pytest.raises(pp.NotRGB):
        pp.grayscale(pp.grayscale(make_pair()))


# -- normalization ---------------------------------------------------------------

def test_normalize_train_stats():
    d = make_pair(n=60)
    out = pp.normalize_fit_apply(d)
    mean = out.train.x.mean(axis=(0, 1, 2))
    std = out.train.x.std(axis=(0, 1, 2))
    assert np.allclose(mean, 0.0, atol=1e-5)
    assert np.allclose(std, 1.0, atol=1e-5)


def test_normalize_constant_channel():
    d = make_pair(values=0.7)
    out = pp.normalize_fit_apply(d)
    assert np.allclose(out.train.x, 0.0)


def test_normalize_uses_train_only():
    rng = np.random.default_rng(1)
    base = make_pair(n=40)
    shifted_test = pp.Split(base.test.x + 5.0, base.test.y)
    d = pp.DataPair(base.train, base.validation, shifted_test, base.n_classes)
    stats = pp.fit_normalization(d.train.x)
    # perturbing test data leaves the fitted statistics untouched
    d2 = pp.DataPair(base.train, base.validation,
                     pp.Split(base.test.x + rng.random(base.test.x.shape), base.test.y),
                     base.n_classes)
    stats2 = pp.fit_normalization(d2.train.x)
    assert np.array_equal(stats.mean, stats2.mean)
    assert np.array_equal(stats.std, stats2.std)
    # and the transformed test split is visibly not standardized
    out = pp.normalize_fit_apply(d)
    assert abs(out.test.x.mean()) > 1.0


# -- gaussian blur -----------------------------------------------------------------

def test_blur_constant_image_unchanged():
    d = make_pair(values=0.42)
    out = pp.gaussian_blur(d, 1.3)
    assert np.allclose(out.train.x, 0.42, atol=1e-6)


def test_blur_preserves_total_intensity():
    d = make_pair(shape=(8, 8, 3), n=6, seed=5)
    out = pp.gaussian_blur(d, 1.0)
    before = d.train.x.sum(axis=(1, 2))
    after = out.train.x.sum(axis=(1, 2))
    assert np.allclose(before, after, atol=1e-4)


def test_blur_tiny_sigma_near_identity():
    d = make_pair(shape=(8, 8, 3), n=4, seed=6)
    out = pp.gaussian_blur(d, 0.1)
    assert np.max(np.abs(out.train.x - d.train.x)) < 1e-3


def test_blur_invalid_sigma():
    with pytest.raises(pp.InvalidSigma):
        pp.gaussian_blur(make_pair(), 0.0)


# -- sobel ---------------------------------------------------------------------------

def test_sobel_constant_zero():
    out = pp.sobel_edges(make_pair(values=0.5))
    assert np.allclose(out.train.x, 0.0, atol=1e-7)


def test_sobel_step_edge_magnitude():
    h = 0.5
    img = np.zeros((1, 5, 6, 1), dtype=np.float64)
    img[:, :, 3:, :] = h
    d = pp.DataPair(pp.Split(img, np.array([0])),
                    pp.Split(img.copy(), np.array([0])),
                    pp.Split(img.copy(), np.array([0])), 2)
    out = pp.sobel_edges(d)
    # the two columns adjacent to the step see the full 4h response
    assert np.allclose(out.train.x[0, :, 2, 0], 4 * h)
    assert np.allclose(out.train.x[0, :, 3, 0], 4 * h)
    assert np.allclose(out.train.x[0, :, 0, 0], 0.0)


def test_sobel_nonnegative():
    out = pp.sobel_edges(make_pair(seed=9))
    assert np.all(out.train.x >= 0)


# -- spectra ---------------------------------------------------------------------------

def test_fourier_constant_image():
    c, h, w = 0.3, 6, 8
    d = pp.grayscale(make_pair(shape=(h, w, 3), values=c))
    out = pp.fourier_magnitude(d)
    x = out.train.x[0, :, :, 0]
    center = (h // 2, w // 2)
    assert np.isclose(x[center], np.log1p(c * h * w), atol=1e-5)
    x2 = x.copy()
    x2[center] = 0
    assert np.allclose(x2, 0.0, atol=1e-5)


def test_fourier_point_symmetry():
    d = pp.grayscale(make_pair(shape=(6, 6, 3), seed=11))
    out = pp.fourier_magnitude(d)
    for img in out.train.x[..., 0]:
        unshifted = np.fft.ifftshift(img)
        reflected = np.roll(unshifted[::-1, ::-1], (1, 1), axis=(0, 1))
        assert np.allclose(unshifted, reflected, atol=1e-5)


def test_fourier_zero_image():
    out = pp.fourier_magnitude(pp.grayscale(make_pair(values=0.0)))
    assert np.allclose(out.train.x, 0.0)


def test_fourier_requires_single_channel():
    with pytest.raises(pp.NotSingleChannel):
        pp.fourier_magnitude(make_pair())


def test_dct_roundtrip_and_parseval():
    from scipy import fft as sp_fft
    d = pp.grayscale(make_pair(shape=(8, 8, 3), seed=13))
    out = pp.dct_transform(d)
    for orig, coef in zip(d.train.x[..., 0], out.train.x[..., 0]):
        back = sp_fft.idctn(coef.astype(np.float64), type=2, norm="ortho")
        assert np.allclose(back, orig, atol=1e-5)
        assert np.isclose((coef ** 2).sum(), (orig ** 2).sum(), rtol=1e-5)


def test_dct_constant_image_dc_only():
    d = pp.grayscale(make_pair(values=0.5))
    out = pp.dct_transform(d)
    coef = out.train.x[0, :, :, 0]
    energy = (coef ** 2).sum()
    assert np.isclose(coef[0, 0] ** 2, energy, rtol=1e-6)


# -- histogram / threshold -----------------------------------------------------------

def test_histogram_sums_to_one_per_channel():
    out = pp.intensity_histogram(make_pair(shape=(5, 5, 3), n=7), 8)
    assert out.train.x.shape == (7, 24)
    per_channel = out.train.x.reshape(7, 3, 8).sum(axis=2)
    assert np.allclose(per_channel, 1.0, atol=1e-6)


def test_histogram_uniform_image():
    out = pp.intensity_histogram(make_pair(values=0.4), 10)
    hist = out.train.x.reshape(-1, 3, 10)
    assert np.allclose(hist[:, :, 4], 1.0)
    assert np.allclose(hist.sum(axis=2), 1.0)


def test_histogram_permutation_invariant():
    rng = np.random.default_rng(3)
    d = make_pair(shape=(6, 6, 3), n=5, seed=3)
    out1 = pp.intensity_histogram(d, 8)
    # permute pixels inside each instance
    x = d.train.x.reshape(5, 36, 3)[:, rng.permutation(36), :].reshape(5, 6, 6, 3)
    d2 = pp.DataPair(pp.Split(x, d.train.y), d.validation, d.test, d.n_classes)
    out2 = pp.intensity_histogram(d2, 8)
    assert np.allclose(out1.train.x, out2.train.x)


def test_histogram_invalid_bins():
    with pytest.raises(pp.InvalidBins):
        pp.intensity_histogram(make_pair(), 1)


def test_threshold_extremes_and_idempotence():
    d = make_pair(seed=21)
    all_ones = pp.threshold_binarize(d, -10.0)
    assert np.all(all_ones.train.x == 1.0)
    all_zero = pp.threshold_binarize(d, 10.0)
    assert np.all(all_zero.train.x == 0.0)
    once = pp.threshold_binarize(d, 0.5)
    twice = pp.threshold_binarize(once, 0.5)
    assert np.array_equal(once.train.x, twice.train.x)


# -- shared transform properties ---------------------------------------------------------

@pytest.mark.parametrize("name,fn", ALL_TRANSFORMS)
def test_split_integrity_and_purity(name, fn):
    d = make_pair(n=12, seed=17)
    snapshot = {s: (sp.x.copy(), sp.y.copy()) for s, sp in d.splits()}
    out = fn(d)
    for (sname, before), (_, after) in zip(snapshot.items(), out.splits()):
        x0, y0 = before
        # input untouched
        orig = dict(d.splits())[sname]
        assert np.array_equal(orig.x, x0)
        # labels and sizes preserved
        assert np.array_equal(after.y, y0)
        assert len(after.x) == len(x0)


@pytest.mark.parametrize("name,fn", ALL_TRANSFORMS)
def test_declared_output_shapes(name, fn):
    d = make_pair(n=6, seed=19)
    out = fn(d)
    params = {"bins": 8} if name == "intensity_histogram" else {}
    assert out.instance_shape == pp.transform_output_shape(name, d.instance_shape,
                                                           **params)
