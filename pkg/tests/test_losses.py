import itertools
import math

import numpy as np
import pytest

from contourforge.errors import DomainError
from contourforge.losses import (
    LossWeights,
    direction_loss,
    nms_loss,
    nms_response,
    sample_line,
    sigmoid,
    total_loss,
    weighted_bce,
)
from contourforge.normals import NormalField, estimate_normals
from contourforge.raster import BinaryMask, ScalarField, mask_to_boundary

from conftest import assert_gradients_match, random_blob


def single_pixel_case(y_value, f_value):
    pred = ScalarField(np.array([[f_value]]), probabilities=True)
    gt = BinaryMask(np.array([[bool(y_value)]]))
    return pred, gt


def vertical_line_setup(size=17, col=8):
    """Boundary = one full-height column; pred equals it (a perfect delta)."""
    bits = np.zeros((size, size), bool)
    bits[:, col] = True
    gt = BinaryMask(bits)
    nf = estimate_normals(gt.to_field())
    pred = ScalarField(bits.astype(float), probabilities=True)
    return gt, nf, pred


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.alpha1, w.alpha2, w.alpha3) == (1.0, 10.0, 1.0)
        assert w.tau == 0.1 and w.L == 2

    def test_all_zero_rejected(self):
        with pytest.raises(DomainError):
            LossWeights(alpha1=0, alpha2=0, alpha3=0)

    def test_bad_tau_and_L(self):
        with pytest.raises(DomainError):
            LossWeights(tau=0)
        with pytest.raises(DomainError):
            LossWeights(L=0)

    def test_from_config(self):
        w = LossWeights.from_config(
            {"loss": {"alpha1": 2, "alpha2": 5, "alpha3": 0, "tau": 0.2, "L": 3, "beta": 0.4}}
        )
        assert w == LossWeights(2, 5, 0, 0.2, 3, 0.4)


class TestWeightedBCE:
    def test_positive_pixel_half(self):
        pred, gt = single_pixel_case(1, 0.5)
        loss, _ = weighted_bce(pred, gt, LossWeights(beta=1.0))
        assert loss == pytest.approx(math.log(2), rel=1e-9)

    def test_negative_pixel_beta_one(self):
        pred, gt = single_pixel_case(0, 0.5)
        loss, _ = weighted_bce(pred, gt, LossWeights(beta=1.0))
        assert loss == 0.0

    def test_two_pixel_hand_value(self):
        pred = ScalarField(np.array([[0.9, 0.1]]), probabilities=True)
        gt = BinaryMask(np.array([[True, False]]))
        loss, _ = weighted_bce(pred, gt, LossWeights(beta=0.5))
        assert loss == pytest.approx(0.105361, abs=1e-6)

    def test_auto_beta_across_classes(self):
        # beta = |Y-| / |Y| jointly over both classes: 6 negatives of 8 pixels
        pred = ScalarField(np.full((2, 2, 2), 0.5), probabilities=True)
        gts = [
            BinaryMask(np.array([[True, False], [False, False]])),
            BinaryMask(np.array([[False, False], [False, True]])),
        ]
        loss, _ = weighted_bce(pred, gts)
        beta = 6 / 8
        expect = -(2 * beta * math.log(0.5) + 6 * (1 - beta) * math.log(0.5))
        assert loss == pytest.approx(expect, rel=1e-12)

    def test_shape_mismatch(self):
        pred = ScalarField(np.zeros((1, 2, 2)))
        with pytest.raises(DomainError):
            weighted_bce(pred, BinaryMask(np.zeros((3, 3), bool)))


class TestNmsResponse:
    def test_uniform_line(self):
        gt, nf, _ = vertical_line_setup()
        pred = ScalarField(np.full((17, 17), 0.42), probabilities=True)
        h = nms_response(pred, nf, (8, 8))
        assert np.allclose(h, 0.2, atol=1e-12)

    def test_delta_line(self):
        gt, nf, pred = vertical_line_setup()
        h = nms_response(pred, nf, (8, 8))
        expect = math.exp(10) / (math.exp(10) + 4)
        assert h[2] == pytest.approx(expect, abs=1e-7)
        assert h[2] == pytest.approx(0.9998185, abs=1e-7)

    def test_high_temperature_limit(self):
        gt, nf, pred = vertical_line_setup()
        h = nms_response(pred, nf, (8, 8), LossWeights(tau=1e6))
        assert np.all(np.abs(h - 0.2) < 1e-6)

    def test_normalization_random_lines(self, rng):
        pred = ScalarField(rng.random((1, 32, 32)), probabilities=True)
        nf = NormalField(rng.uniform(0, np.pi, (32, 32)), np.ones((32, 32), bool))
        count = 0
        while count < 1000:
            x = int(rng.integers(4, 28))
            y = int(rng.integers(4, 28))
            h = nms_response(pred, nf, (x, y))
            assert abs(h.sum() - 1.0) < 1e-9
            count += 1

    def test_line_leaving_image_rejected(self):
        gt, nf, pred = vertical_line_setup()
        nf2 = NormalField(np.zeros((17, 17)), np.ones((17, 17), bool))
        with pytest.raises(DomainError):
            nms_response(pred, nf2, (0, 8))


class TestNmsLoss:
    def test_perfect_delta_per_pixel(self):
        gt, nf, pred = vertical_line_setup()
        bd = total_loss(
            ScalarField(np.where(pred.values > 0.5, 60.0, -60.0)), gt,
            LossWeights(alpha1=0, alpha2=1, alpha3=0), gt_normals=nf,
        )
        assert bd.nms_pixels > 0
        per_pixel = bd.nms / bd.nms_pixels
        assert per_pixel == pytest.approx(-math.log(math.exp(10) / (math.exp(10) + 4)), rel=1e-4)
        assert per_pixel == pytest.approx(1.8157e-4, rel=1e-3)

    def test_uniform_prediction_ln5(self):
        gt, nf, _ = vertical_line_setup()
        bd = total_loss(
            ScalarField(np.zeros((17, 17))), gt,
            LossWeights(alpha1=0, alpha2=1, alpha3=0), gt_normals=nf,
        )
        assert bd.nms_pixels >= 15
        assert bd.nms / bd.nms_pixels == pytest.approx(math.log(5), rel=1e-12)

    def test_empty_gt(self):
        pred = ScalarField(np.full((9, 9), 0.5), probabilities=True)
        gt = BinaryMask(np.zeros((9, 9), bool))
        nf = NormalField(np.zeros((9, 9)), np.zeros((9, 9), bool))
        loss, grad = nms_loss(pred, gt, nf)
        assert loss == 0.0 and not grad.values.any()

    def test_no_valid_pixels_flagged(self):
        # boundary present but every normal invalid -> zero loss, flagged
        bits = np.zeros((9, 9), bool)
        bits[4, 4] = True
        logits = ScalarField(np.zeros((9, 9)))
        nf = NormalField(np.zeros((9, 9)), np.zeros((9, 9), bool))
        bd = total_loss(logits, BinaryMask(bits), LossWeights(), gt_normals=nf)
        assert bd.nms == 0.0 and bd.no_valid_boundary

    def test_line_exit_skip_counted(self):
        # boundary pixel at the left edge: its horizontal line exits the image
        bits = np.zeros((9, 9), bool)
        bits[4, 0] = True
        bits[4, 4] = True
        nf = NormalField(np.zeros((9, 9)), np.ones((9, 9), bool))
        bd = total_loss(ScalarField(np.zeros((9, 9))), BinaryMask(bits), gt_normals=nf)
        assert bd.nms_pixels == 1 and bd.nms_skipped == 1

    def test_concentration_beats_off_center(self):
        # for a fixed multiset of line values, centering the max minimizes the loss
        values = [0.0, 0.25, 0.5, 0.75, 1.0]
        bits = np.zeros((3, 5), bool)
        bits[1, 2] = True
        gt = BinaryMask(bits)
        nf = NormalField(np.zeros((3, 5)), bits.copy())
        w = LossWeights()

        def line_loss(vals):
            arr = np.tile(np.asarray(vals, dtype=float), (3, 1))
            loss, _ = nms_loss(ScalarField(arr, probabilities=True), gt, nf, w)
            return loss

        centered = line_loss([0.0, 0.25, 1.0, 0.75, 0.5])
        for perm in itertools.permutations(values):
            if perm[2] != 1.0:
                assert line_loss(perm) > centered


class TestDirectionLoss:
    def test_matching_normals_near_zero(self):
        gt, nf, pred = vertical_line_setup()
        loss, _, count = direction_loss(pred, gt, nf)
        # the dot-product clamp leaves arccos(1 - 1e-6) per pixel
        assert count > 0
        assert loss <= count * math.acos(1.0 - 1e-6) + 1e-12

    def test_perpendicular_single_pixel(self):
        gt, _, pred = vertical_line_setup()
        bits = np.zeros((17, 17), bool)
        bits[8, 8] = True
        d = NormalField(np.full((17, 17), np.pi / 2), bits.copy())
        loss, _, count = direction_loss(pred, BinaryMask(bits), d)
        assert count == 1
        assert loss == pytest.approx(np.pi / 2, abs=1e-9)

    def test_gap_additivity(self):
        gt, _, pred = vertical_line_setup()
        bits = np.zeros((17, 17), bool)
        bits[7, 8] = bits[9, 8] = True
        d = NormalField(np.full((17, 17), 0.3), bits.copy())
        loss, _, count = direction_loss(pred, BinaryMask(bits), d)
        assert count == 2
        assert loss == pytest.approx(0.6, abs=1e-9)


class TestTotalLoss:
    def test_reduces_to_bce(self, rng):
        mask = random_blob(rng, 16)
        boundary = mask_to_boundary(mask)
        z = ScalarField(rng.uniform(-2, 2, (1, 16, 16)))
        w = LossWeights(alpha1=1, alpha2=0, alpha3=0)
        bd = total_loss(z, boundary, w)
        ref, ref_grad = weighted_bce(
            ScalarField(sigmoid(z.values), probabilities=True), boundary, w
        )
        assert bd.total == pytest.approx(ref, rel=1e-12)
        assert np.allclose(bd.gradient.values, ref_grad.values)

    def test_zero_weights_rejected(self):
        with pytest.raises(DomainError):
            LossWeights(0, 0, 0)

    def test_recombination(self, rng):
        mask = random_blob(rng, 16)
        boundary = mask_to_boundary(mask)
        nf = estimate_normals(boundary.to_field())
        z = ScalarField(rng.uniform(-2, 2, (1, 16, 16)))
        w = LossWeights(alpha1=0.7, alpha2=3.0, alpha3=1.3)
        bd = total_loss(z, boundary, w, gt_normals=nf)
        prob = ScalarField(sigmoid(z.values), probabilities=True)
        bce, _ = weighted_bce(prob, boundary, w)
        nms, _ = nms_loss(prob, boundary, nf, w)
        dirv, _, _ = direction_loss(prob, boundary, nf, w)
        expect = 0.7 * bce + 3.0 * nms + 1.3 * dirv
        assert bd.total == pytest.approx(expect, rel=1e-12)
        assert (bd.bce, bd.nms, bd.dir) == (bce, nms, dirv)

    def test_per_positive_means(self, rng):
        mask = random_blob(rng, 16)
        boundary = mask_to_boundary(mask)
        z = ScalarField(rng.uniform(-2, 2, (1, 16, 16)))
        bd = total_loss(z, boundary)
        means = bd.per_positive()
        assert means["bce"] == pytest.approx(bd.bce / bd.positives)


def make_instance(seed, size=12):
    rng = np.random.default_rng(seed)
    mask = random_blob(rng, size)
    boundary = mask_to_boundary(mask)
    nf = estimate_normals(boundary.to_field())
    z = rng.uniform(-2.5, 2.5, (1, size, size))
    return boundary, nf, z


class TestGradients:
    @pytest.mark.parametrize("seed", [3, 11, 42])
    def test_analytic_matches_finite_differences(self, seed):
        boundary, nf, z = make_instance(seed)
        w = LossWeights(alpha1=1.0, alpha2=10.0, alpha3=1.0)

        def values(arr):
            bd = total_loss(ScalarField(arr), boundary, w, gt_normals=nf)
            return {"bce": bd.bce, "nms": bd.nms, "dir": bd.dir, "total": bd.total}

        prob = ScalarField(sigmoid(z), probabilities=True)
        analytic = {
            "bce": weighted_bce(prob, boundary, w)[1].values,
            "nms": nms_loss(prob, boundary, nf, w)[1].values,
            "dir": direction_loss(prob, boundary, nf, w)[1].values,
            "total": total_loss(ScalarField(z), boundary, w, gt_normals=nf).gradient.values,
        }
        assert_gradients_match(values, analytic, z)
