import numpy as np
import pytest

from bilayout.geometry import CameraFrame, HorizonDepth, annotation_to_depth
from bilayout.losses import LossWeights, branch_loss, total_loss
from conftest import random_star_room


@pytest.fixture
def weights():
    return LossWeights()


def random_depth(rng, n=256, lo=1.0, hi=6.0):
    return HorizonDepth(depths=rng.uniform(lo, hi, n),
                        room_height=float(rng.uniform(2.2, 3.8)))


class TestLossWeights:
    def test_paper_defaults(self, weights):
        assert (weights.depth, weights.normal, weights.gradient, weights.height) \
            == (0.9, 0.1, 0.1, 0.1)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            LossWeights(depth=-0.1)


class TestBranchLoss:
    def test_exact_prediction_floor(self, frame, weights):
        rng = np.random.default_rng(0)
        hd = random_depth(rng)
        out = branch_loss(hd, hd, weights, frame)
        assert out.depth == 0.0
        assert out.normal == pytest.approx(-1.0)
        assert out.gradient == 0.0
        assert out.height == 0.0
        assert out.branch_total == pytest.approx(-0.1, abs=1e-15)
        np.testing.assert_allclose(out.grad_depths, 0.0, atol=1e-12)
        assert out.grad_height == 0.0

    def test_depth_term_is_l1_mean(self, weights):
        frame = CameraFrame(width=8, height=4, num_columns=4)
        pred = HorizonDepth(depths=np.array([1.0, 2.0, 3.0, 4.0]), room_height=3.0)
        gt = HorizonDepth(depths=np.array([2.0, 4.0, 6.0, 8.0]), room_height=3.0)
        out = branch_loss(pred, gt, weights, frame)
        assert out.depth == pytest.approx(np.mean([1.0, 2.0, 3.0, 4.0]))

    def test_height_term(self, frame, weights):
        rng = np.random.default_rng(1)
        gt = random_depth(rng)
        pred = HorizonDepth(depths=gt.depths, room_height=gt.room_height + 0.25)
        out = branch_loss(pred, gt, weights, frame)
        assert out.height == pytest.approx(0.25)
        assert out.grad_height == pytest.approx(0.1)

    def test_total_is_weighted_sum(self, frame, weights):
        rng = np.random.default_rng(2)
        pred, gt = random_depth(rng), random_depth(rng)
        out = branch_loss(pred, gt, weights, frame)
        expected = (0.9 * out.depth + 0.1 * out.normal + 0.1 * out.gradient
                    + 0.1 * out.height)
        assert out.branch_total == pytest.approx(expected, abs=1e-12)

    def test_floor_bound(self, frame, weights):
        rng = np.random.default_rng(3)
        for _ in range(20):
            out = branch_loss(random_depth(rng), random_depth(rng), weights, frame)
            assert out.branch_total >= -weights.normal - 1e-12

    def test_scale_behavior(self, frame, weights):
        rng = np.random.default_rng(4)
        pred, gt = random_depth(rng), random_depth(rng)
        s = 2.5
        scaled = branch_loss(
            HorizonDepth(depths=s * pred.depths, room_height=s * pred.room_height),
            HorizonDepth(depths=s * gt.depths, room_height=s * gt.room_height),
            weights, frame)
        base = branch_loss(pred, gt, weights, frame)
        assert scaled.depth == pytest.approx(s * base.depth, rel=1e-9)
        assert scaled.height == pytest.approx(s * base.height, rel=1e-9)
        assert scaled.normal == pytest.approx(base.normal, rel=1e-9)
        assert scaled.gradient == pytest.approx(base.gradient, rel=1e-9)

    def test_length_mismatch(self, frame, weights):
        short = HorizonDepth(depths=np.ones(8), room_height=3.0)
        full = HorizonDepth(depths=np.ones(256), room_height=3.0)
        with pytest.raises(ValueError):
            branch_loss(short, full, weights, frame)

    def test_layout_inputs(self, frame, weights):
        # losses compose with sampled annotations
        rng = np.random.default_rng(5)
        gt = annotation_to_depth(random_star_room(rng), frame)
        pred = annotation_to_depth(random_star_room(rng), frame)
        out = branch_loss(pred, gt, weights, frame)
        assert np.isfinite(out.branch_total)
        assert np.isfinite(out.grad_depths).all()


class TestGradients:
    def test_matches_central_finite_differences(self, frame, weights):
        rng = np.random.default_rng(6)
        step = 1e-6
        worst = 0.0
        checked = 0
        while checked < 100:
            pred, gt = random_depth(rng), random_depth(rng)
            out = branch_loss(pred, gt, weights, frame)
            for j in rng.choice(frame.num_columns, 5, replace=False):
                bumped = pred.depths.copy()
                bumped[j] += step
                up = branch_loss(HorizonDepth(depths=bumped, room_height=pred.room_height),
                                 gt, weights, frame).branch_total
                bumped[j] -= 2 * step
                dn = branch_loss(HorizonDepth(depths=bumped, room_height=pred.room_height),
                                 gt, weights, frame).branch_total
                fd = (up - dn) / (2 * step)
                scale = max(abs(fd), abs(out.grad_depths[j]), 1e-8)
                worst = max(worst, abs(fd - out.grad_depths[j]) / scale)
                checked += 1
        assert worst < 1e-5

    def test_height_gradient_fd(self, frame, weights):
        rng = np.random.default_rng(7)
        pred, gt = random_depth(rng), random_depth(rng)
        out = branch_loss(pred, gt, weights, frame)
        step = 1e-6
        up = branch_loss(HorizonDepth(depths=pred.depths,
                                      room_height=pred.room_height + step),
                         gt, weights, frame).branch_total
        dn = branch_loss(HorizonDepth(depths=pred.depths,
                                      room_height=pred.room_height - step),
                         gt, weights, frame).branch_total
        assert (up - dn) / (2 * step) == pytest.approx(out.grad_height, abs=1e-6)


class TestTotalLoss:
    def test_both_exact(self, frame, weights):
        rng = np.random.default_rng(8)
        a, b = random_depth(rng), random_depth(rng)
        out = total_loss(a, b, a, b, weights, frame)
        assert out["total"] == pytest.approx(-0.2, abs=1e-12)

    def test_linear_in_depth_term(self, frame, weights):
        rng = np.random.default_rng(9)
        gt = random_depth(rng)
        delta = 0.3
        # uniform depth offset leaves normals and gradients unchanged on a
        # circular room, so only the depth term moves
        gt_circ = HorizonDepth(depths=np.full(256, 3.0), room_height=3.0)
        pred = HorizonDepth(depths=gt_circ.depths + delta, room_height=3.0)
        out = total_loss(pred, gt_circ, gt_circ, gt_circ, weights, frame)
        base = branch_loss(gt_circ, gt_circ, weights, frame)
        extra = out["extended"].branch_total - base.branch_total
        assert extra == pytest.approx(0.9 * delta, rel=1e-6)

    def test_swapping_branches_keeps_total(self, frame, weights):
        rng = np.random.default_rng(10)
        p1, p2, g1, g2 = (random_depth(rng) for _ in range(4))
        a = total_loss(p1, p2, g1, g2, weights, frame)["total"]
        b = total_loss(p2, p1, g2, g1, weights, frame)["total"]
        assert a == pytest.approx(b, abs=1e-12)
