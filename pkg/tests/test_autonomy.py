"""Autonomy stack tests: detector, range estimation, planner, controller."""

import math

import numpy as np
import pytest

from twinlane.autonomy import (
    ControllerParams,
    Detection,
    Plan,
    control,
    detect_cones,
    estimate_position,
    perceive_and_plan,
    plan,
    polyval,
)
from twinlane.sensors import BBox, CameraModel, project_cone, render_image
from twinlane.vehicle import VehicleState, default_art_params, turn_radius
from twinlane.world import LEFT_MARKER, RIGHT_MARKER, Cone, Course

CAM = CameraModel(width=640, height=480, fx=350.0, fy=350.0, cx=320.0, cy=240.0,
                  mount_forward=0.3, mount_up=0.15, max_range=12.0)


def det_at(x, y, label, confidence=1.0):
    """Position-only detection for planner tests (bbox is a placeholder)."""
    return Detection(bbox=BBox(0, 0, 1, 1), label=label, confidence=confidence,
                     position=(x, y))


class TestDetector:
    def test_single_cone_matches_projection(self):
        cone = Cone(2.5, 0.3, LEFT_MARKER)
        course = Course(cones=(cone,))
        img = render_image(course, (0, 0, 0), CAM)
        dets = detect_cones(img)
        assert len(dets) == 1
        assert dets[0].label == LEFT_MARKER
        analytic, _ = project_cone(cone, (0, 0, 0), CAM)
        assert dets[0].bbox.iou(analytic) >= 0.9
        assert 0.0 < dets[0].confidence <= 1.0

    def test_blank_image_empty(self):
        img = render_image(Course(cones=()), (0, 0, 0), CAM)
        assert detect_cones(img) == []

    def test_overlapping_same_color_merge(self):
        # two cones nearly in line: their rasters overlap and merge into one
        # connected component (documented limitation of the detector)
        a = Cone(2.0, 0.0, LEFT_MARKER)
        b = Cone(2.35, 0.02, LEFT_MARKER)
        img = render_image(Course(cones=(a, b)), (0, 0, 0), CAM)
        dets = [d for d in detect_cones(img) if d.label == LEFT_MARKER]
        assert len(dets) == 1

    def test_labels_and_count_on_mixed_scene(self):
        cones = (Cone(2.0, 0.6, LEFT_MARKER), Cone(2.0, -0.6, RIGHT_MARKER),
                 Cone(3.5, 0.7, LEFT_MARKER))
        img = render_image(Course(cones=cones), (0, 0, 0), CAM)
        dets = detect_cones(img)
        assert len(dets) == 3
        assert sum(d.label == LEFT_MARKER for d in dets) == 2
        assert sum(d.label == RIGHT_MARKER for d in dets) == 1

    def test_sorted_by_area_descending(self):
        cones = (Cone(4.0, 0.5, LEFT_MARKER), Cone(1.5, -0.4, RIGHT_MARKER))
        img = render_image(Course(cones=cones), (0, 0, 0), CAM)
        dets = detect_cones(img)
        areas = [d.bbox.width * d.bbox.height for d in dets]
        assert areas == sorted(areas, reverse=True)


class TestEstimatePosition:
    def test_closed_form_depth(self):
        cam = CameraModel(fx=500.0, fy=500.0, cx=320.0, cy=240.0, mount_forward=0.0)
        det = Detection(bbox=BBox(300, 200, 340, 250), label=LEFT_MARKER,
                        confidence=1.0)
        out = estimate_position(det, cam, cone_height=0.3)
        assert out.position[0] == pytest.approx(500 * 0.3 / 50)
        assert out.position[0] == pytest.approx(3.0)

    def test_on_axis_zero_lateral(self):
        det = Detection(bbox=BBox(CAM.cx - 10, 200, CAM.cx + 10, 230),
                        label=LEFT_MARKER, confidence=1.0)
        out = estimate_position(det, CAM, 0.3)
        assert out.position[1] == pytest.approx(0.0)

    def test_degenerate_bbox_rejected(self):
        det = Detection(bbox=BBox(10, 10, 20, 10.5), label=LEFT_MARKER,
                        confidence=1.0)
        with pytest.raises(ValueError):
            estimate_position(det, CAM, 0.3)

    @pytest.mark.parametrize("rng_m", [1.0, 2.5, 5.0, 10.0])
    @pytest.mark.parametrize("bearing_deg", [-20.0, 0.0, 15.0])
    def test_projection_roundtrip_sweep(self, rng_m, bearing_deg):
        # analytic projection followed by estimation recovers the true
        # vehicle-frame position within 2% of range
        b = math.radians(bearing_deg)
        cone = Cone(rng_m * math.cos(b), rng_m * math.sin(b), LEFT_MARKER)
        hit = project_cone(cone, (0, 0, 0), CAM)
        if hit is None:
            pytest.skip("outside FOV for this camera")
        bbox, label = hit
        det = estimate_position(
            Detection(bbox=bbox, label=label, confidence=1.0), CAM, cone.height)
        est_range = math.hypot(*det.position)
        est_bearing = math.atan2(det.position[1], det.position[0])
        assert est_range == pytest.approx(rng_m, rel=0.02)
        assert abs(est_bearing - b) < math.radians(0.5)


class TestPlan:
    def test_symmetric_straight_lane(self):
        dets = [det_at(x, 0.5, LEFT_MARKER) for x in (1.0, 2.0, 3.0)]
        dets += [det_at(x, -0.5, RIGHT_MARKER) for x in (1.0, 2.0, 3.0)]
        p = plan(dets, lookahead=2.0)
        assert p.valid
        assert p.target[0] == pytest.approx(2.0)
        assert p.target[1] == pytest.approx(0.0, abs=1e-12)
        # lookahead past the data: clamp to the shared fitted range
        p_far = plan(dets, lookahead=10.0)
        assert p_far.target[0] == pytest.approx(3.0)

    def test_no_detections_invalid(self):
        p = plan([], lookahead=2.0)
        assert not p.valid
        assert p.target is None

    def test_left_only_offset_fallback(self):
        dets = [det_at(x, 0.5, LEFT_MARKER) for x in (1.0, 2.0, 3.0)]
        p = plan(dets, lookahead=2.0, lane_width=1.0)
        assert p.valid
        assert p.target[1] == pytest.approx(0.0, abs=1e-12)
        assert p.right_points == ()

    def test_right_only_offset_fallback(self):
        dets = [det_at(x, -0.5, RIGHT_MARKER) for x in (1.0, 2.0)]
        p = plan(dets, lookahead=5.0, lane_width=1.0)
        assert p.target == pytest.approx((2.0, 0.0))

    def test_single_cone_constant_fit(self):
        p = plan([det_at(2.0, 0.4, LEFT_MARKER)], lookahead=3.0, lane_width=1.0)
        assert p.valid
        assert p.left_curve == (0.4,)
        assert p.target == pytest.approx((2.0, -0.1))

    def test_quadratic_capture_of_curved_lane(self):
        # points on a parabola: degree-2 fit reproduces it exactly
        f = lambda x: 0.1 * x * x - 0.2 * x + 0.3
        dets = [det_at(x, f(x), LEFT_MARKER) for x in (1.0, 2.0, 3.0, 4.0)]
        dets += [det_at(x, f(x) - 1.0, RIGHT_MARKER) for x in (1.0, 2.0, 3.0, 4.0)]
        p = plan(dets, lookahead=2.5)
        assert p.target[1] == pytest.approx(f(2.5) - 0.5, abs=1e-9)

    def test_target_between_boundaries(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n_l = int(rng.integers(1, 5))
            n_r = int(rng.integers(1, 5))
            dets = [det_at(float(x), float(y), LEFT_MARKER)
                    for x, y in zip(rng.uniform(0.5, 6, n_l), rng.uniform(0.2, 1.0, n_l))]
            dets += [det_at(float(x), float(y), RIGHT_MARKER)
                     for x, y in zip(rng.uniform(0.5, 6, n_r), rng.uniform(-1.0, -0.2, n_r))]
            p = plan(dets, lookahead=2.0)
            assert p.valid and p.target[0] > 0
            lo = min(polyval(p.left_curve, p.target[0]), polyval(p.right_curve, p.target[0]))
            hi = max(polyval(p.left_curve, p.target[0]), polyval(p.right_curve, p.target[0]))
            assert lo - 1e-9 <= p.target[1] <= hi + 1e-9


class TestControl:
    def setup_method(self):
        self.vp = default_art_params()
        self.cp = ControllerParams()

    def test_aligned_and_regulated(self):
        p = Plan(target=(2.0, 0.0), valid=True)
        state = VehicleState(speed=self.cp.target_speed)
        out = control(p, state, self.vp, self.cp)
        assert out.steering == 0.0
        assert out.throttle == 0.0
        assert out.braking == 0.0

    def test_pure_pursuit_formula(self):
        alpha = math.radians(30.0)
        l_d = 2.0
        p = Plan(target=(l_d * math.cos(alpha), l_d * math.sin(alpha)), valid=True)
        out = control(p, VehicleState(speed=1.5), self.vp, self.cp)
        delta = out.steering * self.vp.max_steer
        assert delta == pytest.approx(math.atan(2 * 0.47 * 0.5 / 2.0))
        assert delta == pytest.approx(0.2310, abs=5e-4)

    def test_invalid_plan_full_stop(self):
        out = control(Plan(), VehicleState(speed=1.0), self.vp, self.cp)
        assert (out.throttle, out.braking, out.steering) == (0.0, 1.0, 0.0)

    def test_throttle_braking_exclusive(self):
        p = Plan(target=(2.0, 0.1), valid=True)
        for speed in np.linspace(0, 3, 31):
            out = control(p, VehicleState(speed=float(speed)), self.vp, self.cp)
            assert out.throttle * out.braking == 0.0
            assert 0 <= out.throttle <= 1 and 0 <= out.braking <= 1
            assert -1 <= out.steering <= 1

    def test_pursuit_circle_matches_turn_radius(self):
        # target on a circle through the origin tangent to the heading:
        # the commanded wheel angle reproduces that circle's radius
        for r_c in (1.5, 2.0, 4.0):
            for alpha in (0.2, 0.5, 0.8):
                l_d = 2 * r_c * math.sin(alpha)
                p = Plan(target=(l_d * math.cos(alpha), l_d * math.sin(alpha)),
                         valid=True)
                out = control(p, VehicleState(speed=1.0), self.vp, self.cp)
                delta = out.steering * self.vp.max_steer
                if abs(delta) < self.vp.max_steer - 1e-9:  # not saturated
                    assert turn_radius(delta, self.vp) == pytest.approx(r_c, rel=1e-9)

    def test_saturation_at_extreme_target(self):
        p = Plan(target=(0.3, 2.0), valid=True)
        out = control(p, VehicleState(), self.vp, self.cp)
        assert out.steering == 1.0


class TestMirrorSymmetry:
    def test_exact_negation(self):
        rng = np.random.default_rng(11)
        vp = default_art_params()
        cp = ControllerParams()
        swap = {LEFT_MARKER: RIGHT_MARKER, RIGHT_MARKER: LEFT_MARKER}
        for trial in range(200):
            n = int(rng.integers(1, 8))
            dets, mirrored = [], []
            for _ in range(n):
                x = float(rng.uniform(0.5, 8.0))
                y = float(rng.uniform(-1.2, 1.2))
                label = LEFT_MARKER if rng.random() < 0.5 else RIGHT_MARKER
                dets.append(det_at(x, y, label))
                mirrored.append(det_at(x, -y, swap[label]))
            p = plan(dets, lookahead=2.0)
            q = plan(mirrored, lookahead=2.0)
            assert p.valid == q.valid
            if p.valid:
                assert q.target[0] == p.target[0]
                assert q.target[1] == -p.target[1]  # exact, not approximate
                state = VehicleState(speed=1.0)
                assert control(q, state, vp, cp).steering == -control(p, state, vp, cp).steering


class TestPipeline:
    def test_rendered_symmetric_lane_centerline_target(self):
        # spaced so no same-color boxes overlap in image space
        course = Course(cones=(
            Cone(1.5, 0.5, LEFT_MARKER), Cone(1.5, -0.5, RIGHT_MARKER),
            Cone(2.8, 0.5, LEFT_MARKER), Cone(2.8, -0.5, RIGHT_MARKER),
            Cone(4.5, 0.5, LEFT_MARKER), Cone(4.5, -0.5, RIGHT_MARKER),
        ))
        img = render_image(course, (0, 0, 0), CAM)
        dets, p = perceive_and_plan(img, CAM, cone_height=0.3, lookahead=2.0)
        assert len(dets) == 6
        assert p.valid
        assert abs(p.target[1]) <= 0.05

    def test_blank_image_invalid_plan(self):
        img = render_image(Course(cones=()), (0, 0, 0), CAM)
        dets, p = perceive_and_plan(img, CAM, 0.3, 2.0)
        assert dets == [] and not p.valid

    def test_deterministic(self):
        course = Course(cones=(Cone(2.0, 0.5, LEFT_MARKER),
                               Cone(2.0, -0.5, RIGHT_MARKER)))
        img = render_image(course, (0, 0, 0), CAM)
        a = perceive_and_plan(img, CAM, 0.3, 2.0)
        b = perceive_and_plan(img, CAM, 0.3, 2.0)
        assert a == b


def test_polyval_ascending_order():
    assert polyval((1.0, 2.0, 3.0), 2.0) == 1 + 4 + 12
    assert polyval((5.0,), 100.0) == 5.0
