import math

import numpy as np
import pytest

from oracles import finite_difference_grad
from segreward.errors import InvalidReward, TrainingDiverged
from segreward.grpo import (
    ACTION_DIM,
    FEATURE_DIM,
    NT_DIM,
    GrpoConfig,
    ToyAction,
    ToyPolicy,
    evaluate_no_target,
    group_advantages,
    grpo_step,
    kl_penalty,
    make_synthetic_task,
    sample_loss,
    sample_loss_grad,
    train_toy,
)
from segreward.parsing import parse_response

CFG = GrpoConfig()


class TestGroupAdvantages:
    def test_zero_variance_group(self):
        out = group_advantages([1.0] * 8, CFG)
        assert all(abs(a) < 1e-9 for a in out)

    def test_two_element_hand_value(self):
        out = group_advantages([0.0, 2.0], GrpoConfig(group_size=2))
        assert math.isclose(out[0], -1.0, abs_tol=1e-5)
        assert math.isclose(out[1], 1.0, abs_tol=1e-5)

    def test_skewed_group_hand_values(self):
        # mean 1, population std sqrt(3)
        out = group_advantages([0.0, 0.0, 0.0, 4.0], GrpoConfig(group_size=4))
        expected = [-1 / math.sqrt(3)] * 3 + [3 / math.sqrt(3)]
        for a, e in zip(out, expected):
            assert math.isclose(a, e, abs_tol=1e-5)

    def test_mean_zero_and_unit_std(self, rng):
        for _ in range(200):
            rewards = list(rng.normal(0, 10, size=8))
            out = np.array(group_advantages(rewards, CFG))
            assert abs(out.mean()) < 1e-9
            assert abs(out.std() - 1.0) < 1e-6

    def test_translation_invariance(self, rng):
        rewards = list(rng.normal(0, 3, size=8))
        base = group_advantages(rewards, CFG)
        shifted = group_advantages([r + 17.5 for r in rewards], CFG)
        for a, b in zip(base, shifted):
            assert math.isclose(a, b, abs_tol=1e-9)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidReward):
            group_advantages([1.0] * 7 + [math.nan], CFG)

    def test_group_size_enforced(self):
        with pytest.raises(ValueError):
            group_advantages([1.0, 2.0, 3.0], CFG)

    def test_n_below_two_rejected(self):
        with pytest.raises(ValueError):
            GrpoConfig(group_size=1)


class TestKlPenalty:
    def test_equal_logps(self):
        assert kl_penalty(-3.5, -3.5) == 0.0

    def test_hand_value(self):
        assert math.isclose(kl_penalty(-0.1, 0.0), math.e**0.1 - 1.1, rel_tol=1e-12)
        assert math.isclose(kl_penalty(-0.1, 0.0), 0.005170918, abs_tol=1e-9)

    def test_non_negative_sweep(self, rng):
        for d in rng.uniform(-3, 3, size=1000):
            v = kl_penalty(0.0, d)
            assert v >= 0.0
            if abs(d) > 1e-12:
                assert v > 0.0


def random_params(rng):
    return {
        "w_mean": rng.normal(0, 0.4, (ACTION_DIM, FEATURE_DIM)),
        "b_mean": rng.normal(0.5, 0.3, ACTION_DIM),
        "w_logstd": rng.normal(0, 0.3, (ACTION_DIM, FEATURE_DIM)),
        "b_logstd": rng.normal(-1.0, 0.6, ACTION_DIM),
        "w_nt": rng.normal(0, 0.5, NT_DIM),
    }


def random_action(rng):
    if rng.random() < 0.3:
        return ToyAction(no_target=True, coords=None)
    return ToyAction(no_target=False, coords=rng.normal(0.5, 0.5, ACTION_DIM))


class TestGradients:
    def test_log_prob_gradient_matches_fd(self, rng):
        for _ in range(30):
            params = random_params(rng)
            policy = ToyPolicy(params)
            phi = rng.uniform(0, 1, FEATURE_DIM)
            action = random_action(rng)
            analytic = policy.grad_log_prob(phi, action)
            fd = finite_difference_grad(lambda p: policy.log_prob(phi, action), params)
            a = np.concatenate([analytic[k].reshape(-1) for k in sorted(analytic)])
            f = np.concatenate([fd[k].reshape(-1) for k in sorted(fd)])
            assert np.linalg.norm(a - f) <= 1e-3 * max(np.linalg.norm(f), 1e-8)

    def test_loss_gradient_matches_fd_including_clip_branches(self, rng):
        # keep the sampled ratio away from the clip kinks so the FD probe
        # never straddles the non-differentiable point
        offsets = [-0.5, -0.05, 0.05, 0.5]
        for i in range(30):
            params = random_params(rng)
            params["w_logstd"] = rng.normal(0, 0.1, (ACTION_DIM, FEATURE_DIM))
            params["b_logstd"] = rng.normal(-0.6, 0.25, ACTION_DIM)
            policy = ToyPolicy(params)
            phi = rng.uniform(0, 1, FEATURE_DIM)
            action = random_action(rng)
            adv = float(rng.normal(0, 1.5))
            logp_old = policy.log_prob(phi, action) + offsets[i % len(offsets)]
            logp_ref = policy.log_prob(phi, action) + rng.normal(0, 0.4)
            analytic = sample_loss_grad(policy, phi, action, adv, logp_old, logp_ref, CFG)
            fd = finite_difference_grad(
                lambda p: sample_loss(policy, phi, action, adv, logp_old, logp_ref, CFG), params
            )
            a = np.concatenate([analytic[k].reshape(-1) for k in sorted(analytic)])
            f = np.concatenate([fd[k].reshape(-1) for k in sorted(fd)])
            assert np.linalg.norm(a - f) <= 1e-3 * max(np.linalg.norm(f), 1e-8)


class TestClipSwitch:
    def test_disabled_clip_gradient_matches_fd(self, rng):
        cfg = GrpoConfig(clip_enabled=False)
        for _ in range(8):
            params = random_params(rng)
            params["w_logstd"] = rng.normal(0, 0.1, (ACTION_DIM, FEATURE_DIM))
            params["b_logstd"] = rng.normal(-0.6, 0.25, ACTION_DIM)
            policy = ToyPolicy(params)
            phi = rng.uniform(0, 1, FEATURE_DIM)
            action = random_action(rng)
            adv = float(rng.normal(0, 1.5))
            logp_old = policy.log_prob(phi, action) + float(rng.normal(0, 0.5))
            logp_ref = policy.log_prob(phi, action) + float(rng.normal(0, 0.3))
            analytic = sample_loss_grad(policy, phi, action, adv, logp_old, logp_ref, cfg)
            fd = finite_difference_grad(
                lambda p: sample_loss(policy, phi, action, adv, logp_old, logp_ref, cfg), params
            )
            a = np.concatenate([analytic[k].reshape(-1) for k in sorted(analytic)])
            f = np.concatenate([fd[k].reshape(-1) for k in sorted(fd)])
            assert np.linalg.norm(a - f) <= 1e-3 * max(np.linalg.norm(f), 1e-8)

    def test_disabled_clip_changes_loss_off_band(self):
        policy = ToyPolicy.init()
        phi = np.array([0.2, 0.2, 0.6, 0.6, 1.0, 0.0])
        action = ToyAction(no_target=False, coords=np.full(6, 0.5))
        logp = policy.log_prob(phi, action)
        # ratio e^{0.6} ~ 1.82 sits beyond the clip band, so the clipped
        # objective saturates while the unclipped one keeps growing
        clipped = sample_loss(policy, phi, action, 1.0, logp - 0.6, logp, GrpoConfig())
        unclipped = sample_loss(policy, phi, action, 1.0, logp - 0.6, logp, GrpoConfig(clip_enabled=False))
        assert unclipped < clipped


class TestToyPolicy:
    def test_render_parses_clean(self, rng):
        policy = ToyPolicy.init()
        task = make_synthetic_task(rng, no_target=False)
        for _ in range(20):
            raw = policy.render(policy.sample(task.features, rng))
            parsed = parse_response(raw)
            assert parsed.format_ok
            assert parsed.think_text

    def test_render_no_target(self):
        raw = ToyPolicy.render(ToyAction(no_target=True, coords=None))
        parsed = parse_response(raw)
        assert parsed.prediction.no_target

    def test_emitted_coords_clamped(self):
        action = ToyAction(no_target=False, coords=np.array([-0.5, 0.2, 1.7, 0.9, 0.5, 0.5]))
        parsed = parse_response(ToyPolicy.render(action))
        inst = parsed.prediction.instances[0]
        for v in inst.bbox.as_tuple():
            assert 0 <= v <= 1000
        assert "out_of_range_coordinate" not in parsed.format_faults

    def test_sampling_deterministic_under_seed(self):
        policy = ToyPolicy.init()
        phi = np.array([0.1, 0.2, 0.6, 0.7, 1.0, 0.0])
        a = policy.sample(phi, np.random.default_rng(7))
        b = policy.sample(phi, np.random.default_rng(7))
        assert a.no_target == b.no_target
        if not a.no_target:
            assert np.array_equal(a.coords, b.coords)


class TestSyntheticTask:
    def test_ground_truth_recoverable_from_features(self, rng):
        for _ in range(20):
            task = make_synthetic_task(rng, no_target=False)
            box = task.gt.gt_boxes[0]
            np.testing.assert_allclose(
                np.array(box.as_tuple()) / 1000.0, task.features[:4], atol=1e-12
            )
            assert task.features[4] == 1.0

    def test_no_target_task(self, rng):
        task = make_synthetic_task(rng, no_target=True, with_scene=True)
        assert task.gt.is_no_target
        assert task.features[4] == 0.0
        assert task.scene.objects == ()

    def test_scene_mask_matches_box(self, rng):
        task = make_synthetic_task(rng, no_target=False, with_scene=True)
        mask = task.scene.objects[0].mask
        assert mask.area > 0
        assert task.gt.gt_masks[0] == mask


def constant_reward_fn(raws, task):
    return [1.0] * len(raws)


class TestGrpoStep:
    def test_lr_zero_keeps_parameters_bit_identical(self, rng):
        cfg = GrpoConfig(learning_rate=0.0)
        policy = ToyPolicy.init()
        before = {k: v.copy() for k, v in policy.params.items()}
        tasks = [make_synthetic_task(rng, no_target=False) for _ in range(2)]
        policy, _ = grpo_step(policy, tasks, constant_reward_fn, cfg, rng)
        for k in before:
            assert np.array_equal(before[k], policy.params[k])

    def test_equal_rewards_no_change_without_kl(self, rng):
        cfg = GrpoConfig(kl_coef=0.0)
        policy = ToyPolicy.init()
        before = {k: v.copy() for k, v in policy.params.items()}
        tasks = [make_synthetic_task(rng, no_target=False) for _ in range(2)]
        policy, stats = grpo_step(policy, tasks, constant_reward_fn, cfg, rng)
        for k in before:
            assert np.array_equal(before[k], policy.params[k])
        assert stats["mean_abs_adv"] < 1e-9

    def test_equal_rewards_move_only_through_kl(self, rng):
        # drift the reference away so the KL term has a gradient
        cfg = GrpoConfig(kl_coef=0.1)
        policy = ToyPolicy.init()
        policy.ref_params["b_mean"] = policy.ref_params["b_mean"] + 0.3
        tasks = [make_synthetic_task(rng, no_target=False) for _ in range(2)]
        before = {k: v.copy() for k, v in policy.params.items()}
        policy, _ = grpo_step(policy, tasks, constant_reward_fn, cfg, rng)
        moved = any(not np.array_equal(before[k], policy.params[k]) for k in before)
        assert moved

    def test_deterministic_stats_under_seed(self):
        def run():
            rng = np.random.default_rng(3)
            policy = ToyPolicy.init()
            tasks = [make_synthetic_task(rng, no_target=(i % 4 == 0)) for i in range(4)]
            stats_trace = []
            for _ in range(3):
                policy, stats = grpo_step(policy, tasks, constant_reward_fn, CFG, rng)
                stats_trace.append(stats)
            return stats_trace

        assert run() == run()

    def test_non_finite_reward_rejected(self, rng):
        policy = ToyPolicy.init()
        tasks = [make_synthetic_task(rng, no_target=False)]
        with pytest.raises(InvalidReward):
            grpo_step(policy, tasks, lambda raws, task: [math.inf] * len(raws), CFG, rng)

    def test_divergence_detected(self, rng):
        policy = ToyPolicy.init()
        # a poisoned parameter (as after a broken update) must abort, not propagate
        policy.params["b_mean"] = np.full(policy.params["b_mean"].shape, np.nan)
        tasks = [make_synthetic_task(rng, no_target=False)]
        with pytest.raises(TrainingDiverged):
            grpo_step(policy, tasks, constant_reward_fn, CFG, rng)


class TestTrainToy:
    def test_trace_shape_and_determinism(self):
        cfg = GrpoConfig(seed=11)
        _, trace_a = train_toy(cfg, steps=5, mode="distance")
        _, trace_b = train_toy(cfg, steps=5, mode="distance")
        assert trace_a == trace_b
        assert len(trace_a) == 5
        assert list(trace_a[0]) == ["step", "mean_reward", "mean_abs_adv", "mean_kl", "no_target_acc"]

    def test_sam_loop_mode_runs(self):
        cfg = GrpoConfig(seed=11)
        _, trace = train_toy(cfg, steps=3, mode="sam_loop")
        assert len(trace) == 3
        assert all(math.isfinite(row["mean_reward"]) for row in trace)

    def test_evaluate_no_target_bounds(self, rng):
        policy = ToyPolicy.init()
        acc, fnr = evaluate_no_target(policy, rng, n_negatives=20, n_targets=20)
        assert 0.0 <= acc <= 1.0 and 0.0 <= fnr <= 1.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            train_toy(GrpoConfig(), steps=1, mode="fast")
