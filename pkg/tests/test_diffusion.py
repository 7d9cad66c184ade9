"""
Tests for L{pyidql.diffusion}.
"""
import math
import os
import unittest

import numpy as np

from pyidql import constants
from pyidql.diffusion import (
    ScheduleKind, DiffusionSchedule, make_schedule, forward_noise, forward_step,
    Arch, ScoreNetConfig, build_score_net, DiffusionConfig, ActorConfig, BehaviorModel,
    BCReport, bc_loss, bc_step, train_behavior,
)
from pyidql.layers import MLP, LNResNet
from pyidql.processor import ReportRecorder
from pyidql.exceptions import NonMutable

from .base import TestBase, SLOW_TESTS


class ScheduleTests(unittest.TestCase, TestBase):
    """
    Tests for the beta schedules.
    """
    def test_parse(self):
        """
        Test L{pyidql.diffusion.ScheduleKind.parse}.
        """
        self.assertEqual(ScheduleKind.parse("vp"), ScheduleKind.VP)
        self.assertEqual(ScheduleKind.parse("Cosine"), ScheduleKind.COSINE)
        self.assertEqual(ScheduleKind.parse(ScheduleKind.LINEAR), ScheduleKind.LINEAR)
        with self.assertRaises(ValueError):
            ScheduleKind.parse("sigmoid")

    def test_valid(self):
        """
        Test that every schedule has betas in (0, 1) and decreasing alpha bars.
        """
        for kind in ScheduleKind:
            for T in (1, 5, 50):
                schedule = make_schedule(kind, T)
                self.assertEqual(schedule.T, T)
                self.assertIs(schedule.kind, kind)
                self.assertTrue(np.all(schedule.betas > 0) and np.all(schedule.betas < 1))
                np.testing.assert_allclose(schedule.alphas, 1.0 - schedule.betas)
                np.testing.assert_allclose(schedule.alpha_bars, np.cumprod(schedule.alphas))
                self.assertTrue(np.all(np.diff(schedule.alpha_bars) < 0))

    def test_vp(self):
        """
        Test the variance preserving schedule.
        """
        T = 5
        schedule = make_schedule("vp", T)
        t = np.arange(1, T + 1)
        lo, hi = constants.VP_BETA_MIN, constants.VP_BETA_MAX
        expected = 1.0 - np.exp(-lo / T - (hi - lo) * (2 * t - 1) / (2.0 * T * T))
        np.testing.assert_allclose(schedule.betas, expected)
        # the products telescope to the continuous process
        self.assertAlmostEqual(schedule.alpha_bars[-1], math.exp(-lo - (hi - lo) / 2.0), places=10)

    def test_linear(self):
        """
        Test the linear schedule and its scaled defaults.
        """
        schedule = make_schedule("linear", 1000)
        self.assertAlmostEqual(schedule.betas[0], constants.LINEAR_BETA_START)
        self.assertAlmostEqual(schedule.betas[-1], constants.LINEAR_BETA_END)
        schedule = make_schedule("linear", 5)
        self.assertAlmostEqual(schedule.betas[0], 0.02)
        self.assertAlmostEqual(schedule.betas[-1], constants.COSINE_MAX_BETA)
        schedule = make_schedule("linear", 3, beta_min=0.1, beta_max=0.3)
        np.testing.assert_allclose(schedule.betas, [0.1, 0.2, 0.3])

    def test_cosine(self):
        """
        Test the cosine schedule.
        """
        T = 10
        schedule = make_schedule("cosine", T)
        s = constants.COSINE_OFFSET

        def g(u):
            return math.cos((u + s) / (1 + s) * math.pi / 2) ** 2

        for t in range(1, T):
            self.assertAlmostEqual(schedule.alpha_bars[t - 1], g(t / T) / g(0.0), places=10)
        self.assertLessEqual(schedule.betas[-1], constants.COSINE_MAX_BETA)

    def test_invalid(self):
        """
        Test that invalid schedules are rejected.
        """
        for T in (0, -1, 2.5):
            with self.assertRaises(ValueError):
                make_schedule("vp", T)
        with self.assertRaises(ValueError):
            DiffusionSchedule([])
        with self.assertRaises(ValueError):
            DiffusionSchedule([0.1, 0.0])
        with self.assertRaises(ValueError):
            DiffusionSchedule([0.5, 1.0])
        with self.assertRaises(ValueError):
            make_schedule("linear", 3, beta_min=0.5, beta_max=1.5)

    def test_check_step(self):
        """
        Test L{pyidql.diffusion.DiffusionSchedule.check_step}.
        """
        schedule = make_schedule("vp", 5)
        np.testing.assert_array_equal(schedule.check_step([1, 5]), [1, 5])
        for t in (0, 6, 1.5, [1, 7]):
            with self.assertRaises(ValueError):
                schedule.check_step(t)

    def test_describe(self):
        """
        Test the description of a schedule.
        """
        description = make_schedule("cosine", 3).describe()
        self.assertEqual(description["kind"], "cosine")
        self.assertEqual(description["T"], 3)
        self.assertEqual(len(description["betas"]), 3)
        self.assertIsNone(DiffusionSchedule([0.1]).describe()["kind"])


class ForwardProcessTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.diffusion.forward_noise} and L{pyidql.diffusion.forward_step}.
    """
    def test_forward_noise(self):
        """
        Test the closed form of the forward process.
        """
        schedule = make_schedule("vp", 5)
        a0 = np.array([[1.0, -1.0], [0.5, 2.0]])
        eps = np.array([[0.1, 0.2], [-0.3, 0.4]])
        out = forward_noise(schedule, a0, np.array([1, 5]), eps)
        abar = schedule.alpha_bars[[0, 4]].reshape(-1, 1)
        np.testing.assert_allclose(out, np.sqrt(abar) * a0 + np.sqrt(1 - abar) * eps)
        # a single step for the whole batch
        out = forward_noise(schedule, a0, 3, eps)
        abar = schedule.alpha_bars[2]
        np.testing.assert_allclose(out, math.sqrt(abar) * a0 + math.sqrt(1 - abar) * eps)
        with self.assertRaises(ValueError):
            forward_noise(schedule, a0, 1, eps[:1])
        with self.assertRaises(ValueError):
            forward_noise(schedule, a0, 0, eps)

    def test_steps_match_closed_form(self):
        """
        Test that T single steps have the marginal of the closed form.
        """
        schedule = make_schedule("linear", 4, beta_min=0.1, beta_max=0.4)
        rng = self.get_rng()
        n = 20000
        a = np.full((n, 1), 2.0)
        for t in range(1, schedule.T + 1):
            a = forward_step(schedule, a, t, rng.standard_normal((n, 1)))
        abar = schedule.alpha_bars[-1]
        self.assertAlmostEqual(float(np.mean(a)), 2.0 * math.sqrt(abar), delta=0.03)
        self.assertAlmostEqual(float(np.var(a)), 1.0 - abar, delta=0.03)


class ScoreNetTests(unittest.TestCase, TestBase):
    """
    Tests for the score network configuration and construction.
    """
    def test_arch_parse(self):
        """
        Test L{pyidql.diffusion.Arch.parse}.
        """
        self.assertEqual(Arch.parse("mlp"), Arch.MLP)
        self.assertEqual(Arch.parse("lnresnet"), Arch.LNRESNET)
        self.assertEqual(Arch.parse("ln_resnet"), Arch.LNRESNET)
        with self.assertRaises(ValueError):
            Arch.parse("unet")

    def test_config(self):
        """
        Test L{pyidql.diffusion.ScoreNetConfig}.
        """
        config = ScoreNetConfig(1, 2, time_embed_dim=8)
        self.assertEqual(config.input_dim, 11)
        self.assertEqual(config.arch, Arch.LNRESNET)
        for kwargs in ({"time_embed_dim": 7}, {"dropout": 1.0}, {"hidden_dim": 0}, {"mlp_layers": 0}):
            with self.assertRaises(ValueError):
                ScoreNetConfig(1, 2, **kwargs)
        with self.assertRaises(ValueError):
            ScoreNetConfig(0, 2)

    def test_build(self):
        """
        Test that both architectures output zero at initialization.
        """
        rng = self.get_rng()
        for arch, cls in ((Arch.MLP, MLP), (Arch.LNRESNET, LNResNet)):
            config = ScoreNetConfig(1, 2, arch=arch, hidden_dim=16, n_blocks=2, time_embed_dim=8)
            self.assertIsInstance(build_score_net(config), cls)
            model = BehaviorModel(config, DiffusionConfig(), rng)
            out = model.predict_noise(rng.standard_normal((4, 2)), np.zeros((4, 1)), np.array([1, 2, 3, 4]))
            self.assertEqual(out.shape, (4, 2))
            np.testing.assert_array_equal(out.numpy(), np.zeros((4, 2)))


class BehaviorModelTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.diffusion.BehaviorModel}.
    """
    def get_model(self, arch=Arch.MLP, seed=None, **kwargs):
        """
        Return a small behavior model.

        @param arch: the architecture
        @type arch: L{pyidql.diffusion.Arch}
        @param seed: seed of the initialization
        @type seed: L{int} or L{None}
        @param kwargs: arguments of the L{pyidql.diffusion.DiffusionConfig}
        @type kwargs: L{dict}
        @rtype: L{pyidql.diffusion.BehaviorModel}
        """
        config = ScoreNetConfig(1, 2, arch=arch, hidden_dim=16, n_blocks=1, mlp_layers=2, time_embed_dim=8)
        return BehaviorModel(config, DiffusionConfig(**kwargs), self.get_rng(seed))

    def test_sample_shape(self):
        """
        Test the shape of samples.
        """
        model = self.get_model()
        self.assertEqual(model.sample([0.0], self.get_rng(), n=7).shape, (7, 2))
        self.assertEqual(model.sample(np.zeros((3, 1)), self.get_rng(), n=3).shape, (3, 2))
        with self.assertRaises(ValueError):
            model.sample(np.zeros((3, 1)), self.get_rng(), n=4)

    def test_sample_untrained(self):
        """
        Test the reverse chain of a network predicting no noise.
        """
        model = self.get_model(T=1)
        samples = model.sample([0.0], self.get_rng(1), n=5)
        z = self.get_rng(1).standard_normal((5, 2))
        np.testing.assert_allclose(samples, z / math.sqrt(model.schedule.alphas[0]))
        # with noise in the final step, more randomness is drawn
        model = self.get_model(T=1, final_step_noise=True)
        samples = model.sample([0.0], self.get_rng(1), n=5)
        rng = self.get_rng(1)
        z = rng.standard_normal((5, 2))
        beta = model.schedule.betas[0]
        expected = z / math.sqrt(1.0 - beta) + math.sqrt(beta) * rng.standard_normal((5, 2))
        np.testing.assert_allclose(samples, expected)

    def test_sample_deterministic(self):
        """
        Test that samples only depend on the random stream.
        """
        model = self.get_model(arch=Arch.LNRESNET)
        a = model.sample([0.0], self.get_rng(4), n=6)
        b = model.sample([0.0], self.get_rng(4), n=6)
        np.testing.assert_array_equal(a, b)

    def test_clip(self):
        """
        Test clipping samples to the action box.
        """
        config = ScoreNetConfig(1, 2, arch=Arch.MLP, hidden_dim=8, time_embed_dim=8)
        model = BehaviorModel(
            config, DiffusionConfig(clip_actions=True), self.get_rng(), action_low=np.zeros(2), action_high=np.ones(2),
        )
        samples = model.sample([0.0], self.get_rng(), n=200)
        self.assertTrue(np.all(samples >= 0.0) and np.all(samples <= 1.0))

    def test_save_load(self):
        """
        Test that checkpoints restore the parameters.
        """
        model = self.get_model(seed=1)
        bc_step(model, np.zeros((8, 1)), np.ones((8, 2)), self.get_rng(), ActorConfig(steps=10, batch_size=8))
        other = self.get_model(seed=2)
        with self.open_temp_dir() as tempdir:
            path = os.path.join(tempdir, "behavior.ckpt")
            model.save(path)
            other.load(path)
            self.assertIsNotNone(model.opt)
            model.load(path)
            self.assertIsNone(model.opt)
        self.assertEqual(other.params.fingerprint(), model.params.fingerprint())
        np.testing.assert_array_equal(
            other.sample([0.0], self.get_rng(3), n=4), model.sample([0.0], self.get_rng(3), n=4),
        )


class BehaviorCloningTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.diffusion.bc_loss}, L{pyidql.diffusion.bc_step} and L{pyidql.diffusion.train_behavior}.
    """
    def get_model(self, norm="l2"):
        """
        Return a small behavior model.

        @param norm: norm of the loss
        @type norm: L{str}
        @rtype: L{pyidql.diffusion.BehaviorModel}
        """
        config = ScoreNetConfig(1, 2, arch=Arch.MLP, hidden_dim=16, time_embed_dim=8)
        return BehaviorModel(config, DiffusionConfig(norm=norm), self.get_rng())

    def test_actor_config(self):
        """
        Test that invalid actor configurations are rejected.
        """
        for kwargs in ({"lr": 0.0}, {"batch_size": 0}, {"steps": -1}, {"awr_alpha": -1.0}, {"awr_max_weight": 0.0}):
            with self.assertRaises(ValueError):
                ActorConfig(**kwargs)
        with self.assertRaises(ValueError):
            DiffusionConfig(norm="l3")
        with self.assertRaises(ValueError):
            DiffusionConfig(T=0)

    def test_loss_untrained(self):
        """
        Test the loss of a network predicting no noise.
        """
        states = np.zeros((3, 1))
        actions = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
        t = np.array([1, 2, 3])
        noise = np.array([[1.0, 2.0], [-1.0, 0.5], [0.0, -3.0]])
        model = self.get_model()
        loss = bc_loss(model, states, actions, self.get_rng(), t=t, noise=noise)
        self.assertAlmostEqual(loss.item(), (5.0 + 1.25 + 9.0) / 3.0)
        weighted = bc_loss(model, states, actions, self.get_rng(), weights=[1.0, 0.0, 2.0], t=t, noise=noise)
        self.assertAlmostEqual(weighted.item(), (5.0 + 18.0) / 3.0)
        model = self.get_model(norm="l1")
        loss = bc_loss(model, states, actions, self.get_rng(), t=t, noise=noise)
        self.assertAlmostEqual(loss.item(), (3.0 + 1.5 + 3.0) / 3.0)

    def test_step(self):
        """
        Test a single behavior cloning step.
        """
        model = self.get_model()
        config = ActorConfig(lr=1e-3, steps=10, batch_size=8)
        before = model.params.copy()
        report = bc_step(model, np.zeros((8, 1)), np.ones((8, 2)), self.get_rng(), config)
        self.assertIsInstance(report, BCReport)
        self.assertEqual(report.step, 1)
        self.assertAlmostEqual(report.lr, 1e-3)
        self.assertEqual(model.opt.horizon, 10)
        self.assertGreater(model.params.distance(before), 0.0)
        self.assertEqual(len(report.to_row()), len(BCReport.FIELDS))

    def test_frozen(self):
        """
        Test that a frozen model can not be trained.
        """
        model = self.get_model()
        model.freeze()
        with self.assertRaises(NonMutable):
            bc_step(model, np.zeros((8, 1)), np.ones((8, 2)), self.get_rng(), ActorConfig(batch_size=8))

    def test_train(self):
        """
        Test a short training run.
        """
        model = self.get_model()
        recorder = ReportRecorder()
        config = ActorConfig(steps=5, batch_size=4, report_interval=2)
        reports = train_behavior(
            model, np.zeros((10, 1)), np.ones((10, 2)), config, self.get_rng(), processors=[recorder],
        )
        self.assertEqual([r.step for r in reports], [2, 4, 5])
        self.assertEqual(recorder.reports, reports)
        self.assertEqual(recorder.loop, "behavior")
        # the learning rate decays
        self.assertLess(reports[-1].lr, reports[0].lr)
        with self.assertRaises(ValueError):
            train_behavior(model, np.zeros((0, 1)), np.zeros((0, 2)), config, self.get_rng())

    def test_deterministic(self):
        """
        Test that training only depends on the random stream.
        """
        config = ActorConfig(steps=3, batch_size=4)
        fingerprints = []
        for _ in range(2):
            model = self.get_model()
            train_behavior(model, np.zeros((10, 1)), np.ones((10, 2)), config, self.get_rng(9))
            fingerprints.append(model.params.fingerprint())
        self.assertEqual(fingerprints[0], fingerprints[1])

    @unittest.skipUnless(SLOW_TESTS, "Slow tests are disabled")
    def test_fit_point_mass(self):
        """
        Test that samples concentrate on a single dataset action.
        """
        config = ScoreNetConfig(1, 2, arch=Arch.MLP, hidden_dim=64, time_embed_dim=16)
        model = BehaviorModel(config, DiffusionConfig(kind="vp", T=5), self.get_rng())
        target = np.array([0.5, -0.5])
        actor_config = ActorConfig(lr=1e-3, steps=1500, batch_size=128)
        train_behavior(model, np.zeros((256, 1)), np.tile(target, (256, 1)), actor_config, self.get_rng())
        samples = model.sample([0.0], self.get_rng(1), n=500)
        np.testing.assert_allclose(np.mean(samples, axis=0), target, atol=0.2)
