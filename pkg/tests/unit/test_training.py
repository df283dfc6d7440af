"""Unit tests for noise-model training."""
import math
from dataclasses import replace

import pytest
import torch

from srgbnoise.models.dataset import ConditionRegistry, SynthCameraParams
from srgbnoise.models.flow import dequantize
from srgbnoise.schemas.training import Strategy
from srgbnoise.services import training as training_service
from srgbnoise.services.checkpoint import NOISE_MODEL, load_noise_model, read_checkpoint
from srgbnoise.services.oracle import (
    generate_oracle_dataset,
    oracle_conditions,
    procedural_clean_images,
)
from srgbnoise.services.training import (
    StepRecord,
    TrainState,
    _phase,
    _total_epochs,
    build_noise_model,
    build_optimizers,
    iterate_records,
    learning_rate,
    train,
    training_step,
)
from srgbnoise.utils.errors import DivergedError, NumericalError, ValidationError
from srgbnoise.utils.seeding import torch_generator


def read_records(path):
    return iterate_records(path.read_text().splitlines())


def _registry():
    return ConditionRegistry(cameras=("S6",), isos=(100, 200))


@pytest.mark.unit
class TestSchedule:
    """Test the learning-rate schedule and strategy phases."""

    @pytest.mark.parametrize(
        "epoch,expected", [(0, 1e-4), (9, 1e-4), (10, 5e-5), (25, 2.5e-5), (39, 1.25e-5)]
    )
    def test_halving(self, epoch, expected):
        """Test the rate halves every period."""
        assert learning_rate(1e-4, 10, epoch) == pytest.approx(expected)

    def test_two_stage_phases(self, tiny_train_config):
        """Test two-stage training runs the flow first, then the GAN."""
        config = replace(tiny_train_config, strategy=Strategy.TWO_STAGE, epochs=3)
        assert _phase(config, 2) == {"run_flow": True, "run_gan": False}
        assert _phase(config, 3) == {"run_flow": False, "run_gan": True}
        assert _phase(tiny_train_config, 0) == {"run_flow": True, "run_gan": True}

    def test_two_stage_length(self, tiny_train_config):
        """Test two-stage training doubles the epochs only when a GAN exists."""
        config = replace(tiny_train_config, strategy=Strategy.TWO_STAGE, epochs=3)
        registry = _registry()
        assert _total_epochs(config, build_noise_model(config, registry)) == 6
        flow_only = replace(config, enable_gan=False)
        assert _total_epochs(flow_only, build_noise_model(flow_only, registry)) == 3


@pytest.mark.unit
class TestTrainState:
    """Test training state serialization and step records."""

    def test_round_trip(self):
        """Test counters, histories and the RNG state survive a round trip."""
        state = TrainState(epoch=3, step=42, best_val_nll=1.25, seed=7, last_checkpoint="c.bin")
        state.nll_history.extend(float(i) for i in range(150))
        state.adv_history.append(-0.5)
        restored = TrainState.from_dict(state.to_dict())
        assert restored.to_dict() == state.to_dict()
        assert len(restored.nll_history) == 100
        assert restored.nll_history[0] == 50.0
        assert restored.rng_state == {"seed": 7, "step": 42}

    def test_fresh_state_best_is_infinite(self):
        """Test a fresh state accepts any first validation NLL."""
        assert math.isinf(TrainState().best_val_nll)

    def test_record_lines(self):
        """Test step records parse back from the training log and epoch lines are skipped."""
        record = StepRecord(step=3, nll=1.5, wgan=-0.25, gp=0.5, adv=0.125, lr=1e-4)
        lines = [record.as_line(), "epoch\t0\tval_nll\t1.5"]
        assert iterate_records(lines) == [record]


@pytest.mark.unit
class TestInitialization:
    """Test model construction."""

    def test_flow_init_independent_of_gan(self, tiny_train_config):
        """Test enabling the GAN does not change the flow's initial weights."""
        with_gan = build_noise_model(tiny_train_config, _registry())
        without = build_noise_model(replace(tiny_train_config, enable_gan=False), _registry())
        for a, b in zip(with_gan.flow.parameters(), without.flow.parameters()):
            assert torch.equal(a, b)
        assert without.generator is None and without.critic is None

    def test_global_rng_untouched(self, tiny_train_config):
        """Test building a model leaves the global torch RNG state alone."""
        before = torch.get_rng_state()
        build_noise_model(tiny_train_config, _registry())
        assert torch.equal(before, torch.get_rng_state())

    def test_parameterless_flow_has_no_optimizer(self, tiny_train_config):
        """Test the GAN-only ablation creates optimizers for the GAN only."""
        config = replace(
            tiny_train_config, enable_condlin=False, enable_sdl=False, enable_sal=False
        )
        optimizers = build_optimizers(build_noise_model(config, _registry()), config)
        assert sorted(optimizers.items().keys()) == ["critic", "generator"]


@pytest.mark.unit
class TestTrainingStep:
    """Test single optimization steps."""

    def test_first_step_nll_closed_form(self, patch_batch, tiny_train_config):
        """Test an identity flow's first NLL equals the standard-normal NLL of the noise."""
        bundle = build_noise_model(tiny_train_config, _registry())
        optimizers = build_optimizers(bundle, tiny_train_config)
        state = TrainState(seed=0)
        record = training_step(patch_batch, bundle, optimizers, tiny_train_config, state)

        noise = dequantize(patch_batch["noisy"] - patch_batch["clean"], torch_generator(0, 0))
        dims = noise[0].numel()
        expected = (0.5 * noise.pow(2).flatten(1).sum(1) + 0.5 * dims * math.log(2 * math.pi))
        assert record.nll == pytest.approx(expected.mean().item(), rel=1e-5)
        assert record.step == 0 and state.step == 1
        assert record.lr == pytest.approx(tiny_train_config.lr_initial)
        assert len(state.nll_history) == 1 and len(state.adv_history) == 1
        assert record.gp > 0

    def test_flow_only_step_skips_gan(self, patch_batch, tiny_train_config):
        """Test GAN terms stay zero when the GAN is disabled."""
        config = replace(tiny_train_config, enable_gan=False)
        bundle = build_noise_model(config, _registry())
        state = TrainState(seed=0)
        record = training_step(patch_batch, bundle, build_optimizers(bundle, config), config, state)
        assert (record.wgan, record.gp, record.adv) == (0.0, 0.0, 0.0)
        assert not state.adv_history

    def test_gan_stage_freezes_flow(self, patch_batch, tiny_train_config):
        """Test the GAN stage of two-stage training leaves the flow untouched."""
        config = replace(tiny_train_config, strategy=Strategy.TWO_STAGE)
        bundle = build_noise_model(config, _registry())
        before = [p.detach().clone() for p in bundle.flow.parameters()]
        training_step(
            patch_batch,
            bundle,
            build_optimizers(bundle, config),
            config,
            TrainState(seed=0),
            run_flow=False,
        )
        for a, b in zip(before, bundle.flow.parameters()):
            assert torch.equal(a, b)

    def test_joint_differs_from_simultaneous(self, patch_batch, tiny_train_config):
        """Test JOINT lets the adversarial loss update the flow."""
        flows = {}
        for strategy in (Strategy.SIMULTANEOUS, Strategy.JOINT):
            config = replace(tiny_train_config, strategy=strategy)
            bundle = build_noise_model(config, _registry())
            training_step(
                patch_batch, bundle, build_optimizers(bundle, config), config, TrainState()
            )
            flows[strategy] = [p.detach().clone() for p in bundle.flow.parameters()]
        assert any(
            not torch.equal(a, b)
            for a, b in zip(flows[Strategy.SIMULTANEOUS], flows[Strategy.JOINT])
        )

    def test_joint_takes_one_flow_step(self, monkeypatch, patch_batch, tiny_train_config):
        """Test JOINT updates the flow once per step from the combined loss."""
        config = replace(tiny_train_config, strategy=Strategy.JOINT)
        bundle = build_noise_model(config, _registry())
        optimizers = build_optimizers(bundle, config)
        step = optimizers.flow.step
        calls = []

        def counted(*args, **kwargs):
            calls.append(1)
            return step(*args, **kwargs)

        monkeypatch.setattr(optimizers.flow, "step", counted)
        training_step(patch_batch, bundle, optimizers, config, TrainState(seed=0))
        assert len(calls) == 1

    def test_gan_does_not_change_flow_over_many_steps(self, patch_batch, tiny_train_config):
        """Test 100 simultaneous steps leave the flow identical to flow-only training."""
        flows = []
        for enable_gan in (True, False):
            config = replace(tiny_train_config, enable_gan=enable_gan)
            bundle = build_noise_model(config, _registry())
            optimizers = build_optimizers(bundle, config)
            state = TrainState(seed=0)
            for _ in range(100):
                training_step(patch_batch, bundle, optimizers, config, state)
            assert state.step == 100
            flows.append(bundle.flow.state_dict())
        for key, value in flows[0].items():
            assert torch.equal(value, flows[1][key]), key


@pytest.mark.unit
class TestTrain:
    """Test the training loop end to end on tiny oracle data."""

    def test_writes_checkpoints_and_log(self, tmp_path, oracle_manifest, tiny_train_config):
        """Test per-epoch and best checkpoints plus the training log are written."""
        best = train(tiny_train_config, oracle_manifest, tmp_path / "run")
        assert best == tmp_path / "run" / "ckpt_best.bin"
        assert best.exists()
        assert (tmp_path / "run" / "ckpt_epoch0.bin").exists()
        records = read_records(tmp_path / "run" / "train.log")
        assert [r.step for r in records] == list(range(len(records)))
        assert all(math.isfinite(r.nll) for r in records)
        payload = read_checkpoint(best, NOISE_MODEL)
        assert payload["train_state"]["epoch"] == 1
        assert payload["header"]["train_config"]["lambda"] == tiny_train_config.lam

    def test_gan_does_not_change_flow(self, tmp_path, oracle_manifest, tiny_train_config):
        """Test the stop-gradient keeps flow training identical with or without the GAN."""
        with_gan = replace(tiny_train_config, epochs=3)
        without = replace(with_gan, enable_gan=False)
        a = load_noise_model(train(with_gan, oracle_manifest, tmp_path / "a"))
        b = load_noise_model(train(without, oracle_manifest, tmp_path / "b"))
        for key, value in a.flow.state_dict().items():
            assert torch.equal(value, b.flow.state_dict()[key]), key

    def test_resume_matches_uninterrupted(self, tmp_path, oracle_manifest, tiny_train_config):
        """Test stopping after one epoch and resuming reproduces the same losses."""
        two_epochs = replace(tiny_train_config, epochs=2)
        train(two_epochs, oracle_manifest, tmp_path / "full")
        train(tiny_train_config, oracle_manifest, tmp_path / "first")
        train(
            two_epochs,
            oracle_manifest,
            tmp_path / "resumed",
            resume_from=tmp_path / "first" / "ckpt_epoch0.bin",
        )
        full = read_records(tmp_path / "full" / "train.log")
        first = read_records(tmp_path / "first" / "train.log")
        resumed = read_records(tmp_path / "resumed" / "train.log")
        assert resumed[0].step == len(first)
        assert len(first) + len(resumed) == len(full)
        for expected, actual in zip(full[len(first):], resumed):
            assert actual.step == expected.step
            for name in ("nll", "wgan", "gp", "adv", "lr"):
                assert getattr(actual, name) == pytest.approx(getattr(expected, name), rel=1e-6)

    def test_flow_only_ablation(self, tmp_path, oracle_manifest, tiny_train_config):
        """Test a flow-only run produces a checkpoint without GAN components."""
        best = train(replace(tiny_train_config, enable_gan=False), oracle_manifest, tmp_path)
        assert load_noise_model(best).generator is None

    def test_gan_only_ablation(self, tmp_path, oracle_manifest, tiny_train_config):
        """Test a GAN-only run trains on top of the identity flow."""
        config = replace(
            tiny_train_config, enable_condlin=False, enable_sdl=False, enable_sal=False
        )
        bundle = load_noise_model(train(config, oracle_manifest, tmp_path))
        assert bundle.flow.specs == ()
        assert bundle.generator is not None

    def test_camera_filter_without_data(self, tmp_path, oracle_manifest, tiny_train_config):
        """Test filtering away every row is a validation error."""
        with pytest.raises(ValidationError):
            train(replace(tiny_train_config, camera_filter="IP"), oracle_manifest, tmp_path)

    def test_camera_filter_trains_on_one_camera(
        self, tmp_path, monkeypatch, oracle_params, tiny_train_config
    ):
        """Test every training batch comes from the filtered camera."""
        registry, conditions = oracle_conditions(["IP", "S6"], [100], 8)
        images = procedural_clean_images(8, 32, seed=0)
        manifest = generate_oracle_dataset(
            oracle_params, images, conditions, registry, seed=0, out_dir=tmp_path / "oracle"
        )
        cameras = []

        def record_cameras(batch, *args, **kwargs):
            cameras.append(batch["camera"].clone())
            return training_step(batch, *args, **kwargs)

        monkeypatch.setattr(training_service, "training_step", record_cameras)
        best = train(replace(tiny_train_config, camera_filter="S6"), manifest, tmp_path / "run")
        s6 = registry.condition_for("S6", 100).camera_type
        assert cameras
        assert all(bool((c == s6).all()) for c in cameras)
        assert load_noise_model(best).registry.cameras == ("IP", "S6")

    @pytest.mark.slow
    def test_nll_average_falls_over_first_steps(self, tmp_path, tiny_train_config):
        """Test the 50-step average NLL falls block after block over 500 steps."""
        params = SynthCameraParams(
            beta_s_sq=(0.0, 0.0, 0.0),
            beta_c_sq=(64.0, 64.0, 64.0),
            kernel=((1.0,),),
            gain_per_iso={100: 1.0},
        )
        registry, conditions = oracle_conditions(["S6"], [100], 32)
        images = procedural_clean_images(32, 64, seed=0)
        manifest = generate_oracle_dataset(
            params, images, conditions, registry, seed=0, out_dir=tmp_path / "oracle"
        )
        config = replace(
            tiny_train_config,
            enable_gan=False,
            epochs=100,
            max_steps=500,
            batch_size=16,
            patch_size=32,
            patch_stride=32,
            val_fraction=0.125,
            lr_initial=3e-5,
            lr_halving_period=1000,
        )
        train(config, manifest, tmp_path / "run")
        nll = [r.nll for r in read_records(tmp_path / "run" / "train.log")]
        assert len(nll) == 500
        averages = [sum(nll[i:i + 50]) / 50 for i in range(0, 500, 50)]
        assert all(later < earlier for earlier, later in zip(averages, averages[1:]))

    def test_divergence_names_last_checkpoint(
        self, tmp_path, monkeypatch, oracle_manifest, tiny_train_config
    ):
        """Test a non-finite loss aborts with the last good checkpoint."""
        train(tiny_train_config, oracle_manifest, tmp_path / "first")
        resume_from = tmp_path / "first" / "ckpt_epoch0.bin"

        def diverge(*args, **kwargs):
            raise NumericalError("Non-finite negative log-likelihood")

        monkeypatch.setattr(training_service, "nll_loss", diverge)
        with pytest.raises(DivergedError) as info:
            train(
                replace(tiny_train_config, epochs=2),
                oracle_manifest,
                tmp_path / "second",
                resume_from=resume_from,
            )
        assert info.value.last_checkpoint == str(resume_from)
        assert info.value.exit_code == 2
