import math
import pickle

import numpy as np
import pytest

from memformer_lfom import cache
from memformer_lfom import trainer
from memformer_lfom.config.model import TrainSettings
from memformer_lfom.exceptions import DivergenceError
from memformer_lfom.exceptions import NonFiniteGradientError
from memformer_lfom.exceptions import TrainingError
from memformer_lfom.trainer import AdamState
from memformer_lfom.trainer import RunRecord
from memformer_lfom.trainer import adam_step
from memformer_lfom.trainer import average_runs
from memformer_lfom.trainer import clip_matrix
from memformer_lfom.trainer import comparison_batch
from memformer_lfom.trainer import evaluate_log_loss
from memformer_lfom.trainer import train
from memformer_lfom.trainer import train_runs


@pytest.fixture
def run_cache_db():
    test_db = cache.init_test_db()
    yield test_db
    cache.clean_test_db(test_db)


class TestClipAndAdam:
    def test_clip_long_gradient(self):
        """Test that long gradients are rescaled to the maximum norm"""
        g = np.full((3, 3), 2.0)
        clipped = clip_matrix(g, 0.01)
        assert np.linalg.norm(clipped) == pytest.approx(0.01)
        np.testing.assert_allclose(clipped / np.linalg.norm(clipped), g / np.linalg.norm(g))

    def test_clip_short_gradient_untouched(self):
        """Test that short gradients pass through unchanged"""
        g = np.array([[0.001, -0.002]])
        assert clip_matrix(g, 0.01) is g

    def test_zero_gradient_keeps_params(self):
        """Test that ADAM does not move on a zero gradient"""
        params = {"A": np.array([[1.0, 2.0]])}
        state = AdamState.zeros(params)
        new, state = adam_step(params, {"A": np.zeros((1, 2))}, state, TrainSettings())
        np.testing.assert_array_equal(new["A"], params["A"])
        assert state.t == 1

    def test_first_step_is_sign_step(self):
        """Test that the bias-corrected first step has length lr per entry"""
        cfg = TrainSettings(lr=0.01)
        params = {"A": np.zeros((1, 2))}
        grads = {"A": np.array([[3.0, -0.5]])}
        new, _ = adam_step(params, grads, AdamState.zeros(params), cfg)
        np.testing.assert_allclose(new["A"], [[-0.01, 0.01]], rtol=1e-6)

    def test_constant_gradient_steps_tend_to_sign(self):
        """Test that a fixed gradient moves every entry by lr * sign(g) per step"""
        cfg = TrainSettings(lr=0.002)
        g = np.array([[3.0, -0.5], [1e-3, 0.0]])
        params = {"A": np.zeros((2, 2))}
        state = AdamState.zeros(params)
        for _ in range(200):
            previous = params["A"]
            params, state = adam_step(params, {"A": g}, state, cfg)
        np.testing.assert_allclose(
            params["A"] - previous, -cfg.lr * np.sign(g), rtol=1e-4, atol=1e-12
        )
        np.testing.assert_allclose(params["A"], -200 * cfg.lr * np.sign(g), rtol=1e-4)

    def test_inputs_not_modified(self):
        """Test that adam_step returns new arrays"""
        params = {"A": np.ones((2, 2))}
        state = AdamState.zeros(params)
        adam_step(params, {"A": np.ones((2, 2))}, state, TrainSettings())
        np.testing.assert_array_equal(params["A"], np.ones((2, 2)))
        np.testing.assert_array_equal(state.m["A"], np.zeros((2, 2)))

    def test_non_finite_gradient(self):
        """Test that NaN gradients name the parameter"""
        params = {"layers.0.heads.0.A": np.ones((1, 1))}
        with pytest.raises(NonFiniteGradientError, match="layers.0.heads.0.A"):
            adam_step(
                params,
                {"layers.0.heads.0.A": np.array([[np.nan]])},
                AdamState.zeros(params),
                TrainSettings(),
            )

    def test_gradient_shape_mismatch(self):
        """Test a gradient of the wrong shape"""
        params = {"A": np.ones((2, 2))}
        with pytest.raises(ValueError, match="gradient shape"):
            adam_step(params, {"A": np.ones((2, 1))}, AdamState.zeros(params), TrainSettings())


class TestTrain:
    def test_zero_steps(self, small_settings):
        """Test that no training leaves the evaluation at its initial value"""
        small_settings.train.steps = 0
        record = train(small_settings, run=0, progress=False)
        assert record.train_losses == []
        assert record.eval_log_loss == record.init_log_loss
        assert len(record.eval_log_loss) == small_settings.model.n_layers + 1
        assert not record.aborted

    def test_record_contents(self, small_settings):
        """Test the fields of a finished run"""
        record = train(small_settings, run=1, progress=False)
        assert record.run == 1
        assert len(record.train_losses) == small_settings.train.steps
        assert all(math.isfinite(v) for v in record.eval_log_loss)
        assert record.config["model"]["variant"] == "memformer_lfom"
        assert "workers" not in record.config["train"]
        params = record.params()
        assert params.d == 2 and params.n == 4

    def test_deterministic(self, small_settings):
        """Test that equal seeds give identical records"""
        first = train(small_settings, run=0, progress=False)
        second = train(small_settings, run=0, progress=False)
        assert first.train_losses == second.train_losses
        assert first.eval_log_loss == second.eval_log_loss
        assert first.checkpoint == second.checkpoint

    def test_runs_differ(self, small_settings):
        """Test that runs draw their own covariance and init"""
        first = train(small_settings, run=0, progress=False)
        second = train(small_settings, run=1, progress=False)
        assert first.init_log_loss != second.init_log_loss

    def test_training_reduces_loss_on_fixed_batch(self, small_settings):
        """Test that ADAM lowers the loss of a batch it keeps seeing"""
        small_settings.train.steps = 20
        small_settings.train.lr = 0.005
        small_settings.train.resample_every = 20
        small_settings.train.eval_on_train_batch = True
        record = train(small_settings, run=0, progress=False)
        assert record.train_losses[-1] < record.train_losses[0]

    def test_every_update_uses_clipped_gradients(self, small_settings, monkeypatch):
        """Test that each parameter gradient reaching ADAM is within the clip norm"""
        small_settings.train.steps = 6
        small_settings.train.clip_norm = 1e-4
        raw_norms = []
        clipped_norms = []

        def recording_clip(g, max_norm):
            raw_norms.append(float(np.linalg.norm(g)))
            return clip_matrix(g, max_norm)

        def recording_adam(params, grads, state, cfg):
            clipped_norms.append([float(np.linalg.norm(g)) for g in grads.values()])
            return adam_step(params, grads, state, cfg)

        monkeypatch.setattr(trainer, "clip_matrix", recording_clip)
        monkeypatch.setattr(trainer, "adam_step", recording_adam)
        record = train(small_settings, run=0, progress=False)

        assert not record.aborted
        assert len(clipped_norms) == 6
        for norms in clipped_norms:
            assert max(norms) <= 1e-4 + 1e-15
        assert max(raw_norms) > 1e-4

    def test_divergence_aborts_run(self, small_settings):
        """Test that a loss above the threshold marks the run aborted"""
        small_settings.train.divergence_threshold = 0.0
        record = train(small_settings, run=0, progress=False)
        assert record.aborted
        assert "step: 0" in record.abort_reason
        assert all(math.isnan(v) for v in record.eval_log_loss)
        assert record.checkpoint is not None

    def test_record_json_roundtrip_with_nan(self, small_settings):
        """Test that aborted records survive JSON serialization"""
        small_settings.train.divergence_threshold = 0.0
        record = train(small_settings, run=0, progress=False)
        restored = RunRecord.model_validate_json(record.model_dump_json())
        assert restored.aborted
        assert all(math.isnan(v) for v in restored.eval_log_loss)

    def test_record_without_checkpoint(self):
        """Test params() on a record that has no checkpoint"""
        with pytest.raises(ValueError, match="no checkpoint"):
            RunRecord(run=3, seed=0).params()


class TestComparisonBatch:
    def test_held_out_batch(self, small_settings):
        """Test the size of the held-out evaluation batch"""
        batch = comparison_batch(small_settings, run=0)
        assert len(batch) == small_settings.train.eval_batch_size

    def test_train_batch(self, small_settings):
        """Test that small-batch experiments evaluate on the first training batch"""
        small_settings.train.eval_on_train_batch = True
        batch = comparison_batch(small_settings, run=0)
        assert len(batch) == small_settings.train.batch_size

    def test_same_batch_as_training_evaluation(self, small_settings):
        """Test that baselines and the model see the same evaluation tasks"""
        small_settings.train.steps = 0
        record = train(small_settings, run=1, progress=False)
        batch = comparison_batch(small_settings, run=1)
        assert evaluate_log_loss(record.params(), batch) == record.eval_log_loss


class TestTrainRuns:
    def test_ordered_by_run(self, small_settings):
        """Test that records come back in run order"""
        records = train_runs(small_settings, progress=False)
        assert [r.run for r in records] == [0, 1]

    def test_worker_pool_matches_serial(self, small_settings):
        """Test that worker processes give the same records as a serial loop"""
        serial = train_runs(small_settings, progress=False)
        small_settings.train.workers = 2
        pooled = train_runs(small_settings, progress=False)
        for a, b in zip(serial, pooled, strict=True):
            assert a.eval_log_loss == b.eval_log_loss

    def test_cache_is_used(self, small_settings, run_cache_db, monkeypatch):
        """Test that a second call loads every run from the cache"""
        small_settings.basic.ignore_cache = False
        first = train_runs(small_settings, progress=False)

        def fail(*args, **kwargs):
            raise AssertionError("train should not be called")

        monkeypatch.setattr(trainer, "train", fail)
        second = train_runs(small_settings, progress=False)
        for a, b in zip(first, second, strict=True):
            assert a.eval_log_loss == b.eval_log_loss
            assert a.checkpoint == b.checkpoint

    def test_ignore_cache(self, small_settings, run_cache_db, monkeypatch):
        """Test that ignore_cache trains again"""
        small_settings.basic.ignore_cache = False
        train_runs(small_settings, progress=False)
        calls = []
        original = trainer.train

        def counting(settings, run, progress=True):
            calls.append(run)
            return original(settings, run, progress)

        monkeypatch.setattr(trainer, "train", counting)
        small_settings.basic.ignore_cache = True
        train_runs(small_settings, progress=False)
        assert calls == [0, 1]


class TestAverageRuns:
    def test_mean_and_stderr(self):
        """Test pointwise mean and std(ddof=1)/sqrt(runs)"""
        averaged = average_runs([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(averaged.mean, [2.0, 3.0])
        np.testing.assert_allclose(averaged.stderr, [1.0, 1.0])
        assert averaged.runs == 2

    def test_single_run_has_zero_stderr(self):
        """Test that one run gives a zero error band"""
        averaged = average_runs([[0.5, 0.25]])
        np.testing.assert_array_equal(averaged.stderr, [0.0, 0.0])

    def test_aborted_runs_left_out(self):
        """Test that aborted records do not enter the average"""
        good = RunRecord(run=0, seed=0, eval_log_loss=[1.0, 0.5])
        bad = RunRecord(
            run=1, seed=0, eval_log_loss=[math.nan, math.nan], aborted=True
        )
        averaged = average_runs([good, bad])
        assert averaged.runs == 1
        np.testing.assert_array_equal(averaged.mean, [1.0, 0.5])

    def test_all_aborted(self):
        """Test averaging when every run was aborted"""
        bad = RunRecord(run=0, seed=0, aborted=True)
        with pytest.raises(TrainingError, match="every run was aborted"):
            average_runs([bad])

    def test_errors(self):
        """Test empty input and mismatched lengths"""
        with pytest.raises(ValueError, match="at least one curve"):
            average_runs([])
        with pytest.raises(ValueError, match="mismatched lengths"):
            average_runs([[1.0, 2.0], [1.0]])


class TestTrainingErrors:
    @pytest.mark.parametrize(
        "error",
        [
            DivergenceError("loss 1e13 above threshold", step=7),
            NonFiniteGradientError("non-finite gradient", parameter="gates.0"),
        ],
    )
    def test_pickle_keeps_message(self, error):
        """Test that training errors cross process boundaries unchanged"""
        restored = pickle.loads(pickle.dumps(error))
        assert str(restored) == str(error)
