import csv
import warnings

import numpy as np
import pytest

from cvradar.datacube import ManifestEntry, MaterialClass, load_cubes
from cvradar.dsp import PreprocMode
from cvradar.errors import ConfigError, SplitError, TrainingDivergedError
from cvradar.model import ModelConfig, build_model
from cvradar.trainer import Adam, TrainConfig, iter_batches, prepare_inputs, stratified_split, train

TOY_MODEL = dict(input_height=16, input_width=32, conv1_filters=4, conv2_filters=2, seed=0)


def entries_for_cells(cells):
    """cells: {(label, distance): count} -> synthetic manifest entries."""
    out = []
    i = 0
    for (label, distance), count in cells.items():
        for _ in range(count):
            out.append(ManifestEntry(path=f"x{i}.rdc", label=label, distance_mm=distance,
                                     session_id=0, split="train"))
            i += 1
    return out


class TestStratifiedSplit:
    def test_eighty_twenty_per_cell(self):
        cells = {(m, d): 10 for m in MaterialClass for d in (500, 700)}
        train_e, test_e = stratified_split(entries_for_cells(cells), 0.8, seed=0)
        assert len(train_e) == 80
        assert len(test_e) == 20
        for m in MaterialClass:
            for d in (500, 700):
                assert sum(1 for e in train_e if e.label == m and e.distance_mm == d) == 8
                assert sum(1 for e in test_e if e.label == m and e.distance_mm == d) == 2

    def test_fraction_one_empty_test_with_warning(self):
        cells = {(MaterialClass.METAL, 500): 4}
        with pytest.warns(UserWarning, match="empty"):
            train_e, test_e = stratified_split(entries_for_cells(cells), 1.0, seed=0)
        assert len(train_e) == 4
        assert test_e == []

    def test_shuffled_input_same_membership(self):
        cells = {(m, d): 6 for m in MaterialClass for d in (500, 700, 1000)}
        entries = entries_for_cells(cells)
        rng = np.random.default_rng(5)
        shuffled = [entries[i] for i in rng.permutation(len(entries))]
        a_train, a_test = stratified_split(entries, 0.8, seed=3)
        b_train, b_test = stratified_split(shuffled, 0.8, seed=3)
        assert {e.path for e in a_train} == {e.path for e in b_train}
        assert {e.path for e in a_test} == {e.path for e in b_test}

    def test_small_cell_error_names_cell(self):
        cells = {(MaterialClass.METAL, 500): 4, (MaterialClass.WOOD, 700): 1}
        with pytest.raises(SplitError, match="wood.*700"):
            stratified_split(entries_for_cells(cells), 0.8, seed=0)

    def test_returned_tags(self):
        cells = {(MaterialClass.METAL, 500): 5}
        train_e, test_e = stratified_split(entries_for_cells(cells), 0.8, seed=0)
        assert all(e.split == "train" for e in train_e)
        assert all(e.split == "test_d0" for e in test_e)

    def test_d1_entries_pass_through_untouched(self):
        entries = entries_for_cells({(MaterialClass.METAL, 500): 4})
        entries.append(ManifestEntry("d1.rdc", MaterialClass.METAL, 600, 0, "test_d1"))
        train_e, test_e = stratified_split(entries, 0.5, seed=0)
        assert all(e.distance_mm == 500 for e in train_e + test_e)

    def test_small_cells_keep_one_test_sample(self):
        cells = {(MaterialClass.METAL, 500): 2}
        train_e, test_e = stratified_split(entries_for_cells(cells), 0.8, seed=0)
        assert (len(train_e), len(test_e)) == (1, 1)


class TestBatching:
    def test_every_sample_exactly_once(self):
        rng = np.random.default_rng(0)
        batches = list(iter_batches(23, 8, rng))
        assert [len(b) for b in batches] == [8, 8, 7]  # last partial batch kept
        assert sorted(np.concatenate(batches).tolist()) == list(range(23))

    def test_epoch_shuffle_is_seeded(self):
        a = list(iter_batches(10, 4, np.random.default_rng(1)))
        b = list(iter_batches(10, 4, np.random.default_rng(1)))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestAdam:
    def test_zero_learning_rate_is_identity(self, toy_two_class):
        model = build_model(ModelConfig(**TOY_MODEL))
        param_bytes = lambda: b"".join(p.data.tobytes() for p in model.parameters())
        before = param_bytes()
        cfg = TrainConfig(preproc_mode=PreprocMode.RANGE_FFT, learning_rate=0.0, epochs=2)
        train(model, toy_two_class, cfg)
        # weights bitwise unchanged (batch-norm running stats are state, not weights)
        assert param_bytes() == before

    def test_single_step_decreases_loss(self, toy_two_class):
        from cvradar.cvnn.layers import softmax_cross_entropy
        from cvradar.cvnn.tensor import CTensor

        model = build_model(ModelConfig(**{**TOY_MODEL, "seed": 1}))
        model.train_mode()
        x, y = prepare_inputs(toy_two_class, PreprocMode.RANGE_FFT, "f32")

        def batch_loss():
            return softmax_cross_entropy(model.forward(CTensor(x[:16])), y[:16])

        first = batch_loss()
        optimizer = Adam(model.parameters(), lr=1e-5)
        optimizer.zero_grad()
        first.backward()
        optimizer.step()
        assert float(batch_loss().data) < float(first.data)

    def test_complex_moments_update_components_independently(self):
        from cvradar.cvnn.tensor import CTensor

        p = CTensor(np.array([1.0 + 1.0j]), requires_grad=True)
        p.grad = np.array([1.0 + 0j])  # gradient only on the real part
        opt = Adam([p], lr=0.1)
        opt.step()
        assert p.data[0].imag == 1.0  # imaginary part untouched
        assert p.data[0].real < 1.0


class TestTrain:
    def test_toy_two_class_reaches_full_accuracy(self, toy_two_class):
        model = build_model(ModelConfig(**TOY_MODEL))
        cfg = TrainConfig(preproc_mode=PreprocMode.RANGE_FFT, batch_size=4, seed=0)
        records = train(model, toy_two_class, cfg)
        assert len(records) == 10
        assert records[-1].train_acc == 1.0

    def test_loss_monotone_after_transient(self, toy_two_class):
        model = build_model(ModelConfig(**TOY_MODEL))
        cfg = TrainConfig(preproc_mode=PreprocMode.RANGE_FFT, batch_size=4, seed=0)
        losses = [r.loss for r in train(model, toy_two_class, cfg)]
        for i in range(2, len(losses) - 1):
            assert losses[i + 1] <= losses[i] + 1e-9

    def test_deterministic_replay_f64(self, toy_two_class):
        cfg = TrainConfig(preproc_mode=PreprocMode.RAW_IQ, epochs=3, seed=4, precision="f64")
        curves = []
        for _ in range(2):
            model = build_model(ModelConfig(**{**TOY_MODEL, "precision": "f64", "conv1_filters": 2}))
            curves.append([r.loss for r in train(model, toy_two_class, cfg)])
        assert all(abs(a - b) <= 1e-12 for a, b in zip(*curves))

    def test_nan_loss_aborts_with_diagnostics(self, toy_two_class):
        model = build_model(ModelConfig(**TOY_MODEL))
        model.dense.weight.data[0, 0] = np.nan
        with pytest.raises(TrainingDivergedError, match="parameter norms"):
            train(model, toy_two_class, TrainConfig(preproc_mode=PreprocMode.RAW_IQ, epochs=1))

    def test_empty_dataset_rejected(self):
        model = build_model(ModelConfig(**TOY_MODEL))
        with pytest.raises(ConfigError, match="empty"):
            train(model, [], TrainConfig())

    def test_precision_mismatch_rejected(self, toy_two_class):
        model = build_model(ModelConfig(**TOY_MODEL))
        with pytest.raises(ConfigError, match="precision"):
            train(model, toy_two_class, TrainConfig(precision="f64"))

    def test_csv_log(self, toy_two_class, tmp_path):
        model = build_model(ModelConfig(**TOY_MODEL))
        log = tmp_path / "train.csv"
        train(model, toy_two_class, TrainConfig(preproc_mode=PreprocMode.RAW_IQ, epochs=2), log_path=log)
        with open(log) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "loss", "train_acc", "wall_ms"]
        assert len(rows) == 3
        assert rows[1][0] == "1"

    def test_epoch_zero_writes_header_only(self, toy_two_class, tmp_path):
        model = build_model(ModelConfig(**TOY_MODEL))
        before = model.state_bytes()
        log = tmp_path / "empty.csv"
        records = train(model, toy_two_class, TrainConfig(epochs=0), log_path=log)
        assert records == []
        assert model.state_bytes() == before
        with open(log) as fh:
            assert len(list(csv.reader(fh))) == 1


class TestTrainConfig:
    def test_defaults_match_regimen(self):
        cfg = TrainConfig()
        assert cfg.epochs == 10
        assert cfg.batch_size == 16

    def test_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=-1)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(split_fraction=0.0)
