import numpy as np
import pytest

from memformer_lfom.autodiff import Tape
from memformer_lfom.config.model import ModelSettings
from memformer_lfom.model import gdpp_enable
from memformer_lfom.model import init_params
from memformer_lfom.model import zero_params
from memformer_lfom.model.params import gate_name


def _init(seed=0, d=3, n=4, **model):
    return init_params(ModelSettings(**model), d, n, np.random.default_rng(seed))


class TestInitParams:
    def test_linear_tf_names_and_shapes(self):
        """Test the parameter set of a two-head linear Transformer"""
        params = _init(variant="linear_tf", n_layers=2, heads=2)
        assert sorted(params.values) == [
            "layers.0.heads.0.A",
            "layers.0.heads.0.B",
            "layers.0.heads.1.A",
            "layers.0.heads.1.B",
            "layers.1.heads.0.A",
            "layers.1.heads.0.B",
            "layers.1.heads.1.A",
            "layers.1.heads.1.B",
        ]
        assert params.trainable == {k for k in params.values if k.endswith(".A")}
        for name, value in params.values.items():
            assert value.shape == (3, 3), name
            if name.endswith(".B"):
                np.testing.assert_array_equal(value, np.zeros((3, 3)))

    def test_memformer_cgd_scalars(self):
        """Test alpha = 1 and gamma = 0 at initialization"""
        params = _init(variant="memformer_cgd", n_layers=3)
        for l in range(3):
            np.testing.assert_array_equal(params.values[f"layers.{l}.alpha"], [[1.0]])
            np.testing.assert_array_equal(params.values[f"layers.{l}.gamma"], [[0.0]])
            assert f"layers.{l}.alpha" in params.trainable
            assert f"layers.{l}.gamma" in params.trainable

    def test_tied_gates(self):
        """Test that tied gates give one Gamma_j per register"""
        params = _init(variant="memformer_lfom", n_layers=3, d=2, n=5)
        gates = sorted(k for k in params.values if "gates" in k)
        assert gates == ["gates.0", "gates.1", "gates.2"]
        assert params.values["gates.0"].shape == (3, 6)

    def test_untied_gates(self):
        """Test that untied gates give one Gamma_j^l per layer and register"""
        params = _init(variant="memformer_lfom", n_layers=3, untie_gamma=True)
        gates = sorted(k for k in params.values if "gates" in k)
        assert gates == [
            "layers.0.gates.0",
            "layers.1.gates.0",
            "layers.1.gates.1",
            "layers.2.gates.0",
            "layers.2.gates.1",
            "layers.2.gates.2",
        ]

    def test_scalar_gates_and_preconditioners(self):
        """Test 1x1 shapes for the scalar restrictions"""
        params = _init(
            variant="memformer_lfom",
            n_layers=2,
            scalar_gamma=True,
            scalar_preconditioner=True,
        )
        assert params.values["gates.1"].shape == (1, 1)
        assert params.values["layers.1.heads.0.A"].shape == (1, 1)
        assert params.values["layers.1.heads.0.B"].shape == (3, 3)

    def test_same_seed_same_params(self):
        """Test that a seed always maps to the same parameters"""
        a = _init(seed=11, variant="memformer_lfom", n_layers=3)
        b = _init(seed=11, variant="memformer_lfom", n_layers=3)
        for name in a.values:
            np.testing.assert_array_equal(a.values[name], b.values[name])

    def test_init_std(self):
        """Test the Gaussian scale of A"""
        params = init_params(
            ModelSettings(variant="linear_tf", n_layers=1),
            40,
            4,
            np.random.default_rng(0),
            init_std=0.5,
        )
        assert np.std(params.values["layers.0.heads.0.A"]) == pytest.approx(0.5, rel=0.05)

    def test_invalid_config(self):
        """Test that init validates the model settings"""
        with pytest.raises(ValueError, match="Invalid variant"):
            _init(variant="rnn")

    def test_zero_params(self):
        """Test that zero params are zero apart from alpha"""
        params = zero_params(ModelSettings(variant="memformer_cgd", n_layers=2), 2, 3)
        for name, value in params.values.items():
            expected = 1.0 if name.endswith("alpha") else 0.0
            assert np.all(value == expected), name


class TestGdpp:
    def test_b_trainable_for_gdpp(self):
        """Test that the GD++ variant trains B"""
        params = _init(variant="memformer_lfom_gdpp", n_layers=2)
        assert "layers.0.heads.0.B" in params.trainable
        assert "layers.1.heads.0.B" in params.trainable

    def test_enable_rejects_other_variants(self):
        """Test gdpp_enable outside the GD++ variant"""
        with pytest.raises(ValueError, match="only trainable"):
            gdpp_enable(_init(variant="memformer_lfom"))

    def test_enable_does_not_mutate(self):
        """Test that gdpp_enable returns a copy"""
        params = _init(variant="memformer_lfom_gdpp", n_layers=1)
        params.trainable.discard("layers.0.heads.0.B")
        enabled = gdpp_enable(params)
        assert "layers.0.heads.0.B" in enabled.trainable
        assert "layers.0.heads.0.B" not in params.trainable


class TestMemformerParams:
    def test_named_parameters_sorted(self):
        """Test that named_parameters lists trainables in name order"""
        params = _init(variant="memformer_cgd", n_layers=2)
        names = list(params.named_parameters())
        assert names == sorted(params.trainable)

    def test_from_named_replaces_copy(self):
        """Test from_named leaves the original untouched"""
        params = _init(variant="linear_tf", n_layers=1)
        original = params.values["layers.0.heads.0.A"].copy()
        updated = params.from_named({"layers.0.heads.0.A": np.eye(3)})
        np.testing.assert_array_equal(updated.values["layers.0.heads.0.A"], np.eye(3))
        np.testing.assert_array_equal(params.values["layers.0.heads.0.A"], original)

    def test_from_named_errors(self):
        """Test unknown names and wrong shapes"""
        params = _init(variant="linear_tf", n_layers=1)
        with pytest.raises(KeyError):
            params.from_named({"layers.5.heads.0.A": np.eye(3)})
        with pytest.raises(ValueError, match="does not match"):
            params.from_named({"layers.0.heads.0.A": np.eye(2)})

    def test_unknown_trainable(self):
        """Test that trainable names need values"""
        params = _init(variant="linear_tf", n_layers=1)
        with pytest.raises(ValueError, match="without values"):
            type(params)(
                config=params.config,
                d=params.d,
                n=params.n,
                values=params.values,
                trainable={"ghost"},
            )

    def test_bind_records_parameters_and_constants(self):
        """Test that only trainable matrices become tape parameters"""
        params = _init(variant="memformer_lfom", n_layers=2)
        tape = Tape()
        bound = params.bind(tape)
        assert set(tape.parameters()) == params.trainable
        assert len(bound.layers) == 2
        assert len(bound.layers[1].gates) == 2
        assert bound.layers[0].gates[0] is bound.layers[1].gates[0]

    def test_gate_name(self):
        """Test tied and untied gate names"""
        assert gate_name(ModelSettings(), 2, 1) == "gates.1"
        assert gate_name(ModelSettings(untie_gamma=True), 2, 1) == "layers.2.gates.1"
