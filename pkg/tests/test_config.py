import pytest

from plasticity_lab.config import RunConfig, SweepSpec, parse_config
from plasticity_lab.errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_empty_config_with_problem_flag_applies_defaults(tmp_path):
    path = write(tmp_path, "")
    cfg = parse_config(path, ["problem=synthetic_permuted"]).resolved()
    assert cfg.problem == "synthetic_permuted"
    assert cfg.method == "baseline"
    assert cfg.num_tasks == 40
    assert cfg.steps_per_task == 50
    assert cfg.batch_size == 16
    assert cfg.hidden_widths == (30, 30)


def test_permuted_mnist_full_scale_defaults():
    cfg = RunConfig(problem="permuted_mnist").resolved()
    assert cfg.dataset_size == 10_000
    assert cfg.num_tasks == 500
    assert cfg.steps_per_task == 625
    assert cfg.batch_size == 16
    assert cfg.hidden_widths == (100, 100)


def test_random_label_full_scale_defaults():
    for problem in ("random_label_mnist", "random_label_cifar"):
        cfg = RunConfig(problem=problem).resolved()
        assert cfg.dataset_size == 1_200
        assert cfg.num_tasks == 50
        assert cfg.steps_per_task == 30_000
        assert cfg.batch_size == 16


def test_bad_value_names_key_and_line(tmp_path):
    path = write(tmp_path, "problem = synthetic_permuted\nlambda = banana\n")
    with pytest.raises(ConfigError, match=r"run\.cfg:2.*lambda"):
        parse_config(path)


def test_unknown_key_rejected(tmp_path):
    path = write(tmp_path, "stepsize = 3\n")
    with pytest.raises(ConfigError, match="stepsize"):
        parse_config(path)


def test_comments_and_blank_lines_ignored(tmp_path):
    path = write(tmp_path, "# a comment\n\nseed = 5  # trailing\n")
    assert parse_config(path).seed == 5


def test_overrides_beat_file_values(tmp_path):
    path = write(tmp_path, "alpha = 0.1\nseed = 1\n")
    cfg = parse_config(path, ["alpha=0.001"])
    assert cfg.alpha == 0.001
    assert cfg.seed == 1


def test_hidden_widths_parse(tmp_path):
    path = write(tmp_path, "hidden_widths = 30,30\n")
    assert parse_config(path).hidden_widths == (30, 30)


def test_malformed_line_rejected(tmp_path):
    path = write(tmp_path, "just words\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config(path)


def test_bad_override_format():
    with pytest.raises(ConfigError):
        parse_config(None, ["alpha"])


def test_unknown_choices_rejected():
    with pytest.raises(ConfigError, match="problem"):
        parse_config(None, ["problem=mnist"])
    with pytest.raises(ConfigError, match="method"):
        parse_config(None, ["method=dropout"])


def test_validate_requires_dataset_paths():
    with pytest.raises(ConfigError, match="mnist_images"):
        RunConfig(problem="permuted_mnist").resolved().validate()
    with pytest.raises(ConfigError, match="cifar_bin"):
        RunConfig(problem="random_label_cifar").resolved().validate()


def test_validate_rejects_cbp_on_cnn_problem():
    cfg = RunConfig(problem="random_label_cifar", method="continual_backprop", cifar_bin="x")
    with pytest.raises(ConfigError, match="continual_backprop"):
        cfg.resolved().validate()


def test_lambda_key_maps_to_lam_field():
    assert parse_config(None, ["lambda=0.5"]).lam == 0.5


# --- sweep grids ---------------------------------------------------------

def test_grid_matches_published_sweeps():
    base_sgd = RunConfig(problem="synthetic_permuted", optimizer="sgd")
    base_adam = RunConfig(problem="synthetic_permuted", optimizer="adam")

    cells = SweepSpec(base_adam, "l2_init").cells()
    assert len(cells) == 8  # 4 lambdas x 2 alphas
    assert {c["alpha"] for c in cells} == {1e-3, 1e-4}
    assert {c["lam"] for c in cells} == {1e-2, 1e-3, 1e-4, 1e-5}

    cells = SweepSpec(base_sgd, "shrink_perturb").cells()
    assert len(cells) == 32  # 4 shrink x 4 noise x 2 alphas
    assert {c["alpha"] for c in cells} == {1e-2, 1e-3}

    cells = SweepSpec(base_sgd, "continual_backprop").cells()
    assert {c["replacement_rate"] for c in cells} == {1e-4, 1e-5, 1e-6}

    assert len(SweepSpec(base_adam, "baseline").cells()) == 2
    assert len(SweepSpec(base_adam, "layer_norm").cells()) == 2
