import json
import math
import os

import mock
import numpy as np
import pytest
import torch

from gbe_nav.experiment import ConfigError, ModelConfig, TrainConfig
from gbe_nav.learning import RolloutMode, rollout
from gbe_nav.nn import model_ckpt
from gbe_nav.nn.core import NonFiniteGradientError
from gbe_nav.tasks import trainer

MODULE_UNDER_TEST = "gbe_nav.tasks.trainer"

SMALL = ModelConfig(vision_dim=4, hidden_dim=8, word_dim=4)
FAST = TrainConfig(iterations=3, eval_every=0, checkpoint_every=0)


@pytest.fixture
def toy(square_world, episode_factory):
    episodes = [episode_factory(square_world, 0, episode_id="toy/0"),
                episode_factory(square_world, 1, episode_id="toy/1")]
    return {square_world.world_id: square_world}, episodes


def _digest(path):
    return model_ckpt.checkpoint_digest(model_ckpt.read_ckpt(path))


def test_zero_iterations_returns_the_initial_agent(toy):
    worlds, episodes = toy
    result = trainer.train(worlds, episodes, FAST._replace(iterations=0), SMALL)
    assert result.curve == []
    assert result.checkpoint is None
    initial = trainer.build_agent(SMALL, FAST.seed)
    for (name, p), (_, q) in zip(result.agent.named_parameters(), initial.named_parameters()):
        assert torch.equal(p, q), name


def test_training_is_deterministic(tmp_path, toy):
    worlds, episodes = toy
    first = trainer.train(worlds, episodes, FAST, SMALL, model_dir=str(tmp_path / "a"))
    second = trainer.train(worlds, episodes, FAST, SMALL, model_dir=str(tmp_path / "b"))
    other = trainer.train(worlds, episodes, FAST._replace(seed=1), SMALL,
                          model_dir=str(tmp_path / "c"))
    assert _digest(first.checkpoint) == _digest(second.checkpoint)
    assert _digest(first.checkpoint) != _digest(other.checkpoint)
    assert first.curve == second.curve


def test_training_updates_parameters(toy):
    worlds, episodes = toy
    result = trainer.train(worlds, episodes, FAST, SMALL)
    initial = trainer.build_agent(SMALL, FAST.seed)
    assert any(not torch.equal(p, q)
               for p, q in zip(result.agent.parameters(), initial.parameters()))
    assert len(result.curve) == 3
    for row in result.curve:
        assert all(math.isfinite(row[k]) for k in trainer.LOSS_COLUMNS)
        assert row["L_total"] >= row["L_nav"] + row["L_critic"] - 1e-9


def test_checkpoints_and_learning_curve(tmp_path, toy):
    worlds, episodes = toy
    model_dir = str(tmp_path)
    config = FAST._replace(iterations=4, checkpoint_every=2, eval_every=2, eval_episodes=1)
    result = trainer.train(worlds, episodes, config, SMALL, model_dir=model_dir,
                           eval_splits={"val": episodes})

    assert sorted(model_ckpt.list_ckpts(model_dir)) == [2, 4]
    assert os.path.basename(result.checkpoint) == "model_4.pt"
    final = model_ckpt.read_ckpt(result.checkpoint)
    assert final["final"]
    assert final["iteration"] == 4
    assert ModelConfig(**final["model_config"]) == SMALL
    assert not model_ckpt.read_ckpt(os.path.join(model_dir, "model_2.pt"))["final"]

    table = trainer.csv.read_csv(os.path.join(model_dir, trainer.LEARNING_CURVE)).to_pydict()
    assert list(table) == trainer.curve_columns(["val"])
    assert table["iteration"] == [0.0, 1.0, 2.0, 3.0]
    # rows without evaluation hold NaN, read back as null
    assert table["val_SR"][0] is None or math.isnan(table["val_SR"][0])
    assert 0.0 <= table["val_SR"][1] <= 1.0
    assert 0.0 <= table["val_SPL"][3] <= 1.0


def test_resumed_training_matches_uninterrupted_training(tmp_path, toy):
    worlds, episodes = toy
    config = FAST._replace(iterations=4, checkpoint_every=2)
    straight = trainer.train(worlds, episodes, config, SMALL, model_dir=str(tmp_path / "a"))

    resumed_dir = str(tmp_path / "b")
    trainer.train(worlds, episodes, config._replace(iterations=2), SMALL, model_dir=resumed_dir)
    resumed = trainer.train(worlds, episodes, config, SMALL, model_dir=resumed_dir, resume=True)

    assert _digest(resumed.checkpoint) == _digest(straight.checkpoint)
    assert resumed.curve == straight.curve
    assert model_ckpt.read_ckpt(resumed.checkpoint)["curve"] == straight.curve


def test_resume_without_checkpoint_starts_from_scratch(tmp_path, toy):
    worlds, episodes = toy
    fresh = trainer.train(worlds, episodes, FAST, SMALL, model_dir=str(tmp_path / "a"))
    resumed = trainer.train(worlds, episodes, FAST, SMALL, model_dir=str(tmp_path / "b"),
                            resume=True)
    assert _digest(resumed.checkpoint) == _digest(fresh.checkpoint)


def test_resume_refuses_mismatched_checkpoints(tmp_path, toy):
    worlds, episodes = toy
    model_dir = str(tmp_path)
    trainer.train(worlds, episodes, FAST, SMALL, model_dir=model_dir)
    with pytest.raises(ConfigError):
        trainer.train(worlds, episodes, FAST, SMALL._replace(zero_vision=True),
                      model_dir=model_dir, resume=True)
    with pytest.raises(ConfigError):
        trainer.train(worlds, episodes, FAST._replace(iterations=2), SMALL,
                      model_dir=model_dir, resume=True)


def test_debug_dump(tmp_path, toy):
    worlds, episodes = toy
    dump = str(tmp_path / "debug.jsonl")
    trainer.train(worlds, episodes, FAST._replace(iterations=2, batch_size=1), SMALL,
                  debug_path=dump)
    with open(dump) as fd:
        records = [json.loads(line) for line in fd]
    assert [r["mode"] for r in records] == ["il", "rl", "ge"] * 2
    for record in records:
        assert record["episode_id"] in {"toy/0", "toy/1"}
        for step in record["steps"]:
            assert set(step) >= {"node_ids", "edges", "visited", "frontier", "action"}
            assert 0 <= step["action"] <= len(step["frontier"])


def test_disabled_modes_are_not_rolled_out(toy):
    worlds, episodes = toy
    with mock.patch(f"{MODULE_UNDER_TEST}.rollout", wraps=rollout) as rollout_mock:
        trainer.train(worlds, episodes, FAST._replace(iterations=2, lambda_ge=0.0), SMALL)
    modes = [c[0][4] for c in rollout_mock.call_args_list]
    assert modes == [RolloutMode.IL, RolloutMode.RL] * 2


def test_tensorboard_scalars(toy):
    worlds, episodes = toy
    writer = mock.Mock()
    trainer.train(worlds, episodes, FAST._replace(iterations=2), SMALL, tb_writer=writer)
    tags = {c[0][0] for c in writer.add_scalar.call_args_list}
    assert tags == set(trainer.LOSS_COLUMNS)


def test_non_finite_loss_aborts(toy):
    worlds, episodes = toy
    with mock.patch(f"{MODULE_UNDER_TEST}.compute_losses") as compute_losses_mock:
        compute_losses_mock.return_value.total = torch.tensor(float("nan"))
        with pytest.raises(trainer.TrainingAborted):
            trainer.train(worlds, episodes, FAST, SMALL)


def test_non_finite_gradient_is_raised(toy):
    worlds, episodes = toy
    with mock.patch(f"{MODULE_UNDER_TEST}.rmsprop_step") as step_mock:
        step_mock.side_effect = NonFiniteGradientError("bad")
        with pytest.raises(NonFiniteGradientError):
            trainer.train(worlds, episodes, FAST, SMALL)


def test_invalid_inputs(toy):
    worlds, episodes = toy
    with pytest.raises(ValueError):
        trainer.train(worlds, [], FAST, SMALL)
    with pytest.raises(ConfigError):
        trainer.train(worlds, episodes, FAST._replace(gamma=0.0), SMALL)
    with pytest.raises(ConfigError):
        trainer.train(worlds, episodes, FAST, SMALL._replace(readout_scope="all"))


@pytest.mark.slow
def test_imitation_loss_decreases(line_world, episode_factory):
    episodes = [episode_factory(line_world, start, episode_id=f"toy/{start}")
                for start in (0, 1, 2)]
    config = TrainConfig(lambda_il=1.0, lambda_rl=0.0, lambda_ge=0.0, learning_rate=1e-2,
                         iterations=150, eval_every=0, checkpoint_every=0)
    result = trainer.train({line_world.world_id: line_world}, episodes, config, SMALL)
    losses = [row["L_il"] for row in result.curve]
    assert np.mean(losses[-20:]) < 0.5 * np.mean(losses[:20])
