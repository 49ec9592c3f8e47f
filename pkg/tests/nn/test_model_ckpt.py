import os
import tempfile

import torch
import numpy as np
import mock

from gbe_nav.nn import model_ckpt


MODULE_UNDER_TEST = "gbe_nav.nn.model_ckpt"


class DummyModel(torch.nn.Module):
    def __init__(self) -> None:
        super(DummyModel, self).__init__()
        self.fc = torch.nn.Linear(13, 13).to(torch.float64)

    def forward(self) -> None:
        pass


def _trained(seed):
    torch.manual_seed(seed)
    model = DummyModel()
    optimizer = torch.optim.RMSprop(model.parameters(), lr=0.001, alpha=0.99, eps=1e-8)
    model.fc(torch.ones(13, dtype=torch.float64)).sum().backward()
    optimizer.step()
    return model, optimizer


def test_model_checkpointing():
    with tempfile.TemporaryDirectory() as tmp:
        model, optimizer = _trained(0)
        ckpt_path = model_ckpt.save_ckpt(tmp, model, optimizer, 0, **{"key": "value"})
        new_model = DummyModel()
        new_optimizer = torch.optim.RMSprop(new_model.parameters(), lr=0.001)
        ckpt_dict = model_ckpt.load_ckpt(ckpt_path, new_model, new_optimizer)

        new_model_params = list(new_model.parameters())
        model_params = list(model.parameters())
        assert len(new_model_params) == len(model_params)
        for n in range(len(new_model_params)):
            np.testing.assert_array_equal(
                new_model_params[n].detach().numpy(),
                model_params[n].detach().numpy()
            )
        assert model_ckpt.checkpoint_digest(
            {"model": new_model.state_dict(), "optimizer": new_optimizer.state_dict()}
        ) == model_ckpt.checkpoint_digest(ckpt_dict)
        assert ckpt_dict.get("key", None) == "value"
        assert ckpt_dict.get("iteration", None) == 0


def test_latest_checkpoint():
    with tempfile.TemporaryDirectory() as tmp:
        model, optimizer = _trained(0)
        assert model_ckpt.find_latest_ckpt(tmp) is None
        assert model_ckpt.load_latest_ckpt(tmp, model) is None
        for iteration in (0, 10, 2):
            model_ckpt.save_ckpt(tmp, model, optimizer, iteration)

        ckpts = model_ckpt.list_ckpts(tmp)
        assert sorted(ckpts) == [0, 2, 10]
        latest = model_ckpt.find_latest_ckpt(tmp)
        assert os.path.basename(latest) == "model_10.pt"
        assert model_ckpt.load_latest_ckpt(tmp, DummyModel())["iteration"] == 10


def test_list_ckpts_of_missing_dir():
    with tempfile.TemporaryDirectory() as tmp:
        assert model_ckpt.list_ckpts(os.path.join(tmp, "missing")) == {}


def test_checkpoint_digest():
    first = _trained(0)
    same = _trained(0)
    other = _trained(1)

    def digest(model, optimizer):
        return model_ckpt.checkpoint_digest(
            {"model": model.state_dict(), "optimizer": optimizer.state_dict()})

    assert digest(*first) == digest(*same)
    assert digest(*first) != digest(*other)
    assert len(digest(*first)) == 64


def test_save_creates_the_model_dir():
    with tempfile.TemporaryDirectory() as tmp:
        model_dir = os.path.join(tmp, "model")
        model, optimizer = _trained(0)
        path = model_ckpt.save_ckpt(model_dir, model, optimizer, 3)
        assert path == os.path.join(model_dir, "model_3.pt")
        assert os.path.exists(path)


def test_read_ckpt_loads_on_cpu():
    with mock.patch(f"{MODULE_UNDER_TEST}.torch") as torch_mock, \
            mock.patch(f"{MODULE_UNDER_TEST}.filesystem") as fs_mock:
        fs = mock.MagicMock()
        fs_mock.resolve_filesystem_and_path.return_value = (fs, "path")
        model_ckpt.read_ckpt("hdfs://root/model_1.pt")
        fs.open.assert_called_once_with("hdfs://root/model_1.pt", "rb")
        assert torch_mock.load.call_args[1] == {"map_location": "cpu"}
