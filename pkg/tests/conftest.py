import pytest

from synthdata import make_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """A small rendered corpus shared by the slower tests.

    4 training and 2 test utterances plus the two noise beds; building
    it once keeps the pipeline tests quick.
    """
    root = tmp_path_factory.mktemp("corpus")
    return make_corpus(root, n_train=4, n_test=2, seed=7)


def config_text(speech_dir, noise_dir, workdir, **kw):
    """Render a config file string for pipeline tests.

    Keyword overrides use the config-file key names; values are written
    with str(), so pass pre-formatted strings for lists.
    """
    values = {
        "snrs": "-3, 3",
        "slices_per_utt": "1",
        "test_fraction": "0.2",
        "kinds": "irm, orm",
        "hidden_units": "32",
        "hidden_layers": "2",
        "dropout_rate": "0.1",
        "batch_size": "128",
        "learning_rate": "0.01",
        "epochs": "3",
        "validation_fraction": "0.15",
        "seed": "11",
    }
    values.update({k: str(v) for k, v in kw.items()})
    return f"""\
[paths]
speech_dir = {speech_dir}
noise_dir = {noise_dir}
workdir = {workdir}

[mixing]
snrs = {values['snrs']}
slices_per_utt = {values['slices_per_utt']}
test_fraction = {values['test_fraction']}

[targets]
kinds = {values['kinds']}

[model]
hidden_units = {values['hidden_units']}
hidden_layers = {values['hidden_layers']}
dropout_rate = {values['dropout_rate']}

[training]
batch_size = {values['batch_size']}
learning_rate = {values['learning_rate']}
epochs = {values['epochs']}
validation_fraction = {values['validation_fraction']}

[run]
seed = {values['seed']}
"""
