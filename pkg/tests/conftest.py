import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from affectfusion.config import tiny_config
from affectfusion.data import Corpus, synth_dataset

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """4 short videos at mixed frame rates, 40 px frames; video 3 has no audio."""
    return synth_dataset(
        tmp_path_factory.mktemp("small") / "corpus",
        seed=1,
        num_videos=4,
        fps_list=(15, 25, 30, 24),
        duration=2.0,
        frame_size=40,
        drop_audio=(3,),
    )


@pytest.fixture
def small_corpus(small_corpus_dir):
    return Corpus(small_corpus_dir)


@pytest.fixture
def small_cfg(small_corpus_dir):
    return tiny_config(
        data={"corpus_dir": str(small_corpus_dir), "windows_per_video": 2, "window_length": 16},
        training={"batch_size": 4, "epochs": 2, "base_lr": 1e-5, "max_lr": 1e-3, "fusion_init_lr": 1e-3, "finetune_epochs": 2},
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
