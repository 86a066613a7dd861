import pytest

from qkdsim.rng import RandomSource


class ScriptedRandom(RandomSource):
    """RandomSource replaying fixed 64-bit words (bit() reads the top bit)."""

    def __init__(self, words):
        super().__init__(0)
        self.words = list(words)

    def next_u64(self):
        return self.words.pop(0)


def bits_to_words(bits):
    return [b << 63 for b in bits]


@pytest.fixture
def rng():
    return RandomSource(20240601)
