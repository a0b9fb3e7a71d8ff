import pytest

from emocause.corpus import Conversation, DatasetSplit, EmotionCausePair, Utterance, write_split


@pytest.fixture
def casino_conversation() -> Conversation:
    """The five-utterance worked example used throughout the tests."""
    utterances = (
        Utterance(1, "Chandler", "Hey Pheebs!", gold_emotion="joy"),
        Utterance(2, "Phoebe", "Ohh! You made up!", gold_emotion="surprise"),
        Utterance(3, "Monica", "Yeah, I couldn't be mad at him for too long.", gold_emotion="joy"),
        Utterance(4, "Chandler", "Yeah, she couldn't live without the Chan Love.", gold_emotion="joy"),
        Utterance(5, "Phoebe", "Ohh, get a room.", gold_emotion="disgust"),
    )
    pairs = (
        EmotionCausePair(4, "joy", 2),
        EmotionCausePair(4, "joy", 3),
        EmotionCausePair(5, "disgust", 5),
    )
    return Conversation(id="conv_1", utterances=utterances, gold_pairs=pairs)


@pytest.fixture
def casino_split(casino_conversation) -> DatasetSplit:
    return DatasetSplit(name="demo", conversations=(casino_conversation,))


@pytest.fixture
def casino_split_file(tmp_path, casino_split):
    path = tmp_path / "demo.json"
    write_split(casino_split, path)
    return path
