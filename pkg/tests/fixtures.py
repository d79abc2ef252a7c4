"""Small synthetic corpora and models shared by the test modules."""

from dataclasses import dataclass

from newsrec.data import Corpus
from newsrec.model import ModelConfig, NewsRecommender
from newsrec.news_encoder import NewsFeatures
from newsrec.rng import RngState
from newsrec.synthetic import SyntheticSpec, generate

SMALL_MODEL = dict(d_w=16, n_f=16, d_a=8, d_c=8, d_att=8, predictor_hidden=[16, 8],
                   embedding_mode="random")


@dataclass
class Tiny:
    corpus: Corpus
    train: list
    val: list
    news_path: object
    train_path: object
    val_path: object

    def model(self, seed=0, **overrides):
        config = ModelConfig(**dict(SMALL_MODEL, **overrides))
        c = self.corpus
        return NewsRecommender.create(config, NewsFeatures.from_articles(c.news), len(c.vocab),
                                      len(c.categories), len(c.subcategories), len(c.users),
                                      RngState(seed))


def tiny_setup(directory, spec=None, n_train=None):
    spec = spec or SyntheticSpec(vocab_size=120, n_news=60, n_users=12, n_impressions=60, seed=2)
    syn = generate(spec)
    n_train = n_train if n_train is not None else len(syn.behaviors_rows) * 4 // 5
    news_path, train_path = syn.write(directory, syn.behaviors_rows[:n_train], "train.tsv")
    _, val_path = syn.write(directory, syn.behaviors_rows[n_train:], "val.tsv")
    corpus = Corpus()
    corpus.parse_news_tsv(news_path)
    train, _ = corpus.parse_behaviors_tsv(train_path)
    corpus.freeze()
    val, _ = corpus.parse_behaviors_tsv(val_path)
    return Tiny(corpus, train, val, news_path, train_path, val_path)
