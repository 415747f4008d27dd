import numpy as np

from capstack.captioner import ModelConfig, build_model


def make_tiny_model(variant, seed=0, vocab_size=5, feat_dim=3, regions=2,
                    hidden=4, embed=3, att=3, randomize=True):
    """Small caption model with every parameter (biases included) randomized."""
    config = ModelConfig(
        variant=variant,
        vocab_size=vocab_size,
        feat_dim=feat_dim,
        hidden_size=hidden,
        embed_dim=embed,
        attention_dim=att,
        seed=seed,
    )
    model = build_model(config)
    if randomize:
        rng = np.random.default_rng(seed + 1000)
        for p in model.parameters():
            p.data = rng.uniform(-0.6, 0.6, size=p.data.shape)
    return model


def make_annotations(seed, regions=2, feat_dim=3):
    return np.random.default_rng(seed).uniform(-1, 1, size=(regions, feat_dim))
