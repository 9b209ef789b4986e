"""scikit-learn style wrappers.

``PiGAN`` fits a generator/discriminator pair and exposes the
discriminator's penultimate activations through ``transform``, so it drops
into a ``Pipeline`` in front of any classifier.  The two one-shot
classifiers wrap the evaluation routines with ``fit``/``predict``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .evaluation import classify, encode_features, one_shot_nn, train_linear_classifier
from .nn.presets import conv_discriminator, conv_generator, mlp_discriminator, mlp_generator
from .training import GanConfig, network_seeds, sample_prior, train


class PiGAN(TransformerMixin, BaseEstimator):
    """Adversarial training with the pi-weighted discriminator loss.

    ``architecture="auto"`` picks the MLP pair for (count, dims) data and the
    convolutional pair for (count, 1, h, w) images.

    >>> import numpy as np
    >>> X = np.random.default_rng(0).normal(size=(64, 2))
    >>> gan = PiGAN(pi=0.3, iterations=2, batch_size=16, latent_dim=4).fit(X)
    >>> gan.transform(X[:3]).shape
    (3, 128)
    >>> gan.sample(5).shape
    (5, 2)
    """

    def __init__(
        self,
        pi=0.5,
        k=None,
        batch_size=64,
        latent_dim=32,
        iterations=500,
        learning_rate=0.002,
        architecture="auto",
        random_state=0,
    ):
        self.pi = pi
        self.k = k
        self.batch_size = batch_size
        self.latent_dim = latent_dim
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.architecture = architecture
        self.random_state = random_state

    def _config(self):
        return GanConfig(
            pi=self.pi,
            k=self.k,
            m=self.batch_size,
            n=self.latent_dim,
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            seed=self.random_state,
            checkpoint_every=0,
            sample_every=0,
        )

    def _networks(self, X):
        arch = self.architecture
        if arch == "auto":
            arch = "conv" if X.ndim == 4 else "mlp"
        g_seed, d_seed = network_seeds(self.random_state)
        if arch == "mlp":
            if X.ndim != 2:
                raise ValueError("the mlp architecture needs (count, dims) data")
            dims = X.shape[1]
            return mlp_generator(self.latent_dim, out_dim=dims, seed=g_seed), mlp_discriminator(dims, seed=d_seed)
        if arch == "conv":
            if X.ndim != 4 or X.shape[1] != 1 or X.shape[2] != X.shape[3]:
                raise ValueError("the conv architecture needs (count, 1, s, s) images")
            s = X.shape[2]
            return (
                conv_generator(self.latent_dim, image_size=s, seed=g_seed),
                conv_discriminator(image_size=s, seed=d_seed),
            )
        raise ValueError(f"unknown architecture {self.architecture!r}")

    def fit(self, X, y=None):
        """Train on ``X``; labels are ignored."""
        X = np.asarray(X, dtype=np.float64)
        cfg = self._config()
        g, d = self._networks(X)
        state = train(g, d, X, cfg)
        self.generator_, self.discriminator_ = g, d
        self.history_ = state.history
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X):
        """Penultimate discriminator activations, one row per sample."""
        check_is_fitted(self, "discriminator_")
        return encode_features(self.discriminator_, X)

    def predict_proba(self, X):
        """Columns are P(generated) and P(real) according to the discriminator."""
        check_is_fitted(self, "discriminator_")
        p = self.discriminator_.predict(np.asarray(X, dtype=np.float64)).reshape(-1)
        return np.column_stack([1.0 - p, p])

    def sample(self, n_samples=1, random_state=None):
        """Generator output for ``n_samples`` fresh prior draws."""
        check_is_fitted(self, "generator_")
        rng = np.random.default_rng(random_state)
        return self.generator_.predict(sample_prior(self.latent_dim, int(n_samples), rng))

    def generate(self, z):
        check_is_fitted(self, "generator_")
        return self.generator_.predict(np.atleast_2d(np.asarray(z, dtype=np.float64)))


def _one_per_class(y):
    y = np.asarray(y)
    if len(np.unique(y)) != len(y):
        raise ValueError("one-shot classifiers take exactly one example per class")
    return y


class OneShotNearestNeighbor(ClassifierMixin, BaseEstimator):
    """Cosine nearest neighbour over one example per class."""

    def fit(self, X, y):
        self.support_ = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        self.classes_ = _one_per_class(y)
        return self

    def predict(self, X):
        check_is_fitted(self, "support_")
        X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        return one_shot_nn(self.support_, self.classes_, X)[0]


class OneVsRestHinge(ClassifierMixin, BaseEstimator):
    """Linear one-vs-rest hinge classifier trained by subgradient descent."""

    def __init__(self, lam=1e-3, steps=500, step_size=0.1, normalize=True, center=True):
        self.lam = lam
        self.steps = steps
        self.step_size = step_size
        self.normalize = normalize
        self.center = center

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        self.model_ = train_linear_classifier(
            X,
            _one_per_class(y),
            lam=self.lam,
            steps=self.steps,
            step_size=self.step_size,
            normalize=self.normalize,
            center=self.center,
        )
        self.classes_ = self.model_.classes
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.scores(np.asarray(X, dtype=np.float64).reshape(len(X), -1))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return classify(self.model_, np.asarray(X, dtype=np.float64).reshape(len(X), -1))
