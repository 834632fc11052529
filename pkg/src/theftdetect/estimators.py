"""Scikit-learn style classifiers wrapping the two network architectures.

Both estimators consume pre-built (n, 2, weeks, 7) batches (values + mask
channels) and train with mini-batch Adam on cross-entropy. Everything is
seeded and single-threaded, so fits are bit-reproducible.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import model as M
from . import tensor as T
from .validation import check_inputs, check_labels

__all__ = ["Adam", "HybridAttentionClassifier", "ConvNetClassifier"]


class Adam:
    """Standard Adam with bias correction, acting on named Tensor params."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in self.params}
        self.v = {name: np.zeros_like(t.data) for name, t in self.params}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None


class _NetClassifier(BaseEstimator, ClassifierMixin):
    """Shared fit/predict machinery; subclasses pick architecture."""

    def __init__(self, epochs=20, batch_size=64, lr=1e-3, seed=0, epoch_callback=None):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.epoch_callback = epoch_callback

    def _init_params(self, weeks):
        raise NotImplementedError

    def _forward(self, x):
        raise NotImplementedError

    def fit(self, X, y):
        """Train on (n, 2, weeks, 7) inputs and 0/1 labels."""
        X = check_inputs(X)
        y = check_labels(y, X.shape[0])
        self.classes_ = np.array([0, 1])
        rng = np.random.default_rng(self.seed)
        self.params_ = self._init_params(X.shape[2])
        opt = Adam(self.params_.named(), lr=self.lr)
        n = X.shape[0]
        self.loss_history_ = []
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                xb = T.tensor(X[idx])
                logits = self._forward(xb)
                loss = T.cross_entropy(logits, y[idx])
                lv = loss.item()
                if not np.isfinite(lv):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch}, batch {start // self.batch_size}, "
                        f"lr {self.lr}"
                    )
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(lv)
            mean_loss = float(np.mean(losses))
            self.loss_history_.append(mean_loss)
            if self.epoch_callback is not None:
                self.epoch_callback(self, epoch, mean_loss)
        return self

    def predict_proba(self, X):
        """Class probabilities, no gradient recording."""
        X = check_inputs(X)
        if not hasattr(self, "params_"):
            raise RuntimeError("classifier is not fitted")
        probs = np.empty((X.shape[0], 2))
        with T.no_grad():
            for start in range(0, X.shape[0], 256):
                xb = T.tensor(X[start : start + 256])
                logits = self._forward(xb)
                probs[start : start + 256] = T.softmax(logits).data
        return probs

    def decision_scores(self, X):
        """Predicted probability of the thief class."""
        return self.predict_proba(X)[:, 1]

    def predict(self, X, threshold=0.5):
        return (self.decision_scores(X) >= threshold).astype(np.int64)


class HybridAttentionClassifier(_NetClassifier):
    """Two hybrid attention/dilated-convolution layers plus a dense head."""

    def _init_params(self, weeks):
        return M.init_hybrid(self.seed, weeks)

    def _forward(self, x):
        return M.hybrid_model_forward(x, self.params_)


class ConvNetClassifier(_NetClassifier):
    """Three-layer CNN baseline (last layer dilated and strided)."""

    def __init__(self, epochs=100, batch_size=64, lr=1e-3, seed=0, epoch_callback=None):
        super().__init__(
            epochs=epochs, batch_size=batch_size, lr=lr, seed=seed,
            epoch_callback=epoch_callback,
        )

    def _init_params(self, weeks):
        return M.init_cnn(self.seed, weeks)

    def _forward(self, x):
        return M.cnn_forward(x, self.params_)
