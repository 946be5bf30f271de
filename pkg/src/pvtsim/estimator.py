"""Scikit-learn estimator facade over the federated simulator.

FederatedPVTClassifier trains the block network by simulated federated
rounds on data partitioned across virtual clients, with per-client partial
variable freezing. It follows the estimator contract (get_params /
set_params via BaseEstimator, fit returns self, fitted attributes carry a
trailing underscore), so it composes with pipelines, grid search and
cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .client import ClientConfig
from .data import Dataset, partition_iid, partition_noniid
from .freezing import Scheme, SchemeConfig
from .nn import BlockSpec, init_model, predict_logits
from .server import RoundConfig, run_round

_SCHEMES = {
    "fixed": Scheme.FIXED,
    "pr": Scheme.PER_ROUND,
    "pcpr": Scheme.PER_CLIENT_PER_ROUND,
}


class FederatedPVTClassifier(ClassifierMixin, BaseEstimator):
    """Classifier trained by federated simulation with partial variable training.

    Parameters
    ----------
    hidden_dims : tuple of int
        Hidden widths of the block network (relu blocks; the output block
        is identity into softmax cross-entropy).
    scheme : {"pcpr", "pr", "fixed"}
        How frozen-variable sets vary across rounds and clients.
    freeze_fraction : float
        Fraction of freezable variables frozen on each client each round.
    num_clients : int
        Virtual client population the training data is partitioned over.
    clients_per_round : int
        Cohort size sampled each round.
    local_steps, batch_size, client_lr
        Per-client SGD configuration.
    server_lr : float
        Scale on the aggregated delta applied by the server.
    rounds : int
        Federated rounds to run.
    partition : {"iid", "dirichlet"}
        Client data split; "dirichlet" adds label skew with concentration
        ``alpha``.
    alpha : float
        Dirichlet concentration for the non-IID split.
    random_state : int
        Master seed; fixes the entire simulation bit-for-bit.

    Attributes
    ----------
    classes_ : ndarray of unique labels seen in fit
    model_ : trained ModelState
    history_ : list of per-round RoundMetrics
    n_features_in_ : int
    """

    def __init__(
        self,
        hidden_dims=(16,),
        scheme="pcpr",
        freeze_fraction=0.9,
        num_clients=16,
        clients_per_round=8,
        local_steps=5,
        batch_size=16,
        client_lr=0.3,
        server_lr=1.0,
        rounds=100,
        partition="iid",
        alpha=0.5,
        random_state=0,
    ):
        self.hidden_dims = hidden_dims
        self.scheme = scheme
        self.freeze_fraction = freeze_fraction
        self.num_clients = num_clients
        self.clients_per_round = clients_per_round
        self.local_steps = local_steps
        self.batch_size = batch_size
        self.client_lr = client_lr
        self.server_lr = server_lr
        self.rounds = rounds
        self.partition = partition
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"scheme must be one of {sorted(_SCHEMES)}")
        if self.partition not in ("iid", "dirichlet"):
            raise ValueError("partition must be 'iid' or 'dirichlet'")
        self.n_features_in_ = X.shape[1]

        encoded = np.searchsorted(self.classes_, y)
        train = Dataset(features=X, labels=encoded)
        if self.partition == "iid":
            split = partition_iid(train, self.num_clients, seed=self.random_state)
        else:
            split = partition_noniid(
                train, self.num_clients, self.alpha, seed=self.random_state
            )

        dims = [self.n_features_in_, *self.hidden_dims, len(self.classes_)]
        specs = [
            BlockSpec(dims[i], dims[i + 1], "relu" if i + 2 < len(dims) else "identity")
            for i in range(len(dims) - 1)
        ]
        model = init_model(specs, seed=self.random_state)
        round_cfg = RoundConfig(
            clients_per_round=self.clients_per_round,
            scheme_cfg=SchemeConfig(
                scheme=_SCHEMES[self.scheme],
                freeze_fraction=self.freeze_fraction,
                master_seed=self.random_state,
            ),
            client_cfg=ClientConfig(
                local_steps=self.local_steps,
                batch_size=self.batch_size,
                learning_rate=self.client_lr,
            ),
            server_lr=self.server_lr,
        )

        self.history_ = []
        for r in range(self.rounds):
            model, metrics = run_round(model, r, round_cfg, train, split)
            self.history_.append(metrics)
        self.model_ = model
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, fit saw {self.n_features_in_}"
            )
        return predict_logits(self.model_, X)

    def predict_proba(self, X):
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X):
        logits = self.decision_function(X)
        return self.classes_[logits.argmax(axis=1)]
