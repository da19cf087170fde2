import numpy as np

from m2ac.dynamics import EnsembleModel


def ready_ensemble(seed=0, state_dim=2, action_dim=1, hidden=(8,)):
    # randomly initialised members disagree, which is all the rollout tests need
    ens = EnsembleModel(state_dim, action_dim, hidden=hidden, rng=np.random.default_rng(seed))
    ens.trained_epochs = 1
    return ens


def linear_policy(states):
    return np.tanh(states[:, :1] * 0.5)


class SpyEnsemble:
    # records every scored batch so dropped samples can be inspected
    def __init__(self, ens):
        self.ens, self.scores = ens, []
        self.is_trained = True

    def step(self, *args):
        out = self.ens.step(*args)
        self.scores.append(out[3])
        return out
