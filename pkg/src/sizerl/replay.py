"""Ring-buffer replay storage for packed transitions."""

import numpy as np

from .env import L_ACT, L_OBS


class ReplayBuffer:
    def __init__(self, capacity):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, L_OBS))
        self.act = np.zeros((self.capacity, L_ACT))
        self.rew = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, L_OBS))
        self.done = np.zeros(self.capacity)
        self.circuit = np.zeros(self.capacity, dtype=np.int64)
        self.insertion_count = 0

    def __len__(self):
        return min(self.insertion_count, self.capacity)

    def push(self, obs, act, rew, next_obs, done, circuit_idx):
        i = self.insertion_count % self.capacity
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.circuit[i] = circuit_idx
        self.insertion_count += 1

    def push_batch(self, batch, circuit_idx=None):
        n = batch["obs"].shape[0]
        circ = batch.get("circuit")
        for i in range(n):
            self.push(
                batch["obs"][i], batch["act"][i], batch["rew"][i],
                batch["next_obs"][i], batch["done"][i],
                circ[i] if circ is not None else (circuit_idx or 0),
            )

    def clear(self):
        self.insertion_count = 0

    def sample(self, batch_size, rng):
        """Uniform sample without replacement within the batch."""
        n = len(self)
        if batch_size > n:
            raise ValueError(f"cannot sample {batch_size} from buffer of {n}")
        idx = rng.choice(n, size=batch_size, replace=False)
        return self._gather(idx)

    def sample_obs(self, count, rng):
        idx = rng.choice(len(self), size=count, replace=count > len(self))
        return self.obs[idx].copy()

    def all(self):
        return self._gather(np.arange(len(self)))

    def _gather(self, idx):
        return {
            "obs": self.obs[idx].copy(),
            "act": self.act[idx].copy(),
            "rew": self.rew[idx].copy(),
            "next_obs": self.next_obs[idx].copy(),
            "done": self.done[idx].copy(),
            "circuit": self.circuit[idx].copy(),
        }


def merge_batches(a, b):
    """Concatenate two sampled batches field-wise."""
    return {k: np.concatenate([a[k], b[k]], axis=0) for k in a}
