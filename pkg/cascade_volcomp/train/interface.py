from abc import ABC, abstractmethod


class ProblemBase(ABC):
    """Problem base class describing the interface expected from each problem class."""

    @abstractmethod
    def train_step(self, data, it: int) -> (float, dict):
        """
        Perform one step of training. Each problem class has to implement at least
        this method. The function should return the loss, used to display training
        progress and for the loss log, and a dictionary of further metrics.
        """
        raise NotImplementedError

    def checkpoint_extra(self) -> dict:
        """
        Metadata stored next to the weights in every checkpoint, e.g., the noise
        schedule needed to sample from the trained network.
        """
        return {}

    def save_model(self, path, tag: str = ""):
        """
        Saves the trained network as a checkpoint at ``path``. The trainer calls it for
        every checkpoint, so problems that are trained with an output directory have
        to implement it.
        """
        raise NotImplementedError(
            f"{type(self).__name__} cannot save checkpoints, implement `save_model`."
        )
