from .bundles import RunBundle, load_run
from .plots import plot_density, plot_frontier, plot_variance

__all__ = ["RunBundle", "load_run", "plot_variance", "plot_frontier",
           "plot_density"]
