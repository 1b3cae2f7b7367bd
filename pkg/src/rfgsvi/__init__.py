"""Generative variable importance: CART, random-forest, conditional, Sobol-MDA and RF_GS scores."""

from .cart import RegressionTree, cart_vi, grow_tree, predict_tree, prune_cost_complexity
from .condvi import cf_vi
from .dataset import DataError, Dataset, load_csv, make_folds
from .forest import ForestParams, RandomForest, fit_forest, oob_predictions, predict_forest, rf_vi_mda
from .gsa import jansen_first_order, jansen_total, rf_gs_vi, rf_gs_vi_exhaustive
from .projected import ProjectedForestView, project_predict, sobol_mda_vi
from .report import METHODS, ViReport
from .rng import RngSeed
from .sim import DgpSpec, MethodParams, generate_dgp, rank_correct_first, run_monte_carlo

__version__ = "0.1.0"
