"""Counterfactual explanations for learning vector quantization models."""

from .constraints import UserConstraints
from .engine import CfRequest, CfResult, explain
from .model import LvqModel, load_model, make_model, save_model
from .regularizers import Regularizer

__all__ = ["CfRequest", "CfResult", "LvqModel", "Regularizer", "UserConstraints", "explain", "load_model",
           "make_model", "save_model"]
