from .base import BilevelProblem, ConstantsBundle
from .hyperrep import (HRDataset, HRProblem, LinearEmbedding, TwoLayerEmbedding,
                       generate_hr_dataset, make_hr_problem)
from .io import load_dataset, save_dataset
from .logistic import HODataset, LogisticHOProblem, generate_ho_dataset
from .quadratic import QuadraticProblem, quadratic_make

__all__ = [
    "BilevelProblem", "ConstantsBundle", "HRDataset", "HRProblem", "HODataset",
    "LinearEmbedding", "LogisticHOProblem", "QuadraticProblem", "TwoLayerEmbedding",
    "generate_ho_dataset", "generate_hr_dataset", "load_dataset", "make_hr_problem",
    "quadratic_make", "save_dataset",
]
