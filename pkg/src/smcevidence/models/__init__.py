from .base import Restricted, TargetModel
from .conjugate import ConjugateGaussian, conj_gaussian_log_evidence
from .gmm import GaussianMixture, gmm_generate_data, gmm_log_likelihood
from .goodwin import Goodwin, goodwin_generate_data, goodwin_solve
from .pet import PetCompartmental, pet_ct, pet_generate_data, pet_vd

__all__ = [
    "ConjugateGaussian", "GaussianMixture", "Goodwin", "PetCompartmental", "Restricted",
    "TargetModel", "conj_gaussian_log_evidence", "gmm_generate_data", "gmm_log_likelihood",
    "goodwin_generate_data", "goodwin_solve", "pet_ct", "pet_generate_data", "pet_vd",
]
