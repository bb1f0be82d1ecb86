# app/services/models/__init__.py
from .glm import LogisticModel, fit_l1_logistic, predict_label, predict_proba
from .resample import ImbalanceStrategy, inverse_frequency_weights, smote_oversample
from .density import GaussianKde, cdf, fit_kde, pdf, sample
