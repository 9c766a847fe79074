"""dB / linear and dB-per-meter / neper-per-meter conversions."""

import numpy as np

# 20 / ln(10): dB per neper
DB_PER_NEPER = 8.685889638


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def db_per_m_to_np_per_m(alpha_db):
    return alpha_db / DB_PER_NEPER


def np_per_m_to_db_per_m(alpha_np):
    return alpha_np * DB_PER_NEPER
