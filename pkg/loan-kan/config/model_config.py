"""Defaults for the model stack, training, windowing and the synthetic generator"""


class ModelConfig:
    # Architecture of the two-layer recurrent stack
    MODEL = {
        'rnn1_units': 128,
        'rnn2_units': 64,
        'kan_output_dim': 1,
        'kan_num_functions': 10,  # basis functions per edge
        'kan_hidden': [],  # extra KAN widths stacked before the output KAN layer
        'dense_units': 64,
        'dropout_rate': 0.3,
    }

    # Spline edges
    KAN = {
        'spline_order': 3,
        'grid_lo': -3.0,
        'grid_hi': 3.0,
        'base_weight_std': 0.1,
    }

    BATCH_NORM = {
        'epsilon': 1e-3,
        'momentum': 0.1,  # weight of the new batch in the running statistics
    }

    TRAIN = {
        'epochs': 50,
        'batch_size': 256,
        'learning_rate': 1e-3,
        'beta1': 0.9,
        'beta2': 0.999,
        'eps_opt': 1e-7,
        'early_stop_patience': 5,
        'validation_fraction': 0.1,
    }

    LOSS = {
        'prob_clip': 1e-12,
    }

    # (feature_len, gap, obs_len)
    WINDOWS = {
        'window_sweep_obs': 3,
        'interval_total': 21,  # x + g stays fixed in the interval sweep
        'sample_size': (15, 0, 3),
        'cohort': (15, 3, 3),
        'single': (15, 0, 3),
    }

    SWEEPS = {
        'window_lengths': [12, 15, 18, 21, 24, 27],
        'intervals': [3, 4, 5, 6, 7, 8],
        'record_budgets': [500000, 1000000, 1500000, 2000000, 3000000, 5000000],
        'synthetic_record_budgets': [20000, 40000, 80000],
        'cohort_pairs': [(2018, 2019), (2018, 2020), (2018, 2021), (2018, 2022), (2019, 2021), (2019, 2022)],
        'cohort_record_budget': 1500000,
        'trials': 20,
    }

    # Delinquency status
    CLDS = {
        'default_threshold': 3,
        'non_numeric_is_default': True,
    }

    # Borrower assistance status codes in the published layout; blank means none
    ASSISTANCE_CODES = ['none', 'F', 'R', 'T']

    CONTINUOUS_FEATURES = [
        'current_actual_upb',
        'current_deferred_upb',
        'current_interest_rate',
        'estimated_ltv',
        'interest_bearing_upb_delta',
    ]

    SYNTHETIC = {
        'n_loans': 3000,
        'default_rate': 0.3,
        'seq_len_range': (18, 40),
        'signal_strength': 1.0,
        'train_year': 2019,
        'test_year': 2020,
        'reference_year': 2019,
        'drift_per_year': 0.15,
        'mean_precursor_lead': 4.0,  # months of distress before the first missed payment
        'precursor_decay': 0.3,  # principal paid shrinks by this factor per distressed month
    }
