"""Free-text vehicle service report triage.

Pieces: a seeded synthetic corpus generator, a domain lexicon front end,
count-based feature extraction with chi-squared pruning, a CNN-BiLSTM
claim validator, classical department routers, and a weighted evaluation
suite, wired together behind one CLI.
"""

__version__ = "0.1.0"
