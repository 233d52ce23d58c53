"""Workbench for keyed patch-encoder privacy games.

Modules:
    nn        minimal MLP stack (init/forward/backward/Adam) used everywhere
    encoder   the keyed patch encoder and its per-image patch shuffle
    challenge matching-game construction and scoring
    matching  exact rectangular assignment solving
    attack    the full break: similarity learning, matching, permutation
              recovery, boosting, encoder extraction
    theory    indistinguishability games, the label-leak extractor, and the
              counterexample to permutation-based privacy scoring
    datasets  synthetic image generators and PGM import
    cli       command-line front end
"""

__version__ = "0.1.0"
