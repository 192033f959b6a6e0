"""End-to-end neural speaker diarization with attractor-based speaker counting.

Subpackage map:
    autodiff, nn, optim    numeric substrate (tensors, layers, Adam, grad checks)
    features               log-Mel extraction, labels, RTTM I/O
    simulate               synthetic conversation generator
    encoder                Conformer encoder with summary-vector token
    eda, ta                LSTM and transformer attractor modules
    losses, training       PIT/existence objectives and the train loop
    scoring                binarization, segments, DER
    config, cli, bench     run configuration, command-line tools, throughput
"""

__version__ = "0.1.0"
