"""Heart-sound classification toolkit: features, classical and deep models,
semi-supervised GAN and autoencoder anomaly detection."""

__version__ = "0.1.0"
