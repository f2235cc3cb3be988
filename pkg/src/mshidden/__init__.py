"""Multi-scale autoencoder image steganography on a small numpy engine."""
