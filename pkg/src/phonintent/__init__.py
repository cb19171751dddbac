"""Intent classification from phonetic representations with dilated 1-D CNNs.

The toolkit trains a small convolutional classifier over three interchangeable
input front-ends (learned phone embeddings, fixed articulatory features, and
pre-extracted acoustic frame embeddings). Every differentiable operation is
written out by hand on NumPy arrays and verified against finite differences.
"""

__version__ = "0.1.0"
