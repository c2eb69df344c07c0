"""Graph-of-graphs neural network for molecule interaction prediction."""
