"""Graph containers, dataset I/O, synthetic benchmark and minibatch sampling."""
