"""Individual VaR/ES forecasters forming the model universe."""
