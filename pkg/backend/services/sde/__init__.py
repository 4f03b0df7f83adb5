# SDE Package - alpha-parameterized stochastic integration, Fokker-Planck operators and statistics
