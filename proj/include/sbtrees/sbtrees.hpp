#ifndef SBTREES_SBTREES_HPP
#define SBTREES_SBTREES_HPP

// Soft Bayesian regression tree ensembles: sum-of-trees regression with
// probabilistic (logistic) routing, a sparsity-inducing Dirichlet prior over
// split predictors, and backfitting MCMC over tree structures, bandwidths,
// leaf values, and hyperparameters.

#include "sbtrees/core.hpp"
#include "sbtrees/csv.hpp"
#include "sbtrees/gating.hpp"
#include "sbtrees/inference.hpp"
#include "sbtrees/likelihood.hpp"
#include "sbtrees/preprocess.hpp"
#include "sbtrees/priors.hpp"
#include "sbtrees/rng.hpp"
#include "sbtrees/sampler.hpp"
#include "sbtrees/serialize.hpp"
#include "sbtrees/simulate.hpp"

#endif
