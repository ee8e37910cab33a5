#pragma once

#include "neural_bandit/confidence.hpp"
#include "neural_bandit/diagnostics.hpp"
#include "neural_bandit/environments.hpp"
#include "neural_bandit/errors.hpp"
#include "neural_bandit/harness.hpp"
#include "neural_bandit/kernel_ucb.hpp"
#include "neural_bandit/lin_ucb.hpp"
#include "neural_bandit/network.hpp"
#include "neural_bandit/neural_ucb.hpp"
#include "neural_bandit/neural_ucb0.hpp"
#include "neural_bandit/ntk.hpp"
#include "neural_bandit/policy.hpp"
#include "neural_bandit/random.hpp"
#include "neural_bandit/training.hpp"
