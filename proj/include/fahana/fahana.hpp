#pragma once

// Umbrella header: fairness- and hardware-aware architecture search.

#include "fahana/errors.hpp"
#include "fahana/random.hpp"
#include "fahana/search_space.hpp"
#include "fahana/fairness.hpp"
#include "fahana/reward.hpp"
#include "fahana/latency.hpp"
#include "fahana/freezer.hpp"
#include "fahana/evaluator.hpp"
#include "fahana/controller.hpp"
#include "fahana/pareto.hpp"
#include "fahana/report.hpp"
#include "fahana/harness.hpp"
