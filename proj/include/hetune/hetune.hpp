#pragma once

#include "hetune/annealer.hpp"
#include "hetune/boosting.hpp"
#include "hetune/campaign.hpp"
#include "hetune/config_space.hpp"
#include "hetune/error.hpp"
#include "hetune/evaluators.hpp"
#include "hetune/features.hpp"
#include "hetune/measurement_log.hpp"
#include "hetune/metrics.hpp"
#include "hetune/model_io.hpp"
#include "hetune/oracles.hpp"
#include "hetune/regression_tree.hpp"
#include "hetune/rng.hpp"
#include "hetune/space_io.hpp"
#include "hetune/validation.hpp"
