#pragma once

#include "scorerl/analysis.hpp"
#include "scorerl/bridge.hpp"
#include "scorerl/buffers.hpp"
#include "scorerl/config.hpp"
#include "scorerl/env.hpp"
#include "scorerl/error.hpp"
#include "scorerl/metrics.hpp"
#include "scorerl/nn.hpp"
#include "scorerl/reward.hpp"
#include "scorerl/reward_learner.hpp"
#include "scorerl/sac.hpp"
#include "scorerl/sampling.hpp"
#include "scorerl/service.hpp"
#include "scorerl/teacher.hpp"
#include "scorerl/trainer.hpp"
